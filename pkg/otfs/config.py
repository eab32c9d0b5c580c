import os
from pathlib import Path


class Config:
    # All numerical constants can be overridden through the environment,
    # values are read once at import time.

    # Variance clamp used for every Gaussian message. Guards the
    # precision differences of the extrinsic computations.
    EPS_VAR = float(os.getenv("OTFS_EPS_VAR", "1e-12"))
    V_MAX = float(os.getenv("OTFS_V_MAX", "1e6"))

    # Largest MN for which dense MN x MN matrices are materialized. Only
    # the effective channel builders, the dense solver and the
    # eigendecomposition are affected; FFT transforms never are.
    DENSE_GUARD = int(os.getenv("OTFS_DENSE_GUARD", "4096"))

    # Cap on |A|^MN for the exhaustive MLSE search.
    ORACLE_MAX_HYPOTHESES = int(os.getenv("OTFS_ORACLE_MAX_HYPOTHESES", str(2**20)))
    # Upper bound on the hypotheses scored per vectorized block of the
    # search, the trailing symbols that fit are enumerated in one go.
    ORACLE_CHUNK = 2**14
    # Relative metric difference below which two hypotheses tie.
    ORACLE_TIE_TOL = 1e-9

    # Monte-Carlo samples per MSE(eta) evaluation.
    MSE_SAMPLES = int(os.getenv("OTFS_MSE_SAMPLES", "100000"))
    MIN_MSE_SAMPLES = 10_000

    # Successive v_a_T values closer than this count as a fixed point.
    CONVERGENCE_TOL = 1e-8

    # Simulation defaults.
    EARLY_STOP_BIT_ERRORS = 200
    BATCH_FRAMES = 16
    DEFAULT_M = 16
    DEFAULT_N = 8
    FULL_M = 64
    FULL_N = 32

    # Allowed relative excess of a measured effective SNR over its
    # upper bound before a trace is flagged.
    BOUND_SLACK = 0.02

    # Width used to wrap CLI messages, 0 disables wrapping.
    WRAP_LINES = int(os.getenv("OTFS_WRAP_LINES", "72"))

    FIXTURES_DIR = Path(__file__).parent / "fixtures"

    @classmethod
    def get_fixture_path(cls, name: str) -> Path:
        return cls.FIXTURES_DIR / f"{name}.json"
