"""Scalar state evolution of the iterative detector.

The detector is tracked by two averaged variances per iteration: the a
priori variance v_a_T of the time domain L-MMSE stage and the a priori
variance v_a_DD of the DD domain denoiser. The time domain update only
depends on the eigenvalues of H_T H_T^H, the DD domain update on the
denoiser MSE at the effective SNR eta_DD = 1 / v_a_DD.

MSE(eta) is evaluated by Monte-Carlo. Every evaluation inside one run
reuses the same symbol and noise draws, so MSE(eta) is a deterministic,
smooth function of eta and the recursion settles on exact fixed points.
"""
import functools
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from otfs.channel import (
    ChannelSpec,
    SeedLike,
    as_generator,
    build_time_channel,
    complex_normal,
)
from otfs.config import Config
from otfs.core import Constellation
from otfs.detector import Denoiser, dd_denoise, gaussian_denoise
from otfs.error import InvalidNoiseError, InvalidSampleSizeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SEState:
    iteration: int
    v_a_T: float
    v_a_DD: float
    v_p_T: float
    v_p_DD: float

    @property
    def eta_T(self) -> float:
        return 1.0 / self.v_a_T

    @property
    def eta_DD(self) -> float:
        return 1.0 / self.v_a_DD


@dataclass
class SETrajectory:
    states: List[SEState] = field(default_factory=list)
    # ||h||^2 / N0
    bound: float = np.inf
    converged: bool = False

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i: int) -> SEState:
        return self.states[i]

    def __iter__(self):
        return iter(self.states)

    @property
    def v_a_T(self) -> np.ndarray:
        return np.array([s.v_a_T for s in self.states])

    @property
    def v_p_T(self) -> np.ndarray:
        return np.array([s.v_p_T for s in self.states])

    @property
    def v_p_DD(self) -> np.ndarray:
        return np.array([s.v_p_DD for s in self.states])

    @property
    def eta_DD(self) -> np.ndarray:
        return np.array([s.eta_DD for s in self.states])

    def to_frame(self) -> pd.DataFrame:
        """One row per iteration, the columns of the ``se`` output."""
        frame = pd.DataFrame([asdict(s) for s in self.states])
        frame["eta_DD"] = self.eta_DD
        frame["bound"] = self.bound
        return frame[
            ["iteration", "v_a_T", "v_a_DD", "v_p_T", "v_p_DD", "eta_DD", "bound"]
        ]


class MseEstimate(NamedTuple):
    mse: float
    stderr: float


def _check_N0(N0: float) -> None:
    if not N0 > 0:
        raise InvalidNoiseError(f"N0 must be positive, got {N0}.")


def gram(spec: ChannelSpec) -> np.ndarray:
    H = build_time_channel(spec)
    return H @ H.conj().T


@functools.lru_cache(maxsize=16)
def _eig_gram(spec: ChannelSpec) -> np.ndarray:
    eigs = np.clip(scipy.linalg.eigvalsh(gram(spec)), 0.0, None)
    eigs.flags.writeable = False
    return eigs


def eig_gram(spec: ChannelSpec) -> np.ndarray:
    """Ascending eigenvalues of G_T = H_T H_T^H, cached per channel.

    Raises:
        DenseGuardError: MN above the dense matrix guard.

    """
    return _eig_gram(spec)


def _extrinsic_var(post: float, prior: float, eps_var: float, v_max: float) -> float:
    gain = 1.0 / post - 1.0 / prior
    if gain <= 0:
        return v_max
    return float(np.clip(1.0 / gain, eps_var, v_max))


def se_time_step(
    v_a_T: float,
    eigs: np.ndarray,
    N0: float,
    eps_var: float = Config.EPS_VAR,
    v_max: float = Config.V_MAX,
):
    """Averaged L-MMSE update.

    v_p_T = v - (v / MN) * sum_k v lambda_k / (v lambda_k + N0)

    Returns:
        Tuple (v_p_T, v_a_DD), v_a_DD being the extrinsic variance.

    """
    _check_N0(N0)
    eigs = np.asarray(eigs, dtype=float)
    v = float(v_a_T)
    v_p_T = v - v / eigs.shape[0] * float(np.sum(v * eigs / (v * eigs + N0)))
    v_p_T = float(np.clip(v_p_T, eps_var, v))
    return v_p_T, _extrinsic_var(v_p_T, v, eps_var, v_max)


def se_time_step_dense(v_a_T: float, H: np.ndarray, N0: float) -> float:
    """Average of diag(C - C H^H (H C H^H + N0 I)^-1 H C) with C = v_a_T I."""
    _check_N0(N0)
    n = H.shape[0]
    S = v_a_T * H @ H.conj().T + N0 * np.eye(n)
    inner = H.conj().T @ np.linalg.solve(S, H)
    return float(v_a_T - v_a_T**2 * np.real(np.trace(inner)) / n)


def se_dd_step(
    v_a_DD: float,
    mse: float,
    eps_var: float = Config.EPS_VAR,
    v_max: float = Config.V_MAX,
) -> float:
    """Next v_a_T, the extrinsic variance of the denoiser output."""
    return _extrinsic_var(mse, v_a_DD, eps_var, v_max)


def _denoise_mean(
    observations: np.ndarray, noise_var: float, c: Constellation, denoiser: Denoiser
) -> np.ndarray:
    if Denoiser(denoiser) is Denoiser.GAUSSIAN:
        return gaussian_denoise(observations, noise_var).mean
    return dd_denoise(observations, noise_var, c).mean


def mse_of_snr(
    eta: float,
    c: Constellation,
    samples: int = Config.MSE_SAMPLES,
    rng: SeedLike = None,
    denoiser: Denoiser = Denoiser.CONSTELLATION,
) -> MseEstimate:
    """Monte-Carlo MSE of the posterior mean denoiser at SNR ``eta``.

    Symbols are uniform over the constellation, or CN(0, 1) for the
    Gaussian denoiser. Passing the same seed makes the estimate a
    deterministic function of ``eta``.

    Raises:
        InvalidNoiseError: Non-positive eta.

    """
    if not eta > 0:
        raise InvalidNoiseError(f"eta must be positive, got {eta}.")
    if samples < Config.MIN_MSE_SAMPLES:
        raise InvalidSampleSizeError(
            f"At least {Config.MIN_MSE_SAMPLES} samples are needed, got {samples}."
        )
    rng = as_generator(rng)
    if Denoiser(denoiser) is Denoiser.GAUSSIAN:
        x = complex_normal(rng, samples)
    else:
        x = c.points[rng.integers(0, c.size, size=samples)]
    noise = complex_normal(rng, samples) / np.sqrt(eta)
    errors = np.abs(x - _denoise_mean(x + noise, 1.0 / eta, c, denoiser)) ** 2
    stderr = errors.std(ddof=1) / np.sqrt(samples)
    return MseEstimate(float(errors.mean()), float(stderr))


def gaussian_mse(eta: float) -> float:
    """MSE of the CN(0, 1) posterior mean at SNR ``eta``."""
    if not eta > 0:
        raise InvalidNoiseError(f"eta must be positive, got {eta}.")
    return 1.0 / (1.0 + eta)


@dataclass(frozen=True, eq=False)
class MseTable:
    """MSE(eta) on a grid, linearly interpolated in log eta."""

    constellation: str
    eta: np.ndarray
    mse: np.ndarray
    samples: int

    def interpolate(self, eta: float) -> float:
        # Outside of the grid the end values are held.
        return float(np.interp(np.log(eta), np.log(self.eta), self.mse))


def build_mse_table(
    c: Constellation,
    etas: Optional[Sequence[float]] = None,
    samples: int = Config.MSE_SAMPLES,
    seed: Optional[int] = 0,
    denoiser: Denoiser = Denoiser.CONSTELLATION,
) -> MseTable:
    etas = np.logspace(-3, 5, 161) if etas is None else np.sort(np.asarray(etas))
    mse = [mse_of_snr(eta, c, samples, seed, denoiser).mse for eta in etas]
    # Monte-Carlo noise is removed by forcing the table to be non-increasing.
    mse = np.clip(np.minimum.accumulate(mse), 0.0, 1.0)
    return MseTable(c.name, etas, mse, samples)


def snr_upper_bound(spec: ChannelSpec, N0: float) -> float:
    """||h||^2 / N0, ceiling of the effective DD domain SNR."""
    _check_N0(N0)
    return spec.norm_sq / N0


def jensen_lower_bound(v_a_T: float, norm_sq: float, N0: float) -> float:
    """Lower bound of v_p_T for channels with distinct delays."""
    _check_N0(N0)
    return v_a_T - v_a_T**2 * norm_sq / (v_a_T * norm_sq + N0)


def run_se(
    spec: ChannelSpec,
    N0: float,
    c: Constellation,
    L_max: int,
    samples: int = Config.MSE_SAMPLES,
    seed: Optional[int] = 0,
    mse_table: Optional[MseTable] = None,
    denoiser: Denoiser = Denoiser.CONSTELLATION,
    eps_var: float = Config.EPS_VAR,
    v_max: float = Config.V_MAX,
) -> SETrajectory:
    """Predicts L_max detector iterations starting from v_a_T = 1.

    Args:
        spec: Channel, its Gram eigenvalues are computed once.
        N0: Noise variance.
        c: Constellation of the DD symbols.
        L_max: Number of iterations.
        samples: Monte-Carlo samples per MSE(eta) evaluation.
        seed: Seed shared by all MSE(eta) evaluations.
        mse_table: Use an interpolated MSE(eta) table instead of
            Monte-Carlo evaluations.
        denoiser: Symbol prior of the DD stage, the Gaussian one uses its
            closed form MSE.

    Returns:
        The trajectory, flagged as converged once successive v_a_T
        differ by less than Config.CONVERGENCE_TOL.

    """
    _check_N0(N0)
    eigs = eig_gram(spec)
    if mse_table is not None:
        mse_fn: Callable[[float], float] = mse_table.interpolate
    elif Denoiser(denoiser) is Denoiser.GAUSSIAN:
        mse_fn = gaussian_mse
    else:

        def mse_fn(eta: float) -> float:
            return mse_of_snr(eta, c, samples, seed, denoiser).mse

    trajectory = SETrajectory(bound=snr_upper_bound(spec, N0))
    v_a_T = 1.0
    for l in range(1, L_max + 1):
        v_p_T, v_a_DD = se_time_step(v_a_T, eigs, N0, eps_var, v_max)
        v_p_DD = float(np.clip(mse_fn(1.0 / v_a_DD), eps_var, None))
        trajectory.states.append(SEState(l, v_a_T, v_a_DD, v_p_T, v_p_DD))

        v_next = se_dd_step(v_a_DD, v_p_DD, eps_var, v_max)
        trajectory.converged = abs(v_next - v_a_T) < Config.CONVERGENCE_TOL
        v_a_T = v_next

    if not trajectory.converged:
        logger.warning(
            "State evolution did not reach a fixed point in %d steps.", L_max
        )
    return trajectory
