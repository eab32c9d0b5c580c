"""Cross-domain iterative detection.

The time stage estimates the time domain signal z = (F_N^H kron I_M) x
with an L-MMSE filter, the DD stage denoises the DD domain symbols x one
by one. The two stages exchange extrinsic Gaussian messages, both extrinsic
computations take place in the time domain:

    prior_T -> [L-MMSE] -> extrinsic_T -> time_to_dd -> [denoiser]
       ^                                                    |
       +---- extrinsic_DD <---- dd_to_time (mean, diag) <---+

"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Union

import numpy as np
import scipy.sparse

from otfs import transforms
from otfs.channel import ChannelSpec, build_time_channel, time_channel_sparse
from otfs.config import Config
from otfs.core import Constellation, GaussianMessage, hard_decision, indices_to_bits
from otfs.error import (
    InvalidDetectorConfigError,
    InvalidNoiseError,
    InvalidVarianceError,
)
from otfs.linalg import SolverMode, make_solver

logger = logging.getLogger(__name__)

TimeChannel = Union[np.ndarray, scipy.sparse.spmatrix]


class NoiseMode(str, Enum):
    """Variances exchanged between the two stages.

    SCALAR_AVG: both posteriors are averaged to one variance before their
        extrinsic is taken, the DD denoiser sees one noise variance.
    PER_ENTRY: the time stage extrinsic variance vector goes to the
        denoiser as is, the DD stage posterior keeps its per-delay variances.
    """

    SCALAR_AVG = "scalar_avg"
    PER_ENTRY = "per_entry"


class Denoiser(str, Enum):
    """Symbol prior used by the DD stage.

    CONSTELLATION: uniform over the constellation points.
    GAUSSIAN: unit variance complex Gaussian, makes the DD stage linear.
    """

    CONSTELLATION = "constellation"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class DetectorConfig:
    L_max: int = 10
    eps_var: float = Config.EPS_VAR
    V_max: float = Config.V_MAX
    noise_mode: NoiseMode = NoiseMode.SCALAR_AVG
    solver_mode: SolverMode = SolverMode.DENSE
    denoiser: Denoiser = Denoiser.CONSTELLATION
    # Stop once the average prior variance changes less than this. None
    # runs all L_max iterations.
    early_exit_tol: Optional[float] = None

    def __post_init__(self):
        if self.L_max < 1:
            raise InvalidDetectorConfigError(f"L_max must be >= 1, got {self.L_max}.")
        if not 0 < self.eps_var < self.V_max:
            raise InvalidDetectorConfigError(
                f"Need 0 < eps_var < V_max, got {self.eps_var}, {self.V_max}."
            )
        object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
        object.__setattr__(self, "solver_mode", SolverMode(self.solver_mode))
        object.__setattr__(self, "denoiser", Denoiser(self.denoiser))


@dataclass(frozen=True, eq=False)
class IterationRecord:
    """Averaged state of one detector iteration."""

    # Average a priori variance of the time stage.
    v_a_T: float
    # Average a posteriori variance of the time stage.
    v_p_T: float
    # Average extrinsic variance of the time stage, i.e. the a priori variance
    # of the DD stage.
    v_a_DD: float
    # Average a posteriori variance of the DD stage.
    v_p_DD: float
    symbols: np.ndarray
    # A priori mean of the time stage, the estimate of z entering the iteration.
    prior_mean: np.ndarray

    @property
    def eta_DD(self) -> float:
        return 1.0 / self.v_a_DD


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> IterationRecord:
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    @property
    def v_a_T(self) -> np.ndarray:
        return np.array([r.v_a_T for r in self.records])

    @property
    def v_p_T(self) -> np.ndarray:
        return np.array([r.v_p_T for r in self.records])

    @property
    def v_a_DD(self) -> np.ndarray:
        return np.array([r.v_a_DD for r in self.records])

    @property
    def v_p_DD(self) -> np.ndarray:
        return np.array([r.v_p_DD for r in self.records])

    @property
    def eta_DD(self) -> np.ndarray:
        return 1.0 / self.v_a_DD

    def measured_mse(self, z: np.ndarray) -> np.ndarray:
        """Per iteration mean squared error of the time stage prior mean."""
        return np.array([np.mean(np.abs(r.prior_mean - z) ** 2) for r in self.records])


class DenoiseResult(NamedTuple):
    mean: np.ndarray
    var: np.ndarray
    # (MN, |A|) posterior probabilities, None for the Gaussian prior.
    posteriors: Optional[np.ndarray]


class Detection(NamedTuple):
    bits: np.ndarray
    symbols: np.ndarray
    trace: IterationTrace


def lmmse_time_estimate(
    r: np.ndarray,
    H: TimeChannel,
    N0: float,
    prior: GaussianMessage,
    solver_mode: SolverMode = SolverMode.DENSE,
    eps_var: float = Config.EPS_VAR,
    v_max: float = Config.V_MAX,
) -> GaussianMessage:
    """A posteriori estimate of z from r = H z + w under a Gaussian prior.

    Args:
        r: Received time domain vector.
        H: Time domain effective channel, dense or sparse.
        N0: Noise variance.
        prior: A priori mean and diagonal covariance of z.
        solver_mode: Factorization used for S = H C H^H + N0 I.

    Returns:
        Posterior mean and the diagonal of the posterior covariance.

    Raises:
        SolverError: S is numerically singular.

    """
    if N0 < 0:
        raise InvalidNoiseError(f"N0 must be nonnegative, got {N0}.")
    c = prior.var
    n = c.shape[0]
    if scipy.sparse.issparse(H):
        H = H.tocsr()
        S = H @ scipy.sparse.diags(c) @ H.conj().T + N0 * scipy.sparse.identity(n)
    else:
        H = np.asarray(H)
        S = (H * c) @ H.conj().T + N0 * np.eye(n)

    solver = make_solver(S, solver_mode)
    residual = r - H @ prior.mean
    mean = prior.mean + c * (H.conj().T @ solver.solve(residual))
    var = c - c**2 * solver.quad_diag(H)
    return GaussianMessage.clamped(mean, np.minimum(var, c), eps_var, v_max)


def extrinsic(
    post: GaussianMessage,
    prior: GaussianMessage,
    eps_var: float = Config.EPS_VAR,
    v_max: float = Config.V_MAX,
) -> GaussianMessage:
    """Removes the prior from a posterior, entry by entry.

    Entries whose posterior is not more precise than the prior carry no
    extrinsic information, they get variance ``v_max`` and the posterior
    mean.
    """
    gain = 1.0 / post.var - 1.0 / prior.var
    informative = gain > 0
    var = np.full(gain.shape, v_max)
    var[informative] = np.clip(1.0 / gain[informative], eps_var, v_max)
    mean = np.array(post.mean)
    mean[informative] = var[informative] * (
        post.mean[informative] / post.var[informative]
        - prior.mean[informative] / prior.var[informative]
    )
    return GaussianMessage(mean, var)


extrinsic_time = extrinsic


def _check_noise_var(noise_var: np.ndarray) -> None:
    if np.any(~(noise_var > 0)):
        raise InvalidVarianceError("Denoiser noise variances must be positive.")


def dd_denoise(
    m_a: np.ndarray, noise_var: Union[float, np.ndarray], c: Constellation
) -> DenoiseResult:
    """Posterior mean and variance of each symbol seen through AWGN.

    Args:
        m_a: A priori means (noisy observations) of the DD symbols.
        noise_var: Noise variance, a scalar or one per symbol.
        c: Constellation with a uniform prior over its points.

    Returns:
        DenoiseResult with the per-symbol posterior probabilities.

    Raises:
        InvalidVarianceError: Non-positive noise variance.

    """
    m_a = np.asarray(m_a, dtype=complex)
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), m_a.shape)
    _check_noise_var(noise_var)

    a = c.points[None, :]
    logits = (2 * np.real(np.conj(a) * m_a[:, None]) - np.abs(a) ** 2) / noise_var[
        :, None
    ]
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)

    mean = probs @ c.points
    var = probs @ (np.abs(c.points) ** 2) - np.abs(mean) ** 2
    return DenoiseResult(mean, np.maximum(var, 0.0), probs)


def gaussian_denoise(
    m_a: np.ndarray, noise_var: Union[float, np.ndarray]
) -> DenoiseResult:
    """Posterior of a CN(0, 1) symbol seen through AWGN."""
    m_a = np.asarray(m_a, dtype=complex)
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), m_a.shape)
    _check_noise_var(noise_var)
    return DenoiseResult(m_a / (1 + noise_var), noise_var / (1 + noise_var), None)


def dd_extrinsic_componentwise(
    m_a: np.ndarray,
    noise_var: Union[float, np.ndarray],
    c: Constellation,
    eps_var: float = Config.EPS_VAR,
    v_max: float = Config.V_MAX,
) -> GaussianMessage:
    """Extrinsic output of the DD stage computed on its own symbols.

    The symbol posterior only depends on its own observation, so the
    result carries nothing beyond the input observation. Kept to check
    that the detector must form this message in the time domain.
    """
    m_a = np.asarray(m_a, dtype=complex)
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), m_a.shape)
    denoised = dd_denoise(m_a, noise_var, c)
    post = GaussianMessage.clamped(denoised.mean, denoised.var, eps_var, v_max)
    prior = GaussianMessage.clamped(m_a, noise_var, eps_var, v_max)
    return extrinsic(post, prior, eps_var, v_max)


def time_channel_operator(spec: ChannelSpec, solver_mode: SolverMode) -> TimeChannel:
    if SolverMode(solver_mode) is SolverMode.BANDED:
        return time_channel_sparse(spec)
    return build_time_channel(spec)


def detect(
    r: np.ndarray,
    spec: ChannelSpec,
    N0: float,
    c: Constellation,
    cfg: Optional[DetectorConfig] = None,
    H: Optional[TimeChannel] = None,
) -> Detection:
    """Runs the iterative detector on one received frame.

    Args:
        r: Received time domain vector.
        spec: Channel the frame went through.
        N0: Noise variance.
        c: Constellation of the DD symbols.
        cfg: Detector configuration, defaults to DetectorConfig().
        H: Prebuilt time domain channel, built from ``spec`` if omitted.

    Returns:
        The bits and symbol indices decided in the last iteration, and
        the per-iteration trace.

    """
    cfg = cfg or DetectorConfig()
    g = spec.grid
    r = np.asarray(r, dtype=complex)
    g.check_length(r, "received vector")
    if H is None:
        H = time_channel_operator(spec, cfg.solver_mode)

    prior = GaussianMessage.uninformative(g.MN)
    trace = IterationTrace()
    symbols = np.zeros(g.MN, dtype=np.int64)
    for l in range(cfg.L_max):
        post_T = lmmse_time_estimate(
            r, H, N0, prior, cfg.solver_mode, cfg.eps_var, cfg.V_max
        )
        scalar = cfg.noise_mode is NoiseMode.SCALAR_AVG
        # In scalar mode both stages exchange one variance per frame, the
        # quantity the state evolution tracks.
        ext_T = extrinsic(
            post_T.averaged() if scalar else post_T, prior, cfg.eps_var, cfg.V_max
        )

        m_x = transforms.time_to_dd(ext_T.mean, g)
        noise_var = np.full(g.MN, ext_T.avg_var) if scalar else np.array(ext_T.var)

        if cfg.denoiser is Denoiser.GAUSSIAN:
            denoised = gaussian_denoise(m_x, noise_var)
        else:
            denoised = dd_denoise(m_x, noise_var, c)
        symbols, _ = hard_decision(m_x, c)

        # DD stage posterior, rotated back and diagonalized. The rotation
        # keeps the average variance.
        post_DD = GaussianMessage.clamped(
            transforms.dd_to_time(denoised.mean, g),
            np.full(g.MN, np.mean(denoised.var))
            if scalar
            else transforms.diag_rotate_dd_to_time(denoised.var, g),
            cfg.eps_var,
            cfg.V_max,
        )
        prior_DD = GaussianMessage.clamped(
            ext_T.mean, noise_var, cfg.eps_var, cfg.V_max
        )
        next_prior = extrinsic(post_DD, prior_DD, cfg.eps_var, cfg.V_max)

        trace.append(
            IterationRecord(
                v_a_T=prior.avg_var,
                v_p_T=post_T.avg_var,
                v_a_DD=float(np.mean(noise_var)),
                v_p_DD=float(np.mean(denoised.var)),
                symbols=symbols,
                prior_mean=prior.mean,
            )
        )
        logger.debug(
            "Iteration %d: v_a_T=%.3e v_p_T=%.3e v_a_DD=%.3e v_p_DD=%.3e",
            l + 1,
            trace[-1].v_a_T,
            trace[-1].v_p_T,
            trace[-1].v_a_DD,
            trace[-1].v_p_DD,
        )

        converged = (
            cfg.early_exit_tol is not None
            and abs(next_prior.avg_var - prior.avg_var) < cfg.early_exit_tol
        )
        prior = next_prior
        if converged:
            logger.debug("Converged after %d iterations.", l + 1)
            break

    return Detection(indices_to_bits(symbols, c.bits_per_symbol), symbols, trace)
