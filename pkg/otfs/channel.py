"""Doubly-dispersive channels on an OTFS frame.

A channel is a sum of P paths, each path delaying the time domain signal
by an integer number of samples and rotating it by a (possibly
fractional) Doppler index. In the time domain the effective channel is

    H_T = sum_i h_i * Pi^l_i * Delta^(k_i + kappa_i)

with Pi the forward cyclic shift and Delta = diag(exp(j2pi n/MN)). The
detector only needs matrix-free products and the sparse operator, dense
matrices are built on request below the size guard.

Channels are stored as JSON documents:

    {"M": 64, "N": 32, "gains": [[re, im], ...], "delays": [...],
     "dopplers": [...]}

"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse

from otfs import transforms
from otfs.config import Config
from otfs.core import FrameGrid
from otfs.error import (
    ChannelFileNotFoundError,
    InvalidChannelError,
    InvalidNoiseError,
)
from otfs.types import ChannelDefinition

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


@dataclass(frozen=True)
class PathSpec:
    """A single propagation path.

    Attributes:
        gain: Complex path gain h_i.
        delay_idx: Integer delay index l_i.
        doppler_int: Integer part k_i of the Doppler index.
        doppler_frac: Fractional part kappa_i in [-1/2, 1/2].

    """

    gain: complex
    delay_idx: int
    doppler_int: int = 0
    doppler_frac: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "gain", complex(self.gain))
        object.__setattr__(self, "delay_idx", int(self.delay_idx))
        object.__setattr__(self, "doppler_int", int(self.doppler_int))
        object.__setattr__(self, "doppler_frac", float(self.doppler_frac))
        if self.delay_idx < 0:
            raise InvalidChannelError(f"Negative delay index {self.delay_idx}.")
        if abs(self.doppler_frac) > 0.5 + 1e-12:
            raise InvalidChannelError(
                f"Fractional Doppler {self.doppler_frac} outside of [-1/2, 1/2]."
            )
        if not np.isfinite(self.gain):
            raise InvalidChannelError("Path gain must be finite.")

    @classmethod
    def from_doppler(cls, gain: complex, delay_idx: int, doppler: float) -> "PathSpec":
        """Splits a combined Doppler index into its integer and fraction."""
        k = int(np.round(doppler))
        return cls(gain, delay_idx, k, float(doppler) - k)

    @property
    def doppler(self) -> float:
        return self.doppler_int + self.doppler_frac


@dataclass(frozen=True)
class ChannelSpec:
    paths: Tuple[PathSpec, ...]
    grid: FrameGrid

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise InvalidChannelError("A channel needs at least one path.")
        for path in self.paths:
            if path.delay_idx >= self.grid.MN:
                raise InvalidChannelError(
                    f"Delay index {path.delay_idx} does not fit a frame with "
                    f"MN={self.grid.MN}."
                )
        if not self.norm_sq > 0:
            raise InvalidChannelError("Channel has zero power.")

    @classmethod
    def from_arrays(
        cls,
        gains: Sequence[complex],
        delays: Sequence[int],
        dopplers: Sequence[float],
        grid: FrameGrid,
    ) -> "ChannelSpec":
        if not len(gains) == len(delays) == len(dopplers):
            raise InvalidChannelError(
                "gains, delays and dopplers must have the same number of entries."
            )
        return cls(
            tuple(
                PathSpec.from_doppler(h, l, nu)
                for h, l, nu in zip(gains, delays, dopplers)
            ),
            grid,
        )

    @classmethod
    def identity(cls, grid: FrameGrid) -> "ChannelSpec":
        return cls((PathSpec(1.0, 0),), grid)

    @classmethod
    def from_json(cls, definition: ChannelDefinition) -> "ChannelSpec":
        try:
            grid = FrameGrid(int(definition["M"]), int(definition["N"]))
            gains = [complex(re, im) for re, im in definition["gains"]]
            return cls.from_arrays(
                gains, definition["delays"], definition["dopplers"], grid
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidChannelError(f"Invalid channel definition: {e}.") from e

    def to_json(self) -> ChannelDefinition:
        return {
            "M": self.grid.M,
            "N": self.grid.N,
            "gains": [[p.gain.real, p.gain.imag] for p in self.paths],
            "delays": [p.delay_idx for p in self.paths],
            "dopplers": [p.doppler for p in self.paths],
        }

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ChannelSpec":
        try:
            with open(path, "r") as f:
                definition = json.load(f)
        except FileNotFoundError:
            raise ChannelFileNotFoundError(f"Could not open channel file {path}.")
        return cls.from_json(definition)

    def dump(self, path: Union[str, Path]) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=4)

    def with_grid(self, grid: FrameGrid) -> "ChannelSpec":
        """Same paths hosted on another frame."""
        return ChannelSpec(self.paths, grid)

    @property
    def P(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay_idx for p in self.paths], dtype=np.int64)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths], dtype=float)

    @property
    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    @property
    def has_distinct_delays(self) -> bool:
        return len(set(self.delays.tolist())) == self.P


def load_fixture(name: str) -> ChannelSpec:
    """Loads a bundled channel, e.g. ``load_fixture("mse_trace")``."""
    path = Config.get_fixture_path(name)
    if not path.is_file():
        raise ChannelFileNotFoundError(f"No bundled channel named {name!r}.")
    return ChannelSpec.load(path)


def fixture_names() -> Tuple[str, ...]:
    return tuple(sorted(p.stem for p in Config.FIXTURES_DIR.glob("*.json")))


def resolve_channel(name_or_path: Union[str, Path]) -> ChannelSpec:
    """Bundled channel by name, or a channel document by path."""
    if str(name_or_path) in fixture_names():
        return load_fixture(str(name_or_path))
    return ChannelSpec.load(name_or_path)


def doppler_phase(nu: float, MN: int) -> np.ndarray:
    """Diagonal of Delta^nu, exp(j2pi nu n/MN) for n = 0..MN-1."""
    return np.exp(2j * np.pi * nu * np.arange(MN) / MN)


def cyclic_shift_matrix(MN: int, l: int = 1) -> np.ndarray:
    """Pi^l, row r has its one at column (r - l) mod MN."""
    return np.roll(np.eye(MN), l, axis=0)


def doppler_phase_matrix(MN: int, nu: float) -> np.ndarray:
    return np.diag(doppler_phase(nu, MN))


def apply_time_channel(spec: ChannelSpec, z: np.ndarray) -> np.ndarray:
    """H_T z accumulated path by path."""
    z = np.asarray(z, dtype=complex)
    spec.grid.check_length(z)
    MN = spec.grid.MN
    out = np.zeros(MN, dtype=complex)
    for p in spec.paths:
        out += p.gain * np.roll(doppler_phase(p.doppler, MN) * z, p.delay_idx)
    return out


def apply_time_channel_adjoint(spec: ChannelSpec, r: np.ndarray) -> np.ndarray:
    """H_T^H r accumulated path by path."""
    r = np.asarray(r, dtype=complex)
    spec.grid.check_length(r)
    MN = spec.grid.MN
    out = np.zeros(MN, dtype=complex)
    for p in spec.paths:
        out += np.conj(p.gain * doppler_phase(p.doppler, MN)) * np.roll(
            r, -p.delay_idx
        )
    return out


def time_channel_sparse(spec: ChannelSpec) -> scipy.sparse.csr_matrix:
    """H_T as a sparse matrix with at most P non-zeros per row."""
    MN = spec.grid.MN
    cols = np.arange(MN)
    rows, vals = [], []
    for p in spec.paths:
        rows.append((cols + p.delay_idx) % MN)
        vals.append(p.gain * doppler_phase(p.doppler, MN))
    # Duplicate (row, col) pairs of paths sharing a delay are summed.
    return scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.tile(cols, spec.P))),
        shape=(MN, MN),
    ).tocsr()


def build_time_channel(spec: ChannelSpec) -> np.ndarray:
    """Dense H_T, entry (p, q) non-zero only if (p - q) mod MN is a delay."""
    transforms.check_dense_guard(spec.grid)
    return time_channel_sparse(spec).toarray()


def build_dd_channel(spec: ChannelSpec) -> np.ndarray:
    """Dense H_DD = (F_N kron I_M) H_T (F_N^H kron I_M)."""
    return transforms.conjugate(
        build_time_channel(spec), transforms.Direction.TIME_TO_DD, spec.grid
    )


def build_tf_channel(spec: ChannelSpec) -> np.ndarray:
    """Dense H_TF = (I_N kron F_M) H_T (I_N kron F_M^H)."""
    return transforms.conjugate(
        build_time_channel(spec), transforms.Direction.TIME_TO_TF, spec.grid
    )


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_random_channel(
    P: int,
    l_max: int,
    k_max: float,
    fractional: bool,
    rng_seed: SeedLike,
    grid: Optional[FrameGrid] = None,
    distinct_delays: bool = False,
) -> ChannelSpec:
    """Draws a channel with a uniform power delay profile.

    Args:
        P: Number of paths.
        l_max: Delays are uniform integers on [0, l_max].
        k_max: Dopplers are uniform reals on [-k_max, k_max].
        fractional: If False, Dopplers are rounded to integers.
        rng_seed: Seed or generator, the draw is deterministic in it.
        grid: Frame to host the channel on, defaults to the desk-scale
            frame.
        distinct_delays: Draw the delays without replacement.

    Returns:
        A channel with i.i.d. CN(0, 1/P) gains, E||h||^2 = 1.

    Raises:
        InvalidChannelError: Parameters outside of their valid ranges.

    """
    grid = grid or FrameGrid(Config.DEFAULT_M, Config.DEFAULT_N)
    if P < 1:
        raise InvalidChannelError(f"Need at least one path, got P={P}.")
    if not 0 <= l_max < grid.MN:
        raise InvalidChannelError(f"l_max={l_max} must lie in [0, MN).")
    if k_max < 0:
        raise InvalidChannelError(f"k_max={k_max} must be nonnegative.")
    if distinct_delays and P > l_max + 1:
        raise InvalidChannelError(
            f"Cannot draw {P} distinct delays from [0, {l_max}]."
        )

    rng = as_generator(rng_seed)
    gains = (rng.standard_normal(P) + 1j * rng.standard_normal(P)) * np.sqrt(
        0.5 / P
    )
    if distinct_delays:
        delays = rng.choice(l_max + 1, size=P, replace=False)
    else:
        delays = rng.integers(0, l_max + 1, size=P)
    dopplers = rng.uniform(-k_max, k_max, size=P)
    if not fractional:
        dopplers = np.round(dopplers)
    return ChannelSpec.from_arrays(gains, delays, dopplers, grid)


def complex_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    """n draws of CN(0, 1)."""
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(0.5)


def apply_channel(
    spec: ChannelSpec, z: np.ndarray, N0: float, rng: SeedLike
) -> np.ndarray:
    """r = H_T z + w with w ~ CN(0, N0 I).

    The noise is always drawn, so a stream is consumed the same way
    whatever N0 is.
    """
    if N0 < 0:
        raise InvalidNoiseError(f"N0 must be nonnegative, got {N0}.")
    w = complex_normal(as_generator(rng), spec.grid.MN)
    return apply_time_channel(spec, z) + np.sqrt(N0) * w


def gram_diag(spec: ChannelSpec) -> np.ndarray:
    """Main diagonal of G_T = H_T H_T^H."""
    H = time_channel_sparse(spec)
    return np.asarray(abs(H).power(2).sum(axis=1)).reshape(-1)


def gram_diag_check(spec: ChannelSpec) -> float:
    """Largest deviation of diag(H_T H_T^H) from ||h||^2.

    Paths sharing a delay index break the constant diagonal, such
    channels are logged and their (non-zero) deviation returned.
    """
    if not spec.has_distinct_delays:
        logger.warning(
            "Delay indices %s collide, the Gram diagonal is not constant.",
            spec.delays.tolist(),
        )
    return float(np.max(np.abs(gram_diag(spec) - spec.norm_sq)))

