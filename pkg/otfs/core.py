"""Frame geometry, constellations and Gaussian messages.

A delay-Doppler (DD) frame of size M x N is handled as a flat vector of
length MN laid out column-major over the M x N matrix, i.e. the delay
index ``l`` runs fastest and the entry of delay ``l`` and Doppler ``k``
lives at index ``k * M + l``.

Example:
>>> from otfs import core
>>> grid = core.FrameGrid(M=4, N=2)
>>> qpsk = core.get_constellation("qpsk")
>>> x = core.modulate_bits([0] * 16, qpsk, grid)
>>> indices, bits = core.hard_decision(x, qpsk)

"""
from dataclasses import dataclass
from typing import Callable, Dict, Tuple, Union

import numpy as np

from otfs.config import Config
from otfs.error import (
    FrameSizeError,
    InvalidBitsError,
    InvalidGridError,
    InvalidVarianceError,
    UnknownConstellationError,
)

ArrayLike = Union[np.ndarray, list]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class FrameGrid:
    """Dimensions of the delay-Doppler lattice.

    Attributes:
        M: Number of delay bins (subcarriers).
        N: Number of Doppler bins (time slots).

    """

    M: int
    N: int

    def __post_init__(self):
        for name in ("M", "N"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidGridError(f"{name} must be an integer, got {value!r}.")
            if value < 1:
                raise InvalidGridError(f"{name} must be positive, got {value}.")

    @property
    def MN(self) -> int:
        return int(self.M) * int(self.N)

    def check_length(self, v: np.ndarray, name: str = "vector") -> None:
        if v.shape[0] != self.MN:
            raise FrameSizeError(
                f"{name} has {v.shape[0]} entries, the {self.M}x{self.N} frame "
                f"needs {self.MN}."
            )


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit energy signal set with a bit label per point.

    Points are ordered by their label read as an unsigned integer (most
    significant bit first), so the point at index ``i`` carries the bits
    of ``i``.
    """

    name: str
    points: np.ndarray
    bits_per_symbol: int

    def __post_init__(self):
        points = np.asarray(self.points, dtype=complex)
        if points.ndim != 1 or points.shape[0] != 2**self.bits_per_symbol:
            raise UnknownConstellationError(
                f"{self.name} needs {2 ** self.bits_per_symbol} points, got "
                f"{points.shape[0]}."
            )
        object.__setattr__(self, "points", _readonly(points.copy()))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def labels(self) -> np.ndarray:
        """(size, bits_per_symbol) array with the label of every point."""
        return indices_to_bits(np.arange(self.size), self.bits_per_symbol).reshape(
            self.size, self.bits_per_symbol
        )

    @property
    def energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    def permuted(self, permutation: ArrayLike) -> "Constellation":
        """Returns the constellation with point ``i`` moved to ``permutation[i]``."""
        permutation = np.asarray(permutation)
        points = np.empty_like(self.points)
        points[permutation] = self.points
        return Constellation(self.name, points, self.bits_per_symbol)


def _gray_pam(bits: int) -> np.ndarray:
    """Gray labelled, zero mean PAM levels indexed by label."""
    levels = np.arange(-(2**bits) + 1, 2**bits, 2, dtype=float)
    positions = np.arange(2**bits)
    # Level at position p carries the Gray code of p.
    out = np.empty(2**bits)
    out[positions ^ (positions >> 1)] = levels
    return out


def qpsk() -> Constellation:
    """Gray QPSK, {(+-1 +-j)/sqrt(2)}, label 00 -> (1+j)/sqrt(2)."""
    labels = np.arange(4)
    msb, lsb = labels >> 1, labels & 1
    points = ((1 - 2 * msb) + 1j * (1 - 2 * lsb)) / np.sqrt(2)
    return Constellation("qpsk", points, 2)


def qam16() -> Constellation:
    """Gray square 16-QAM scaled by 1/sqrt(10).

    The first two bits select the in-phase level, the last two the
    quadrature level.
    """
    pam = _gray_pam(2)
    labels = np.arange(16)
    points = (pam[labels >> 2] + 1j * pam[labels & 3]) / np.sqrt(10)
    return Constellation("16qam", points, 4)


_CONSTELLATIONS: Dict[str, Callable[[], Constellation]] = {
    "qpsk": qpsk,
    "16qam": qam16,
}


def get_constellation(name: str) -> Constellation:
    try:
        return _CONSTELLATIONS[name.lower()]()
    except KeyError:
        raise UnknownConstellationError(
            f"Unknown constellation {name!r}, choose from "
            f"{sorted(_CONSTELLATIONS)}."
        ) from None


def constellation_names() -> Tuple[str, ...]:
    return tuple(sorted(_CONSTELLATIONS))


@dataclass(frozen=True, eq=False)
class GaussianMessage:
    """Mean vector with a diagonal covariance.

    Off-diagonal covariance entries are not represented, every producer
    of a message discards them.
    """

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=complex)
        var = np.asarray(self.var, dtype=float)
        if mean.shape != var.shape or mean.ndim != 1:
            raise FrameSizeError(
                f"Mean {mean.shape} and variance {var.shape} must be vectors of "
                "equal length."
            )
        if not np.all(np.isfinite(var)) or np.any(var < 0):
            raise InvalidVarianceError("Variances must be finite and nonnegative.")
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "var", _readonly(var))

    def __len__(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def clamped(
        cls,
        mean: np.ndarray,
        var: np.ndarray,
        eps_var: float = Config.EPS_VAR,
        v_max: float = Config.V_MAX,
    ) -> "GaussianMessage":
        var = np.nan_to_num(np.asarray(var, dtype=float), nan=v_max, posinf=v_max)
        return cls(np.asarray(mean, dtype=complex), np.clip(var, eps_var, v_max))

    @classmethod
    def uninformative(cls, n: int) -> "GaussianMessage":
        """Zero mean, unit variance prior of a unit energy constellation."""
        return cls(np.zeros(n, dtype=complex), np.ones(n))

    @property
    def avg_var(self) -> float:
        return float(np.mean(self.var))

    def averaged(self) -> "GaussianMessage":
        """Same mean, every variance replaced by their average."""
        return GaussianMessage(self.mean, np.full(self.var.shape, self.avg_var))


def indices_to_bits(indices: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Flat bit vector of the labels of ``indices``, MSB first per symbol."""
    indices = np.asarray(indices, dtype=np.int64)
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((indices[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def bits_to_indices(bits: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[0] % bits_per_symbol:
        raise FrameSizeError("bit length not divisible into frame")
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1)
    return bits.reshape(-1, bits_per_symbol).astype(np.int64) @ weights


def modulate_bits(bits: ArrayLike, c: Constellation, g: FrameGrid) -> np.ndarray:
    """Maps a bit sequence to the DD symbol vector of one frame.

    Args:
        bits: MN * bits_per_symbol bits, consecutive groups of
            ``bits_per_symbol`` bits form one label.
        c: Constellation to map on.
        g: Frame the symbols are placed in.

    Returns:
        Complex vector of length MN.

    Raises:
        FrameSizeError: The number of bits does not fill the frame.
        InvalidBitsError: Bits outside of {0, 1}.

    """
    bits = np.asarray(bits).reshape(-1)
    if bits.shape[0] != g.MN * c.bits_per_symbol:
        raise FrameSizeError("bit length not divisible into frame")
    if not np.all((bits == 0) | (bits == 1)):
        raise InvalidBitsError("Bits must be 0 or 1.")
    return c.points[bits_to_indices(bits, c.bits_per_symbol)]


def hard_decision(m: np.ndarray, c: Constellation) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest constellation point per entry.

    Ties are resolved towards the lowest point index.

    Returns:
        Tuple of the symbol indices and the flat bit vector of their
        labels.

    """
    m = np.asarray(m, dtype=complex)
    distances = np.abs(m[:, None] - c.points[None, :]) ** 2
    # argmin returns the first minimum.
    indices = np.argmin(distances, axis=1)
    return indices, indices_to_bits(indices, c.bits_per_symbol)
