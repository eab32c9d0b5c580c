"""Unitary conversions between the DD, TF and time domains.

Every fast transform works on a leading axis of length MN and leaves any
trailing axes alone, which allows conjugating whole matrices column by
column. The dense Kronecker kernels are kept as ground truth.
"""
import functools
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft
import scipy.linalg

from otfs.config import Config
from otfs.core import FrameGrid
from otfs.error import DenseGuardError, InvalidVarianceError


class Direction(str, Enum):
    """Direction of a domain conversion.

    DD_TO_TIME: (F_N^H kron I_M)
    TIME_TO_DD: (F_N kron I_M)
    DD_TO_TF: (F_N^H kron F_M)
    TF_TO_DD: (F_N kron F_M^H)
    TIME_TO_TF: (I_N kron F_M)
    TF_TO_TIME: (I_N kron F_M^H)
    """

    DD_TO_TIME = "dd_to_time"
    TIME_TO_DD = "time_to_dd"
    DD_TO_TF = "dd_to_tf"
    TF_TO_DD = "tf_to_dd"
    TIME_TO_TF = "time_to_tf"
    TF_TO_TIME = "tf_to_time"


def _frames(v: np.ndarray, g: FrameGrid) -> np.ndarray:
    """View with the MN axis split into (N, M), Doppler/time slot first."""
    v = np.asarray(v, dtype=complex)
    g.check_length(v)
    return v.reshape((g.N, g.M) + v.shape[1:])


def _flat(v: np.ndarray, g: FrameGrid) -> np.ndarray:
    return v.reshape((g.MN,) + v.shape[2:])


def dd_to_time(x: np.ndarray, g: FrameGrid) -> np.ndarray:
    """Size-N inverse DFT along the Doppler axis, (F_N^H kron I_M) x."""
    return _flat(scipy.fft.ifft(_frames(x, g), axis=0, norm="ortho"), g)


def time_to_dd(r: np.ndarray, g: FrameGrid) -> np.ndarray:
    return _flat(scipy.fft.fft(_frames(r, g), axis=0, norm="ortho"), g)


def dd_to_tf(x: np.ndarray, g: FrameGrid) -> np.ndarray:
    """ISFFT, (F_N^H kron F_M) x."""
    frames = scipy.fft.fft(_frames(x, g), axis=1, norm="ortho")
    return _flat(scipy.fft.ifft(frames, axis=0, norm="ortho"), g)


def tf_to_dd(y_tf: np.ndarray, g: FrameGrid) -> np.ndarray:
    """SFFT, (F_N kron F_M^H) y_tf."""
    frames = scipy.fft.ifft(_frames(y_tf, g), axis=1, norm="ortho")
    return _flat(scipy.fft.fft(frames, axis=0, norm="ortho"), g)


def time_to_tf(r: np.ndarray, g: FrameGrid) -> np.ndarray:
    """Per time slot M-point DFT, (I_N kron F_M) r."""
    return _flat(scipy.fft.fft(_frames(r, g), axis=1, norm="ortho"), g)


def tf_to_time(y_tf: np.ndarray, g: FrameGrid) -> np.ndarray:
    return _flat(scipy.fft.ifft(_frames(y_tf, g), axis=1, norm="ortho"), g)


_FAST = {
    Direction.DD_TO_TIME: dd_to_time,
    Direction.TIME_TO_DD: time_to_dd,
    Direction.DD_TO_TF: dd_to_tf,
    Direction.TF_TO_DD: tf_to_dd,
    Direction.TIME_TO_TF: time_to_tf,
    Direction.TF_TO_TIME: tf_to_time,
}


def conjugate(matrix: np.ndarray, direction: Direction, g: FrameGrid) -> np.ndarray:
    """K A K^H for the kernel K of ``direction``, without materializing K."""
    apply = _FAST[Direction(direction)]
    left = apply(matrix, g)
    return apply(left.conj().T, g).conj().T


@functools.lru_cache(maxsize=32)
def _dft(n: int) -> np.ndarray:
    return _readonly_copy(scipy.linalg.dft(n, scale="sqrtn"))


def _readonly_copy(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


def check_dense_guard(g: FrameGrid) -> None:
    if g.MN > Config.DENSE_GUARD:
        raise DenseGuardError(
            f"MN={g.MN} exceeds the dense matrix guard of {Config.DENSE_GUARD}."
        )


@dataclass(frozen=True)
class DomainKernel:
    """A unitary domain conversion on a given frame."""

    grid: FrameGrid
    direction: Direction

    def apply(self, v: np.ndarray) -> np.ndarray:
        return _FAST[Direction(self.direction)](v, self.grid)

    def dense(self) -> np.ndarray:
        """The explicit MN x MN Kronecker kernel."""
        check_dense_guard(self.grid)
        f_n, f_m = _dft(self.grid.N), _dft(self.grid.M)
        eye_n, eye_m = np.eye(self.grid.N), np.eye(self.grid.M)
        factors = {
            Direction.DD_TO_TIME: (f_n.conj().T, eye_m),
            Direction.TIME_TO_DD: (f_n, eye_m),
            Direction.DD_TO_TF: (f_n.conj().T, f_m),
            Direction.TF_TO_DD: (f_n, f_m.conj().T),
            Direction.TIME_TO_TF: (eye_n, f_m),
            Direction.TF_TO_TIME: (eye_n, f_m.conj().T),
        }
        return np.kron(*factors[Direction(self.direction)])


def diag_rotate_dd_to_time(d: np.ndarray, g: FrameGrid) -> np.ndarray:
    """Diagonal of (F_N^H kron I_M) diag(d) (F_N kron I_M).

    Entry ``n * M + m`` of the result is the mean of ``d`` over all
    Doppler bins at delay ``m``. The sum of the entries is preserved.
    """
    d = np.asarray(d, dtype=float)
    g.check_length(d)
    if np.any(d < 0):
        raise InvalidVarianceError("Diagonal entries must be nonnegative.")
    return np.tile(d.reshape(g.N, g.M).mean(axis=0), g.N)

