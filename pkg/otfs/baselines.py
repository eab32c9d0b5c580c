"""Reference detectors: one-shot DD domain L-MMSE and exhaustive MLSE."""
import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, NamedTuple, Optional, Tuple

import numpy as np

from otfs import transforms
from otfs.channel import ChannelSpec, build_dd_channel, build_time_channel
from otfs.config import Config
from otfs.core import Constellation, hard_decision, indices_to_bits
from otfs.error import InvalidNoiseError, OracleBudgetError
from otfs.linalg import DenseHermitianSolver

logger = logging.getLogger(__name__)


class Metric(str, Enum):
    """Equivalent scores of a DD hypothesis x with G = H_T (F_N^H kron I_M).

    FORNEY: ||r - G x||^2
    UNGERBOECK: x^H G^H G x - 2 Re{x^H G^H r}, the former minus ||r||^2
    """

    FORNEY = "forney"
    UNGERBOECK = "ungerboeck"


@dataclass(frozen=True)
class OracleBudget:
    max_hypotheses: int = Config.ORACLE_MAX_HYPOTHESES

    def check(self, c: Constellation, MN: int) -> int:
        hypotheses = c.size**MN
        if hypotheses > self.max_hypotheses:
            raise OracleBudgetError(
                f"Exhaustive search over {c.size}^{MN} hypotheses exceeds the "
                f"budget of {self.max_hypotheses}."
            )
        return hypotheses


class BaselineDetection(NamedTuple):
    bits: np.ndarray
    symbols: np.ndarray
    soft: Optional[np.ndarray]


def dd_mmse_detect(
    y: np.ndarray, spec: ChannelSpec, N0: float, c: Constellation
) -> BaselineDetection:
    """One-shot L-MMSE equalization with the DD effective channel.

    x_soft = H^H (H H^H + N0 I)^-1 y for a unit variance symbol prior,
    followed by a per-symbol hard decision.

    Raises:
        SolverError: N0 = 0 with a rank deficient channel.
        DenseGuardError: MN above the dense matrix guard.

    """
    if N0 < 0:
        raise InvalidNoiseError(f"N0 must be nonnegative, got {N0}.")
    y = np.asarray(y, dtype=complex)
    spec.grid.check_length(y, "received vector")
    H = build_dd_channel(spec)
    solver = DenseHermitianSolver(H @ H.conj().T + N0 * np.eye(spec.grid.MN))
    soft = H.conj().T @ solver.solve(y)
    symbols, bits = hard_decision(soft, c)
    return BaselineDetection(bits, symbols, soft)


def dd_to_time_channel(spec: ChannelSpec) -> np.ndarray:
    """G = H_T (F_N^H kron I_M), maps DD symbols to the noiseless r."""
    H = build_time_channel(spec)
    # (F_N^H kron I_M) is symmetric, so H K = (K H^T)^T.
    return transforms.dd_to_time(H.T, spec.grid).T


def forney_metric(r: np.ndarray, x: np.ndarray, G: np.ndarray) -> np.ndarray:
    """||r - G x||^2 for every row of ``x``."""
    x = np.atleast_2d(x)
    return np.sum(np.abs(r[None, :] - x @ G.T) ** 2, axis=1)


def ungerboeck_metric(r: np.ndarray, x: np.ndarray, G: np.ndarray) -> np.ndarray:
    """x^H G^H G x - 2 Re{x^H G^H r} for every row of ``x``."""
    x = np.atleast_2d(x)
    gram = G.conj().T @ G
    matched = G.conj().T @ r
    quad = np.real(np.einsum("ij,jk,ik->i", x.conj(), gram, x))
    return quad - 2 * np.real(x.conj() @ matched)


def enumerate_hypotheses(
    c: Constellation, MN: int, start: int, stop: int
) -> np.ndarray:
    """Symbol indices of hypotheses ``start..stop-1`` in lexicographic order."""
    powers = c.size ** np.arange(MN - 1, -1, -1, dtype=np.int64)
    index = np.arange(start, stop, dtype=np.int64)
    return (index[:, None] // powers[None, :]) % c.size


def gray_walk(radix: int, n_digits: int) -> Iterator[Tuple[int, int]]:
    """Steps of the reflected radix-ary Gray code as (position, new digit).

    The walk starts at the all-zero word and visits each of the
    ``radix**n_digits`` words once, every step moves one digit by one.
    Position 0 is the most significant digit.
    """
    digits = [0] * n_digits
    direction = [1] * n_digits
    for _ in range(radix**n_digits - 1):
        j = n_digits - 1
        while not 0 <= digits[j] + direction[j] < radix:
            direction[j] = -direction[j]
            j -= 1
        digits[j] += direction[j]
        yield j, digits[j]


def _block_digits(c: Constellation, MN: int) -> int:
    digits = 0
    while digits < MN and c.size ** (digits + 1) <= Config.ORACLE_CHUNK:
        digits += 1
    return digits


def _improves(metric: float, rank: int, best_metric: float, best_rank: int) -> bool:
    tol = Config.ORACLE_TIE_TOL * max(1.0, abs(best_metric))
    if metric < best_metric - tol:
        return True
    return metric <= best_metric + tol and rank < best_rank


def mlse_oracle(
    r: np.ndarray,
    spec: ChannelSpec,
    c: Constellation,
    budget: Optional[OracleBudget] = None,
    metric: Metric = Metric.FORNEY,
) -> np.ndarray:
    """Exhaustive maximum likelihood sequence detection.

    The trailing symbols are scored in vectorized blocks, the leading ones
    follow a Gray code walk so that the residual r - G x only changes by
    one column of G per step. Metrics within ``Config.ORACLE_TIE_TOL``
    tie, ties go to the first sequence in lexicographic order of the
    symbol indices.

    Returns:
        The symbol indices of the best sequence.

    Raises:
        OracleBudgetError: |A|^MN exceeds the budget.

    """
    budget = budget or OracleBudget()
    MN = spec.grid.MN
    hypotheses = budget.check(c, MN)
    r = np.asarray(r, dtype=complex)
    spec.grid.check_length(r, "received vector")
    # The Ungerboeck metric differs from the Forney one by ||r||^2.
    offset = 0.0 if Metric(metric) is Metric.FORNEY else float(np.vdot(r, r).real)

    G = dd_to_time_channel(spec)
    n_lead = MN - _block_digits(c, MN)
    block = enumerate_hypotheses(c, MN - n_lead, 0, c.size ** (MN - n_lead))
    block_signal = c.points[block] @ G[:, n_lead:].T
    lead_powers = c.size ** np.arange(n_lead - 1, -1, -1, dtype=np.int64)

    lead = np.zeros(n_lead, dtype=np.int64)
    residual = r - G[:, :n_lead] @ c.points[lead]
    best_metric, best_rank, best = np.inf, hypotheses, None
    for step in itertools.chain([None], gray_walk(c.size, n_lead)):
        if step is not None:
            k, digit = step
            residual -= G[:, k] * (c.points[digit] - c.points[lead[k]])
            lead[k] = digit
        metrics = np.sum(np.abs(residual[None, :] - block_signal) ** 2, axis=1)
        floor = metrics.min()
        i = int(np.argmax(metrics <= floor + Config.ORACLE_TIE_TOL * max(1.0, floor)))
        rank = int(lead @ lead_powers) * block.shape[0] + i
        if _improves(metrics[i] - offset, rank, best_metric, best_rank):
            best_metric, best_rank = metrics[i] - offset, rank
            best = np.concatenate([lead, block[i]])
    logger.debug(
        "MLSE searched %d hypotheses, best metric %.3e.", hypotheses, best_metric
    )
    return best


def mlse_detect(
    r: np.ndarray,
    spec: ChannelSpec,
    c: Constellation,
    budget: Optional[OracleBudget] = None,
) -> BaselineDetection:
    symbols = mlse_oracle(r, spec, c, budget)
    return BaselineDetection(indices_to_bits(symbols, c.bits_per_symbol), symbols, None)
