import numpy as np
import pytest
import scipy.sparse

from otfs import channel, error, linalg
from otfs.linalg import BandedHermitianSolver, DenseHermitianSolver, SolverMode


def _system(spec, N0=0.1):
    H = channel.build_time_channel(spec)
    c = np.linspace(0.2, 1.0, spec.grid.MN)
    return (H * c) @ H.conj().T + N0 * np.eye(spec.grid.MN), H


@pytest.mark.parametrize(
    ("n", "expected"),
    [(1, [0]), (5, [0, 4, 1, 3, 2]), (6, [0, 5, 1, 4, 2, 3])],
)
def test_folded_permutation(n, expected):
    np.testing.assert_array_equal(linalg.folded_permutation(n), expected)


def test_folding_bounds_cyclic_bandwidth():
    n = 16
    # Cyclic tridiagonal, the corners make the plain bandwidth n - 1.
    S = 4 * np.eye(n) + np.roll(np.eye(n), 1, axis=0) + np.roll(np.eye(n), -1, axis=0)
    assert linalg.bandwidth(S) == n - 1
    perm = linalg.folded_permutation(n)
    assert linalg.bandwidth(S[np.ix_(perm, perm)]) == 2


def test_bandwidth_of_sparse_matrix():
    S = scipy.sparse.diags([1.0, 2.0, 1.0], [-3, 0, 3], shape=(8, 8))
    assert linalg.bandwidth(S) == 3
    assert linalg.bandwidth(np.zeros((3, 3))) == 0


@pytest.mark.parametrize("solver_cls", [DenseHermitianSolver, BandedHermitianSolver])
def test_solvers_match_dense_inverse(solver_cls, random_channel, rng):
    S, H = _system(random_channel)
    solver = solver_cls(S)
    B = rng.standard_normal((S.shape[0], 3)) + 1j * rng.standard_normal((S.shape[0], 3))
    np.testing.assert_allclose(solver.solve(B), np.linalg.solve(S, B), atol=1e-10)
    expected = np.real(np.diag(H.conj().T @ np.linalg.solve(S, H)))
    np.testing.assert_allclose(solver.quad_diag(H), expected, atol=1e-10)


def test_banded_solver_accepts_sparse(random_channel, rng):
    S, _ = _system(random_channel)
    b = rng.standard_normal(S.shape[0]) + 0j
    sparse = BandedHermitianSolver(scipy.sparse.csr_matrix(S))
    np.testing.assert_allclose(
        sparse.solve(b), BandedHermitianSolver(S).solve(b), atol=1e-12
    )
    assert sparse.bandwidth <= 2 * int(random_channel.delays.max())


@pytest.mark.parametrize("mode", list(SolverMode), ids=lambda m: m.value)
def test_non_positive_definite_raises(mode):
    S = np.diag([1.0, -1.0, 1.0, 1.0])
    with pytest.raises(error.SolverError):
        linalg.make_solver(S, mode)


def test_make_solver_modes():
    S = np.eye(4)
    assert isinstance(linalg.make_solver(S, "dense"), DenseHermitianSolver)
    assert isinstance(linalg.make_solver(S, SolverMode.BANDED), BandedHermitianSolver)


def test_banded_quad_diag_of_sparse_channel(random_channel):
    S, H = _system(random_channel)
    solver = BandedHermitianSolver(scipy.sparse.csr_matrix(S))
    sparse_H = channel.time_channel_sparse(random_channel)
    expected = np.real(np.diag(H.conj().T @ np.linalg.solve(S, H)))
    np.testing.assert_allclose(solver.quad_diag(sparse_H), expected, atol=1e-10)


def test_band_inverse_matches_dense_inverse(random_channel):
    S, _ = _system(random_channel)
    solver = BandedHermitianSolver(S)
    perm = linalg.folded_permutation(S.shape[0])
    inverse = np.linalg.inv(S)[np.ix_(perm, perm)]
    z = solver._band_inverse
    for k in range(solver.bandwidth + 1):
        np.testing.assert_allclose(
            z[k, : S.shape[0] - k], np.diag(inverse, k), atol=1e-10
        )


def test_banded_quad_diag_falls_back_outside_the_band():
    # A column touching two rows far apart in the folded order.
    n = 8
    S = 3 * np.eye(n) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    S[0, n - 1] = S[n - 1, 0] = 1.0
    B = scipy.sparse.csc_matrix(([1.0, 1.0], ([0, 4], [0, 0])), shape=(n, 1))
    solver = BandedHermitianSolver(S)
    inverse = np.linalg.inv(S)
    expected = inverse[0, 0] + 2 * inverse[0, 4] + inverse[4, 4]
    np.testing.assert_allclose(solver.quad_diag(B), [expected], atol=1e-10)
