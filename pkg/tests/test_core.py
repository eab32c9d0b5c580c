import numpy as np
import pytest

from otfs import core, error


@pytest.mark.parametrize(
    ("M", "N"),
    [(0, 4), (4, 0), (-1, 2), (2.5, 2), (True, 2)],
    ids=["zero-M", "zero-N", "negative", "float", "bool"],
)
def test_frame_grid_rejects_invalid_dimensions(M, N):
    with pytest.raises(error.InvalidGridError):
        core.FrameGrid(M, N)


def test_frame_grid_check_length(small_grid):
    small_grid.check_length(np.zeros(32))
    with pytest.raises(error.FrameSizeError):
        small_grid.check_length(np.zeros(31))


@pytest.mark.parametrize("name", ["qpsk", "16qam", "QPSK"])
def test_constellation_has_unit_energy(name):
    c = core.get_constellation(name)
    assert c.size == 2**c.bits_per_symbol
    assert c.energy == pytest.approx(1.0, abs=1e-12)
    assert np.mean(c.points) == pytest.approx(0.0, abs=1e-12)


def test_unknown_constellation():
    with pytest.raises(error.UnknownConstellationError):
        core.get_constellation("8psk")


def test_qpsk_labels():
    c = core.get_constellation("qpsk")
    x = core.modulate_bits([0, 0, 0, 1, 1, 0, 1, 1], c, core.FrameGrid(4, 1))
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(
        x, [s + 1j * s, s - 1j * s, -s + 1j * s, -s - 1j * s], atol=1e-15
    )


@pytest.mark.parametrize("name", ["qpsk", "16qam"])
def test_gray_labelling(name):
    # Nearest neighbours differ in exactly one bit.
    c = core.get_constellation(name)
    distances = np.abs(c.points[:, None] - c.points[None, :])
    np.fill_diagonal(distances, np.inf)
    nearest = distances.min()
    labels = c.labels
    for i, j in zip(*np.nonzero(np.isclose(distances, nearest))):
        assert np.sum(labels[i] != labels[j]) == 1


def test_modulate_rejects_wrong_length(small_grid, qpsk):
    with pytest.raises(error.FrameSizeError, match="not divisible into frame"):
        core.modulate_bits(np.zeros(63, dtype=int), qpsk, small_grid)


def test_modulate_rejects_non_binary(small_grid, qpsk):
    bits = np.zeros(64, dtype=int)
    bits[5] = 2
    with pytest.raises(error.InvalidBitsError):
        core.modulate_bits(bits, qpsk, small_grid)


@pytest.mark.parametrize("name", ["qpsk", "16qam"])
def test_hard_decision_recovers_bits(name, small_grid, rng):
    c = core.get_constellation(name)
    bits = rng.integers(0, 2, size=small_grid.MN * c.bits_per_symbol)
    x = core.modulate_bits(bits, c, small_grid)
    noise = 0.01 * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    indices, decided = core.hard_decision(x + noise, c)
    np.testing.assert_array_equal(decided, bits)
    sent = core.bits_to_indices(bits, c.bits_per_symbol)
    np.testing.assert_array_equal(indices, sent)


def test_hard_decision_tie_goes_to_lowest_index(qpsk):
    # The origin is equidistant from all four points.
    indices, _ = core.hard_decision(np.zeros(3), qpsk)
    np.testing.assert_array_equal(indices, [0, 0, 0])


def test_bits_to_indices_requires_whole_symbols():
    with pytest.raises(error.FrameSizeError):
        core.bits_to_indices(np.zeros(5, dtype=int), 2)


def test_permuted_constellation(qpsk):
    permuted = qpsk.permuted([1, 0, 3, 2])
    np.testing.assert_array_equal(permuted.points[[1, 0, 3, 2]], qpsk.points)
    assert permuted.energy == pytest.approx(1.0)


def test_gaussian_message_validation():
    with pytest.raises(error.InvalidVarianceError):
        core.GaussianMessage(np.zeros(2), np.array([1.0, -1.0]))
    with pytest.raises(error.FrameSizeError):
        core.GaussianMessage(np.zeros(3), np.ones(2))


def test_gaussian_message_clamped():
    msg = core.GaussianMessage.clamped(
        np.zeros(4), np.array([0.0, np.nan, np.inf, 0.5]), eps_var=1e-9, v_max=10.0
    )
    np.testing.assert_array_equal(msg.var, [1e-9, 10.0, 10.0, 0.5])


def test_gaussian_message_is_read_only():
    msg = core.GaussianMessage.uninformative(4)
    assert msg.avg_var == 1.0
    with pytest.raises(ValueError):
        msg.var[0] = 2.0


def test_gaussian_message_averaged():
    msg = core.GaussianMessage(np.array([1.0, 2.0j]), np.array([0.5, 1.5]))
    averaged = msg.averaged()
    np.testing.assert_array_equal(averaged.mean, msg.mean)
    np.testing.assert_array_equal(averaged.var, [1.0, 1.0])
