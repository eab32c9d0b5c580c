import numpy as np
import pandas as pd
import pytest

from otfs import channel, error, state_evolution
from otfs.channel import ChannelSpec
from otfs.core import FrameGrid, get_constellation
from otfs.detector import Denoiser
from otfs.state_evolution import se_dd_step, se_time_step

SAMPLES = 10_000


def test_eigenvalue_form_matches_dense_trace():
    rng = np.random.default_rng(0)
    for i in range(20):
        grid = FrameGrid(int(rng.choice([4, 8, 16])), int(rng.choice([2, 4, 8, 16])))
        spec = channel.gen_random_channel(
            int(rng.integers(1, 6)), 3, 2.0, True, i, grid
        )
        H = channel.build_time_channel(spec)
        eigs = state_evolution.eig_gram(spec)
        for v in (1.0, 0.3, 0.01):
            v_p_T, _ = se_time_step(v, eigs, 0.1)
            dense = state_evolution.se_time_step_dense(v, H, 0.1)
            assert v_p_T == pytest.approx(dense, abs=1e-10)


def test_eig_gram_is_cached(random_channel):
    first = state_evolution.eig_gram(random_channel)
    assert state_evolution.eig_gram(random_channel) is first
    assert not first.flags.writeable
    assert np.all(first >= 0)


def test_time_step_identity_channel():
    eigs = np.ones(16)
    v_p_T, v_a_DD = se_time_step(1.0, eigs, 0.25)
    assert v_p_T == pytest.approx(0.25 / 1.25)
    assert v_a_DD == pytest.approx(0.25)


def test_time_step_rejects_non_positive_noise():
    with pytest.raises(error.InvalidNoiseError):
        se_time_step(1.0, np.ones(4), 0.0)


def test_dd_step_without_gain():
    assert se_dd_step(0.5, 0.5, v_max=1e6) == 1e6
    assert se_dd_step(0.5, 0.25) == pytest.approx(0.5)


def test_jensen_lower_bound_holds_for_distinct_delays(small_grid):
    for seed in range(20):
        spec = channel.gen_random_channel(4, 5, 2.0, True, seed, small_grid, True)
        eigs = state_evolution.eig_gram(spec)
        for v in (1.0, 0.1):
            v_p_T, _ = se_time_step(v, eigs, 0.05)
            bound = state_evolution.jensen_lower_bound(v, spec.norm_sq, 0.05)
            assert v_p_T >= bound * (1 - 1e-12)


@pytest.mark.parametrize("eta", [0.1, 1.0, 10.0])
def test_gaussian_mse_matches_closed_form(eta, qpsk):
    estimate = state_evolution.mse_of_snr(
        eta, qpsk, 100_000, rng=1, denoiser=Denoiser.GAUSSIAN
    )
    assert abs(estimate.mse - state_evolution.gaussian_mse(eta)) < 4 * estimate.stderr


def test_mse_of_snr_common_random_numbers(qpsk):
    a = state_evolution.mse_of_snr(3.0, qpsk, SAMPLES, rng=5)
    b = state_evolution.mse_of_snr(3.0, qpsk, SAMPLES, rng=5)
    assert a == b
    low = state_evolution.mse_of_snr(1.0, qpsk, SAMPLES, rng=5).mse
    high = state_evolution.mse_of_snr(30.0, qpsk, SAMPLES, rng=5).mse
    assert 0 <= high < low <= 1


@pytest.mark.parametrize("name", ["qpsk", "16qam"])
def test_mse_of_snr_is_non_increasing(name):
    c = get_constellation(name)
    estimates = [
        state_evolution.mse_of_snr(eta, c, SAMPLES, rng=9)
        for eta in np.logspace(-1, 2, 20)
    ]
    for low, high in zip(estimates, estimates[1:]):
        assert high.mse <= low.mse + 3 * max(low.stderr, high.stderr)


def test_mse_of_snr_input_checks(qpsk):
    with pytest.raises(error.InvalidNoiseError):
        state_evolution.mse_of_snr(0.0, qpsk, SAMPLES)
    with pytest.raises(error.InvalidSampleSizeError):
        state_evolution.mse_of_snr(1.0, qpsk, 100)


def test_mse_table(qam16):
    table = state_evolution.build_mse_table(
        qam16, etas=[0.1, 1.0, 10.0, 100.0], samples=SAMPLES
    )
    assert np.all(np.diff(table.mse) <= 0)
    assert table.interpolate(1.0) == pytest.approx(table.mse[1])
    # Held constant outside of the grid.
    assert table.interpolate(1e-6) == table.mse[0]


def test_run_se_identity_channel(qpsk):
    spec = ChannelSpec.identity(FrameGrid(8, 4))
    trajectory = state_evolution.run_se(spec, 0.1, qpsk, 3, samples=SAMPLES)
    assert trajectory.eta_DD[0] == pytest.approx(10.0)
    assert trajectory.bound == pytest.approx(10.0)


def test_gaussian_denoiser_has_no_iteration_gain(qpsk, small_grid):
    for seed in range(10):
        spec = channel.gen_random_channel(4, 5, 2.0, True, seed, small_grid)
        trajectory = state_evolution.run_se(
            spec, 0.1, qpsk, 5, denoiser=Denoiser.GAUSSIAN
        )
        np.testing.assert_allclose(trajectory.v_a_T, 1.0, atol=1e-9)
        assert trajectory.converged


def test_fixed_point_posterior_variances_agree(qpsk, small_grid):
    N0 = 10 ** (-6 / 10)
    for seed in range(20):
        spec = channel.gen_random_channel(4, 5, 2.0, True, seed, small_grid, True)
        trajectory = state_evolution.run_se(spec, N0, qpsk, 200, samples=SAMPLES)
        assert trajectory.converged
        last = trajectory[-1]
        assert last.v_p_T == pytest.approx(last.v_p_DD, rel=1e-5)


@pytest.mark.parametrize("name", ["mse_trace", "snr_trace"])
def test_effective_snr_rises_towards_bound(name, qpsk):
    spec = channel.load_fixture(name).with_grid(FrameGrid(16, 8))
    N0 = 10 ** (-10 / 10)
    trajectory = state_evolution.run_se(spec, N0, qpsk, 10, samples=SAMPLES)
    eta = trajectory.eta_DD
    assert np.all(np.diff(eta) >= -0.02 * eta[:-1])
    assert np.all(eta <= trajectory.bound * (1 + 1e-9))


def test_to_frame(random_channel, qpsk):
    trajectory = state_evolution.run_se(random_channel, 0.1, qpsk, 3, samples=SAMPLES)
    frame = trajectory.to_frame()
    assert isinstance(frame, pd.DataFrame)
    assert list(frame.columns) == [
        "iteration",
        "v_a_T",
        "v_a_DD",
        "v_p_T",
        "v_p_DD",
        "eta_DD",
        "bound",
    ]
    assert frame["iteration"].tolist() == [1, 2, 3]


def test_run_se_with_table(random_channel, qpsk):
    table = state_evolution.build_mse_table(qpsk, samples=SAMPLES)
    trajectory = state_evolution.run_se(
        random_channel, 0.1, qpsk, 4, mse_table=table
    )
    assert len(trajectory) == 4
    assert np.all(trajectory.v_p_DD > 0)


def test_snr_upper_bound_checks_noise(random_channel):
    with pytest.raises(error.InvalidNoiseError):
        state_evolution.snr_upper_bound(random_channel, 0.0)
