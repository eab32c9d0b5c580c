import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from otfs import channel, error, sim
from otfs.channel import ChannelSpec
from otfs.core import FrameGrid
from otfs.sim import DetectorName, FixedChannelSource, RandomChannelSource, SimConfig

CONFIGS = Path(__file__).parent / "configs"


@pytest.fixture()
def identity_config():
    return SimConfig.load(CONFIGS / "identity.json")


@pytest.fixture()
def desk_config():
    return SimConfig.load(CONFIGS / "random_desk.json")


def test_load_config(identity_config):
    assert identity_config.grid == FrameGrid(4, 2)
    assert isinstance(identity_config.channel, FixedChannelSource)
    assert identity_config.channel.spec == ChannelSpec.identity(FrameGrid(4, 2))
    assert identity_config.detectors == (
        DetectorName.XDD,
        DetectorName.DD_MMSE,
        DetectorName.MLSE,
    )
    assert identity_config.esn0_db == (40.0,)


def test_load_random_config(desk_config):
    assert desk_config.channel == RandomChannelSource(3, 4, 2.0, True)
    assert desk_config.grid == FrameGrid(8, 4)


@pytest.mark.parametrize(
    "overrides",
    [
        {"detectors": ()},
        {"detectors": ("zf",)},
        {"frames": 0},
        {"iters": 0},
        {"workers": 0},
        {"esn0_db": ()},
        {"target_errors": 0},
        {"noise_mode": "median"},
    ],
    ids=[
        "no-detectors",
        "unknown-detector",
        "no-frames",
        "no-iterations",
        "no-workers",
        "no-points",
        "zero-target",
        "unknown-noise-mode",
    ],
)
def test_invalid_config(overrides):
    with pytest.raises(error.InvalidSimConfigError):
        SimConfig(**overrides)


def test_mlse_needs_small_frames():
    with pytest.raises(error.OracleBudgetError):
        SimConfig(detectors=("mlse",))


def test_unknown_config_field():
    with pytest.raises(error.InvalidSimConfigError):
        SimConfig.from_json({"frames": 10, "colour": "blue"})


def test_unreadable_config(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{")
    with pytest.raises(error.InvalidSimConfigError):
        SimConfig.load(path)


def test_fixed_channel_is_moved_to_the_grid():
    cfg = SimConfig.from_json(
        {"M": 16, "N": 8, "channel": {"type": "fixed", "path": "mse_trace"}}
    )
    assert cfg.fixed_spec().grid == FrameGrid(16, 8)
    assert cfg.fixed_spec().paths == channel.load_fixture("mse_trace").paths


def test_fixed_channel_defaults_to_desk_grid(caplog):
    caplog.set_level(logging.INFO, logger="otfs.sim")
    cfg = SimConfig.from_json({"channel": {"type": "fixed", "path": "five_path"}})
    assert cfg.grid == FrameGrid(16, 8)
    assert cfg.fixed_spec().grid == FrameGrid(16, 8)
    assert "Moving channel five_path from the 16x16 grid onto 16x8" in caplog.text


def test_json_and_direct_configs_agree():
    from_json = SimConfig.from_json({"channel": {"type": "fixed", "path": "mse_trace"}})
    direct = SimConfig(
        channel=FixedChannelSource(channel.load_fixture("mse_trace"), "mse_trace")
    )
    assert from_json.grid == direct.grid
    assert from_json.fixed_spec() == direct.fixed_spec()


@pytest.mark.parametrize(
    "definition",
    [
        {"channel": {"type": "fixed"}},
        {"M": "sixteen"},
        {"channel": {"type": "random", "paths": 4, "colour": "blue"}},
    ],
    ids=["fixed-without-path", "non-integer-M", "unknown-channel-field"],
)
def test_malformed_config(definition):
    with pytest.raises(error.InvalidSimConfigError):
        SimConfig.from_json(definition)


def test_replace_ignores_none(desk_config):
    cfg = desk_config.replace(frames=None, seed=5)
    assert cfg.frames == desk_config.frames
    assert cfg.seed == 5


def test_esn0_conversion():
    assert sim.esn0_to_N0(10.0) == pytest.approx(0.1)
    assert sim.esn0_to_N0(0.0) == 1.0


def test_frames_share_draws_across_esn0(desk_config):
    low = sim.draw_frame(desk_config, 3, sim.esn0_to_N0(0.0))
    high = sim.draw_frame(desk_config, 3, sim.esn0_to_N0(20.0))
    assert low.spec == high.spec
    np.testing.assert_array_equal(low.bits, high.bits)
    clean = channel.apply_time_channel(low.spec, low.z)
    np.testing.assert_allclose((low.r - clean) * 0.1, high.r - clean, atol=1e-12)
    other = sim.draw_frame(desk_config, 4, 1.0)
    assert not np.array_equal(other.bits, low.bits)


def test_ber_sweep_noiseless_regime(identity_config):
    result = sim.run_ber_sweep(identity_config)
    frame = result.to_frame()
    assert frame["detector"].tolist() == ["xdd", "xdd", "dd_mmse", "mlse"]
    assert frame["iters"].tolist() == [1, 2, 1, 1]
    assert (frame["frames"] == 20).all()
    assert (frame["bit_errors"] == 0).all()
    assert (frame["ber"] == 0).all()
    assert frame.loc[frame["detector"] == "xdd", "mse"].notna().all()
    assert frame.loc[frame["detector"] != "xdd", "mse"].isna().all()


def test_ber_sweep_counters(desk_config):
    frame = sim.run_ber_sweep(desk_config).to_frame()
    assert len(frame) == 2 * (3 + 1)
    bits = frame["frames"] * 32 * 2
    np.testing.assert_allclose(frame["ber"], frame["bit_errors"] / bits)
    assert (frame["ber"] <= frame["ser"]).all()
    assert (frame["ser"] <= 1).all()
    assert (frame["bit_errors"] <= bits).all()


def test_ber_improves_with_snr(desk_config):
    frame = sim.run_ber_sweep(desk_config.replace(frames=64)).to_frame()
    xdd = frame[(frame["detector"] == "xdd") & (frame["iters"] == 3)]
    assert xdd["ber"].iloc[1] < xdd["ber"].iloc[0]


def test_ber_sweep_is_deterministic(desk_config):
    first = sim.run_ber_sweep(desk_config).to_frame()
    again = sim.run_ber_sweep(desk_config).to_frame()
    threaded = sim.run_ber_sweep(desk_config.replace(workers=3)).to_frame()
    assert first.equals(again)
    assert first.equals(threaded)


def test_early_stop(desk_config):
    cfg = desk_config.replace(esn0_db=(-5.0,), frames=1000, target_errors=10)
    result = sim.run_ber_sweep(cfg)
    assert result.frames_run[-5.0] == sim.Config.BATCH_FRAMES
    assert (result.to_frame()["frames"] == sim.Config.BATCH_FRAMES).all()


def test_write_results(tmp_path, identity_config):
    cfg = identity_config.replace(out=str(tmp_path / "runs" / "identity"))
    result = sim.run_ber_sweep(cfg)
    csv_path, json_path = sim.write_results(result.to_frame(), cfg, result.sidecar())
    assert csv_path.suffix == ".csv"
    header = csv_path.read_text().splitlines()[0]
    assert header.split(",") == [
        "detector",
        "esn0_db",
        "iters",
        "frames",
        "bit_errors",
        "symbol_errors",
        "ber",
        "ser",
        "mse",
    ]
    with open(json_path) as f:
        sidecar = json.load(f)
    assert sidecar["version"] == sim.__version__
    assert sidecar["config"]["detectors"] == ["xdd", "dd_mmse", "mlse"]
    assert sidecar["frame_seeds"]["frames_per_point"] == {"40.0": 20}

    first = csv_path.read_bytes()
    sim.write_results(sim.run_ber_sweep(cfg).to_frame(), cfg)
    assert csv_path.read_bytes() == first


def test_write_results_needs_out(identity_config):
    with pytest.raises(error.InvalidSimConfigError):
        sim.write_results(pd.DataFrame(), identity_config)


def test_traces_need_fixed_channel(desk_config):
    with pytest.raises(error.InvalidSimConfigError):
        sim.run_mse_trace(desk_config)


def _trace_config(**overrides):
    defaults = dict(
        grid=FrameGrid(8, 4),
        channel=FixedChannelSource(channel.load_fixture("snr_trace"), "snr_trace"),
        esn0_db=(10.0,),
        iters=4,
        frames=8,
        se_samples=10_000,
    )
    defaults.update(overrides)
    return SimConfig(**defaults)


def test_mse_trace():
    frame = sim.run_mse_trace(_trace_config())
    assert list(frame.columns) == [
        "esn0_db",
        "iteration",
        "measured_mse",
        "detector_v_a_T",
        "se_v_a_T",
        "frames",
    ]
    assert frame["iteration"].tolist() == [1, 2, 3, 4]
    # The first prior is the all-zero estimate of unit energy signals.
    assert frame["measured_mse"].iloc[0] == pytest.approx(1.0)
    assert frame["se_v_a_T"].iloc[0] == 1.0
    assert frame["measured_mse"].iloc[-1] < frame["measured_mse"].iloc[0]


def test_mse_trace_gaussian_denoiser_is_flat():
    frame = sim.run_mse_trace(_trace_config(denoiser="gaussian"))
    np.testing.assert_allclose(frame["detector_v_a_T"], 1.0, atol=1e-6)
    np.testing.assert_allclose(frame["se_v_a_T"], 1.0, atol=1e-9)


def test_snr_trace_identity_channel_reaches_bound():
    spec = ChannelSpec.identity(FrameGrid(8, 4))
    frame = sim.run_snr_trace(
        _trace_config(channel=FixedChannelSource(spec, "identity"))
    )
    np.testing.assert_allclose(frame["measured_eta_DD"], 10.0, rtol=1e-6)
    assert frame["within_bound"].all()


def test_snr_trace_within_bound():
    frame = sim.run_snr_trace(_trace_config(esn0_db=(6.0, 10.0)))
    assert len(frame) == 8
    assert frame["within_bound"].all()
    assert (frame["measured_eta_DD"] <= frame["bound"] * (1 + 1e-9)).all()
    sim.check_within_bound(frame)


def test_check_within_bound_raises():
    frame = pd.DataFrame(
        {"iteration": [1, 2, 1, 2], "within_bound": [True, False, True, False]}
    )
    with pytest.raises(error.BoundViolationError, match=r"\[2\]"):
        sim.check_within_bound(frame)


def test_se_trace():
    frame = sim.run_se_trace(_trace_config(esn0_db=(6.0, 10.0)))
    assert frame["esn0_db"].tolist() == [6.0] * 4 + [10.0] * 4
    assert "eta_DD" in frame.columns


def _ber_rows(detector, esn0, ber, iters=1):
    return pd.DataFrame(
        {"detector": detector, "esn0_db": esn0, "iters": iters, "ber": ber}
    )


def test_esn0_at_ber_interpolates_in_log_domain():
    frame = pd.concat(
        [
            _ber_rows("xdd", [0.0, 2.0, 4.0], [1e-1, 1e-3, 1e-4], iters=2),
            _ber_rows("xdd", [0.0, 2.0, 4.0], [0.3, 0.2, 0.1], iters=1),
            _ber_rows("dd_mmse", [0.0, 2.0], [0.5, 0.4]),
        ],
        ignore_index=True,
    )
    assert sim.esn0_at_ber(frame, "xdd", 1e-2) == pytest.approx(1.0)
    assert sim.esn0_at_ber(frame, "xdd", 1e-3) == pytest.approx(2.0)
    assert sim.esn0_at_ber(frame, "xdd", 0.15, iters=1) == pytest.approx(
        2 + 2 * np.log10(0.15 / 0.2) / np.log10(0.5)
    )
    with pytest.raises(error.BerNotReachedError):
        sim.esn0_at_ber(frame, "dd_mmse", 1e-2)
    with pytest.raises(error.BerNotReachedError):
        sim.esn0_at_ber(frame, "mlse", 1e-2)


def test_first_iteration_decides_like_dd_mmse(desk_config):
    # With a flat prior the time stage extrinsic is a positive multiple of
    # the one-shot L-MMSE estimate, QPSK decisions only see its sign.
    cfg = desk_config.replace(
        esn0_db=(0.0, 6.0), iters=1, frames=32, detectors=("xdd", "dd_mmse")
    )
    frame = sim.run_ber_sweep(cfg).to_frame()
    xdd = frame.loc[frame["detector"] == "xdd", "symbol_errors"].to_numpy()
    dd_mmse = frame.loc[frame["detector"] == "dd_mmse", "symbol_errors"].to_numpy()
    np.testing.assert_array_equal(xdd, dd_mmse)
