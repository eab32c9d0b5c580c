from pathlib import Path
from typing import List, Optional

import pandas as pd
import typer

from otfs import sim
from otfs._version import __version__
from otfs.channel import fixture_names, load_fixture, resolve_channel
from otfs.config import Config
from otfs.core import FrameGrid, constellation_names
from otfs.detector import Denoiser
from otfs.error import BoundViolationError, Error
from otfs.sim import DetectorName, FixedChannelSource, SimConfig
from otfs.utils import echo, echo_json, init_logger

__FULL_SCALE_HELP_MESSAGE = (
    f"Run on the full {Config.FULL_M}x{Config.FULL_N} frame instead of the "
    f"desk-scale {Config.DEFAULT_M}x{Config.DEFAULT_N} one. Every detector "
    "iteration then factorizes a 2048x2048 matrix, expect seconds per frame "
    "and minutes per Es/N0 point."
)

__OUT_HELP_MESSAGE = (
    "Write the results to <OUT>.csv together with a <OUT>.json sidecar "
    "holding the resolved configuration. Without it the csv goes to stdout."
)


def _default(
    verbosity: int = typer.Option(
        0,
        "--verbose",
        "-v",
        count=True,
        show_default=False,
        max=3,
        clamp=True,
        help="Counter to set verbosity level, e.g. 'otfs-sim -vv ber'",
    ),
):
    init_logger(verbosity=verbosity)


typer_app = typer.Typer(
    name="otfs-sim",
    no_args_is_help=True,
    add_completion=False,
    help="""
    Monte-Carlo simulations of OTFS detection and its state evolution.
    """,
    short_help="OTFS simulation CLI",
    epilog="Run 'otfs-sim COMMAND --help' for more information on a command.",
    callback=_default,
)


def __entrypoint():
    typer_app()


_CONFIG = typer.Option(
    None,
    "--config",
    "-c",
    exists=True,
    dir_okay=False,
    help="JSON simulation config, flags override its fields.",
)
_CHANNEL = typer.Option(
    None,
    "--channel",
    help="Channel JSON document or bundled channel name, see 'channels'.",
)
_ESN0 = typer.Option(
    None, "--esn0", help="Es/N0 point in dB, can be given multiple times."
)
_ITERS = typer.Option(None, "--iters", min=1, help="Detector iterations.")
_FRAMES = typer.Option(None, "--frames", min=1, help="Frames per Es/N0 point.")
_SEED = typer.Option(None, "--seed", help="Master seed.")
_OUT = typer.Option(None, "--out", "-o", help=__OUT_HELP_MESSAGE)
_WORKERS = typer.Option(None, "--workers", min=1, help="Worker threads.")
_CONSTELLATION = typer.Option(
    None,
    "--constellation",
    help=f"One of: {', '.join(constellation_names())}.",
)
_DENOISER = typer.Option(None, "--denoiser", help="Symbol prior of the DD stage.")
_FULL_SCALE = typer.Option(
    False, "--full-scale", show_default=False, help=__FULL_SCALE_HELP_MESSAGE
)


def _resolve_config(
    config: Optional[Path],
    channel: Optional[str],
    esn0: Optional[List[float]],
    full_scale: bool,
    default_channel: Optional[str] = None,
    **overrides,
) -> SimConfig:
    cfg = SimConfig.load(config) if config is not None else SimConfig()

    if channel is not None:
        source = FixedChannelSource(resolve_channel(channel), channel)
        overrides["channel"] = source
    elif default_channel is not None and not isinstance(
        cfg.channel, FixedChannelSource
    ):
        overrides["channel"] = FixedChannelSource(
            load_fixture(default_channel), default_channel
        )
    if esn0:
        overrides["esn0_db"] = tuple(esn0)
    if full_scale:
        overrides["grid"] = FrameGrid(Config.FULL_M, Config.FULL_N)
    return cfg.replace(**overrides)


def _emit(frame: pd.DataFrame, cfg: SimConfig, sidecar: Optional[dict] = None):
    if cfg.out is None:
        typer.echo(frame.to_csv(index=False), nl=False)
        return
    csv_path, json_path = sim.write_results(frame, cfg, sidecar)
    echo(f"Wrote {csv_path} and {json_path}.", err=True)


@typer_app.command()
def ber(
    config: Optional[Path] = _CONFIG,
    channel: Optional[str] = _CHANNEL,
    esn0: Optional[List[float]] = _ESN0,
    iters: Optional[int] = _ITERS,
    frames: Optional[int] = _FRAMES,
    seed: Optional[int] = _SEED,
    out: Optional[str] = _OUT,
    workers: Optional[int] = _WORKERS,
    constellation: Optional[str] = _CONSTELLATION,
    detectors: Optional[List[DetectorName]] = typer.Option(
        None,
        "--detector",
        "-d",
        help="Detector to run, can be given multiple times.",
    ),
    progress: bool = typer.Option(
        False, "--progress", show_default=False, help="Show a progress bar."
    ),
    full_scale: bool = _FULL_SCALE,
):
    """
    BER and SER sweep over Es/N0.

    The iterative detector gets one row per iteration, one-shot
    detectors a single row with iters=1.
    """
    try:
        cfg = _resolve_config(
            config,
            channel,
            esn0,
            full_scale,
            iters=iters,
            frames=frames,
            seed=seed,
            out=out,
            workers=workers,
            constellation=constellation,
            detectors=tuple(detectors) if detectors else None,
        )
        result = sim.run_ber_sweep(cfg, progress=progress)
        _emit(result.to_frame(), cfg, result.sidecar())
    except Error as e:
        echo(str(e), err=True)
        raise typer.Exit(code=1)


@typer_app.command()
def mse(
    config: Optional[Path] = _CONFIG,
    channel: Optional[str] = _CHANNEL,
    esn0: Optional[List[float]] = _ESN0,
    iters: Optional[int] = _ITERS,
    frames: Optional[int] = _FRAMES,
    seed: Optional[int] = _SEED,
    out: Optional[str] = _OUT,
    workers: Optional[int] = _WORKERS,
    constellation: Optional[str] = _CONSTELLATION,
    denoiser: Optional[Denoiser] = _DENOISER,
    full_scale: bool = _FULL_SCALE,
):
    """
    Measured time domain MSE per iteration next to its prediction.

    Needs a fixed channel, defaults to the bundled 'mse_trace' one.
    """
    try:
        cfg = _resolve_config(
            config,
            channel,
            esn0,
            full_scale,
            default_channel="mse_trace",
            iters=iters,
            frames=frames,
            seed=seed,
            out=out,
            workers=workers,
            constellation=constellation,
            denoiser=denoiser,
        )
        _emit(sim.run_mse_trace(cfg), cfg)
    except Error as e:
        echo(str(e), err=True)
        raise typer.Exit(code=1)


@typer_app.command()
def snr(
    config: Optional[Path] = _CONFIG,
    channel: Optional[str] = _CHANNEL,
    esn0: Optional[List[float]] = _ESN0,
    iters: Optional[int] = _ITERS,
    frames: Optional[int] = _FRAMES,
    seed: Optional[int] = _SEED,
    out: Optional[str] = _OUT,
    workers: Optional[int] = _WORKERS,
    constellation: Optional[str] = _CONSTELLATION,
    denoiser: Optional[Denoiser] = _DENOISER,
    full_scale: bool = _FULL_SCALE,
):
    """
    Effective DD domain SNR per iteration, predicted and bounded.

    Needs a fixed channel, defaults to the bundled 'snr_trace' one.
    Exits with code 2 if a measured SNR exceeds its bound.
    """
    try:
        cfg = _resolve_config(
            config,
            channel,
            esn0,
            full_scale,
            default_channel="snr_trace",
            iters=iters,
            frames=frames,
            seed=seed,
            out=out,
            workers=workers,
            constellation=constellation,
            denoiser=denoiser,
        )
        frame = sim.run_snr_trace(cfg)
        _emit(frame, cfg)
        sim.check_within_bound(frame)
    except BoundViolationError as e:
        echo(str(e), err=True)
        raise typer.Exit(code=2)
    except Error as e:
        echo(str(e), err=True)
        raise typer.Exit(code=1)


@typer_app.command()
def se(
    config: Optional[Path] = _CONFIG,
    channel: Optional[str] = _CHANNEL,
    esn0: Optional[List[float]] = _ESN0,
    iters: Optional[int] = _ITERS,
    seed: Optional[int] = _SEED,
    out: Optional[str] = _OUT,
    constellation: Optional[str] = _CONSTELLATION,
    denoiser: Optional[Denoiser] = _DENOISER,
    samples: Optional[int] = typer.Option(
        None, "--samples", help="Monte-Carlo samples per MSE(eta) evaluation."
    ),
    full_scale: bool = _FULL_SCALE,
):
    """
    State evolution prediction without running the detector.
    """
    try:
        cfg = _resolve_config(
            config,
            channel,
            esn0,
            full_scale,
            default_channel="mse_trace",
            iters=iters,
            seed=seed,
            out=out,
            constellation=constellation,
            denoiser=denoiser,
            se_samples=samples,
        )
        _emit(sim.run_se_trace(cfg), cfg)
    except Error as e:
        echo(str(e), err=True)
        raise typer.Exit(code=1)


@typer_app.command()
def channels(
    json: bool = typer.Option(
        False,
        "--json",
        show_default=False,
        help="Get output in json.",
    ),
):
    """
    List the bundled channels usable with --channel.
    """
    specs = {name: load_fixture(name) for name in fixture_names()}
    if json:
        echo_json({name: spec.to_json() for name, spec in specs.items()})
        return
    for name, spec in specs.items():
        echo(
            f"{name}: P={spec.P}, M={spec.grid.M}, N={spec.grid.N}, "
            f"delays={spec.delays.tolist()}, ||h||^2={spec.norm_sq:.4f}",
            wrap=0,
        )


@typer_app.command()
def version():
    """
    Get otfs version.
    """
    echo(__version__)
