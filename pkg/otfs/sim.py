"""Monte-Carlo simulation of the detectors.

Frames are independent work items: frame ``f`` of a run with master seed
``s`` draws its channel, bits and unit noise from
``numpy.random.default_rng([s, f])``, whatever worker runs it and
whatever Es/N0 point it belongs to. All detectors of a (frame, Es/N0)
pair see the same received vector.

Es/N0 is converted with N0 = 10^(-EsN0/10), constellations have unit
energy and random channels unit expected power.
"""
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from otfs import transforms
from otfs._version import __version__
from otfs.baselines import OracleBudget, dd_mmse_detect, mlse_detect
from otfs.channel import (
    ChannelSpec,
    apply_channel,
    gen_random_channel,
    resolve_channel,
)
from otfs.config import Config
from otfs.core import (
    Constellation,
    FrameGrid,
    bits_to_indices,
    get_constellation,
    indices_to_bits,
    modulate_bits,
)
from otfs.detector import Denoiser, DetectorConfig, NoiseMode, detect
from otfs.error import (
    BerNotReachedError,
    BoundViolationError,
    InvalidSimConfigError,
)
from otfs.linalg import SolverMode
from otfs.state_evolution import run_se, snr_upper_bound
from otfs.types import ChannelSourceDefinition, SimConfigDefinition

logger = logging.getLogger(__name__)


class DetectorName(str, Enum):
    XDD = "xdd"
    DD_MMSE = "dd_mmse"
    MLSE = "mlse"


@dataclass(frozen=True)
class RandomChannelSource:
    paths: int = 4
    l_max: int = 10
    k_max: float = 5.0
    fractional: bool = True
    distinct_delays: bool = False

    def draw(self, rng: np.random.Generator, grid: FrameGrid) -> ChannelSpec:
        return gen_random_channel(
            self.paths,
            self.l_max,
            self.k_max,
            self.fractional,
            rng,
            grid,
            self.distinct_delays,
        )

    def to_json(self) -> dict:
        return {"type": "random", **dataclasses.asdict(self)}


@dataclass(frozen=True)
class FixedChannelSource:
    spec: ChannelSpec
    # Fixture name or path the channel was loaded from.
    name: str = ""

    def draw(self, rng: np.random.Generator, grid: FrameGrid) -> ChannelSpec:
        return self.spec

    def to_json(self) -> dict:
        return {"type": "fixed", "path": self.name, "channel": self.spec.to_json()}


ChannelSource = Union[RandomChannelSource, FixedChannelSource]


@dataclass(frozen=True)
class SimConfig:
    grid: FrameGrid = FrameGrid(Config.DEFAULT_M, Config.DEFAULT_N)
    constellation: str = "qpsk"
    channel: ChannelSource = RandomChannelSource()
    esn0_db: Tuple[float, ...] = (10.0,)
    iters: int = 5
    detectors: Tuple[DetectorName, ...] = (DetectorName.XDD,)
    frames: int = 1000
    # Stop an Es/N0 point once every detector made this many bit errors,
    # None runs all frames.
    target_errors: Optional[int] = Config.EARLY_STOP_BIT_ERRORS
    seed: int = 0
    out: Optional[str] = None
    workers: int = 1
    noise_mode: NoiseMode = NoiseMode.SCALAR_AVG
    solver_mode: SolverMode = SolverMode.DENSE
    denoiser: Denoiser = Denoiser.CONSTELLATION
    se_samples: int = Config.MSE_SAMPLES

    def __post_init__(self):
        object.__setattr__(self, "esn0_db", tuple(float(e) for e in self.esn0_db))
        try:
            object.__setattr__(
                self, "detectors", tuple(DetectorName(d) for d in self.detectors)
            )
            object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
            object.__setattr__(self, "solver_mode", SolverMode(self.solver_mode))
            object.__setattr__(self, "denoiser", Denoiser(self.denoiser))
        except ValueError as e:
            raise InvalidSimConfigError(str(e)) from e

        if isinstance(self.channel, FixedChannelSource):
            old = self.channel.spec.grid
            if old != self.grid:
                logger.info(
                    "Moving channel %s from the %dx%d grid onto %dx%d.",
                    self.channel.name or "<unnamed>",
                    old.M,
                    old.N,
                    self.grid.M,
                    self.grid.N,
                )
                object.__setattr__(
                    self,
                    "channel",
                    FixedChannelSource(
                        self.channel.spec.with_grid(self.grid), self.channel.name
                    ),
                )

        if not self.detectors:
            raise InvalidSimConfigError("At least one detector is required.")
        if not self.esn0_db:
            raise InvalidSimConfigError("At least one Es/N0 point is required.")
        if self.frames < 1:
            raise InvalidSimConfigError(f"frames must be >= 1, got {self.frames}.")
        if self.iters < 1:
            raise InvalidSimConfigError(f"iters must be >= 1, got {self.iters}.")
        if self.workers < 1:
            raise InvalidSimConfigError(f"workers must be >= 1, got {self.workers}.")
        if self.target_errors is not None and self.target_errors < 1:
            raise InvalidSimConfigError("target_errors must be positive or null.")
        if DetectorName.MLSE in self.detectors:
            OracleBudget().check(self.get_constellation(), self.grid.MN)

    def get_constellation(self) -> Constellation:
        return get_constellation(self.constellation)

    def detector_config(self) -> DetectorConfig:
        return DetectorConfig(
            L_max=self.iters,
            noise_mode=self.noise_mode,
            solver_mode=self.solver_mode,
            denoiser=self.denoiser,
        )

    def fixed_spec(self) -> ChannelSpec:
        if not isinstance(self.channel, FixedChannelSource):
            raise InvalidSimConfigError("This run needs a fixed channel.")
        return self.channel.spec

    def replace(self, **overrides) -> "SimConfig":
        """Copy with the non-None ``overrides`` applied."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **overrides)

    @classmethod
    def from_json(
        cls, definition: SimConfigDefinition, base_dir: Optional[Path] = None
    ) -> "SimConfig":
        """Config from its JSON document.

        M and N default to the desk-scale grid for every channel source, a
        fixed channel drawn on another grid is moved onto it.
        """
        try:
            definition = dict(definition)
            channel = _channel_source_from_json(definition.pop("channel", {}), base_dir)
            grid = FrameGrid(
                int(definition.pop("M", Config.DEFAULT_M)),
                int(definition.pop("N", Config.DEFAULT_N)),
            )
            return cls(grid=grid, channel=channel, **definition)
        except (TypeError, ValueError) as e:
            raise InvalidSimConfigError(f"Invalid simulation config: {e}.") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SimConfig":
        path = Path(path)
        try:
            with open(path, "r") as f:
                definition = json.load(f)
        except (FileNotFoundError, json.JSONDecodeError) as e:
            raise InvalidSimConfigError(f"Could not read config {path}: {e}.") from e
        return cls.from_json(definition, base_dir=path.parent)

    def to_json(self) -> dict:
        return {
            "M": self.grid.M,
            "N": self.grid.N,
            "constellation": self.constellation,
            "channel": self.channel.to_json(),
            "esn0_db": list(self.esn0_db),
            "iters": self.iters,
            "detectors": [d.value for d in self.detectors],
            "frames": self.frames,
            "target_errors": self.target_errors,
            "seed": self.seed,
            "out": self.out,
            "workers": self.workers,
            "noise_mode": self.noise_mode.value,
            "solver_mode": self.solver_mode.value,
            "denoiser": self.denoiser.value,
            "se_samples": self.se_samples,
        }


def _channel_source_from_json(
    definition: ChannelSourceDefinition, base_dir: Optional[Path]
) -> ChannelSource:
    definition = dict(definition)
    kind = definition.pop("type", "random")
    if kind == "random":
        return RandomChannelSource(**definition)
    if kind == "fixed":
        if "path" not in definition:
            raise InvalidSimConfigError("A fixed channel source needs a 'path'.")
        name = str(definition["path"])
        source: Union[str, Path] = name
        if base_dir is not None and (base_dir / name).is_file():
            source = base_dir / name
        return FixedChannelSource(resolve_channel(source), name)
    raise InvalidSimConfigError(f"Unknown channel source type {kind!r}.")


def esn0_to_N0(esn0_db: float) -> float:
    return 10 ** (-esn0_db / 10)


def frame_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.default_rng([seed, frame])


class DetectorOutcome(NamedTuple):
    # Per iteration, a single entry for one-shot detectors.
    bit_errors: np.ndarray
    symbol_errors: np.ndarray
    mse: Optional[np.ndarray]
    seconds: float


class Frame(NamedTuple):
    spec: ChannelSpec
    bits: np.ndarray
    z: np.ndarray
    r: np.ndarray


def draw_frame(cfg: SimConfig, frame: int, N0: float) -> Frame:
    c = cfg.get_constellation()
    rng = frame_rng(cfg.seed, frame)
    spec = cfg.channel.draw(rng, cfg.grid)
    bits = rng.integers(0, 2, size=cfg.grid.MN * c.bits_per_symbol)
    z = transforms.dd_to_time(modulate_bits(bits, c, cfg.grid), cfg.grid)
    return Frame(spec, bits, z, apply_channel(spec, z, N0, rng))


def _errors(
    decided: np.ndarray, bits: np.ndarray, c: Constellation
) -> Tuple[int, int]:
    sent = bits_to_indices(bits, c.bits_per_symbol)
    decided_bits = indices_to_bits(decided, c.bits_per_symbol)
    return int(np.sum(decided_bits != bits)), int(np.sum(decided != sent))


def run_frame(cfg: SimConfig, frame: int, esn0_db: float) -> Dict[str, DetectorOutcome]:
    """Runs every configured detector on one frame."""
    c = cfg.get_constellation()
    N0 = esn0_to_N0(esn0_db)
    f = draw_frame(cfg, frame, N0)

    outcomes = {}
    for name in cfg.detectors:
        start = time.perf_counter()
        if name is DetectorName.XDD:
            detection = detect(f.r, f.spec, N0, c, cfg.detector_config())
            records = list(detection.trace)
            # An early exit repeats the last decision.
            records += [records[-1]] * (cfg.iters - len(records))
            counts = np.array([_errors(rec.symbols, f.bits, c) for rec in records])
            mse = _pad(detection.trace.measured_mse(f.z), cfg.iters)
        else:
            if name is DetectorName.DD_MMSE:
                y = transforms.time_to_dd(f.r, cfg.grid)
                detection = dd_mmse_detect(y, f.spec, N0, c)
            else:
                detection = mlse_detect(f.r, f.spec, c)
            counts = np.array([_errors(detection.symbols, f.bits, c)])
            mse = None
        outcomes[name.value] = DetectorOutcome(
            counts[:, 0], counts[:, 1], mse, time.perf_counter() - start
        )
    return outcomes


@dataclass
class PointResult:
    detector: str
    esn0_db: float
    iters: int
    frames: int
    bits: int
    symbols: int
    bit_errors: int
    symbol_errors: int
    mse: Optional[float]
    wall_clock: float

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits

    @property
    def ser(self) -> float:
        return self.symbol_errors / self.symbols


@dataclass
class SimResult:
    config: SimConfig
    points: List[PointResult] = field(default_factory=list)
    # Frames run per Es/N0 point, frame f used seed [config.seed, f].
    frames_run: Dict[float, int] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        columns = [
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
        rows = [
            {**dataclasses.asdict(p), "ber": p.ber, "ser": p.ser} for p in self.points
        ]
        return pd.DataFrame(rows, columns=columns)

    def sidecar(self) -> dict:
        return {
            "version": __version__,
            "config": self.config.to_json(),
            "frame_seeds": {
                "scheme": "numpy.random.default_rng([seed, frame])",
                "frames_per_point": {str(k): v for k, v in self.frames_run.items()},
            },
        }


class _Accumulator:
    def __init__(self, iterations: int):
        self.frames = 0
        self.bit_errors = np.zeros(iterations, dtype=np.int64)
        self.symbol_errors = np.zeros(iterations, dtype=np.int64)
        self.mse = np.zeros(iterations)
        self.seconds = 0.0

    def add(self, outcome: DetectorOutcome) -> None:
        self.frames += 1
        self.bit_errors += outcome.bit_errors
        self.symbol_errors += outcome.symbol_errors
        if outcome.mse is not None:
            self.mse += outcome.mse
        self.seconds += outcome.seconds


def _run_batches(cfg: SimConfig, esn0_db: float, pool, progress: bool):
    """Accumulates frames batch by batch until the point is decided."""
    accumulators = {
        d.value: _Accumulator(cfg.iters if d is DetectorName.XDD else 1)
        for d in cfg.detectors
    }
    frames = range(cfg.frames)
    bar = tqdm(
        total=cfg.frames,
        desc=f"Es/N0 {esn0_db:g} dB",
        disable=not progress,
        leave=False,
    )
    for start in range(0, cfg.frames, Config.BATCH_FRAMES):
        batch = frames[start : start + Config.BATCH_FRAMES]
        outcomes = pool.map(lambda f: run_frame(cfg, f, esn0_db), batch)
        # Reduced in frame order, independent of the worker count.
        for outcome in outcomes:
            for name, acc in accumulators.items():
                acc.add(outcome[name])
        bar.update(len(batch))
        if cfg.target_errors is not None and all(
            acc.bit_errors[-1] >= cfg.target_errors for acc in accumulators.values()
        ):
            break
    bar.close()
    return accumulators


def run_ber_sweep(cfg: SimConfig, progress: bool = False) -> SimResult:
    """BER and SER of every detector at every Es/N0 point.

    The iterative detector reports one row per iteration, one-shot
    detectors a single row with ``iters`` = 1.
    """
    c = cfg.get_constellation()
    result = SimResult(cfg)
    with ThreadPool(cfg.workers) as pool:
        for esn0_db in cfg.esn0_db:
            accumulators = _run_batches(cfg, esn0_db, pool, progress)
            for name, acc in accumulators.items():
                for i in range(acc.bit_errors.shape[0]):
                    result.points.append(
                        PointResult(
                            detector=name,
                            esn0_db=esn0_db,
                            iters=i + 1,
                            frames=acc.frames,
                            bits=acc.frames * cfg.grid.MN * c.bits_per_symbol,
                            symbols=acc.frames * cfg.grid.MN,
                            bit_errors=int(acc.bit_errors[i]),
                            symbol_errors=int(acc.symbol_errors[i]),
                            mse=(
                                float(acc.mse[i] / acc.frames)
                                if name == DetectorName.XDD.value
                                else None
                            ),
                            wall_clock=acc.seconds,
                        )
                    )
            result.frames_run[esn0_db] = next(iter(accumulators.values())).frames
            for name, acc in accumulators.items():
                logger.info(
                    "Es/N0 %g dB, %s: %d bit errors in %d frames (%.1fs).",
                    esn0_db,
                    name,
                    acc.bit_errors[-1],
                    acc.frames,
                    acc.seconds,
                )
    return result


def _xdd_traces(cfg: SimConfig, esn0_db: float, pool):
    spec = cfg.fixed_spec()
    c = cfg.get_constellation()
    N0 = esn0_to_N0(esn0_db)
    det_cfg = cfg.detector_config()

    def run(frame: int):
        f = draw_frame(cfg, frame, N0)
        trace = detect(f.r, spec, N0, c, det_cfg).trace
        return trace.measured_mse(f.z), trace.v_a_T, trace.v_a_DD

    return pool.map(run, range(cfg.frames))


def _pad(values: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([values, np.repeat(values[-1:], n - values.shape[0])])


def run_mse_trace(cfg: SimConfig) -> pd.DataFrame:
    """Measured time domain MSE per iteration next to its prediction.

    Columns: esn0_db, iteration, measured_mse, detector_v_a_T, se_v_a_T,
    frames.
    """
    spec = cfg.fixed_spec()
    c = cfg.get_constellation()
    tables = []
    with ThreadPool(cfg.workers) as pool:
        for esn0_db in cfg.esn0_db:
            traces = _xdd_traces(cfg, esn0_db, pool)
            measured = np.mean([_pad(t[0], cfg.iters) for t in traces], axis=0)
            estimated = np.mean([_pad(t[1], cfg.iters) for t in traces], axis=0)
            se = run_se(
                spec,
                esn0_to_N0(esn0_db),
                c,
                cfg.iters,
                samples=cfg.se_samples,
                seed=cfg.seed,
                denoiser=cfg.denoiser,
            )
            tables.append(
                pd.DataFrame(
                    {
                        "esn0_db": esn0_db,
                        "iteration": np.arange(1, cfg.iters + 1),
                        "measured_mse": measured,
                        "detector_v_a_T": estimated,
                        "se_v_a_T": se.v_a_T,
                        "frames": cfg.frames,
                    }
                )
            )
    return pd.concat(tables, ignore_index=True)


def run_snr_trace(cfg: SimConfig) -> pd.DataFrame:
    """Measured and predicted effective DD SNR per iteration with its bound.

    Columns: esn0_db, iteration, measured_eta_DD, se_eta_DD, bound,
    within_bound, frames. ``within_bound`` is False where the measured
    SNR exceeds the bound by more than Config.BOUND_SLACK.
    """
    spec = cfg.fixed_spec()
    c = cfg.get_constellation()
    tables = []
    with ThreadPool(cfg.workers) as pool:
        for esn0_db in cfg.esn0_db:
            N0 = esn0_to_N0(esn0_db)
            traces = _xdd_traces(cfg, esn0_db, pool)
            v_a_DD = np.mean([_pad(t[2], cfg.iters) for t in traces], axis=0)
            se = run_se(
                spec,
                N0,
                c,
                cfg.iters,
                samples=cfg.se_samples,
                seed=cfg.seed,
                denoiser=cfg.denoiser,
            )
            bound = snr_upper_bound(spec, N0)
            measured = 1.0 / v_a_DD
            within = measured <= bound * (1 + Config.BOUND_SLACK)
            if not np.all(within):
                logger.warning(
                    "Es/N0 %g dB: measured eta_DD exceeds ||h||^2/N0 = %.3e at "
                    "iterations %s.",
                    esn0_db,
                    bound,
                    (np.flatnonzero(~within) + 1).tolist(),
                )
            tables.append(
                pd.DataFrame(
                    {
                        "esn0_db": esn0_db,
                        "iteration": np.arange(1, cfg.iters + 1),
                        "measured_eta_DD": measured,
                        "se_eta_DD": se.eta_DD,
                        "bound": bound,
                        "within_bound": within,
                        "frames": cfg.frames,
                    }
                )
            )
    return pd.concat(tables, ignore_index=True)


def check_within_bound(frame: pd.DataFrame) -> None:
    """Raises BoundViolationError if a row of an snr trace is flagged."""
    violations = frame.loc[~frame["within_bound"].astype(bool)]
    if not violations.empty:
        raise BoundViolationError(
            "Measured effective SNR exceeds ||h||^2/N0 at iterations "
            f"{sorted(set(violations['iteration'].tolist()))}."
        )


def esn0_at_ber(
    frame: pd.DataFrame, detector: str, target: float, iters: Optional[int] = None
) -> float:
    """Es/N0 in dB at which a detector reaches ``target`` BER.

    Interpolates log10(BER) linearly between the two simulated points that
    straddle the target. ``iters`` picks an iteration of the iterative
    detector, its last one by default.

    Raises:
        BerNotReachedError: No pair of points straddles the target.

    """
    rows = frame.loc[frame["detector"] == DetectorName(detector).value]
    if iters is None:
        iters = int(rows["iters"].max()) if not rows.empty else 1
    rows = rows.loc[rows["iters"] == iters].sort_values("esn0_db")
    esn0, ber = rows["esn0_db"].to_numpy(), rows["ber"].to_numpy()
    for i in range(len(esn0) - 1):
        if ber[i] >= target > ber[i + 1] and ber[i + 1] > 0:
            lo, hi = np.log10(ber[i]), np.log10(ber[i + 1])
            weight = (np.log10(target) - lo) / (hi - lo)
            return float(esn0[i] + weight * (esn0[i + 1] - esn0[i]))
    span = f"{esn0.min():g} to {esn0.max():g} dB" if len(esn0) else "no points"
    raise BerNotReachedError(
        f"{detector} (iteration {iters}) does not cross BER {target:g} over "
        f"{span}."
    )


def run_se_trace(cfg: SimConfig) -> pd.DataFrame:
    """State evolution prediction only, one block of rows per Es/N0."""
    spec = cfg.fixed_spec()
    c = cfg.get_constellation()
    tables = []
    for esn0_db in cfg.esn0_db:
        trajectory = run_se(
            spec,
            esn0_to_N0(esn0_db),
            c,
            cfg.iters,
            samples=cfg.se_samples,
            seed=cfg.seed,
            denoiser=cfg.denoiser,
        )
        frame = trajectory.to_frame()
        frame.insert(0, "esn0_db", esn0_db)
        tables.append(frame)
    return pd.concat(tables, ignore_index=True)


def write_results(frame: pd.DataFrame, cfg: SimConfig, sidecar: Optional[dict] = None):
    """Writes ``<out>.csv`` and the ``<out>.json`` sidecar.

    Returns:
        Tuple of the csv and json paths.

    """
    if cfg.out is None:
        raise InvalidSimConfigError("No output path configured.")
    csv_path = Path(cfg.out).with_suffix(".csv")
    json_path = csv_path.with_suffix(".json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(csv_path, index=False)
    sidecar = sidecar or {"version": __version__, "config": cfg.to_json()}
    with open(json_path, "w") as f:
        json.dump(sidecar, f, indent=4, sort_keys=True)
    return csv_path, json_path


__all__ = [
    "DetectorName",
    "FixedChannelSource",
    "RandomChannelSource",
    "SimConfig",
    "SimResult",
    "check_within_bound",
    "esn0_at_ber",
    "run_ber_sweep",
    "run_mse_trace",
    "run_snr_trace",
    "run_se_trace",
    "write_results",
]
