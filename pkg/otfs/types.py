"""Shapes of the JSON documents read and written by otfs."""
from typing import List, Optional, TypedDict, Union

__all__ = [
    "ChannelDefinition",
    "RandomChannelDefinition",
    "FixedChannelDefinition",
    "ChannelSourceDefinition",
    "SimConfigDefinition",
]


class ChannelDefinition(TypedDict):
    M: int
    N: int
    # Pairs of [re, im].
    gains: List[List[float]]
    delays: List[int]
    # Integer and fractional Doppler combined.
    dopplers: List[float]


class RandomChannelDefinition(TypedDict, total=False):
    type: str  # "random"
    paths: int
    l_max: int
    k_max: float
    fractional: bool
    distinct_delays: bool


class FixedChannelDefinition(TypedDict):
    type: str  # "fixed"
    # Path to a ChannelDefinition document or the name of a bundled
    # fixture, e.g. "mse_trace".
    path: str


ChannelSourceDefinition = Union[RandomChannelDefinition, FixedChannelDefinition]


class SimConfigDefinition(TypedDict, total=False):
    M: int
    N: int
    constellation: str
    channel: ChannelSourceDefinition
    esn0_db: List[float]
    iters: int
    detectors: List[str]
    frames: int
    target_errors: Optional[int]
    seed: int
    out: str
    workers: int
    noise_mode: str
    solver_mode: str
    denoiser: str
    se_samples: int
