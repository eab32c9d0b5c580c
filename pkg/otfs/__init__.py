"""OTFS modulation with cross-domain iterative detection.

You can do things such as:
* Modulate bits onto a delay-Doppler frame and pass it through a
  doubly dispersive channel.
* Detect it with the iterative time/DD domain detector or a baseline.
* Predict the detector's trajectory with its state evolution.

Detection example:
>>> import numpy as np
>>> import otfs
>>> g = otfs.FrameGrid(16, 8)
>>> c = otfs.get_constellation("qpsk")
>>> spec = otfs.gen_random_channel(4, 10, 5.0, True, rng_seed=1, grid=g)
>>> bits = np.random.default_rng(2).integers(0, 2, g.MN * 2)
>>> z = otfs.dd_to_time(otfs.modulate_bits(bits, c, g), g)
>>> r = otfs.apply_channel(spec, z, N0=0.05, rng=3)
>>> detection = otfs.detect(r, spec, 0.05, c)
>>> detection.bits.shape
(256,)
>>> len(detection.trace)
10

"""
from otfs._version import __version__
from otfs.baselines import dd_mmse_detect, mlse_detect, mlse_oracle
from otfs.channel import (
    ChannelSpec,
    PathSpec,
    apply_channel,
    build_dd_channel,
    build_tf_channel,
    build_time_channel,
    gen_random_channel,
    load_fixture,
)
from otfs.config import Config
from otfs.core import (
    Constellation,
    FrameGrid,
    GaussianMessage,
    get_constellation,
    hard_decision,
    modulate_bits,
)
from otfs.detector import DetectorConfig, detect
from otfs.state_evolution import run_se
from otfs.transforms import dd_to_tf, dd_to_time, tf_to_dd, time_to_dd
