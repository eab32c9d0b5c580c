import numpy as np
import pytest

from otfs.channel import ChannelSpec, gen_random_channel, load_fixture
from otfs.core import FrameGrid, get_constellation


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def small_grid():
    return FrameGrid(M=8, N=4)


@pytest.fixture()
def qpsk():
    return get_constellation("qpsk")


@pytest.fixture()
def qam16():
    return get_constellation("16qam")


@pytest.fixture()
def random_channel(small_grid):
    return gen_random_channel(
        4, 5, 2.0, True, rng_seed=7, grid=small_grid, distinct_delays=True
    )


@pytest.fixture()
def identity_channel(small_grid):
    return ChannelSpec.identity(small_grid)


@pytest.fixture()
def five_path():
    return load_fixture("five_path")