import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from npc.grid import GridSpec, SpaceTimeGrid, build_grid
from npc.nonlocal_ops import KernelSpec, NonlocalOperator
from npc.physics import PotentialSpec
from npc.state import InitialData

settings.register_profile("npc", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("npc")


def make_st(cells=7, nt=16, T=1.0, L=1.0):
    return SpaceTimeGrid(build_grid(GridSpec(1, (L,), (cells,))), T, nt)


def default_init(st):
    x = st.grid.x / st.grid.spec.lengths[0]
    return InitialData(0.5 + 0.2 * np.cos(np.pi * x), 0.5 + 0.3 * np.cos(np.pi * x) ** 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def oracle():
    """8-node, 16-step instance with the smooth potential."""
    st = make_st(7, 16)
    return st, PotentialSpec(smooth=True), NonlocalOperator(KernelSpec(), st), default_init(st)


@pytest.fixture
def reference():
    """64-node, 128-step instance with the logarithmic potential."""
    st = make_st(63, 128)
    return st, PotentialSpec(), NonlocalOperator(KernelSpec(), st), default_init(st)
