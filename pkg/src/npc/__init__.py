"""Nonlocal phase-field optimal control toolkit."""
import logging as _logging
import os as _os

from .grid import GridSpec, SpaceTimeGrid, build_grid
from .nonlocal_ops import CallableOperator, KernelSpec, NonlocalOperator
from .physics import PotentialSpec
from .state import InitialData, SolverConfig, solve_state
from .sensitivity import solve_linearized, taylor_test
from .adjoint import solve_adjoint, gradient, reduced_gradient
from .cost import Betas, Targets, eval_cost
from .optimizer import (ControlConstraints, ControlProblem, H1TimeMetric, OptConfig,
                        project_Uad, projected_gradient, stationarity)

__version__ = "0.1.0"

_level = _os.environ.get("NPC_LOG")
if _level:
    _logging.basicConfig(level=getattr(_logging, _level.upper(), _logging.WARNING),
                         format="%(levelname)s %(name)s: %(message)s")
_logging.getLogger(__name__).addHandler(_logging.NullHandler())
