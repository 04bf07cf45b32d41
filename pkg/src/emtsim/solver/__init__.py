"""DAE integrators: fixed-step Backward Euler and DASSL-style BDF."""
from .bdf import BdfIntegrator
from .be import BackwardEulerIntegrator, backward_euler_step
from .core import (InconsistentInitialConditions, SolverConfig, SolverError, SolverStats,
                   column_groups, consistent_xdot, fd_jacobian, weights, wrms)
from .driver import DaeProblem, SimResult, StateEvent, TimeEvent, simulate

__all__ = [
    "BackwardEulerIntegrator", "BdfIntegrator", "DaeProblem", "InconsistentInitialConditions",
    "SimResult", "SolverConfig", "SolverError", "SolverStats", "StateEvent", "TimeEvent",
    "backward_euler_step", "column_groups", "consistent_xdot", "fd_jacobian", "simulate",
    "weights", "wrms",
]
