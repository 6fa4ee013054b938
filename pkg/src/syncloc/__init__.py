"""Joint relative pose and clock offset estimation for two robots.

The estimators take each robot's odometry and the bearings one robot
measures toward the other, and return the relative SE(3) transform between
their odometry frames together with the constant offset between their clocks.
"""

from .errors import *  # noqa: F401,F403
from .estimator import (
    ItoConfig,
    ItoResult,
    RelativeEstimate,
    SolverConfig,
    estimate_baseline,
    estimate_ito,
    estimate_nto,
)
from .sim import BearingObservation, SimConfig, simulate_pair
from .trajectory import Trajectory, shift_trajectory

__version__ = "0.1.0"

__all__ = [
    "BearingObservation",
    "ItoConfig",
    "ItoResult",
    "RelativeEstimate",
    "SimConfig",
    "SolverConfig",
    "Trajectory",
    "estimate_baseline",
    "estimate_ito",
    "estimate_nto",
    "shift_trajectory",
    "simulate_pair",
]
