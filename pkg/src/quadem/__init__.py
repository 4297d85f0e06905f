"""Quadcopter simulation and EM-based system identification toolkit.

Stochastic rigid-body plant, LQG waypoint control with a differential-flatness
attitude reference, EKF/RTS state estimation, and expectation-maximization
identification of mass and diagonal inertia from flight data, in offline and
online (sliding-window) modes.
"""

__version__ = "0.1.0"

from .dynamics import QuadParams, ProcessNoiseSpec, ControlInput, GimbalLockError
from .sensors import SensorNoiseSpec, Observation
from .estimation import GaussianBelief, FilterConfig
from .control import FlatInput, DegenerateThrustError
from .em import (
    EmConfig,
    ThetaEstimate,
    EstimateTrace,
    EmRecord,
    DegenerateWindowError,
    em_offline,
    em_online_tick,
)
from .harness import (
    MissionSpec,
    ControllerConfig,
    RunRecord,
    CampaignSummary,
    default_theta0,
    run_offline,
    run_online,
    run_campaign,
    summarize_campaign,
)

__all__ = [
    "QuadParams",
    "ProcessNoiseSpec",
    "ControlInput",
    "GimbalLockError",
    "SensorNoiseSpec",
    "Observation",
    "GaussianBelief",
    "FilterConfig",
    "FlatInput",
    "DegenerateThrustError",
    "EmConfig",
    "ThetaEstimate",
    "EstimateTrace",
    "EmRecord",
    "DegenerateWindowError",
    "em_offline",
    "em_online_tick",
    "MissionSpec",
    "ControllerConfig",
    "RunRecord",
    "CampaignSummary",
    "default_theta0",
    "run_offline",
    "run_online",
    "run_campaign",
    "summarize_campaign",
    "__version__",
]
