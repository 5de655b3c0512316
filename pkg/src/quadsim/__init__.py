"""Vectorized quadrotor flight simulator with a cascade flight controller,
five task environments, analytic depth sensing, and a local-socket bridge
for reinforcement-learning trainers."""

from .control import (
    ActuatorCommand,
    CascadeController,
    Command,
    ControlMode,
    ControllerGains,
    RejectedCommandError,
)
from .dynamics import (
    ExternalWrench,
    QuadParams,
    QuadState,
    SimulationDiverged,
    derivative,
    hover_speed,
    rotor_wrench,
    step,
)
from .env import StepResult, VecEnv
from .tasks import EpisodeOutcome, TaskKind
from .world import CameraModel, DepthDrParams, Primitive, Scene

__version__ = "0.1.0"

__all__ = [
    "ActuatorCommand",
    "CameraModel",
    "CascadeController",
    "Command",
    "ControlMode",
    "ControllerGains",
    "DepthDrParams",
    "EpisodeOutcome",
    "ExternalWrench",
    "Primitive",
    "QuadParams",
    "QuadState",
    "RejectedCommandError",
    "Scene",
    "SimulationDiverged",
    "StepResult",
    "TaskKind",
    "VecEnv",
    "derivative",
    "hover_speed",
    "rotor_wrench",
    "step",
]
