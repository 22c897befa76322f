"""Simulation and stability analysis for cable-tethered aerial guidance of a walking human."""
from .control import Controller, GuidanceConfig, Law, gamma, gamma_h, robot_reference
from .model import (
    AdmittanceParams,
    CableParams,
    ExogenousInputs,
    HumanParams,
    LiftoffError,
    ModelParams,
    SystemState,
    ValidationError,
    cable_force,
    ground_reaction,
    state_derivative,
)
from .sim import SimConfig, TrajectoryLog, run, step, summarize
from .stability import StabilityReport, stability_report

__version__ = "0.1.0"

__all__ = [
    "AdmittanceParams", "CableParams", "Controller", "ExogenousInputs", "GuidanceConfig", "HumanParams",
    "Law", "LiftoffError", "ModelParams", "SimConfig", "StabilityReport", "SystemState", "TrajectoryLog",
    "ValidationError", "cable_force", "gamma", "gamma_h", "ground_reaction", "robot_reference", "run",
    "stability_report", "state_derivative", "step", "summarize",
]
