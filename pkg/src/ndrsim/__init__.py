"""Simulation-based training and evaluation of neural green-split rules."""

from importlib import resources

from .network import (ControlScope, DemandSpec, DetectorConfig, Link, Phase,
                      Scenario, ScenarioError, SignalPlan, TrafficNetwork,
                      validate_network)
from .scenario import load_scenario, save_scenario

__all__ = [
    "ControlScope", "DemandSpec", "DetectorConfig", "Link", "Phase",
    "Scenario", "ScenarioError", "SignalPlan", "TrafficNetwork",
    "validate_network", "load_scenario", "save_scenario", "bundled_scenario",
]

__version__ = "0.1.0"


def bundled_scenario(name: str):
    """Filesystem path of a scenario shipped with the package."""
    return str(resources.files("ndrsim") / "data" / f"{name}.scenario")
