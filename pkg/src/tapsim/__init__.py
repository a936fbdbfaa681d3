"""Simulator and policy library for adaptive dispatching of jobs to hosts."""

from tapsim.config import ScenarioConfig, load_config, load_preset
from tapsim.engine import Simulation, run, sweep
from tapsim.metrics import MetricsReport, to_csv
from tapsim.policies import GoalKind, PolicyKind

__all__ = [
    "GoalKind",
    "MetricsReport",
    "PolicyKind",
    "ScenarioConfig",
    "Simulation",
    "load_config",
    "load_preset",
    "run",
    "sweep",
    "to_csv",
]

__version__ = "0.1.0"
