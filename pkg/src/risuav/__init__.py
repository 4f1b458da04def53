"""Secrecy energy efficiency optimisation for a UAV-mounted RIS uplink."""

from .orchestrator import run_algorithm2
from .rates import evaluate
from .scenario import ScenarioConfig, default_paper_scenario, load_config

__version__ = "0.1.0"
__all__ = ["ScenarioConfig", "default_paper_scenario", "load_config", "run_algorithm2", "evaluate"]
