"""Autonomy stack and simulator for a wire-driven robot that ties wires to
overhead bars with small flying anchors."""

from .config import ScenarioConfig, load_config, load_preset
from .harness import PhaseTimeout, run_scenario
from .runlog import RunLog, export_log, read_log

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "load_config", "load_preset", "PhaseTimeout", "run_scenario",
           "RunLog", "export_log", "read_log", "__version__"]
