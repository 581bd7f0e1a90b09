"""Declarative sweeps over ramp times, the record store, analysis and figures."""
from .analyze import analyze
from .config import ConfigError, Finding, RunConfig, from_dict, load_config, validate
from .figures import FIGURES, emit_figures
from .store import Store
from .sweep import run, run_trajectory, trajectory_key

__all__ = ["ConfigError", "FIGURES", "Finding", "RunConfig", "Store", "analyze", "emit_figures",
           "from_dict", "load_config", "run", "run_trajectory", "trajectory_key", "validate"]
