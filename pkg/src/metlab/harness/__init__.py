"""Scenario catalog, experiment runner, reports and the command line."""

from .checks import CHECKS, CheckResult
from .run import Report, emit_plotdata, run
from .scenarios import CATALOG, ScenarioSpec, build_scenario

__all__ = ["CATALOG", "CHECKS", "CheckResult", "Report", "ScenarioSpec", "build_scenario", "emit_plotdata", "run"]
