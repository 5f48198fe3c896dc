"""Experiment harness: scenario configs, metric sweeps, report emission, CLI."""

from .metrics import MetricReport, RunResult, run_scenario, run_scenarios
from .report import emit_report
from .scenarios import Scenario, bundled_scenarios, load_scenarios
