"""Experiment runners, report plumbing, and the command line front end."""

from .reports import ConfigError, DataTable, ExperimentReport, MetricRow
from .runners import (
    run_alpha_sweep,
    run_dp_audit,
    run_lemma_transfer_check,
    run_relevance_check,
    run_sampling_compare,
    run_simulation,
)
from .suites import SUITES, SuiteSpec, resolve_suite

__all__ = [
    "ConfigError",
    "DataTable",
    "ExperimentReport",
    "MetricRow",
    "SUITES",
    "SuiteSpec",
    "resolve_suite",
    "run_alpha_sweep",
    "run_dp_audit",
    "run_lemma_transfer_check",
    "run_relevance_check",
    "run_sampling_compare",
    "run_simulation",
]
