"""Multi-study robust factor model: fitting, selection, simulation, metrics."""

from ._multirfm import (
    fit,
    mean_trace,
    scenario_names,
    select_factors,
    simulate,
    simulate_custom,
    trace_stat,
)

__all__ = [
    "fit",
    "mean_trace",
    "scenario_names",
    "select_factors",
    "simulate",
    "simulate_custom",
    "trace_stat",
]
