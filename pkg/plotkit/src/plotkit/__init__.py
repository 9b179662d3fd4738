"""Deterministic figures from experiment CSVs."""

from .plots import (
    METRICS,
    PlotError,
    PlotSpec,
    median_series,
    plot_rate,
    plot_regret,
    polylog_envelope,
    power_guide,
    read_result_rows,
    read_trace_rows,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "METRICS",
    "PlotError",
    "PlotSpec",
    "median_series",
    "plot_rate",
    "plot_regret",
    "polylog_envelope",
    "power_guide",
    "read_result_rows",
    "read_trace_rows",
    "render",
    "__version__",
]
