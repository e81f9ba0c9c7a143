"""Offline TD laboratory: feature co-adaptation measurement and control.

The heavy lifting lives in the compiled extension; this package re-exports
its surface. ``run_cli`` drives the same subcommands as the ``coadapt``
binary (gen-data / train / analyze / stability / list-presets), and the
remaining functions expose the core diagnostics directly on numpy arrays.
"""

from coadapt._core import (
    CoadaptError,
    ConfigError,
    DomainError,
    IoError,
    NumericError,
    ParseError,
    ShapeError,
    __version__,
    bootstrap_ci,
    coadaptation_trace_test,
    dataset_summary,
    dr3_penalty,
    iqm,
    lyapunov_sigma,
    mean_feature_dot,
    presets,
    prob_improvement,
    read_trace,
    run_cli,
    simulate_linear_td,
    srank,
    stability_spectrum,
)

__all__ = [
    "CoadaptError",
    "ConfigError",
    "DomainError",
    "IoError",
    "NumericError",
    "ParseError",
    "ShapeError",
    "__version__",
    "bootstrap_ci",
    "coadaptation_trace_test",
    "dataset_summary",
    "dr3_penalty",
    "iqm",
    "lyapunov_sigma",
    "mean_feature_dot",
    "presets",
    "prob_improvement",
    "read_trace",
    "run_cli",
    "simulate_linear_td",
    "srank",
    "stability_spectrum",
]
