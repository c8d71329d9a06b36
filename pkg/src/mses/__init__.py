"""MSES: Multi-space evolutionary search for large-scale black-box optimization.

This package provides the search engine (an original-space population
co-evolving with a PCA-derived simplified-space population), the benchmark
generator it is evaluated on, and the experiment harness and command-line
interface used to run, compare, sweep and plot experiments.
"""

from . import (
    archive,
    bench,
    cli,
    config,
    constants,
    engine,
    errors,
    harness,
    linalg,
    optimizers,
    plotting,
    stats,
)

__all__ = [
    "archive",
    "bench",
    "cli",
    "config",
    "constants",
    "engine",
    "errors",
    "harness",
    "linalg",
    "optimizers",
    "plotting",
    "stats",
]
