"""Galton-Watson branching process with contact tracing on the genealogical tree."""
from .analytics import (
    CtpParams,
    ExtinctionVerdict,
    classify_extinction,
    compute_sequences,
    critical_alpha,
    eb_bounds,
    malthusian_theta,
    seed_mean,
)
from .offspring import OffspringDistribution, parse

__all__ = [
    "CtpParams",
    "ExtinctionVerdict",
    "OffspringDistribution",
    "classify_extinction",
    "compute_sequences",
    "critical_alpha",
    "eb_bounds",
    "malthusian_theta",
    "parse",
    "seed_mean",
]
__version__ = "0.1.0"
