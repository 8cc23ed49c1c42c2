"""Glauber+Kawasaki reaction-diffusion particle system at its critical point."""

from .lattice import (
    Configuration,
    MagnetisationStats,
    Params,
    apply_flip,
    apply_swap,
    derived_gamma,
    glauber_rate,
    glauber_rates,
    magnetisation_stats,
    rate_table,
    vprime,
)

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "MagnetisationStats",
    "Params",
    "apply_flip",
    "apply_swap",
    "derived_gamma",
    "glauber_rate",
    "glauber_rates",
    "magnetisation_stats",
    "rate_table",
    "vprime",
]
