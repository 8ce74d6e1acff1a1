"""Spatial weights, spatial dependence diagnostics, spatial regression by
maximum likelihood, and direct/indirect effect decomposition."""

__version__ = "0.1.0"
