"""Finite-difference laboratory for wave maps from a curved space into S^3.

Modules
-------
fields    grids, map states, frames and differential forms
target    the round three-sphere in R^4
geometry  bump metrics, Christoffel symbols, Laplace-Beltrami and Hodge operators
evolve    constrained time stepping and energies
gauge     Coulomb frames, connection and curvature forms, identity residuals
elliptic  the connection-form elliptic system and the estimate monitor
analysis  Lorentz and Sobolev norms, inequality harness
lab       run configuration, orchestration and persistence
"""

from .fields import CFLError, FrameDeviationError, GridSpec, MapState
from .geometry import MetricField, MetricProfile, build_metric
from .lab import RunConfig, RunRecord, convergence_study, run, smalldata_sweep

__version__ = "0.1.0"

__all__ = [
    "CFLError", "FrameDeviationError", "GridSpec", "MapState", "MetricField", "MetricProfile",
    "build_metric", "RunConfig", "RunRecord", "convergence_study", "run", "smalldata_sweep",
]
