"""Group-fused graphical lasso: piecewise-constant Gaussian graphical models with changepoints.

The usual entry points are :func:`fit` on a covariance sequence from
:func:`empirical_covariance`, and :func:`make_scenario` for synthetic data.
"""
from .core import (Hyperparameters, SymmetryError, TimeSeries, devectorize, gfgl_objective,
                   vectorize_upper)
from .covariance import difference_series, empirical_covariance
from .evaluate import (extract_changepoints, f1_series, fbeta, grid_search,
                       mae_changepoints, changepoint_density)
from .prox import ConvergenceError, ProxSettings, dykstra_prox, flsa_prox, group_fused_prox
from .simulate import GroundTruth, make_scenario
from .solver import FitResult, fit, structured_estimate

__all__ = [
    "ConvergenceError", "FitResult", "GroundTruth", "Hyperparameters", "ProxSettings",
    "SymmetryError", "TimeSeries", "changepoint_density", "devectorize", "difference_series",
    "dykstra_prox", "empirical_covariance", "extract_changepoints", "f1_series", "fbeta", "fit",
    "flsa_prox", "gfgl_objective", "grid_search", "group_fused_prox", "mae_changepoints",
    "make_scenario", "structured_estimate", "vectorize_upper",
]
__version__ = "0.1.0"
