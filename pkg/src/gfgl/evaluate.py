"""Scoring fits against simulated ground truth.

Times are 0-based rows throughout: a changepoint at ``t`` means row ``t``
differs from row ``t - 1`` (``1 <= t <= T - 1``), matching
:class:`gfgl.simulate.GroundTruth`.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import Hyperparameters, check_symmetric, edge_index
from .covariance import empirical_covariance
from .prox import DEFAULT_SETTINGS
from .solver import fit

logger = logging.getLogger(__name__)


class SearchError(RuntimeError):
    """Every fit in a grid search failed."""


def fbeta(est_edges, true_edges, beta=1.0):
    """F-beta score of an estimated edge set; 1 when both sets are empty."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    est, true = set(est_edges), set(true_edges)
    if not est and not true:
        return 1.0
    tp = len(est & true)
    fp = len(est - true)
    fn = len(true - est)
    b2 = beta * beta
    return (1 + b2) * tp / ((1 + b2) * tp + b2 * fn + fp)


def fbeta_series(support, gt, beta=1.0):
    """Per-time F-beta of ``support[t]`` against the true edges at ``t``."""
    if len(support) != gt.T:
        raise ValueError(f"support has {len(support)} time steps, truth has {gt.T}")
    scores = np.array([fbeta(map(tuple, s), gt.edges_at(t), beta) for t, s in enumerate(support)])
    return scores, float(scores.mean())


def f1_series(result, gt):
    """Per-time F1 of a :class:`~gfgl.solver.FitResult` and its mean."""
    return fbeta_series(result.support, gt, 1.0)


@dataclass(frozen=True)
class EdgeChangepoints:
    """Estimated changepoint times per edge (only edges with at least one)."""

    per_edge: dict
    T: int

    @property
    def K_hat(self):
        return sum(len(v) for v in self.per_edge.values())


def extract_changepoints(mats, tol=0.0):
    """Times ``t`` with ``|M[t, i, j] - M[t-1, i, j]| > tol`` for each edge ``j > i``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    mats = check_symmetric(mats)
    if mats.ndim != 3 or mats.shape[0] < 2:
        raise ValueError("need a (T, P, P) stack with T >= 2")
    rows, cols = edge_index(mats.shape[-1])
    moved = np.abs(np.diff(mats[:, rows, cols], axis=0)) > tol
    per_edge = {}
    for q in np.flatnonzero(moved.any(axis=0)):
        per_edge[(int(rows[q]), int(cols[q]))] = [int(t) + 1 for t in np.flatnonzero(moved[:, q])]
    return EdgeChangepoints(per_edge=per_edge, T=mats.shape[0])


def mae_changepoints(est, gt):
    """Mean absolute distance from each estimated edge changepoint to the nearest true one.

    The nearest true changepoint of the same edge is used when the edge has
    any, otherwise the nearest changepoint overall. Returns NaN when nothing
    was estimated or the truth has no changepoints.
    """
    if est.K_hat == 0 or not gt.changepoints:
        return float("nan")
    truth = gt.edge_changepoints()
    overall = np.asarray(gt.changepoints)
    total = 0.0
    for edge, times in est.per_edge.items():
        ref = np.asarray(truth.get(edge, overall))
        for t in times:
            total += np.min(np.abs(ref - t))
    return float(total / est.K_hat)


def changepoint_density(est, T=None):
    """Number of edges changing at each time ``t`` (length ``T``, entry 0 always 0)."""
    T = est.T if T is None else T
    density = np.zeros(T, dtype=int)
    for times in est.per_edge.values():
        for t in times:
            density[t] += 1
    return density


@dataclass(frozen=True)
class MetricsReport:
    f_series: np.ndarray
    f_mean: float
    mae: float
    density: np.ndarray
    K_hat: int
    params: object = None

    def to_dict(self):
        return {
            "f_series": self.f_series.tolist(),
            "f_mean": self.f_mean,
            "mae": None if np.isnan(self.mae) else self.mae,
            "density": self.density.tolist(),
            "K_hat": self.K_hat,
            "params": self.params,
        }


def evaluate(support, Z, gt, beta=1.0, tol=0.0, params=None):
    """Graph recovery and changepoint scores of one fit."""
    f, f_mean = fbeta_series(support, gt, beta)
    est = extract_changepoints(Z, tol)
    return MetricsReport(f_series=f, f_mean=f_mean, mae=mae_changepoints(est, gt),
                         density=changepoint_density(est), K_hat=est.K_hat, params=params)


def _score(job):
    ts, gt, lam1, lam2, h_base, s, estimator, width = job
    h = replace(h_base, lambda1=lam1, lambda2=lam2)
    try:
        result = fit(empirical_covariance(ts, estimator, width), h, s)
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError) as err:
        logger.warning("fit failed at lambda=(%g, %g): %s", lam1, lam2, err)
        return float("nan")
    return f1_series(result, gt)[1]


def resolve_jobs(jobs=None):
    """``jobs`` if given, else ``$GFGL_JOBS``, else 1."""
    if jobs is None:
        jobs = int(os.environ.get("GFGL_JOBS", "1"))
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    return jobs


def score_grid(train, grid, h_base=None, s=DEFAULT_SETTINGS, estimator="dirac",
               width=None, jobs=None):
    """Mean F1 of every grid pair on every training series, shape ``(len(grid), len(train))``.

    Failed fits score NaN. With ``jobs > 1`` the fits run in worker
    processes; the scores do not depend on the number of workers.
    """
    if not train or not grid:
        raise ValueError("grid search needs a non-empty training set and grid")
    h_base = Hyperparameters() if h_base is None else h_base
    work = [(ts, gt, float(l1), float(l2), h_base, s, estimator, width)
            for l1, l2 in grid for ts, gt in train]
    jobs = resolve_jobs(jobs)
    if jobs == 1:
        scores = [_score(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(_score, work))
    return np.array(scores).reshape(len(grid), len(train))


def select_pair(table, grid):
    """Per-series F1-best pair (first in grid order on ties) and their componentwise lower median."""
    table = np.asarray(table, dtype=float)
    if np.all(np.isnan(table)):
        raise SearchError("every fit in the grid search failed")
    optima = []
    for col in table.T:
        if np.all(np.isnan(col)):
            continue
        optima.append(tuple(grid[int(np.nanargmax(col))]))
    pick = lambda vals: sorted(vals)[(len(vals) - 1) // 2]
    best = (pick([o[0] for o in optima]), pick([o[1] for o in optima]))
    return best, optima


def grid_search(train, grid, h_base=None, s=DEFAULT_SETTINGS, estimator="dirac",
                width=None, jobs=None):
    """Select ``(lambda1, lambda2)`` by F1 over training series.

    Parameters
    ----------
    train : list of (TimeSeries, GroundTruth)
    grid : list of (lambda1, lambda2)
    h_base : Hyperparameters, optional
        Supplies the method and ADMM settings; its penalties are overridden.

    Returns
    -------
    tuple
        The componentwise lower median of the per-series F1-maximising pairs.
    """
    grid = [tuple(g) for g in grid]
    table = score_grid(train, grid, h_base, s, estimator, width, jobs)
    return select_pair(table, grid)[0]
