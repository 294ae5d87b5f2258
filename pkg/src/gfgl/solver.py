"""ADMM solver for the group-fused (GFGL) and independent-fused (IFGL) graphical lasso."""
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (Hyperparameters, check_sequence, devectorize, edge_list,
                   gfgl_objective, vectorize_upper)
from .prox import DEFAULT_SETTINGS, DykstraState, dykstra_prox, flsa_prox

logger = logging.getLogger(__name__)


@dataclass
class SolverState:
    """Primal ``X``, auxiliary ``Z`` and scaled dual ``U = Y / gamma`` stacks."""

    X: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    iter: int = 0
    r_prime: float = np.inf
    r_dual: float = np.inf
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class FitResult:
    """Output of :func:`fit`.

    ``theta`` holds the precision values (from ``X``); ``Z`` carries the exact
    sparsity and changepoint structure. ``support[t]`` lists the edges
    ``(i, j)``, ``j > i``, with ``Z[t, i, j] != 0``; ``changepoint_rows`` are
    the ``t >= 1`` at which ``Z[t]`` differs from ``Z[t-1]`` off the diagonal.
    """

    theta: np.ndarray
    Z: np.ndarray
    support: list
    changepoint_rows: list
    iterations: int
    converged: bool
    final_objective: float
    history: list
    hyperparameters: Hyperparameters
    wall_time: float = 0.0


def initial_state(T, P):
    if T < 1 or P < 1:
        raise ValueError("T and P must be positive")
    zeros = np.zeros((T, P, P))
    return SolverState(X=zeros.copy(), Z=zeros.copy(), U=zeros.copy())


def likelihood_update(S_t, Z_t, U_t, gamma):
    """Closed-form minimiser of ``-logdet X + tr(S X) + gamma/2 |X - Z + U|_F^2``.

    Works on a single matrix or on a ``(T, P, P)`` stack (solved per time
    step). The stationarity condition ``X^{-1} - gamma X = S - gamma (Z - U)``
    is solved in the eigenbasis of the right-hand side, taking the positive
    root so the result is positive definite.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    M = np.asarray(S_t, dtype=float) - gamma * (np.asarray(Z_t) - np.asarray(U_t))
    if not np.all(np.isfinite(M)):
        raise np.linalg.LinAlgError("non-finite input to the likelihood update")
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    s, V = np.linalg.eigh(M)
    # (-s + sqrt(s^2 + 4 gamma)) / (2 gamma), written to avoid cancellation for s >> 0
    root = np.sqrt(s * s + 4.0 * gamma)
    x = np.where(s <= 0, (root - s) / (2.0 * gamma), 2.0 / (root + s))
    X = (V * x[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def smoothing_columns(A, smooth_diagonal=True, method="GFGL"):
    """``T x (Q [+ P])`` matrix handed to the prox: upper triangles, then diagonals.

    For GFGL the diagonal is divided by ``sqrt(2)`` so that one isotropic
    quadratic and one row norm match the full-matrix Frobenius terms.
    """
    a = vectorize_upper(A)
    if not smooth_diagonal:
        return a
    d = np.diagonal(A, axis1=1, axis2=2)
    return np.hstack([a, d / np.sqrt(2.0) if method == "GFGL" else d])


def constraint_update(X, U, h, s=DEFAULT_SETTINGS, warm=None):
    """Penalised projection of ``A = X + U`` onto sparse, piecewise-constant stacks.

    Off-diagonals (and diagonals when ``h.smooth_diagonal``) go through the
    GFGL (Dykstra) or IFGL (fused lasso) prox with weights ``lambda /
    gamma``; diagonals are never shrunk, and are copied from ``A`` when they
    are not smoothed. ``warm`` is an optional
    :class:`~gfgl.prox.DykstraState` reused across ADMM iterations.
    """
    A = np.asarray(X) + np.asarray(U)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    T, P, _ = A.shape
    Q = P * (P - 1) // 2
    lam2 = h.smooth_adjust * h.lambda2 / h.gamma
    smooth_diag = h.smooth_diagonal and lam2 > 0 and T > 1
    a = smoothing_columns(A, smooth_diag, h.method)
    lam1 = np.zeros(a.shape[1])
    lam1[:Q] = h.lambda1 / h.gamma
    if h.method == "GFGL":
        z = dykstra_prox(a, lam1, lam2, s, state=warm)
    else:
        z = flsa_prox(a, lam1, lam2, s)
    if not smooth_diag:
        return devectorize(z, np.diagonal(A, axis1=1, axis2=2))
    diag = z[:, Q:] * np.sqrt(2.0) if h.method == "GFGL" else z[:, Q:]
    return devectorize(z[:, :Q], diag)


def dual_update(U, X, Z):
    return np.asarray(U) + (np.asarray(X) - np.asarray(Z))


def residuals(state, Z_prev):
    """Squared primal and dual residuals summed over time."""
    r_prime = float(np.sum((state.X - state.Z) ** 2))
    r_dual = float(np.sum((state.Z - np.asarray(Z_prev)) ** 2))
    return r_prime, r_dual


def support_sets(Z):
    """Per-time lists of edges with a non-zero off-diagonal in ``Z``."""
    edges = edge_list(Z.shape[-1])
    z = vectorize_upper(Z)
    return [[edges[q] for q in np.flatnonzero(row)] for row in z]


def changepoint_rows(Z):
    z = vectorize_upper(Z)
    return [int(t) + 1 for t in np.flatnonzero(np.any(np.diff(z, axis=0) != 0, axis=1))]


def admm_objective(X, S, h):
    """:func:`gfgl_objective` with the smoothing weight the ADMM iteration actually uses."""
    eff = Hyperparameters(lambda1=h.lambda1, lambda2=h.objective_lambda2(),
                          gamma=h.gamma, method=h.method, smooth_diagonal=h.smooth_diagonal)
    return gfgl_objective(X, S, eff)


def structured_estimate(result):
    """``Z`` with its diagonal replaced by that of ``X``: sparse, piecewise constant."""
    Zs = result.Z.copy()
    idx = np.arange(Zs.shape[-1])
    Zs[:, idx, idx] = result.theta[:, idx, idx]
    return Zs


def _inner_settings(s, state):
    # The constraint step only has to be as accurate as the ADMM iterate it
    # feeds; the Dykstra tolerance shrinks with the residuals to its floor.
    if not s.adaptive:
        return s
    tol = 1e-4 * np.sqrt(state.r_prime + state.r_dual)
    return replace(s, dykstra_tol=float(np.clip(tol, s.dykstra_tol, 1e-3)))


def fit(S, h, s=DEFAULT_SETTINGS, track_objective=False):
    """Run the ADMM iteration on a covariance sequence ``S`` of shape ``(T, P, P)``.

    Stops when both squared residuals fall below ``h.eps_prime`` and
    ``h.eps_dual`` or after ``h.max_iter`` iterations; hitting the cap is
    reported through ``converged=False`` rather than raised.
    """
    start = time.perf_counter()
    S = check_sequence(S, "covariance")
    T, P, _ = S.shape
    state = initial_state(T, P)
    width = P * (P - 1) // 2 + (P if h.smooth_diagonal and h.lambda2 > 0 else 0)
    warm = DykstraState((T, width)) if T > 1 else None
    converged = False
    for n in range(1, h.max_iter + 1):
        state.X = likelihood_update(S, state.Z, state.U, h.gamma)
        Z_prev = state.Z
        state.Z = constraint_update(state.X, state.U, h, _inner_settings(s, state), warm)
        state.U = dual_update(state.U, state.X, state.Z)
        state.iter = n
        state.r_prime, state.r_dual = residuals(state, Z_prev)
        obj = admm_objective(state.X, S, h) if track_objective else None
        state.history.append((n, state.r_prime, state.r_dual, obj))
        if state.r_prime < h.eps_prime and state.r_dual < h.eps_dual:
            converged = True
            break
    if not converged:
        logger.warning("ADMM hit max_iter=%d (r_prime=%.3g, r_dual=%.3g)",
                       h.max_iter, state.r_prime, state.r_dual)
    return FitResult(
        theta=state.X,
        Z=state.Z,
        support=support_sets(state.Z),
        changepoint_rows=changepoint_rows(state.Z),
        iterations=state.iter,
        converged=converged,
        final_objective=admm_objective(state.X, S, h),
        history=state.history,
        hyperparameters=h,
        wall_time=time.perf_counter() - start,
    )
