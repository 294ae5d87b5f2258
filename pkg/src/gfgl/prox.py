"""Proximal operators for the ADMM constraint step.

All operators act on ``T x Q`` matrices whose rows are time steps and whose
columns are edges (vectorised upper triangles).

* :func:`soft_threshold` -- prox of ``lam |Z|_1``.
* :func:`group_fused_prox` -- prox of ``lam |D Z|_{2,1}``, solved as a
  group lasso over jump rows.
* :func:`dykstra_prox` -- prox of the sum of the two (the GFGL step).
* :func:`tv1d_prox`, :func:`flsa_prox` -- the per-edge fused lasso (IFGL step).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels


class ConvergenceError(RuntimeError):
    """An iterative prox hit its iteration cap; ``iterate`` holds the last value."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


@dataclass(frozen=True)
class ProxSettings:
    """Inner-solver tolerances.

    ``adaptive`` lets :func:`gfgl.solver.fit` loosen ``dykstra_tol`` while the
    ADMM residuals are large; ``dykstra_tol`` is then the floor.
    """

    bcd_tol: float = 1e-8
    bcd_max_iter: int = 10_000
    dykstra_tol: float = 1e-7
    dykstra_max_iter: int = 10_000
    tv_exact: bool = True
    adaptive: bool = True

    def __post_init__(self):
        if self.bcd_tol <= 0 or self.dykstra_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.bcd_max_iter < 1 or self.dykstra_max_iter < 1:
            raise ValueError("iteration caps must be positive")


DEFAULT_SETTINGS = ProxSettings()


def soft_threshold(A, lam):
    """Elementwise ``sign(A) * max(|A| - lam, 0)``.

    ``lam`` may be a scalar or broadcast against ``A`` (e.g. one weight per column).
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("threshold must be non-negative")
    A = np.asarray(A, dtype=float)
    if not np.any(lam):
        return A.copy()
    return np.sign(A) * np.maximum(np.abs(A) - lam, 0.0)


def center_columns(M):
    M = np.asarray(M, dtype=float)
    return M - M.mean(axis=0)


@lru_cache(maxsize=64)
def _step_gram(T):
    # Gram matrix of the column-centred cumulative-sum operator:
    # G[j, k] = min(j, k) * (T - max(j, k)) / T with 1-based jump indices.
    j = np.arange(1, T, dtype=float)
    lo = np.minimum.outer(j, j)
    hi = np.maximum.outer(j, j)
    G = lo * (T - hi) / T
    G.setflags(write=False)
    return G


def _solve_gram(G, C, lam, settings, init):
    n, Q = C.shape
    if lam == 0:
        return np.linalg.solve(G, C)
    Omega = np.zeros((n, Q)) if init is None else np.array(init, dtype=float, order="C")
    sweeps, worst = _kernels.group_lasso_gram_bcd(
        np.ascontiguousarray(G), np.ascontiguousarray(C), float(lam),
        float(settings.bcd_tol), int(settings.bcd_max_iter), Omega)
    if worst > settings.bcd_tol:
        raise ConvergenceError(
            f"group lasso BCD stopped after {sweeps} sweeps with KKT "
            f"violation {worst:.3g} > {settings.bcd_tol:.3g}", iterate=Omega)
    return Omega


def group_lasso_bcd(A_centered, R_centered, lam2, s=DEFAULT_SETTINGS, init=None):
    """Solve ``min_W 1/2 |A - R W|_F^2 + lam2 |W|_{2,1}`` by block coordinate descent.

    Each block is one row of ``W`` (the jump at one time step), whose exact
    minimiser given the others is a group soft-threshold. Raises
    :class:`ConvergenceError` if the blockwise KKT violation is still above
    ``s.bcd_tol`` after ``s.bcd_max_iter`` sweeps.
    """
    if lam2 < 0:
        raise ValueError("lam2 must be non-negative")
    A = np.asarray(A_centered, dtype=float)
    R = np.asarray(R_centered, dtype=float)
    return _solve_gram(R.T @ R, R.T @ A, lam2, s, init)


def group_fused_prox(A, lam2, s=DEFAULT_SETTINGS, init=None, return_jumps=False):
    """Prox of ``lam2 |D Z|_{2,1}``: piecewise-constant rows with grouped jumps.

    Solves the group lasso over the centred jump matrix ``Omega`` and rebuilds
    ``Z_t = omega + sum_{i<t} Omega_i`` with the level ``omega`` set to the
    column mean of ``A - R Omega``. A row with a zero jump is bitwise equal to
    its predecessor.
    """
    if lam2 < 0:
        raise ValueError("lam2 must be non-negative")
    A = np.ascontiguousarray(A, dtype=float)
    T, Q = A.shape
    if lam2 == 0 or T == 1:
        Z = A.copy()
        Omega = np.diff(A, axis=0)
    else:
        Omega = np.zeros((T - 1, Q)) if init is None else np.array(init, dtype=float)
        Z = np.empty_like(A)
        worst = _kernels.group_fused_into(A, float(lam2), _step_gram(T), float(s.bcd_tol),
                                          int(s.bcd_max_iter), Omega, Z)
        if worst > s.bcd_tol:
            raise ConvergenceError(
                f"group lasso BCD stopped with KKT violation {worst:.3g}", iterate=Omega)
    return (Z, Omega) if return_jumps else Z


class DykstraState:
    """Correction terms and jumps carried between calls to :func:`dykstra_prox`.

    The Dykstra recursion keeps ``Z + U + Q = A``, so stored corrections from
    a nearby problem give a valid starting point ``Z = A - U - Q`` for a new
    target ``A`` of the same shape.
    """

    def __init__(self, shape):
        T, Q = shape
        self.U = np.zeros((T, Q))
        self.Q = np.zeros((T, Q))
        self.Omega = np.zeros((T - 1, Q))
        self.iterations = 0


def dykstra_prox(A, lam1, lam2, s=DEFAULT_SETTINGS, state=None):
    """Prox of ``lam1 |Z|_1 + lam2 |D Z|_{2,1}`` via Dykstra-style splitting.

    ``lam1`` is a scalar or a per-column weight vector (zero leaves a column
    unshrunk).

    Alternates the group-fused prox and soft-thresholding with correction
    terms (zero unless ``state`` carries a warm start), stopping once
    successive ``Z`` differ by at most ``s.dykstra_tol`` in Frobenius norm.
    The last soft-threshold is applied to the segment average of its argument
    over the final jump pattern, which leaves the result exactly sparse and
    exactly piecewise constant with jumps shared across columns.
    """
    A = np.ascontiguousarray(A, dtype=float)
    weights = np.broadcast_to(np.asarray(lam1, dtype=float), A.shape[1:]).copy()
    if np.any(weights < 0) or lam2 < 0:
        raise ValueError("penalties must be non-negative")
    if lam2 == 0 or A.shape[0] == 1:
        return soft_threshold(A, weights)
    if not np.any(weights):
        return group_fused_prox(A, lam2, s)
    if state is None:
        state = DykstraState(A.shape)
    Z, n, status = _kernels.dykstra_gflsa(
        A, weights, float(lam2), _step_gram(A.shape[0]), float(s.bcd_tol),
        int(s.bcd_max_iter), float(s.dykstra_tol), int(s.dykstra_max_iter),
        state.U, state.Q, state.Omega)
    state.iterations = n
    if status == -1:
        raise ConvergenceError("group lasso BCD failed inside Dykstra iteration", iterate=Z)
    if status == 0:
        raise ConvergenceError(
            f"Dykstra iteration did not settle within {s.dykstra_max_iter} steps", iterate=Z)
    return Z


def _tv1d_dual(v, lam, tol=1e-12, max_iter=100_000):
    # Projected gradient on the box-constrained dual of 1-D TV denoising.
    n = v.size
    if n == 1 or lam == 0:
        return v.copy()
    u = np.zeros(n - 1)
    step = 0.25
    for _ in range(max_iter):
        x = v - np.concatenate([[-u[0]], u[:-1] - u[1:], [u[-1]]])
        u_next = np.clip(u + step * np.diff(x), -lam, lam)
        if np.max(np.abs(u_next - u)) <= tol:
            u = u_next
            break
        u = u_next
    return v - np.concatenate([[-u[0]], u[:-1] - u[1:], [u[-1]]])


def tv1d_prox(v, lam, exact=True):
    """Exact minimiser of ``1/2 |z - v|^2 + lam sum_t |z_t - z_{t-1}|``."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    v = np.ascontiguousarray(v, dtype=float)
    if exact:
        return _kernels.tv1d_condat(v, float(lam))
    return _tv1d_dual(v, float(lam))


def flsa_prox(A, lam1, lam2, s=DEFAULT_SETTINGS):
    """Column-wise fused lasso prox: total-variation smoothing then soft-threshold.

    ``lam1`` is a scalar or a per-column weight vector.
    """
    if np.any(np.asarray(lam1) < 0) or lam2 < 0:
        raise ValueError("penalties must be non-negative")
    A = np.ascontiguousarray(A, dtype=float)
    if s.tv_exact:
        smooth = _kernels.tv1d_columns(A, float(lam2))
    else:
        smooth = np.column_stack([_tv1d_dual(A[:, q], lam2) for q in range(A.shape[1])])
    return soft_threshold(smooth, lam1)
