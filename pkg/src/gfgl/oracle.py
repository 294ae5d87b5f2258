"""Brute-force reference minimisers for testing.

Nothing in the main package imports this module. Everything here is slow
on purpose and guarded to tiny sizes:

* :func:`subgradient_minimize` -- projected subgradient descent with
  best-iterate tracking on the full cost, the GFLSA and the FLSA objectives.
* :func:`tv_enumerate` -- exact 1-D total-variation denoising by listing
  every fusion and jump-sign pattern.
* :func:`group_lasso_grid` -- exhaustive grid search for a two-jump,
  one-column group lasso.
* :func:`group_fused_dual_pg` -- projected gradient on the dual of the
  group-fused signal approximator.

The subgradient oracle only ever reports objective values of feasible points,
so its value is an upper bound on the optimum.
"""
import itertools
from dataclasses import dataclass

import numpy as np

from .core import Hyperparameters, gfgl_objective

OBJECTIVES = ("gfgl_full", "gflsa", "flsa")
MAX_P, MAX_T, MAX_Q = 4, 8, 6
MAX_TV = 12
EIG_FLOOR = 1e-6


@dataclass(frozen=True)
class OracleResult:
    x: np.ndarray
    value: np.ndarray
    steps: int


def _guard(T, width, limit, what):
    if T > MAX_T or width > limit:
        raise ValueError(f"oracle size guard: T={T} > {MAX_T} or {what}={width} > {limit}")


def _fused_value(Z, A, lam1, lam2, group):
    d = np.diff(Z, axis=-2)
    smooth = np.sqrt((d ** 2).sum(-1)).sum(-1) if group else np.abs(d).sum((-1, -2))
    return 0.5 * ((Z - A) ** 2).sum((-1, -2)) + lam1 * np.abs(Z).sum((-1, -2)) + lam2 * smooth


def _fused_subgradient(Z, A, lam1, lam2, group):
    d = np.diff(Z, axis=-2)
    if group:
        norm = np.sqrt((d ** 2).sum(-1, keepdims=True))
        w = np.divide(d, norm, out=np.zeros_like(d), where=norm > 0)
    else:
        w = np.sign(d)
    w = w * lam2[..., None, None]
    Dt = np.zeros_like(Z)
    Dt[..., 1:, :] += w
    Dt[..., :-1, :] -= w
    return (Z - A) + lam1[..., None, None] * np.sign(Z) + Dt


def _flsa_column_value(z, a, lam1, lam2):
    return 0.5 * np.sum((z - a) ** 2) + lam1 * np.abs(z).sum() + lam2 * np.abs(np.diff(z)).sum()


def _polish_flsa_column(z, a, lam1, lam2, delta):
    """Exact minimiser over the run/zero/sign pattern that ``z`` shows at resolution ``delta``."""
    cuts = [t for t in range(1, z.size) if abs(z[t] - z[t - 1]) > delta]
    bounds = [0] + cuts + [z.size]
    runs = list(zip(bounds, bounds[1:]))
    level = np.array([z[i:j].mean() for i, j in runs])
    level[np.abs(level) <= delta] = 0.0
    jump = np.sign(np.diff(level))
    out = np.empty_like(z)
    for k, (i, j) in enumerate(runs):
        if level[k] == 0.0:
            out[i:j] = 0.0
            continue
        into = jump[k - 1] if k > 0 else 0.0
        leaving = jump[k] if k < len(jump) else 0.0
        n = j - i
        out[i:j] = (a[i:j].sum() - lam1 * n * np.sign(level[k]) - lam2 * (into - leaving)) / n
    return out


def _polish_flsa(Z, A, lam1, lam2):
    """Columnwise pattern polish of FLSA iterates; keeps a column only if it lowers the cost."""
    Z = Z.copy()
    flat_Z = Z.reshape((-1,) + Z.shape[-2:])
    flat_A = A.reshape((-1,) + A.shape[-2:])
    for b, (l1, l2) in enumerate(zip(lam1.reshape(-1), lam2.reshape(-1))):
        for q in range(flat_Z.shape[-1]):
            z, a = flat_Z[b, :, q], flat_A[b, :, q]
            best = _flsa_column_value(z, a, l1, l2)
            for delta in (1e-2, 1e-3, 1e-4, 1e-5):
                cand = _polish_flsa_column(z, a, l1, l2, delta)
                val = _flsa_column_value(cand, a, l1, l2)
                if val < best:
                    best = val
                    flat_Z[b, :, q] = cand
    return flat_Z.reshape(Z.shape)


def _full_value(X, S, h):
    flat_X = X.reshape((-1,) + X.shape[-3:])
    flat_S = S.reshape((-1,) + S.shape[-3:])
    vals = [gfgl_objective(x, s, h) for x, s in zip(flat_X, flat_S)]
    return np.array(vals).reshape(X.shape[:-3])


def _full_subgradient(X, S, h):
    P = X.shape[-1]
    off = 1.0 - np.eye(P)
    g = -np.linalg.inv(X) + S + h.lambda1 * np.sign(X) * off
    d = np.diff(X, axis=-3)
    if not h.smooth_diagonal:
        d = d * off
    if h.method == "GFGL":
        norm = np.sqrt((d ** 2).sum((-1, -2), keepdims=True))
        w = np.divide(d, norm, out=np.zeros_like(d), where=norm > 0)
    else:
        w = np.sign(d)
    w = h.lambda2 * w
    g[..., 1:, :, :] += w
    g[..., :-1, :, :] -= w
    return g


def _project_spd(X):
    X = 0.5 * (X + np.swapaxes(X, -1, -2))
    s, V = np.linalg.eigh(X)
    return (V * np.maximum(s, EIG_FLOOR)[..., None, :]) @ np.swapaxes(V, -1, -2)


def subgradient_minimize(objective, data, steps=100_000, step0=None, check_every=50):
    """Projected subgradient descent with a diminishing step.

    Parameters
    ----------
    objective : {"gfgl_full", "gflsa", "flsa"}
        ``gflsa`` and ``flsa`` minimise ``1/2 |Z - A|^2 + lam1 |Z|_1 +
        lam2 |D Z|`` with a row-wise 2-norm or an elementwise 1-norm on
        the differences. ``gfgl_full`` minimises :func:`gfgl_objective` over
        positive definite stacks.
    data : dict
        ``{"A", "lam1", "lam2"}`` for the signal approximators or
        ``{"S", "h"}`` for the full cost. ``A`` and ``S`` may carry leading
        batch dimensions; the penalties broadcast over them.
    steps : int
        Number of iterations.
    step0 : float, optional
        Step scale. The signal approximators (1-strongly convex) take steps
        ``step0 / k`` along the subgradient (default 1). The full cost takes
        steps of length ``step0 / sqrt(k)`` along the normalised subgradient
        (default 0.1), starting from the inverse of the ridged mean
        covariance.

    The FLSA objective separates over columns. Its best point is finally
    polished column by column: the run, zero and sign pattern read off at a
    few resolutions fixes each run level in closed form, and a polished
    column replaces the original only when it lowers the cost.

    Returns
    -------
    OracleResult
        The best point seen (over the iterates and their weighted running
        average) and its objective value, per batch entry.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if objective == "gfgl_full":
        S = np.asarray(data["S"], dtype=float)
        h = data.get("h", Hyperparameters())
        _guard(S.shape[-3], S.shape[-1], MAX_P, "P")
        value = lambda X: _full_value(X, S, h)
        grad = lambda X: _full_subgradient(X, S, h)
        project = _project_spd
        P = S.shape[-1]
        mean = S.mean(axis=-3)
        ridge = 1e-2 * (1.0 + np.trace(mean, axis1=-2, axis2=-1) / P)
        start = np.linalg.inv(mean + ridge[..., None, None] * np.eye(P))
        x = np.broadcast_to(start[..., None, :, :], S.shape).copy()
        step0 = 0.1 if step0 is None else step0

        def step(g, k):
            norm = np.sqrt((g ** 2).sum((-1, -2, -3), keepdims=True))
            return (step0 / np.sqrt(k)) * np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)
    else:
        A = np.asarray(data["A"], dtype=float)
        _guard(A.shape[-2], A.shape[-1], MAX_Q, "Q")
        batch = A.shape[:-2]
        lam1 = np.broadcast_to(np.asarray(data.get("lam1", 0.0), dtype=float), batch)
        lam2 = np.broadcast_to(np.asarray(data.get("lam2", 0.0), dtype=float), batch)
        if np.any(lam1 < 0) or np.any(lam2 < 0):
            raise ValueError("penalties must be non-negative")
        group = objective == "gflsa"
        value = lambda Z: _fused_value(Z, A, lam1, lam2, group)
        grad = lambda Z: _fused_subgradient(Z, A, lam1, lam2, group)
        project = lambda Z: Z
        x = A.copy()
        step0 = 1.0 if step0 is None else step0

        def step(g, k):
            return (step0 / k) * g

    best_x, best = x.copy(), value(x)
    avg, wsum = x.copy(), 0.0
    nb = best.ndim

    def track(cand):
        nonlocal best_x, best
        v = value(cand)
        better = v < best
        best = np.where(better, v, best)
        mask = better.reshape(better.shape + (1,) * (x.ndim - nb))
        best_x = np.where(mask, cand, best_x)

    for k in range(1, steps + 1):
        x = project(x - step(grad(x), k))
        wsum += k
        avg = avg + (k / wsum) * (x - avg)
        if k % check_every == 0 or k == steps:
            track(x)
            track(project(avg))
    if objective == "flsa":
        track(_polish_flsa(best_x, A, lam1, lam2))
    return OracleResult(x=best_x, value=best, steps=steps)


def tv_enumerate(v, lam):
    """Exact minimiser of ``1/2 |z - v|^2 + lam sum |z_t - z_{t-1}|`` by enumeration.

    Every split of ``0..T-1`` into runs and every sign for the jumps between
    runs fixes the run levels in closed form; candidates whose jumps have
    the assumed signs are kept and the cheapest one is returned.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("expected a vector")
    T = v.size
    if T > MAX_TV:
        raise ValueError(f"oracle size guard: T={T} > {MAX_TV}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if T == 1 or lam == 0:
        return v.copy()
    best_z, best = None, np.inf
    for mask in itertools.product((False, True), repeat=T - 1):
        cuts = [t + 1 for t, m in enumerate(mask) if m]
        bounds = [0] + cuts + [T]
        sums = np.array([v[a:b].sum() for a, b in zip(bounds, bounds[1:])])
        counts = np.diff(bounds).astype(float)
        m = len(cuts)
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=m))).reshape(2 ** m, m)
        # run k level: (sum_k - lam (sigma_{k-1} - sigma_k)) / n_k, with sigma = sign of jump
        left = np.hstack([np.zeros((signs.shape[0], 1)), signs])
        right = np.hstack([signs, np.zeros((signs.shape[0], 1))])
        levels = (sums - lam * (left - right)) / counts
        jumps = np.diff(levels, axis=1)
        ok = np.all(np.sign(jumps) == signs, axis=1)
        for row in levels[ok]:
            z = np.repeat(row, counts.astype(int))
            val = 0.5 * np.sum((z - v) ** 2) + lam * np.abs(np.diff(z)).sum()
            if val < best:
                best, best_z = val, z
    return best_z


def group_lasso_grid(A_centered, R_centered, lam, lo=-5.0, hi=5.0, step=1e-3):
    """Grid minimiser of ``1/2 |A - R w|^2 + lam sum_t |w_t|`` for two jumps, one column.

    Returns ``(w, value)`` at the best grid point of ``[lo, hi]^2``.
    """
    A = np.asarray(A_centered, dtype=float).reshape(-1)
    R = np.asarray(R_centered, dtype=float)
    if R.shape != (A.size, 2):
        raise ValueError("grid oracle handles exactly two jumps and one column")
    grid = np.arange(lo, hi + step / 2, step)
    best_w, best = None, np.inf
    # chunk over the first coordinate to bound memory
    for start in range(0, grid.size, 500):
        w0 = grid[start:start + 500, None]
        w1 = grid[None, :]
        resid = A[:, None, None] - R[:, 0, None, None] * w0 - R[:, 1, None, None] * w1
        val = 0.5 * (resid ** 2).sum(0) + lam * (np.abs(w0) + np.abs(w1))
        k = np.unravel_index(np.argmin(val), val.shape)
        if val[k] < best:
            best = float(val[k])
            best_w = np.array([w0[k[0], 0], w1[0, k[1]]])
    return best_w, best


def group_fused_dual_pg(A, lam, tol=1e-12, max_iter=1_000_000):
    """Minimiser of ``1/2 |Z - A|^2 + lam sum_t |Z_{t+1} - Z_t|_2`` via its dual.

    The dual is ``min_V 1/2 |A - D^T V|^2`` over rows ``|V_t|_2 <= lam``, and
    ``Z = A - D^T V``. Projected gradient with step ``1/4`` (``|D D^T| <= 4``)
    runs until the dual iterate moves by at most ``tol``.
    """
    A = np.asarray(A, dtype=float)
    T, Q = A.shape
    if T > MAX_T or Q > MAX_Q:
        raise ValueError(f"oracle size guard: T={T} > {MAX_T} or Q={Q} > {MAX_Q}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    V = np.zeros((T - 1, Q))

    def primal(V):
        DtV = np.zeros_like(A)
        DtV[1:] += V
        DtV[:-1] -= V
        return A - DtV

    for _ in range(max_iter):
        V_new = V + 0.25 * np.diff(primal(V), axis=0)
        norm = np.linalg.norm(V_new, axis=1, keepdims=True)
        V_new *= np.minimum(1.0, lam / np.maximum(norm, 1e-300))
        if np.max(np.abs(V_new - V)) <= tol:
            V = V_new
            break
        V = V_new
    return primal(V)
