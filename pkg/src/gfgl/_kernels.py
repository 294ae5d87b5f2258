"""Compiled inner loops for the proximal operators."""
import numpy as np
from numba import njit


@njit(cache=True)
def tv1d_condat(y, lam):
    """Exact 1-D total-variation denoising (Condat's direct algorithm)."""
    n = y.shape[0]
    x = np.empty(n)
    if n == 0:
        return x
    if lam <= 0.0 or n == 1:
        x[:] = y
        return x
    k = 0
    k0 = 0
    kplus = 0
    kminus = 0
    twolam = 2.0 * lam
    minlam = -lam
    umin = lam
    umax = minlam
    vmin = y[0] - lam
    vmax = y[0] + lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    x[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k0
                vmin = y[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    x[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                vmax = y[k0]
                umax = minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    x[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return x
        umin += y[k + 1] - vmin
        if umin < minlam:
            while True:
                x[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kminus = k0
            kplus = k0
            vmin = y[k0]
            vmax = vmin + twolam
            umin = lam
            umax = minlam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            while True:
                x[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = k0
            kminus = k0
            kplus = k0
            vmax = y[k0]
            vmin = vmax - twolam
            umin = lam
            umax = minlam
        else:
            k += 1
            if umin >= lam:
                kminus = k
                vmin += (umin - lam) / (kminus - k0 + 1)
                umin = lam
            if umax <= minlam:
                kplus = k
                vmax += (umax + lam) / (kplus - k0 + 1)
                umax = minlam


@njit(cache=True)
def tv1d_columns(A, lam):
    out = np.empty_like(A)
    for q in range(A.shape[1]):
        out[:, q] = tv1d_condat(np.ascontiguousarray(A[:, q]), lam)
    return out


@njit(cache=True)
def _kkt_violation(S, Omega, lam, t):
    Q = S.shape[1]
    onorm = 0.0
    for q in range(Q):
        onorm += Omega[t, q] * Omega[t, q]
    onorm = np.sqrt(onorm)
    v = 0.0
    if onorm == 0.0:
        for q in range(Q):
            v += S[t, q] * S[t, q]
        return max(0.0, np.sqrt(v) - lam)
    for q in range(Q):
        d = S[t, q] - lam * Omega[t, q] / onorm
        v += d * d
    return np.sqrt(v)


NEWTON_EVERY = 10
NEWTON_STEPS = 8


@njit(cache=True)
def _refresh_residual(G, C, Omega, S, idx, m):
    # S = C - G @ Omega using only the m active rows listed in idx
    n, Q = C.shape
    for t in range(n):
        for q in range(Q):
            S[t, q] = C[t, q]
    for k in range(m):
        s = idx[k]
        for t in range(n):
            g = G[t, s]
            for q in range(Q):
                S[t, q] -= g * Omega[s, q]


@njit(cache=True)
def _restricted_value(G, C, lam, W, rows):
    k, Q = W.shape
    val = 0.0
    for a in range(k):
        nrm = 0.0
        for q in range(Q):
            acc = 0.0
            for b in range(k):
                acc += G[rows[a], rows[b]] * W[b, q]
            val += W[a, q] * (0.5 * acc - C[rows[a], q])
            nrm += W[a, q] * W[a, q]
        val += lam * np.sqrt(nrm)
    return val


@njit(cache=True)
def _newton_polish(G, C, lam, Omega, idx, m, tol, max_steps):
    """Damped Newton steps on the nonzero active rows, all other rows held at zero.

    The cost is smooth there. Its Hessian is ``K kron I`` minus one rank-one
    term per row, with ``K = G_FF + lam diag(1 / |W_t|)``, so the step comes
    from a Woodbury solve costing ``O(k^3 + k^2 Q)`` for ``k`` rows.
    """
    Q = C.shape[1]
    k = 0
    rows = np.empty(m, dtype=np.int64)
    for j in range(m):
        t = idx[j]
        for q in range(Q):
            if Omega[t, q] != 0.0:
                rows[k] = t
                k += 1
                break
    if k == 0:
        return
    rows = rows[:k]
    W = np.empty((k, Q))
    for a in range(k):
        for q in range(Q):
            W[a, q] = Omega[rows[a], q]
    Gff = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            Gff[a, b] = G[rows[a], rows[b]]
    Cf = np.empty((k, Q))
    for a in range(k):
        for q in range(Q):
            Cf[a, q] = C[rows[a], q]
    value = _restricted_value(G, C, lam, W, rows)
    for _ in range(max_steps):
        norms = np.sqrt((W * W).sum(axis=1))
        Wh = W / norms.reshape(-1, 1)
        grad = Gff @ W - Cf + lam * Wh
        if np.sqrt((grad * grad).sum(axis=1)).max() <= tol:
            break
        K = Gff.copy()
        for a in range(k):
            K[a, a] += lam / norms[a]
        Kinv = np.linalg.inv(K)
        Y = Kinv @ grad
        R = -(Kinv * (Wh @ Wh.T))
        for a in range(k):
            R[a, a] += norms[a] / lam
        u = (Wh * Y).sum(axis=1)
        z = np.linalg.solve(R, u)
        step = -(Y + Kinv @ (Wh * z.reshape(-1, 1)))
        slope = (grad * step).sum()
        if slope >= 0.0:
            break
        t = 1.0
        accepted = False
        while t > 1e-10:
            cand = W + t * step
            if np.all((cand * cand).sum(axis=1) > 0.0):
                cval = _restricted_value(G, C, lam, cand, rows)
                if cval <= value + 1e-4 * t * slope:
                    W = cand
                    value = cval
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
    for a in range(k):
        for q in range(Q):
            Omega[rows[a], q] = W[a, q]


@njit(cache=True)
def group_lasso_gram_bcd(G, C, lam, tol, max_iter, Omega):
    """Cyclic block coordinate descent for ``1/2 tr(W'GW) - tr(W'C) + lam sum_t |W_t|``.

    Works in place on ``Omega``. Sweeps run over an active set, keeping the
    correlation residual current on active rows only. Once the active blocks
    are settled the full residual is rebuilt and the worst inactive KKT
    violator joins the set. After ``NEWTON_EVERY`` sweeps without settling, a damped
    Newton polish on the nonzero active rows speeds up the slow cyclic
    phase. Returns ``(sweeps, max_violation)``.
    """
    n, Q = C.shape
    idx = np.empty(n, dtype=np.int64)
    active = np.zeros(n, dtype=np.bool_)
    m = 0
    for t in range(n):
        for q in range(Q):
            if Omega[t, q] != 0.0:
                active[t] = True
                idx[m] = t
                m += 1
                break
    S = np.empty((n, Q))
    _refresh_residual(G, C, Omega, S, idx, m)
    c = np.empty(Q)
    sweeps = 0
    worst = np.inf
    # the first pass checks every block before any sweep
    settled = True
    stall = 0
    while True:
        if settled:
            worst_active = 0.0
            worst_inactive = 0.0
            arg_inactive = -1
            for t in range(n):
                v = _kkt_violation(S, Omega, lam, t)
                if active[t]:
                    if v > worst_active:
                        worst_active = v
                elif v > worst_inactive:
                    worst_inactive = v
                    arg_inactive = t
            worst = max(worst_active, worst_inactive)
            if worst <= tol:
                break
            if worst_active <= tol:
                stall = 0
                active[arg_inactive] = True
                idx[m] = arg_inactive
                m += 1
        if sweeps >= max_iter:
            break
        sweeps += 1
        for k in range(m):
            t = idx[k]
            g = G[t, t]
            cn = 0.0
            for q in range(Q):
                c[q] = S[t, q] + g * Omega[t, q]
                cn += c[q] * c[q]
            cn = np.sqrt(cn)
            scale = 0.0
            if cn > lam:
                scale = (1.0 - lam / cn) / g
            for q in range(Q):
                new = scale * c[q]
                delta = new - Omega[t, q]
                if delta != 0.0:
                    Omega[t, q] = new
                    for j in range(m):
                        s = idx[j]
                        S[s, q] -= G[s, t] * delta
        worst_active = 0.0
        for k in range(m):
            v = _kkt_violation(S, Omega, lam, idx[k])
            if v > worst_active:
                worst_active = v
        settled = worst_active <= tol
        stall += 1
        if not settled and stall >= NEWTON_EVERY:
            stall = 0
            # cyclic sweeps crawl when neighbouring jumps are all active
            _newton_polish(G, C, lam, Omega, idx, m, 0.1 * tol, NEWTON_STEPS)
            _refresh_residual(G, C, Omega, S, idx, m)
            worst_active = 0.0
            for k in range(m):
                v = _kkt_violation(S, Omega, lam, idx[k])
                if v > worst_active:
                    worst_active = v
            settled = worst_active <= tol
        if settled:
            _refresh_residual(G, C, Omega, S, idx, m)
    if not settled or sweeps >= max_iter:
        _refresh_residual(G, C, Omega, S, idx, m)
        worst = 0.0
        for t in range(n):
            worst = max(worst, _kkt_violation(S, Omega, lam, t))
    return sweeps, worst


@njit(cache=True)
def group_fused_into(A, lam, G, tol, max_iter, Omega, Z):
    """Group-fused prox of ``A`` written into ``Z``; ``Omega`` is the warm start and output.

    Returns the final blockwise KKT violation of the jump problem.
    """
    T, Q = A.shape
    mean = np.zeros(Q)
    for t in range(T):
        for q in range(Q):
            mean[q] += A[t, q]
    for q in range(Q):
        mean[q] /= T
    C = np.zeros((T - 1, Q))
    for q in range(Q):
        acc = 0.0
        for j in range(T - 2, -1, -1):
            acc += A[j + 1, q] - mean[q]
            C[j, q] = acc
    sweeps, worst = group_lasso_gram_bcd(G, C, lam, tol, max_iter, Omega)
    steps = np.zeros((T, Q))
    for t in range(1, T):
        for q in range(Q):
            steps[t, q] = steps[t - 1, q] + Omega[t - 1, q]
    for q in range(Q):
        level = 0.0
        for t in range(T):
            level += A[t, q] - steps[t, q]
        level /= T
        for t in range(T):
            Z[t, q] = level + steps[t, q]
    return worst


@njit(cache=True)
def _soft(x, lam):
    if x > lam:
        return x - lam
    if x < -lam:
        return x + lam
    return 0.0


@njit(cache=True)
def dykstra_gflsa(A, lam1, lam2, G, bcd_tol, bcd_max_iter, tol, max_iter, U, Qc, Omega):
    """Dykstra splitting for ``prox(sum_q lam1[q] |.[:, q]|_1 + lam2 |D .|_{2,1})`` at ``A``.

    ``U``, ``Qc`` (correction terms) and ``Omega`` (jumps) are updated in place
    and may carry a warm start: the iterate starts at ``Z = A - U - Qc``,
    which is ``A`` for zero corrections. The inner group lasso is solved to a
    tolerance tied to the latest outer change and to ``bcd_tol`` whenever the
    outer iteration is allowed to stop. Returns ``(Z, iterations, status)``
    with status 1 (converged), 0 (iteration cap) or -1 (inner BCD failure).
    """
    T, Q = A.shape
    Z = A - U - Qc
    V = np.empty((T, Q))
    B = np.empty((T, Q))
    W = np.empty((T, Q))
    status = 0
    n = 0
    inner_tol = bcd_tol
    while n < max_iter:
        n += 1
        for t in range(T):
            for q in range(Q):
                B[t, q] = Z[t, q] + U[t, q]
        worst = group_fused_into(B, lam2, G, inner_tol, bcd_max_iter, Omega, V)
        if worst > inner_tol:
            return Z, n, -1
        exact = inner_tol <= bcd_tol
        change = 0.0
        for t in range(T):
            for q in range(Q):
                U[t, q] = B[t, q] - V[t, q]
                W[t, q] = V[t, q] + Qc[t, q]
                z = _soft(W[t, q], lam1[q])
                Qc[t, q] = W[t, q] - z
                d = z - Z[t, q]
                change += d * d
                Z[t, q] = z
        change = np.sqrt(change)
        if change <= tol and exact:
            status = 1
            break
        # inner accuracy only needs to keep pace with the outer iteration
        if change <= tol:
            inner_tol = bcd_tol
        else:
            inner_tol = max(bcd_tol, min(1e-4, 0.1 * change))
    # final soft-threshold on segment averages of its argument
    start = 0
    for t in range(1, T + 1):
        boundary = t == T
        if not boundary:
            for q in range(Q):
                if Omega[t - 1, q] != 0.0:
                    boundary = True
                    break
        if boundary:
            for q in range(Q):
                acc = 0.0
                for r in range(start, t):
                    acc += W[r, q]
                z = _soft(acc / (t - start), lam1[q])
                for r in range(start, t):
                    Z[r, q] = z
            start = t
    return Z, n, status
