"""Shared data model, upper-triangle vectorization and the GFGL/IFGL cost.

Time is indexed by array row throughout the package: ``t = 0, ..., T-1``.
A changepoint ``tau`` is the row index of the first observation governed by
the new segment, so ``1 <= tau <= T-1``.
"""
from dataclasses import dataclass, field

import numpy as np

METHODS = ("GFGL", "IFGL")

SYMMETRY_RTOL = 1e-12


class SymmetryError(ValueError):
    """Raised when a matrix expected to be symmetric is not."""


@dataclass(frozen=True)
class TimeSeries:
    """A ``T x P`` multivariate observation matrix (rows are time steps)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {data.shape}")
        if data.shape[0] < 2 or data.shape[1] < 2:
            raise ValueError(f"need T >= 2 and P >= 2, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("time series contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def T(self):
        return self.data.shape[0]

    @property
    def P(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class Hyperparameters:
    """Regularisation weights and ADMM settings.

    ``smooth_adjust`` multiplies the rescaled smoothing weight handed to the
    constraint step (``lambda2 / gamma``). Working on the upper triangle
    halves the quadratic term, so with the default of 1 the GFGL solver
    minimises :func:`gfgl_objective` with ``lambda2`` replaced by
    ``sqrt(2) * lambda2``; ``smooth_adjust = 1/sqrt(2)`` makes the two agree
    exactly. The sparsity weight and the IFGL smoothing weight need no
    adjustment.

    ``smooth_diagonal`` puts the diagonal into the smoothing penalty (never
    into the sparsity penalty). Without it each diagonal entry is fit to a
    single observation, which gives heavy-tailed estimates and very slow
    ADMM convergence for the single-observation covariance.
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    gamma: float = 10.0
    eps_prime: float = 1e-3
    eps_dual: float = 1e-3
    max_iter: int = 500
    method: str = "GFGL"
    smooth_adjust: float = 1.0
    smooth_diagonal: bool = True

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.eps_prime <= 0 or self.eps_dual <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.smooth_adjust <= 0:
            raise ValueError("smooth_adjust must be positive")
        method = str(self.method).upper()
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        object.__setattr__(self, "method", method)

    def objective_lambda2(self):
        """Smoothing weight of the full-matrix cost that the ADMM solver minimises."""
        if self.method == "GFGL":
            return np.sqrt(2.0) * self.smooth_adjust * self.lambda2
        return self.smooth_adjust * self.lambda2


def n_edges(P):
    return P * (P - 1) // 2


def edge_index(P):
    """Row-major ``(i, j)``, ``j > i`` pairs in canonical edge order."""
    return np.triu_indices(P, k=1)


def edge_list(P):
    rows, cols = edge_index(P)
    return list(zip(rows.tolist(), cols.tolist()))


def check_symmetric(M, rtol=SYMMETRY_RTOL):
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise SymmetryError(f"expected square matrices, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if np.max(np.abs(M - np.swapaxes(M, -1, -2)), initial=0.0) > rtol * scale:
        raise SymmetryError("matrix is not symmetric")
    return M


def check_sequence(mats, kind="covariance"):
    """Validate a ``(T, P, P)`` stack of symmetric matrices of the given kind."""
    mats = check_symmetric(mats)
    if mats.ndim != 3:
        raise ValueError(f"expected a (T, P, P) array, got shape {mats.shape}")
    if kind in ("covariance", "precision"):
        eig = np.linalg.eigvalsh(mats)
        scale = max(1.0, float(np.max(np.abs(eig))))
        if kind == "covariance" and eig.min() < -1e-10 * scale:
            raise ValueError("covariance sequence is not positive semi-definite")
        if kind == "precision" and eig.min() <= 0:
            raise ValueError("precision sequence is not positive definite")
    elif kind not in ("auxiliary", "dual"):
        raise ValueError(f"unknown sequence kind {kind!r}")
    return mats


def vectorize_upper(M):
    """Strict upper triangle of ``M`` (or of each matrix in a stack), row-major.

    A single ``P x P`` matrix gives a vector of length ``P(P-1)/2``; a
    ``(T, P, P)`` stack gives a ``T x Q`` matrix.
    """
    M = check_symmetric(M)
    rows, cols = edge_index(M.shape[-1])
    return M[..., rows, cols]


def _infer_P(Q):
    P = int(round((1 + np.sqrt(1 + 8 * Q)) / 2))
    if n_edges(P) != Q:
        raise ValueError(f"{Q} is not a triangular number of edges")
    return P


def devectorize(v, diag):
    """Inverse of :func:`vectorize_upper`; works on a vector or a ``T x Q`` stack."""
    v = np.asarray(v, dtype=float)
    diag = np.asarray(diag, dtype=float)
    P = diag.shape[-1]
    if v.shape[-1] != n_edges(P):
        raise ValueError(
            f"length mismatch: {v.shape[-1]} off-diagonals for P={P} "
            f"(expected {n_edges(P)})")
    if v.shape[:-1] != diag.shape[:-1]:
        raise ValueError("leading dimensions of v and diag differ")
    rows, cols = edge_index(P)
    out = np.zeros(v.shape[:-1] + (P, P))
    out[..., rows, cols] = v
    out[..., cols, rows] = v
    idx = np.arange(P)
    out[..., idx, idx] = diag
    return out


def differencing_matrix(T):
    """First-difference operator ``D`` with ``(D Z)_t = Z_{t+1} - Z_t``."""
    D = np.zeros((T - 1, T))
    idx = np.arange(T - 1)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D


def cumsum_matrix(T):
    """``R`` with ``R[t, j] = 1`` for ``t > j``; ``(R Omega)_t`` sums the first ``t`` jumps."""
    return np.tril(np.ones((T, T - 1)), k=-1)


def group_norm(M):
    """l2,1 norm: sum of row-wise Euclidean norms."""
    return float(np.sum(np.linalg.norm(M, axis=-1)))


@dataclass(frozen=True)
class VectorizedProblem:
    """Upper-triangle form of the constraint step target.

    ``A`` is ``T x Q``; ``D``, ``R`` are the differencing and cumulative-sum
    operators. ``Omega`` and ``omega`` hold the jump/level parameterisation
    ``Z = 1 omega^T + R Omega`` once solved.
    """

    A: np.ndarray
    D: np.ndarray = field(init=False)
    R: np.ndarray = field(init=False)
    Omega: np.ndarray = None
    omega: np.ndarray = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", differencing_matrix(A.shape[0]))
        object.__setattr__(self, "R", cumsum_matrix(A.shape[0]))

    @classmethod
    def from_matrices(cls, mats):
        return cls(vectorize_upper(mats))

    def reconstruct(self):
        if self.Omega is None or self.omega is None:
            raise ValueError("jump parameters have not been set")
        return self.omega[None, :] + self.R @ self.Omega


def offdiag_l1(M):
    """Sum of ``|M_ij|`` over ``i != j`` (both triangles)."""
    M = np.asarray(M)
    return float(np.abs(M).sum() - np.abs(np.diagonal(M, axis1=-2, axis2=-1)).sum())


def _offdiag(M):
    P = M.shape[-1]
    return M * (1.0 - np.eye(P))


def gfgl_objective(X, S, h):
    """Penalised negative log-likelihood of a precision sequence.

    ``sum_t (-logdet X_t + tr(S_t X_t)) + lambda1 sum_t |X_t|_{1,off}
    + lambda2 sum_{t>=1} ||X_t - X_{t-1}||``, where the smoothing norm is the
    Frobenius norm for GFGL and the elementwise l1 norm for IFGL, taken over
    the whole matrix or, with ``h.smooth_diagonal`` off, over the
    off-diagonal entries only. Raises ``ValueError`` if any ``X_t`` is not
    positive definite.
    """
    X = check_symmetric(X)
    S = check_symmetric(S)
    if X.ndim == 2:
        X, S = X[None], S[None]
    if X.shape != S.shape:
        raise ValueError(f"shape mismatch: X {X.shape} vs S {S.shape}")
    eig = np.linalg.eigvalsh(X)
    if np.any(eig <= 0):
        raise ValueError("log det undefined: X is not positive definite")
    logdet = np.log(eig).sum(axis=-1)
    nll = float(np.sum(-logdet + np.einsum("tij,tji->t", S, X)))
    shrink = h.lambda1 * offdiag_l1(X)
    diffs = np.diff(X, axis=0)
    if not h.smooth_diagonal:
        diffs = _offdiag(diffs)
    if h.method == "GFGL":
        smooth = float(np.sum(np.sqrt(np.sum(diffs ** 2, axis=(1, 2)))))
    else:
        smooth = float(np.abs(diffs).sum())
    return nll + shrink + h.lambda2 * smooth
