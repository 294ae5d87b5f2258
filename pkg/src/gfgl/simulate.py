"""Piecewise-stationary Gaussian graphical model simulation.

Each segment gets an Erdos-Renyi ``G(P, M)`` graph whose edges carry weights
uniform on ``[-1, -1/2] U [1/2, 1]``; absolute row sums are added to a
``1/2 I`` diagonal so the precision matrix is diagonally dominant, and the
matrix is then rescaled to unit marginal variances.

Randomness comes from ``numpy.random.Generator`` (PCG64). A scenario seed is
split with ``SeedSequence.spawn`` into a structure stream (graphs and
weights) and a sampling stream, so the segment precisions do not depend on
``T``.
"""
from dataclasses import dataclass

import numpy as np

from .core import TimeSeries, edge_list, n_edges


@dataclass(frozen=True)
class GroundTruth:
    """Segment structure of a simulated series.

    ``changepoints[k]`` is the first row of segment ``k + 1``; segment ``k``
    spans rows ``bounds[k] <= t < bounds[k + 1]`` with ``bounds = [0] +
    changepoints + [T]``.
    """

    changepoints: tuple
    segment_precisions: tuple
    segment_edges: tuple
    seed: int
    T: int

    def __post_init__(self):
        cps = tuple(int(c) for c in self.changepoints)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("changepoints must be strictly increasing")
        if cps and (cps[0] < 1 or cps[-1] > self.T - 1):
            raise ValueError(f"changepoints must lie in [1, {self.T - 1}]")
        if len(self.segment_precisions) != len(cps) + 1:
            raise ValueError("need one precision matrix per segment")
        if len(self.segment_edges) != len(cps) + 1:
            raise ValueError("need one edge set per segment")
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "segment_precisions",
                           tuple(np.asarray(m, dtype=float) for m in self.segment_precisions))
        object.__setattr__(self, "segment_edges",
                           tuple(frozenset(tuple(e) for e in es) for es in self.segment_edges))

    @property
    def P(self):
        return self.segment_precisions[0].shape[0]

    def segment_of(self, t):
        return int(np.searchsorted(self.changepoints, t, side="right"))

    def segment_labels(self):
        return np.searchsorted(self.changepoints, np.arange(self.T), side="right")

    def precision_sequence(self):
        return np.stack([self.segment_precisions[k] for k in self.segment_labels()])

    def edges_at(self, t):
        return self.segment_edges[self.segment_of(t)]

    def edge_changepoints(self):
        """Map each edge to the true changepoints at which its precision entry moves."""
        out = {}
        for i, j in edge_list(self.P):
            times = [tau for k, tau in enumerate(self.changepoints)
                     if self.segment_precisions[k][i, j] != self.segment_precisions[k + 1][i, j]]
            if times:
                out[(i, j)] = times
        return out


def erdos_renyi_edges(P, M, rng):
    """``M`` distinct edges drawn uniformly from the ``P(P-1)/2`` pairs."""
    Q = n_edges(P)
    if not 0 <= M <= Q:
        raise ValueError(f"M={M} out of range [0, {Q}] for P={P}")
    pairs = edge_list(P)
    picks = rng.choice(Q, size=M, replace=False)
    return frozenset(pairs[q] for q in sorted(picks))


def build_precision(edges, P, rng, normalize=True):
    theta = 0.5 * np.eye(P)
    for i, j in sorted(edges):
        w = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
        theta[i, j] = theta[j, i] = w
    offdiag = np.abs(theta).sum(axis=1) - np.abs(np.diag(theta))
    theta[np.diag_indices(P)] += offdiag
    if normalize:
        d = np.sqrt(np.diag(np.linalg.inv(theta)))
        theta = d[:, None] * theta * d[None, :]
    return theta


def sample_series(gt, T, rng):
    """Independent draws ``y_t ~ N(0, inv(Theta_k))`` with ``k`` the segment of ``t``."""
    if T != gt.T:
        raise ValueError(f"ground truth was built for T={gt.T}, not {T}")
    labels = gt.segment_labels()
    y = np.empty((T, gt.P))
    for k, theta in enumerate(gt.segment_precisions):
        try:
            L = np.linalg.cholesky(theta)
        except np.linalg.LinAlgError as err:
            raise ValueError(f"segment {k} precision is not SPD") from err
        rows = np.flatnonzero(labels == k)
        # y = L^{-T} e has covariance inv(L L^T) = inv(Theta)
        e = rng.standard_normal((gt.P, rows.size))
        y[rows] = np.linalg.solve(L.T, e).T
    return TimeSeries(y)


def scenario_streams(seed):
    structure, sampling = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(structure), np.random.default_rng(sampling)


def make_ground_truth(P, T, M, changepoints, seed, normalize=True):
    rng, _ = scenario_streams(seed)
    changepoints = sorted(int(c) for c in changepoints)
    edges, precisions = [], []
    for _ in range(len(changepoints) + 1):
        e = erdos_renyi_edges(P, M, rng)
        edges.append(e)
        precisions.append(build_precision(e, P, rng, normalize))
    return GroundTruth(changepoints=tuple(changepoints), segment_precisions=tuple(precisions),
                       segment_edges=tuple(edges), seed=int(seed), T=int(T))


def make_scenario(P, T, M, changepoints, seed, normalize=True, replicate=0):
    """Ground truth plus one sampled series.

    ``replicate`` selects an independent draw of the series from the same
    ground truth (used to build training and test sets).
    """
    gt = make_ground_truth(P, T, M, changepoints, seed, normalize)
    _, sampling = np.random.SeedSequence(seed).spawn(2)
    stream = sampling.spawn(replicate + 1)[replicate]
    return sample_series(gt, T, np.random.default_rng(stream)), gt
