import numpy as np
import pytest

from gfgl.core import n_edges
from gfgl.simulate import (GroundTruth, build_precision, erdos_renyi_edges, make_ground_truth,
                           make_scenario, sample_series)


def test_erdos_renyi_extremes():
    rng = np.random.default_rng(0)
    assert erdos_renyi_edges(5, 0, rng) == frozenset()
    assert len(erdos_renyi_edges(5, 10, rng)) == 10
    with pytest.raises(ValueError):
        erdos_renyi_edges(5, 11, rng)
    with pytest.raises(ValueError):
        erdos_renyi_edges(5, -1, rng)


def test_erdos_renyi_inclusion_probability():
    # each of the 6 pairs of a P=4 graph is included with probability M / 6
    rng = np.random.default_rng(1)
    counts = {}
    n = 100_000
    for _ in range(n):
        for e in erdos_renyi_edges(4, 2, rng):
            counts[e] = counts.get(e, 0) + 1
    assert len(counts) == 6
    for c in counts.values():
        assert abs(c / n - 1 / 3) < 0.01


def test_build_precision_construction():
    rng = np.random.default_rng(2)
    assert np.array_equal(build_precision(frozenset(), 3, rng, normalize=False), 0.5 * np.eye(3))
    theta = build_precision({(0, 1)}, 2, rng, normalize=False)
    w = theta[0, 1]
    assert 0.5 <= abs(w) <= 1.0
    assert np.allclose(theta, [[0.5 + abs(w), w], [w, 0.5 + abs(w)]])


def test_build_precision_properties():
    rng = np.random.default_rng(3)
    for _ in range(20):
        edges = erdos_renyi_edges(8, 10, rng)
        raw = build_precision(edges, 8, np.random.default_rng(7), normalize=False)
        off = np.abs(raw - np.diag(np.diag(raw)))
        assert np.all(np.diag(raw) > off.sum(axis=1))
        assert np.all((off == 0) | ((off >= 0.5) & (off <= 1.0)))
        theta = build_precision(edges, 8, np.random.default_rng(7), normalize=True)
        assert np.linalg.eigvalsh(theta).min() > 0
        assert np.allclose(np.diag(np.linalg.inv(theta)), 1.0, atol=1e-10)
        pattern = {(i, j) for i in range(8) for j in range(i + 1, 8) if theta[i, j] != 0}
        assert pattern == set(edges)


def test_sample_series_identity_covariance():
    gt = GroundTruth(changepoints=(), segment_precisions=(np.eye(3),),
                     segment_edges=(frozenset(),), seed=0, T=100_000)
    y = sample_series(gt, 100_000, np.random.default_rng(4)).data
    assert np.abs(y.T @ y / y.shape[0] - np.eye(3)).max() < 0.02


def test_sample_series_partial_correlation_sign():
    theta = np.array([[1.0, 0.6], [0.6, 1.0]])
    gt = GroundTruth(changepoints=(), segment_precisions=(theta,),
                     segment_edges=(frozenset({(0, 1)}),), seed=0, T=10_000)
    y = sample_series(gt, 10_000, np.random.default_rng(5)).data
    prec = np.linalg.inv(y.T @ y / y.shape[0])
    # partial correlation is -theta_12 / sqrt(theta_11 theta_22)
    assert np.sign(-prec[0, 1]) == np.sign(-theta[0, 1])


def test_sample_series_rejects_wrong_length():
    gt = make_ground_truth(3, 10, 2, [5], seed=0)
    with pytest.raises(ValueError):
        sample_series(gt, 11, np.random.default_rng(0))


def test_ground_truth_validation():
    P = [np.eye(2)] * 2
    E = [frozenset()] * 2
    with pytest.raises(ValueError):
        GroundTruth((0,), P, E, 0, 10)
    with pytest.raises(ValueError):
        GroundTruth((10,), P, E, 0, 10)
    with pytest.raises(ValueError):
        GroundTruth((3,), P[:1], E[:1], 0, 10)
    gt = GroundTruth((3,), P, E, 0, 10)
    assert gt.segment_of(2) == 0 and gt.segment_of(3) == 1
    assert gt.segment_labels().tolist() == [0, 0, 0, 1, 1, 1, 1, 1, 1, 1]


def test_scenario_structure():
    ts, gt = make_scenario(10, 50, 10, [25], seed=11)
    assert ts.data.shape == (50, 10)
    assert gt.changepoints == (25,)
    assert len(gt.segment_precisions) == 2
    assert all(len(e) == 10 for e in gt.segment_edges)
    assert gt.edges_at(24) == gt.segment_edges[0] and gt.edges_at(25) == gt.segment_edges[1]
    single, gt1 = make_scenario(4, 20, 3, [], seed=1)
    assert gt1.changepoints == () and len(gt1.segment_precisions) == 1


def test_scenario_determinism_and_t_independence():
    a, gta = make_scenario(6, 40, 5, [20], seed=3)
    b, gtb = make_scenario(6, 40, 5, [20], seed=3)
    assert np.array_equal(a.data, b.data)
    _, gt2 = make_scenario(6, 80, 5, [40], seed=3)
    for p, q in zip(gta.segment_precisions, gt2.segment_precisions):
        assert np.array_equal(p, q)
    c, _ = make_scenario(6, 40, 5, [20], seed=3, replicate=1)
    assert not np.array_equal(a.data, c.data)


def test_edge_changepoints():
    _, gt = make_scenario(6, 30, 5, [10, 20], seed=4)
    moves = gt.edge_changepoints()
    assert set(moves) <= set((i, j) for i in range(6) for j in range(i + 1, 6))
    for times in moves.values():
        assert set(times) <= {10, 20}
    assert len(moves) <= n_edges(6)
