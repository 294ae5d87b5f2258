"""End-to-end acceptance checks.

Each test records one PASS/FAIL line, collected in the ``acceptance
criteria`` section of the pytest summary. Run just this suite with::

    pytest tests/test_acceptance.py -v
"""
import json
import time
from functools import lru_cache

import numpy as np
import pytest

from gfgl import oracle
from gfgl.cli import main, read_series
from gfgl.core import Hyperparameters, vectorize_upper
from gfgl.covariance import dirac_covariance, empirical_covariance
from gfgl.evaluate import (changepoint_density, extract_changepoints, f1_series, grid_search,
                           mae_changepoints)
from gfgl.prox import dykstra_prox, flsa_prox, group_fused_prox, tv1d_prox
from gfgl.simulate import make_scenario
from gfgl.solver import admm_objective, fit, likelihood_update, structured_estimate

pytestmark = pytest.mark.slow

# shared scenario suite: P=10, T=50, M=10 edges, one changepoint at row 25
SUITE_SEEDS = range(20)
LAMBDA1 = 0.2
# smoothing ladders, strongest first; each fit takes the first rung that detects a change
LADDER = {"GFGL": [40, 28, 20, 14, 10, 7, 5, 3.5, 2.5],
          "IFGL": [10, 7, 5, 3.5, 2.5, 1.7, 1.2, 0.8]}


def suite_scenario(seed, T=50):
    return make_scenario(10, T, 10, [T // 2], seed=seed)


def first_detecting(S, method, ladder, lambda1=LAMBDA1):
    """Fits down ``ladder`` until one has an edge changepoint; returns all fits made."""
    fits = []
    for lam2 in ladder:
        result = fit(S, Hyperparameters(lambda1=lambda1, lambda2=lam2, method=method))
        fits.append(result)
        if extract_changepoints(result.Z).K_hat > 0:
            break
    return fits


@lru_cache(maxsize=None)
def matched_fits():
    out = {}
    for seed in SUITE_SEEDS:
        ts, _ = suite_scenario(seed)
        S = dirac_covariance(ts)
        out[seed] = {m: first_detecting(S, m, LADDER[m]) for m in LADDER}
    return out


def elapsed(start):
    return time.perf_counter() - start


# --- 1 ---------------------------------------------------------------------

def gflsa_values(Z, A, lam1, lam2):
    return (0.5 * np.sum((Z - A) ** 2, axis=(-1, -2)) + lam1 * np.abs(Z).sum((-1, -2))
            + lam2 * np.linalg.norm(np.diff(Z, axis=-2), axis=-1).sum(-1))


def flsa_values(Z, A, lam1, lam2):
    return (0.5 * np.sum((Z - A) ** 2, axis=(-1, -2)) + lam1 * np.abs(Z).sum((-1, -2))
            + lam2 * np.abs(np.diff(Z, axis=-2)).sum((-1, -2)))


def test_criterion_1_prox_oracles(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    shapes = [(4, 2), (5, 3), (6, 4), (8, 2), (8, 4)]
    worst = {"dykstra": 0.0, "group_fused": 0.0, "flsa": 0.0}
    below = 0.0
    for T, Q in shapes:
        n = 10
        A = rng.normal(size=(n, T, Q)) * 2
        lam1 = rng.uniform(0.05, 0.8, n)
        lam2 = rng.uniform(0.1, 1.5, n)
        cases = {
            "dykstra": ("gflsa", lam1, lambda a, l1, l2: dykstra_prox(a, l1, l2), gflsa_values),
            "group_fused": ("gflsa", np.zeros(n), lambda a, l1, l2: group_fused_prox(a, l2),
                            gflsa_values),
            "flsa": ("flsa", lam1, lambda a, l1, l2: flsa_prox(a, l1, l2), flsa_values),
        }
        for name, (objective, l1, op, value) in cases.items():
            ref = oracle.subgradient_minimize(objective, {"A": A, "lam1": l1, "lam2": lam2},
                                              steps=100_000).value
            ours = np.array([value(op(A[k], l1[k], lam2[k]), A[k], l1[k], lam2[k])
                             for k in range(n)])
            # feasible oracle points bound the optimum from above
            worst[name] = max(worst[name], float(np.max(np.abs(ours - ref))))
            below = max(below, float(np.max(ours - ref)))
    tv_gap = 0.0
    for _ in range(200):
        v = rng.normal(size=8) * 2
        lam = rng.uniform(0.05, 2.0)
        tv_gap = max(tv_gap, float(np.abs(tv1d_prox(v, lam) - oracle.tv_enumerate(v, lam)).max()))
    secs = elapsed(start)
    ok = max(worst.values()) <= 1e-4 and tv_gap <= 1e-8 and secs < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert verdict("criterion 1 prox oracles", ok,
                   f"max |gap| {detail}; tv1d {tv_gap:.1e}; {secs:.0f}s")


# --- 2 ---------------------------------------------------------------------

def test_criterion_2_likelihood_stationarity(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst, min_eig = 0.0, np.inf
    for _ in range(100):
        P = int(rng.integers(2, 7))
        B = rng.normal(size=(P, P)) * rng.uniform(0.1, 10)
        M = B + B.T
        gamma = float(10 ** rng.uniform(-2, 2))
        # M = S - gamma (Z - U) with S = 0, Z - U = -M / gamma
        X = likelihood_update(np.zeros((P, P)), -M / gamma, np.zeros((P, P)), gamma)
        res = np.linalg.norm(np.linalg.inv(X) - gamma * X - M) / (1 + np.linalg.norm(M))
        worst = max(worst, res)
        min_eig = min(min_eig, np.linalg.eigvalsh(X).min())
    secs = elapsed(start)
    ok = worst <= 1e-8 and min_eig > 0 and secs < 10
    assert verdict("criterion 2 likelihood stationarity", ok,
                   f"max scaled residual {worst:.1e}, min eigenvalue {min_eig:.1e}, {secs:.1f}s")


# --- 3 ---------------------------------------------------------------------

def test_criterion_3_full_solver_optimality(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    T, P, n = 6, 3, 5
    # full-rank per-time covariances: averages of a few scaled outer products
    Y = rng.normal(size=(10, T, n, P)) * rng.uniform(0.5, 2.0, size=(10, T, 1, P))
    S = np.einsum("ktni,ktnj->ktij", Y, Y) / n
    h = Hyperparameters(lambda1=0.1, lambda2=0.5, eps_prime=1e-10, eps_dual=1e-10,
                        max_iter=20000)
    ours = np.array([admm_objective(structured_estimate(fit(S[k], h)), S[k], h)
                     for k in range(10)])
    # the oracle minimises the same cost; the smoothing weight is the full-matrix one
    eff = Hyperparameters(lambda1=h.lambda1, lambda2=h.objective_lambda2())
    ref = oracle.subgradient_minimize("gfgl_full", {"S": S, "h": eff}, steps=100_000).value
    rel = np.abs(ours - ref) / np.abs(ref)
    secs = elapsed(start)
    ok = rel.max() <= 1e-3 and secs < 300
    assert verdict("criterion 3 full solver optimality", ok,
                   f"max relative gap {rel.max():.1e}, ours below oracle on "
                   f"{int(np.sum(ours < ref))}/10, {secs:.0f}s")


# --- 4 ---------------------------------------------------------------------

def test_criterion_4_reductions(verdict):
    start = time.perf_counter()
    ts, _ = make_scenario(5, 12, 4, [6], seed=0)
    # a smoothed estimate keeps every single-time problem well conditioned
    S = empirical_covariance(ts, "gaussian", 2.0)
    T = S.shape[0]

    h0 = Hyperparameters(lambda1=0.3, eps_prime=1e-20, eps_dual=1e-20, max_iter=50000)
    joint = fit(S, h0)
    same_support, value_gap = True, 0.0
    for t in range(T):
        single = fit(S[t:t + 1], h0)
        same_support &= single.support[0] == joint.support[t]
        value_gap = max(value_gap, float(np.abs(single.theta[0] - joint.theta[t]).max()))

    heavy = fit(S, Hyperparameters(lambda1=0.1, lambda2=1e6))

    lam_max = np.abs(vectorize_upper(S)).max()
    empty = fit(S, Hyperparameters(lambda1=1.01 * lam_max, lambda2=1.0))
    secs = elapsed(start)
    ok = (same_support and value_gap <= 1e-6 and heavy.changepoint_rows == []
          and all(s == [] for s in empty.support) and secs < 60)
    assert verdict("criterion 4 reductions", ok,
                   f"lambda2=0 support equal {same_support}, max value gap {value_gap:.1e}; "
                   f"lambda2=1e6 rows {heavy.changepoint_rows}; "
                   f"lambda1 above {lam_max:.2f} edges {sum(map(len, empty.support))}; "
                   f"{secs:.0f}s")


# --- 5 and 8 ---------------------------------------------------------------

def edges_per_change(result):
    d = changepoint_density(extract_changepoints(result.Z))
    return float(d[d > 0].mean())


def test_criterion_5_grouping(verdict):
    start = time.perf_counter()
    fits = matched_fits()
    wins, matched = 0, 0
    for seed in SUITE_SEEDS:
        g, i = fits[seed]["GFGL"][-1], fits[seed]["IFGL"][-1]
        if extract_changepoints(g.Z).K_hat == 0 or extract_changepoints(i.Z).K_hat == 0:
            continue
        matched += 1
        wins += edges_per_change(g) > edges_per_change(i)
    secs = elapsed(start)
    ok = matched == len(SUITE_SEEDS) and wins >= 0.8 * len(SUITE_SEEDS) and secs < 900
    assert verdict("criterion 5 grouping", ok,
                   f"GFGL more edges per changepoint in {wins}/{len(SUITE_SEEDS)} seeds, "
                   f"{matched} matched, {secs:.0f}s")


def test_criterion_8_convergence_defaults(verdict):
    all_fits = [r for seed in SUITE_SEEDS for m in LADDER for r in matched_fits()[seed][m]]
    rate = np.mean([r.converged for r in all_fits])
    iters = max(r.iterations for r in all_fits)
    ok = rate >= 0.9
    assert verdict("criterion 8 convergence defaults", ok,
                   f"{rate:.0%} of {len(all_fits)} fits converged, max {iters} iterations")


# --- 6 ---------------------------------------------------------------------

GRID_LAMBDA1 = [0.1, 0.15, 0.2]
GRID_LAMBDA2 = {"GFGL": [3, 6, 10, 20], "IFGL": [1, 2, 4, 8]}
TRAIN_SEEDS = range(1000, 1010)
WINDOW = slice(23, 28)


def test_criterion_6_recovery_near_changepoint(verdict):
    start = time.perf_counter()
    train = [suite_scenario(seed) for seed in TRAIN_SEEDS]
    window, overall, chosen = {}, {}, {}
    for m in GRID_LAMBDA2:
        grid = [(a, b) for a in GRID_LAMBDA1 for b in GRID_LAMBDA2[m]]
        l1, l2 = grid_search(train, grid, Hyperparameters(method=m))
        chosen[m] = (l1, l2)
        w, f = [], []
        for seed in SUITE_SEEDS:
            ts, gt = suite_scenario(seed)
            scores, mean = f1_series(fit(dirac_covariance(ts),
                                         Hyperparameters(lambda1=l1, lambda2=l2, method=m)), gt)
            w.append(scores[WINDOW].mean())
            f.append(mean)
        window[m], overall[m] = np.array(w), np.array(f)
    wins = int(np.sum(window["GFGL"] >= window["IFGL"]))
    gap = abs(overall["GFGL"].mean() - overall["IFGL"].mean())
    secs = elapsed(start)
    ok = wins >= 0.6 * len(SUITE_SEEDS) and gap < 0.1 and secs < 1800
    assert verdict("criterion 6 recovery near changepoint", ok,
                   f"window F1 GFGL >= IFGL in {wins}/{len(SUITE_SEEDS)} seeds "
                   f"(means {window['GFGL'].mean():.3f} vs {window['IFGL'].mean():.3f}), "
                   f"global gap {gap:.3f}, lambdas {chosen}, {secs:.0f}s")


# --- 7 ---------------------------------------------------------------------

def test_criterion_7_mae_convergence(verdict):
    start = time.perf_counter()
    medians = []
    for T in (20, 40, 80):
        scaled = []
        for seed in range(10):
            ts, gt = suite_scenario(seed, T)
            result = first_detecting(dirac_covariance(ts), "GFGL", LADDER["GFGL"])[-1]
            scaled.append(mae_changepoints(extract_changepoints(result.Z), gt) / T)
        medians.append(float(np.nanmedian(scaled)))
    inversions = int(np.sum(np.diff(medians) > 0))
    secs = elapsed(start)
    ok = inversions <= 1 and not np.any(np.isnan(medians)) and secs < 1200
    assert verdict("criterion 7 MAE convergence", ok,
                   "median MAE/T at T=20,40,80: " + ", ".join(f"{m:.3f}" for m in medians)
                   + f"; {inversions} inversions, {secs:.0f}s")


# --- 9 ---------------------------------------------------------------------

def test_criterion_9_complexity_scaling(verdict):
    start = time.perf_counter()
    h = Hyperparameters(lambda1=LAMBDA1, lambda2=10.0)
    fit(dirac_covariance(suite_scenario(0)[0]), h)  # compile the kernels outside the timing
    medians = {}
    for T in (50, 100):
        times = []
        for rep in range(5):
            S = dirac_covariance(suite_scenario(rep, T)[0])
            t0 = time.perf_counter()
            fit(S, h)
            times.append(elapsed(t0))
        medians[T] = float(np.median(times))
    ratio = medians[100] / medians[50]
    secs = elapsed(start)
    ok = ratio <= 3 and secs < 600
    assert verdict("criterion 9 complexity scaling", ok,
                   f"median {medians[50]:.2f}s at T=50, {medians[100]:.2f}s at T=100, "
                   f"ratio {ratio:.2f}, {secs:.0f}s")


# --- 10 --------------------------------------------------------------------

def check_schemas(sim, fitdir, metrics, P, T):
    with open(sim / "series.csv", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == ",".join(f"var{p + 1}" for p in range(P))
    assert len(lines) == T + 1 and all(len(l.split(",")) == P for l in lines[1:])
    assert read_series(sim / "series.csv").data.shape == (T, P)
    truth = json.loads((sim / "truth.json").read_text(encoding="utf-8"))
    assert {"P", "T", "M", "seed", "changepoints", "segments"} <= truth.keys()
    for seg in truth["segments"]:
        assert {"start", "end", "edges", "precision"} <= seg.keys()
        assert np.array(seg["precision"]).shape == (P, P)
    theta = json.loads((fitdir / "theta.json").read_text(encoding="utf-8"))
    assert np.array(theta["theta"]).shape == (T, P, P) == np.array(theta["Z"]).shape
    support = json.loads((fitdir / "support.json").read_text(encoding="utf-8"))["support"]
    assert len(support) == T and all(len(e) == 2 and e[0] < e[1] for s in support for e in s)
    cps = json.loads((fitdir / "changepoints.json").read_text(encoding="utf-8"))
    assert len(cps["density"]) == T and sum(cps["density"]) == cps["K_hat"]
    assert len(metrics["f_series"]) == T and 0 <= metrics["f_mean"] <= 1
    assert len(metrics["density"]) == T and metrics["K_hat"] == cps["K_hat"]


def test_criterion_10_determinism_and_format(verdict, tmp_path):
    P, T = 6, 30
    sims = [tmp_path / "a", tmp_path / "b"]
    codes = []
    for d in sims:
        codes.append(main(["simulate", "--p", str(P), "--t", str(T), "--m", "5",
                           "--changepoints", "15", "--seed", "42", "--out-dir", str(d)]))
    metrics = []
    for d in sims:
        codes.append(main(["fit", "--input", str(d / "series.csv"), "--lambda1", "0.2",
                           "--lambda2", "5", "--out-dir", str(d / "fit")]))
        codes.append(main(["eval", "--fit-dir", str(d / "fit"), "--truth", str(d / "truth.json")]))
        metrics.append(json.loads((d / "fit" / "metrics.json").read_text(encoding="utf-8")))
    same_csv = (sims[0] / "series.csv").read_bytes() == (sims[1] / "series.csv").read_bytes()
    same_truth = (sims[0] / "truth.json").read_bytes() == (sims[1] / "truth.json").read_bytes()
    same_metrics = metrics[0] == metrics[1]
    try:
        check_schemas(sims[0], sims[0] / "fit", metrics[0], P, T)
        schemas = True
    except (AssertionError, KeyError) as err:
        schemas = False
        print(f"schema check failed: {err!r}")
    ok = codes == [0] * 6 and same_csv and same_truth and same_metrics and schemas
    assert verdict("criterion 10 determinism and format", ok,
                   f"exit codes {codes}, series.csv identical {same_csv}, "
                   f"metrics identical {same_metrics}, schemas valid {schemas}")
