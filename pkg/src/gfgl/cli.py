"""Command-line interface: ``gfgl simulate | fit | eval | grid | scan | bench``.

Files are plain CSV (series) and JSON (everything else). Time indices in
all outputs are 0-based rows of the input series.

Exit codes: 0 on success (including fits that hit ``--max-iter``), 2 for
usage or input errors, 3 for numerical failures.
"""
import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .core import Hyperparameters, TimeSeries
from .covariance import difference_series, empirical_covariance
from .evaluate import evaluate, extract_changepoints, changepoint_density, resolve_jobs
from .evaluate import score_grid, select_pair, SearchError
from .prox import ConvergenceError
from .simulate import GroundTruth, make_scenario
from .solver import fit

logger = logging.getLogger("gfgl")


class UsageError(Exception):
    """Bad flags or unreadable input; exit code 2."""


def _floats(text):
    text = text.strip()
    if not text:
        return []
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as err:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from err


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise UsageError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise UsageError(f"cannot read {path}: {err}") from err


def write_series(path, ts):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"var{p + 1}" for p in range(ts.P)])
        for row in ts.data.tolist():
            w.writerow([repr(x) for x in row])


def read_series(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}") from err
    if len(rows) < 2:
        raise UsageError(f"{path}: need a header and at least one data row")
    P = len(rows[0])
    if rows[0] != [f"var{p + 1}" for p in range(P)]:
        raise UsageError(f"{path}: header must be var1..varP")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as err:
        raise UsageError(f"{path}: non-numeric entry ({err})") from err
    if data.ndim != 2 or data.shape[1] != P:
        raise UsageError(f"{path}: ragged rows")
    try:
        return TimeSeries(data)
    except ValueError as err:
        raise UsageError(f"{path}: {err}") from err


def truth_to_dict(gt, M):
    bounds = [0, *gt.changepoints, gt.T]
    return {
        "P": gt.P, "T": gt.T, "M": M, "seed": gt.seed,
        "changepoints": list(gt.changepoints),
        "segments": [
            {"start": a, "end": b, "edges": [list(e) for e in sorted(edges)],
             "precision": prec.tolist()}
            for a, b, edges, prec in zip(bounds, bounds[1:], gt.segment_edges,
                                         gt.segment_precisions)
        ],
    }


def truth_from_dict(d):
    try:
        return GroundTruth(
            changepoints=tuple(d["changepoints"]),
            segment_precisions=tuple(np.array(s["precision"]) for s in d["segments"]),
            segment_edges=tuple(frozenset(map(tuple, s["edges"])) for s in d["segments"]),
            seed=d["seed"], T=d["T"])
    except (KeyError, TypeError, ValueError) as err:
        raise UsageError(f"malformed truth file: {err}") from err


def cmd_simulate(args):
    cps = _ints(args.changepoints)
    try:
        ts, gt = make_scenario(args.p, args.t, args.m, cps, args.seed, replicate=args.replicate)
    except ValueError as err:
        raise UsageError(str(err)) from err
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_series(out / "series.csv", ts)
    _write_json(out / "truth.json", truth_to_dict(gt, args.m))
    return 0


def _hyper(args, lambda1=None, lambda2=None):
    try:
        return Hyperparameters(
            lambda1=args.lambda1 if lambda1 is None else lambda1,
            lambda2=args.lambda2 if lambda2 is None else lambda2,
            gamma=args.gamma, eps_prime=args.eps, eps_dual=args.eps,
            max_iter=args.max_iter, method=args.method,
            smooth_adjust=args.smooth_adjust, smooth_diagonal=not args.no_smooth_diagonal)
    except ValueError as err:
        raise UsageError(str(err)) from err


def _covariance(args):
    ts = read_series(args.input)
    if args.difference:
        try:
            ts = difference_series(ts)
        except ValueError as err:
            raise UsageError(str(err)) from err
    try:
        return empirical_covariance(ts, args.covariance, args.width)
    except ValueError as err:
        raise UsageError(str(err)) from err


def cmd_fit(args):
    S = _covariance(args)
    h = _hyper(args)
    result = fit(S, h)
    if not result.converged:
        logger.warning("fit did not converge in %d iterations", result.iterations)
    est = extract_changepoints(result.Z) if S.shape[0] > 1 else None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "theta.json", {"theta": result.theta.tolist(), "Z": result.Z.tolist()})
    _write_json(out / "support.json",
                {"support": [[list(e) for e in s] for s in result.support]})
    _write_json(out / "changepoints.json", {
        "rows": result.changepoint_rows,
        "per_edge": [] if est is None else
        [{"edge": list(e), "times": t} for e, t in sorted(est.per_edge.items())],
        "density": [0] if est is None else changepoint_density(est).tolist(),
        "K_hat": 0 if est is None else est.K_hat,
    })
    _write_json(out / "fitlog.json", {
        "iterations": result.iterations,
        "converged": result.converged,
        "final_objective": result.final_objective,
        "wall_time": result.wall_time,
        "history": [[n, rp, rd] for n, rp, rd, _ in result.history],
        "hyperparameters": asdict(h),
        "covariance": args.covariance,
        "width": args.width,
        "difference": args.difference,
    })
    return 0


def cmd_eval(args):
    fit_dir = Path(args.fit_dir)
    theta = _read_json(fit_dir / "theta.json")
    support = _read_json(fit_dir / "support.json")["support"]
    log = _read_json(fit_dir / "fitlog.json")
    gt = truth_from_dict(_read_json(args.truth))
    Z = np.array(theta["Z"])
    if Z.shape[0] != gt.T:
        raise UsageError(f"fit has {Z.shape[0]} time steps, truth has {gt.T}")
    params = {**log["hyperparameters"], "beta": args.beta, "tol": args.tol}
    report = evaluate(support, Z, gt, beta=args.beta, tol=args.tol, params=params)
    out = Path(args.out) if args.out else fit_dir / "metrics.json"
    _write_json(out, report.to_dict())
    return 0


def _train_set(dirs):
    train = []
    for d in dirs:
        d = Path(d)
        train.append((read_series(d / "series.csv"),
                      truth_from_dict(_read_json(d / "truth.json"))))
    return train


def cmd_grid(args):
    l1s, l2s = _floats(args.lambda1_grid), _floats(args.lambda2_grid)
    if not l1s or not l2s:
        raise UsageError("empty lambda grid")
    grid = [(a, b) for a in l1s for b in l2s]
    train = _train_set(args.train_dir)
    h = _hyper(args, 0.0, 0.0)
    table = score_grid(train, grid, h, jobs=args.jobs)
    try:
        best, optima = select_pair(table, grid)
    except SearchError as err:
        logger.error("%s", err)
        return 3
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "grid.json", {
        "method": h.method,
        "grid": [list(g) for g in grid],
        "series": [str(d) for d in args.train_dir],
        "scores": [[None if np.isnan(v) else float(v) for v in row] for row in table],
        "per_series_optima": [list(o) for o in optima],
        "selected": list(best),
    })
    return 0


def cmd_scan(args):
    S = _covariance(args)
    l2s = _floats(args.lambda2_list)
    if not l2s:
        raise UsageError("empty --lambda2-list")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scan.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda1", "lambda2", "iterations", "converged", "n_rows", "K_hat",
                    "mean_edges"])
        for l2 in l2s:
            r = fit(S, _hyper(args, lambda2=l2))
            est = extract_changepoints(r.Z)
            d = changepoint_density(est)
            mean_edges = float(d[d > 0].mean()) if est.K_hat else 0.0
            w.writerow([args.lambda1, l2, r.iterations, int(r.converged),
                        len(r.changepoint_rows), est.K_hat, repr(mean_edges)])
    return 0


def _bench_one(job):
    P, T, rep, M, seed, h = job
    ts, _ = make_scenario(P, T, M, [T // 2], seed + rep)
    S = empirical_covariance(ts)
    start = time.perf_counter()
    r = fit(S, h)
    wall = time.perf_counter() - start
    return [P, T, rep, repr(wall), r.iterations, extract_changepoints(r.Z).K_hat]


def cmd_bench(args):
    ps, tsz = _ints(args.p_list), _ints(args.t_list)
    if not ps or not tsz or args.repeats < 1:
        raise UsageError("need non-empty --p-list, --t-list and --repeats >= 1")
    h = _hyper(args)
    jobs = [(P, T, rep, args.m if args.m is not None else P, args.seed, h)
            for P in ps for T in tsz for rep in range(args.repeats)]
    n = resolve_jobs(args.jobs)
    if n == 1:
        rows = [_bench_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_bench_one, jobs))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["P", "T", "repeat", "wall_seconds", "iterations", "K_hat"])
        w.writerows(rows)
    return 0


def _add_solver_flags(p, penalties=True):
    p.add_argument("--method", default="GFGL", type=str.upper, choices=("GFGL", "IFGL"))
    if penalties:
        p.add_argument("--lambda1", type=float, required=True)
        p.add_argument("--lambda2", type=float, required=True)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--smooth-adjust", type=float, default=1.0,
                   help="multiplier on lambda2/gamma in the constraint step")
    p.add_argument("--no-smooth-diagonal", action="store_true",
                   help="leave the diagonal out of the smoothing penalty")


def _add_input_flags(p):
    p.add_argument("--input", required=True, help="series.csv")
    p.add_argument("--difference", action="store_true",
                   help="fit the first differences (innovations) of the series")
    p.add_argument("--covariance", default="dirac", choices=("dirac", "boxcar", "gaussian"))
    p.add_argument("--width", type=float, default=None, help="kernel width")


def build_parser():
    parser = argparse.ArgumentParser(prog="gfgl", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a piecewise-stationary GGM series")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--m", type=int, required=True, help="edges per segment")
    p.add_argument("--changepoints", default="", help="comma list of first rows of new segments")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate a precision sequence")
    _add_input_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score a fit against ground truth")
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--out", default=None, help="defaults to FIT_DIR/metrics.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="select lambdas by F1 over training scenarios")
    p.add_argument("--train-dir", nargs="+", required=True)
    p.add_argument("--lambda1-grid", required=True)
    p.add_argument("--lambda2-grid", required=True)
    _add_solver_flags(p, penalties=False)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("scan", help="fit over a range of smoothing weights")
    _add_input_flags(p)
    _add_solver_flags(p, penalties=False)
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2-list", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scan, lambda2=0.0)

    p = sub.add_parser("bench", help="time fits on simulated data")
    p.add_argument("--p-list", required=True)
    p.add_argument("--t-list", required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--m", type=int, default=None, help="edges per segment (default P)")
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    # LinAlgError subclasses ValueError, so numerical failures are caught first
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as err:
        print(f"gfgl {args.command}: numerical failure: {err}", file=sys.stderr)
        return 3
    except (UsageError, ValueError) as err:
        print(f"gfgl {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
