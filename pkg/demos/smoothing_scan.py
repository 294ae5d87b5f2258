"""How the smoothing weight controls the number of detected changepoints.

Fits one series with two true changepoints over a decreasing ladder of
``lambda2`` values and prints the changepoint rows each fit finds. Large
weights find nothing, moderate ones land near the truth, small ones add
spurious rows. ``gfgl scan`` writes the same sweep to ``scan.csv``.

Run with ``python3 demos/smoothing_scan.py``.
"""
from gfgl import Hyperparameters, empirical_covariance, fit, make_scenario

ts, truth = make_scenario(8, 60, 8, [20, 40], seed=5)
S = empirical_covariance(ts)
print(f"true changepoints: {list(truth.changepoints)}")

for lam2 in (20, 14, 12, 10, 8, 6):
    result = fit(S, Hyperparameters(lambda1=0.2, lambda2=lam2))
    print(f"lambda2={lam2:>3}: rows {result.changepoint_rows}")
