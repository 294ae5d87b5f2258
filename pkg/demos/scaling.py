"""Wall time of a GFGL fit as the series grows.

Each ADMM iteration costs one eigendecomposition per time step plus the
group-fused proximal step, so at a fixed penalty the run time should grow
roughly linearly in ``T``. ``gfgl bench`` records the same numbers in
``bench.csv``.

Run with ``python3 demos/scaling.py``.
"""
import time

import numpy as np

from gfgl import Hyperparameters, empirical_covariance, fit, make_scenario

h = Hyperparameters(lambda1=0.2, lambda2=10.0)
fit(empirical_covariance(make_scenario(10, 20, 10, [10], seed=0)[0]), h)  # compile kernels

for T in (25, 50, 100, 200):
    times, iters = [], []
    for rep in range(3):
        S = empirical_covariance(make_scenario(10, T, 10, [T // 2], seed=rep)[0])
        start = time.perf_counter()
        result = fit(S, h)
        times.append(time.perf_counter() - start)
        iters.append(result.iterations)
    print(f"T={T:>3}: median {np.median(times):6.2f}s, iterations {iters}")
