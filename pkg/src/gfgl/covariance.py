"""Per-time empirical covariance estimates."""
import numpy as np

from .core import TimeSeries

KERNELS = ("boxcar", "gaussian")


def _as_series(ts):
    return ts if isinstance(ts, TimeSeries) else TimeSeries(ts)


def dirac_covariance(ts):
    """Single-observation estimate ``S_t = y_t y_t^T / 2``.

    The factor of one half follows the usual convention for the
    piecewise-constant model; it only rescales the effective penalties.
    """
    y = _as_series(ts).data
    return 0.5 * np.einsum("ti,tj->tij", y, y)


def kernel_weights(T, kernel, width):
    """``(T, T)`` weights ``w[t, s] = K(|s - t| / width)``."""
    if width <= 0:
        raise ValueError("kernel width must be positive")
    t = np.arange(T)
    u = np.abs(t[:, None] - t[None, :]) / width
    if kernel == "boxcar":
        return (u <= 1.0).astype(float)
    if kernel == "gaussian":
        return np.exp(-0.5 * u ** 2)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def kernel_covariance(ts, kernel="gaussian", width=1.0):
    """Kernel-weighted local covariance ``sum_s w_s y_s y_s^T / sum_s w_s``."""
    y = _as_series(ts).data
    w = kernel_weights(y.shape[0], kernel, width)
    total = w.sum(axis=1)
    if np.any(total <= 0):
        raise ValueError("degenerate kernel: all weights are zero for some time step")
    outer = np.einsum("si,sj->sij", y, y)
    S = np.einsum("ts,sij->tij", w, outer) / total[:, None, None]
    return 0.5 * (S + np.swapaxes(S, 1, 2))


def difference_series(ts):
    """First differences ``y_t - y_{t-1}`` (innovations of a random walk)."""
    y = _as_series(ts).data
    if y.shape[0] < 3:
        raise ValueError("differencing needs at least 3 time steps")
    return TimeSeries(np.diff(y, axis=0))


def empirical_covariance(ts, estimator="dirac", width=None):
    """Dispatch on estimator name: ``dirac``, ``boxcar`` or ``gaussian``."""
    if estimator == "dirac":
        return dirac_covariance(ts)
    if width is None:
        raise ValueError(f"{estimator} covariance needs a kernel width")
    return kernel_covariance(ts, estimator, width)
