"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The numba path is used when numba imports cleanly; setting the environment
variable ``SOELKIT_NO_NUMBA=1`` before import forces the numpy fallback.
Both paths compute the same quantities (floating-point summation order may
differ). ``ACTIVE_BACKEND`` reports which one is bound.

Run ``python benchmarks/bench_kernels.py`` to compare the two backends.
"""

from __future__ import annotations

import os

import numpy as np

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


# ---------------------------------------------------------------------------
# numpy implementations (always available; ground truth for tests)
# ---------------------------------------------------------------------------

def sq_dists_to_point_numpy(points: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each row of `points` to `point`."""
    diff = points - point[None, :]
    return np.einsum("ij,ij->i", diff, diff)


def pairwise_sq_dists_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between all rows of `a` and rows of `b`."""
    aa = np.einsum("ij,ij->i", a, a)[:, None]
    bb = np.einsum("ij,ij->i", b, b)[None, :]
    d = aa + bb - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def gaussian_kde_eval_numpy(support: np.ndarray, bandwidth: float, x: np.ndarray) -> np.ndarray:
    """Gaussian KDE density at points `x` given `support` samples."""
    z = (x[:, None] - support[None, :]) / bandwidth
    k = np.exp(-0.5 * z * z).sum(axis=1)
    return k / (support.size * bandwidth * _SQRT_2PI)


def maxmin_sq_dist_numpy(outer: np.ndarray, inner: np.ndarray) -> float:
    """max over rows of `outer` of the min squared distance to rows of `inner`."""
    d = pairwise_sq_dists_numpy(outer, inner)
    return float(d.min(axis=1).max())


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _no_numba_env() -> bool:
    return os.environ.get("SOELKIT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


HAS_NUMBA = False
if not _no_numba_env():
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False

if HAS_NUMBA:

    @njit(cache=True)
    def sq_dists_to_point_numba(points, point):
        n, d = points.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                t = points[i, j] - point[j]
                acc += t * t
            out[i] = acc
        return out

    @njit(cache=True)
    def pairwise_sq_dists_numba(a, b):
        n, d = a.shape
        m = b.shape[0]
        out = np.empty((n, m))
        for i in range(n):
            for k in range(m):
                acc = 0.0
                for j in range(d):
                    t = a[i, j] - b[k, j]
                    acc += t * t
                out[i, k] = acc
        return out

    @njit(cache=True)
    def gaussian_kde_eval_numba(support, bandwidth, x):
        m = support.size
        k = x.size
        out = np.empty(k)
        norm = m * bandwidth * _SQRT_2PI
        for i in range(k):
            acc = 0.0
            for j in range(m):
                z = (x[i] - support[j]) / bandwidth
                acc += np.exp(-0.5 * z * z)
            out[i] = acc / norm
        return out

    @njit(cache=True)
    def maxmin_sq_dist_numba(outer, inner):
        n, d = outer.shape
        m = inner.shape[0]
        worst = 0.0
        for i in range(n):
            best = np.inf
            for k in range(m):
                acc = 0.0
                for j in range(d):
                    t = outer[i, j] - inner[k, j]
                    acc += t * t
                if acc < best:
                    best = acc
            if best > worst:
                worst = best
        return worst

    sq_dists_to_point = sq_dists_to_point_numba
    pairwise_sq_dists = pairwise_sq_dists_numba
    gaussian_kde_eval = gaussian_kde_eval_numba
    maxmin_sq_dist = maxmin_sq_dist_numba
    ACTIVE_BACKEND = "numba"
else:
    sq_dists_to_point = sq_dists_to_point_numpy
    pairwise_sq_dists = pairwise_sq_dists_numpy
    gaussian_kde_eval = gaussian_kde_eval_numpy
    maxmin_sq_dist = maxmin_sq_dist_numpy
    ACTIVE_BACKEND = "numpy"


def warm_up() -> None:
    """Trigger JIT compilation on tiny inputs so later calls are not skewed."""
    pts = np.zeros((2, 2))
    sq_dists_to_point(pts, np.zeros(2))
    pairwise_sq_dists(pts, pts)
    gaussian_kde_eval(np.array([0.0, 1.0]), 1.0, np.array([0.5]))
    maxmin_sq_dist(pts, pts)
