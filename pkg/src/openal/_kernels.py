"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time. Set ``OPENAL_NUMBA=0`` to force the
numpy implementations (numba is also skipped silently when it is not
importable). Both implementations are always importable by name so the
benchmark and the equivalence tests can compare them directly.

All kernels break ties by the lowest row index; callers keep rows sorted by
sample id so that this is the same as breaking ties by lowest id.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _numba_requested():
    flag = os.environ.get("OPENAL_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------


def min_mahalanobis_numpy(Z, means, invs):
    n = Z.shape[0]
    best = np.full(n, np.inf)
    arg = np.zeros(n, dtype=np.int64)
    for c in range(means.shape[0]):
        diff = Z - means[c]
        q = np.einsum("ij,jk,ik->i", diff, invs[c], diff)
        np.maximum(q, 0.0, out=q)
        better = q < best
        best[better] = q[better]
        arg[better] = c
    return best, arg


def nearest_centroid_numpy(X, centroids):
    # direct differences rather than the |x|^2 - 2xc + |c|^2 expansion, so
    # exact ties (duplicate points, symmetric layouts) stay exact
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def kcenter_greedy_numpy(X, min_d2, budget):
    min_d2 = min_d2.copy()
    picks = np.empty(budget, dtype=np.int64)
    for b in range(budget):
        j = int(np.argmax(min_d2))
        picks[b] = j
        d2 = ((X - X[j]) ** 2).sum(axis=1)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[j] = -1.0
    return picks


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def min_mahalanobis_numba(Z, means, invs):
        n, d = Z.shape
        C = means.shape[0]
        best = np.full(n, np.inf)
        arg = np.zeros(n, dtype=np.int64)
        diff = np.empty(d)
        for i in range(n):
            for c in range(C):
                for a in range(d):
                    diff[a] = Z[i, a] - means[c, a]
                q = 0.0
                for a in range(d):
                    row = 0.0
                    for b in range(d):
                        row += invs[c, a, b] * diff[b]
                    q += diff[a] * row
                if q < 0.0:
                    q = 0.0
                if q < best[i]:
                    best[i] = q
                    arg[i] = c
        return best, arg

    @numba.njit(cache=True)
    def nearest_centroid_numba(X, centroids):
        n, d = X.shape
        k = centroids.shape[0]
        labels = np.zeros(n, dtype=np.int64)
        dist = np.empty(n)
        for i in range(n):
            best = np.inf
            for c in range(k):
                s = 0.0
                for a in range(d):
                    t = X[i, a] - centroids[c, a]
                    s += t * t
                if s < best:
                    best = s
                    labels[i] = c
            dist[i] = best
        return labels, dist

    @numba.njit(cache=True)
    def kcenter_greedy_numba(X, min_d2, budget):
        n, d = X.shape
        md = min_d2.copy()
        picks = np.empty(budget, dtype=np.int64)
        for b in range(budget):
            j = 0
            for i in range(1, n):
                if md[i] > md[j]:
                    j = i
            picks[b] = j
            for i in range(n):
                s = 0.0
                for a in range(d):
                    t = X[i, a] - X[j, a]
                    s += t * t
                if s < md[i]:
                    md[i] = s
            md[j] = -1.0
        return picks

else:  # pragma: no cover
    min_mahalanobis_numba = min_mahalanobis_numpy
    nearest_centroid_numba = nearest_centroid_numpy
    kcenter_greedy_numba = kcenter_greedy_numpy


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def min_mahalanobis(Z, means, invs):
    """Per-row minimum of (z - mu_c)^T P_c (z - mu_c) over clusters c.

    Returns ``(values, argmin)``. ``means`` is (C, d), ``invs`` is (C, d, d).
    """
    Z, means, invs = _f64(Z), _f64(means), _f64(invs)
    if USE_NUMBA:
        return min_mahalanobis_numba(Z, means, invs)
    return min_mahalanobis_numpy(Z, means, invs)


def nearest_centroid(X, centroids):
    """Index of and squared distance to the nearest centroid for each row."""
    X, centroids = _f64(X), _f64(centroids)
    if USE_NUMBA:
        return nearest_centroid_numba(X, centroids)
    return nearest_centroid_numpy(X, centroids)


def kcenter_greedy(X, min_d2, budget):
    """Greedy k-center picks (row indices) given initial squared coverage distances.

    Rows already picked are marked with -1 so they are never picked twice.
    """
    X, min_d2 = _f64(X), _f64(min_d2)
    if USE_NUMBA:
        return kcenter_greedy_numba(X, min_d2, int(budget))
    return kcenter_greedy_numpy(X, min_d2, int(budget))
