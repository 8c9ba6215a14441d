"""Feature-based target sample selection.

Unlabeled samples are scored by how close they are to the labeled target
classes and how far they are from the non-target samples queried so far::

    s = Nom(min_t MD2(z, C_t)) - Nom(min_w MD2(z, C_w))

where ``MD2`` is the squared Mahalanobis form, ``C_t`` are per-class clusters
of labeled target samples, ``C_w`` are k-means clusters of queried non-target
samples and ``Nom`` is min-max normalization over the current unlabeled set.
The smallest scores form the candidate set.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels

REG_LAMBDA = 1e-3
REG_EPS = 1e-9


@dataclass(frozen=True)
class ClusterModel:
    mean: np.ndarray
    covariance: np.ndarray
    inv_covariance: np.ndarray
    count: int

    @property
    def dim(self):
        return self.mean.shape[0]

    def regularized_covariance(self):
        return regularize(self.covariance)


def regularize(cov):
    d = cov.shape[0]
    shift = REG_LAMBDA * (np.trace(cov) / d + REG_EPS)
    return cov + shift * np.eye(d)


def fit_cluster(features):
    """Mean, sample covariance and regularized inverse of a group of points.

    The inverse is taken of ``cov + lambda * (trace(cov)/d + eps) * I`` so that
    classes with fewer points than dimensions still give a usable metric.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-d array (or all vectors must share a dimension)")
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit a cluster to zero points")
    mean = X.mean(axis=0)
    if n >= 2:
        diff = X - mean
        cov = diff.T @ diff / (n - 1)
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.zeros((d, d))
    reg = regularize(cov)
    # SPD after regularization, so a Cholesky-based inverse is stable
    L = np.linalg.cholesky(reg)
    Linv = np.linalg.solve(L, np.eye(d))
    inv = Linv.T @ Linv
    inv = 0.5 * (inv + inv.T)
    return ClusterModel(mean, cov, inv, n)


def _check_dim(Z, clusters):
    for c in clusters:
        if c.dim != Z.shape[1]:
            raise ValueError(f"dimension mismatch: points have {Z.shape[1]}, cluster has {c.dim}")


def mahalanobis_sq(z, cluster):
    """Squared Mahalanobis form (z - mu)^T P (z - mu) with the regularized inverse P."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = np.atleast_2d(z)
    _check_dim(Z, [cluster])
    vals, _ = _kernels.min_mahalanobis(Z, cluster.mean[None, :], cluster.inv_covariance[None])
    return float(vals[0]) if single else vals


def min_distance(Z, clusters):
    """Raw minimum squared Mahalanobis distance of each row over ``clusters``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    _check_dim(Z, clusters)
    means = np.stack([c.mean for c in clusters])
    invs = np.stack([c.inv_covariance for c in clusters])
    vals, _ = _kernels.min_mahalanobis(Z, means, invs)
    return vals


def target_score(Z, target_clusters):
    """Raw (un-normalized) target distance for each row of ``Z``."""
    if not target_clusters:
        raise ValueError("no target clusters: the caller must take the cold-start path")
    return min_distance(Z, target_clusters)


def nontarget_score(Z, nontarget_clusters):
    """Raw non-target distance; all zeros when nothing non-target was queried yet.

    Each cluster uses its own covariance. The printed formula carries the
    target-class inverse here, but the text defines mu_w and Sigma_w, so the
    non-target cluster's own Sigma_w is used.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if not nontarget_clusters:
        return np.zeros(Z.shape[0])
    return min_distance(Z, nontarget_clusters)


def normalize(raw):
    """Min-max scale to [0, 1]; a constant input maps to all zeros."""
    x = np.asarray(raw, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot normalize an empty score vector")
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros_like(x)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


# -- k-means ---------------------------------------------------------------------


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignment: np.ndarray  # row index into the clustered features -> centroid
    inertia: float
    iterations: int

    def groups(self):
        return [np.flatnonzero(self.assignment == k) for k in range(len(self.centroids))]


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        j = int(rng.choice(n, p=d2 / total))
        centers.append(X[j])
        d2 = np.minimum(d2, ((X - X[j]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(X, centroids, tol, max_iter):
    k = centroids.shape[0]
    it = 0
    while True:
        labels, d2 = _kernels.nearest_centroid(X, centroids)
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if it >= max_iter:
            break
        it += 1
        new = np.zeros_like(centroids)
        np.add.at(new, labels, X)
        nz = counts > 0
        new[nz] /= counts[nz, None]
        if len(empty):
            # reseed empties at the points worst served by their centroid
            far = np.lexsort((np.arange(len(d2)), -d2))
            for slot, j in zip(empty, far):
                new[slot] = X[j]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol and not len(empty):
            labels, d2 = _kernels.nearest_centroid(X, centroids)
            counts = np.bincount(labels, minlength=k)
            empty = np.flatnonzero(counts == 0)
            if not len(empty):
                break
    if len(empty):
        keep = counts > 0
        centroids = centroids[keep]
        labels, d2 = _kernels.nearest_centroid(X, centroids)
    return centroids, labels, float(d2.sum()), it


def kmeans(features, W, seed, n_init=1, tol=1e-6, max_iter=100):
    """k-means++ seeded Lloyd clustering into min(W, #distinct points) groups.

    With ``n_init > 1`` the best of several seeded restarts (lowest inertia,
    first one on ties) is returned.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("kmeans needs a non-empty 2-d feature array")
    if W < 1:
        raise ValueError("W must be >= 1")
    k = min(int(W), len(np.unique(X, axis=0)))
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        init = _kmeans_pp(X, k, rng)
        centroids, labels, inertia, it = _lloyd(X, init, tol, max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(centroids, labels, inertia, it)
    return best


def nontarget_clusters(features, W, seed):
    """Cluster models for the queried non-target samples (possibly none)."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] == 0:
        return []
    km = kmeans(X, W, seed)
    return [fit_cluster(X[g]) for g in km.groups() if len(g)]


def target_clusters(features, fine_labels):
    """One cluster per fine class present, in class order."""
    fine_labels = np.asarray(fine_labels)
    return [fit_cluster(features[fine_labels == t]) for t in np.unique(fine_labels)]


# -- scoring and selection -------------------------------------------------------


@dataclass(frozen=True)
class ScoreTable:
    ids: np.ndarray
    s_t: np.ndarray
    s_w: np.ndarray

    @property
    def s(self):
        return self.s_t - self.s_w

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("id,s_t,s_w,s\n")
            for i, a, b, c in zip(self.ids, self.s_t, self.s_w, self.s):
                fh.write(f"{int(i)},{float(a)!r},{float(b)!r},{float(c)!r}\n")


def score_table(ids, Z, t_clusters, w_clusters, use_target=True, use_nontarget=True):
    n = len(ids)
    if n == 0:
        raise ValueError("no unlabeled samples to score")
    s_t = normalize(target_score(Z, t_clusters)) if use_target else np.zeros(n)
    s_w = normalize(nontarget_score(Z, w_clusters)) if use_nontarget else np.zeros(n)
    return ScoreTable(np.asarray(ids), s_t, s_w)


def rank_smallest(ids, scores, k):
    """The ``k`` ids with smallest score, ties to the lower id."""
    order = np.lexsort((ids, scores))
    return np.asarray(ids)[order[: min(k, len(ids))]]


def ftss_select(pool, candidate_size, t_clusters, w_clusters, use_target=True, use_nontarget=True):
    """Candidate ids (ordered by ascending score) plus the full score table."""
    if candidate_size < 1:
        raise ValueError("candidate_size must be >= 1")
    U = pool.unlabeled()
    if len(U) == 0:
        raise ValueError("pool has no unlabeled samples")
    table = score_table(
        pool.ids[U], pool.features[U], t_clusters, w_clusters, use_target, use_nontarget
    )
    return rank_smallest(table.ids, table.s, candidate_size), table
