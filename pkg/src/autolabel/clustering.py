"""Agglomerative clustering of compact sequences and distance-measure selection
by the modified Hubert statistic."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .concurrency import pmap
from .errors import ConfigurationError, ContractError, NumericError, ShapeError

CHEBYSHEV = "chebyshev"
MANHATTAN = "manhattan"
MAHALANOBIS = "mahalanobis"
# order doubles as the tie-break when Hubert scores are equal
MEASURES = (CHEBYSHEV, MANHATTAN, MAHALANOBIS)
LINKAGES = ("single", "complete", "average")
RIDGE = 1e-6


@dataclass(frozen=True)
class DistanceMeasure:
    tag: str
    inv_cov: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.tag not in MEASURES:
            raise ValueError(f"unknown distance measure {self.tag!r}")
        if self.tag == MAHALANOBIS:
            if self.inv_cov is None:
                raise ContractError("Mahalanobis measure needs an inverse covariance matrix")
            M = np.array(self.inv_cov, dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ShapeError(f"inverse covariance must be square, got {M.shape}")
            M = 0.5 * (M + M.T)
            try:
                chol = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise NumericError("inverse covariance is not positive definite") from None
            M.setflags(write=False)
            object.__setattr__(self, "inv_cov", M)
            object.__setattr__(self, "_chol", chol)

    @classmethod
    def chebyshev(cls):
        return cls(CHEBYSHEV)

    @classmethod
    def manhattan(cls):
        return cls(MANHATTAN)

    @classmethod
    def mahalanobis(cls, inv_cov):
        return cls(MAHALANOBIS, inv_cov)

    @classmethod
    def fit_mahalanobis(cls, X, ridge=RIDGE):
        """Covariance of the rows of ``X`` with ridge ``ridge * trace / p`` on the diagonal."""
        X = np.asarray(X, dtype=float)
        p = X.shape[1]
        cov = np.cov(X, rowvar=False).reshape(p, p) if len(X) > 1 else np.zeros((p, p))
        lam = ridge * np.trace(cov) / p
        if not lam > 0:
            # degenerate data: fall back to an identity metric
            return cls(MAHALANOBIS, np.eye(p))
        cov = cov + lam * np.eye(p)
        return cls(MAHALANOBIS, np.linalg.inv(cov))

    def transform(self, X):
        """Map rows so Mahalanobis distance becomes Euclidean distance."""
        return np.asarray(X, dtype=float) @ self._chol

    def pairwise(self, A, B=None):
        A = np.asarray(A, dtype=float)
        B = A if B is None else np.asarray(B, dtype=float)
        if A.shape[1] != B.shape[1]:
            raise ShapeError(f"vector lengths differ: {A.shape[1]} vs {B.shape[1]}")
        if self.tag == MAHALANOBIS:
            if self.inv_cov.shape[0] != A.shape[1]:
                raise ShapeError(f"inverse covariance is {self.inv_cov.shape}, vectors have length {A.shape[1]}")
            A, B = self.transform(A), self.transform(B)
        out = np.empty((len(A), len(B)))
        for s in range(0, len(A), 256):
            diff = np.abs(A[s:s + 256, None, :] - B[None, :, :])
            if self.tag == CHEBYSHEV:
                out[s:s + 256] = diff.max(axis=2)
            elif self.tag == MANHATTAN:
                out[s:s + 256] = diff.sum(axis=2)
            else:
                out[s:s + 256] = np.sqrt((diff * diff).sum(axis=2))
        return out


def distance(measure, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"cannot compare vectors of shapes {a.shape} and {b.shape}")
    return float(measure.pairwise(a[None], b[None])[0, 0])


@dataclass(frozen=True)
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    measure: DistanceMeasure
    k: int
    hubert: Optional[float] = None
    linkage: str = "average"
    merges: tuple = ()
    scores: dict = field(default_factory=dict)

    def members(self, j):
        return np.flatnonzero(self.assignments == j)


def centroids_of(X, assignments, k):
    X = np.asarray(X, dtype=float)
    return np.stack([X[assignments == j].mean(axis=0) for j in range(k)])


def _merge_rows(D, i, j, ni, nj, linkage):
    if linkage == "single":
        return np.minimum(D[i], D[j])
    if linkage == "complete":
        return np.maximum(D[i], D[j])
    return (ni * D[i] + nj * D[j]) / (ni + nj)


def hierarchical_cluster(X, k, measure, linkage="average"):
    """Agglomerative clustering cut at ``k`` clusters.

    Ties between equally close pairs merge the lexicographically smallest
    (min index, max index) pair first; a merged cluster is indexed by its
    smallest member. Clusters are numbered in order of their smallest member.
    """
    X = np.asarray(getattr(X, "embeddings", X), dtype=float)
    n = len(X)
    if linkage not in LINKAGES:
        raise ConfigurationError(f"unknown linkage {linkage!r}; expected one of {LINKAGES}")
    if k < 1 or k > n:
        raise ConfigurationError(f"cannot form {k} clusters from {n} instances")
    D = measure.pairwise(X)
    np.fill_diagonal(D, np.inf)
    sizes = np.ones(n, dtype=int)
    node_id = np.arange(n)
    owner = np.arange(n)
    merges = []
    for step in range(n - k):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        height = float(D[i, j])
        new = _merge_rows(D, i, j, sizes[i], sizes[j], linkage)
        D[i, :] = new
        D[:, i] = new
        D[i, i] = np.inf
        D[j, :] = np.inf
        D[:, j] = np.inf
        a, b = sorted((int(node_id[i]), int(node_id[j])))
        merges.append((step, a, b, height))
        sizes[i] += sizes[j]
        sizes[j] = 0
        node_id[i] = n + step
        owner[owner == j] = i
    roots = np.unique(owner)
    assignments = np.searchsorted(roots, owner)
    return ClusteringResult(
        assignments=assignments,
        centroids=centroids_of(X, assignments, k),
        measure=measure,
        k=k,
        linkage=linkage,
        merges=tuple(merges),
    )


def _mahalanobis_extended(A, B, inv_cov):
    """Pairwise Mahalanobis distances accumulated in extended precision.

    With a ridge-regularised covariance of rank-deficient data the quadratic
    form is ill-conditioned (condition ~1e6), so float64 loses ~10 digits.
    """
    A = np.asarray(A, dtype=np.longdouble)
    B = np.asarray(B, dtype=np.longdouble)
    M = np.asarray(inv_cov, dtype=np.longdouble)
    out = np.empty((len(A), len(B)), dtype=np.longdouble)
    for i, a in enumerate(A):
        D = a - B
        out[i] = np.sqrt(np.maximum(np.sum((D @ M) * D, axis=1), 0))
    return out


def modified_hubert(X, result, inv_cov=None):
    """Mean over unordered pairs of d(x_i, x_j) * d(c(i), c(j)), both Mahalanobis.

    The Mahalanobis metric is estimated from ``X`` unless ``inv_cov`` is given.
    """
    X = np.asarray(getattr(X, "embeddings", X), dtype=float)
    n = len(X)
    if n < 2:
        raise ContractError("the Hubert statistic needs at least 2 instances")
    a = np.asarray(result.assignments)
    if a.shape != (n,):
        raise ContractError(f"{a.shape[0]} assignments for {n} instances")
    metric = (DistanceMeasure.fit_mahalanobis(X) if inv_cov is None
              else DistanceMeasure.mahalanobis(inv_cov))
    dx = _mahalanobis_extended(X, X, metric.inv_cov)
    dc = _mahalanobis_extended(result.centroids, result.centroids, metric.inv_cov)[a[:, None], a[None, :]]
    iu = np.triu_indices(n, 1)
    return float(np.longdouble(2) / (n * (n - 1)) * np.sum(dx[iu] * dc[iu]))


def select_measure(scores):
    """Measure with the highest score; ties resolved in ``MEASURES`` order."""
    best = None
    for tag in MEASURES:
        if tag in scores and (best is None or scores[tag] > scores[best]):
            best = tag
    return best


def best_clustering(X, k, linkage="average", ridge=RIDGE):
    """Cluster under each measure and keep the clustering with the highest Hubert score."""
    X = np.asarray(getattr(X, "embeddings", X), dtype=float)
    if k < 2:
        raise ConfigurationError(f"need at least 2 clusters, got {k}")
    maha = DistanceMeasure.fit_mahalanobis(X, ridge)
    measures = {CHEBYSHEV: DistanceMeasure.chebyshev(),
                MANHATTAN: DistanceMeasure.manhattan(),
                MAHALANOBIS: maha}

    def run(tag):
        res = hierarchical_cluster(X, k, measures[tag], linkage)
        return replace(res, hubert=modified_hubert(X, res, maha.inv_cov))

    results = dict(zip(MEASURES, pmap(run, MEASURES)))
    scores = {tag: r.hubert for tag, r in results.items()}
    return replace(results[select_measure(scores)], scores=scores)


def dendrogram_json(result):
    return json.dumps([[s, a, b, round(h, 12)] for s, a, b, h in result.merges])
