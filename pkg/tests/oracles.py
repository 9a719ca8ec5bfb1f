"""Brute-force reference implementations shared by the module and acceptance tests.

They deliberately avoid the package's own helpers (except plain data types).
"""
import math

import numpy as np

from autolabel.clustering import CHEBYSHEV, MANHATTAN
from autolabel.dataset import EXPERT, RepresentativeSet, TimeSeriesDataset


def brute_hubert(X, assignments, centroids, inv):
    """Plain double loop over ordered pairs i != j, averaged over unordered pairs.

    Accumulates in long double: with a near-singular covariance the quadratic
    form is too ill-conditioned for a float64 oracle to be trusted at 1e-12.
    """
    LD = np.longdouble
    n = len(X)
    M = np.asarray(inv, dtype=LD)

    def dml(a, b):
        d = np.asarray(a, dtype=LD) - np.asarray(b, dtype=LD)
        return np.sqrt(d @ M @ d)

    total = LD(0)
    for i in range(n):
        for j in range(n):
            if i != j:
                total += dml(X[i], X[j]) * dml(centroids[assignments[i]], centroids[assignments[j]])
    return float(total / (n * (n - 1)))


def oracle_cca(clustered, assignments, centroids, measure, rep_emb, rep_labels, n_out):
    """Straight-line cluster-class association: dist, nearest cluster, mode, fallback."""
    k, m = len(centroids), len(rep_emb)

    def d(a, b):
        diff = [a[q] - b[q] for q in range(len(a))]
        if measure.tag == CHEBYSHEV:
            return max(abs(v) for v in diff)
        if measure.tag == MANHATTAN:
            return sum(abs(v) for v in diff)
        M = measure.inv_cov
        return math.sqrt(sum(diff[r] * M[r][s] * diff[s] for r in range(len(a)) for s in range(len(a))))

    dist = [[d(centroids[j], rep_emb[i]) for i in range(m)] for j in range(k)]
    rep_clus = []
    for i in range(m):
        best = 0
        for j in range(1, k):
            if dist[j][i] < dist[best][i]:
                best = j
        rep_clus.append(best)
    cls = []
    for j in range(k):
        ys = [int(rep_labels[i]) for i in range(m) if rep_clus[i] == j]
        if ys:
            counts = {}
            for y in ys:
                counts[y] = counts.get(y, 0) + 1
            top = max(counts.values())
            cls.append(min(y for y, c in counts.items() if c == top))
        else:
            nearest = min(range(m), key=lambda i: (dist[j][i], i))
            cls.append(int(rep_labels[nearest]))
    return [cls[assignments[i]] for i in range(n_out)]


def random_instance(seed, length=8):
    g = np.random.default_rng(seed)
    k = int(g.integers(2, 5))
    n_u = int(g.integers(10, 31))
    per = [int(g.integers(1, 4)) for _ in range(k)]
    centres = g.normal(0, 2, size=k)
    series = lambda c: (np.sin(np.linspace(0, 3, length) * (c + 1)) + centres[c] + g.normal(0, 0.4, length))[:, None]
    X_u = TimeSeriesDataset(tuple(series(int(c)) for c in g.integers(0, k, n_u)))
    labels = np.concatenate([np.full(p, c) for c, p in enumerate(per)])
    reps = RepresentativeSet(tuple(series(int(c)) for c in labels), labels,
                             tuple(EXPERT for _ in labels), np.arange(len(labels)), k)
    return X_u, reps, k
