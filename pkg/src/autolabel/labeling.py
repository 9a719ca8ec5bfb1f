"""Cluster-class association, label discriminator and the self-correction loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aecs import encode
from .clustering import best_clustering
from .concurrency import pmap
from .errors import ConfigurationError, ContractError
from .seeding import stream_seed
from .vae import DEFAULT_EPOCHS as VAE_EPOCHS, DEFAULT_HIDDEN as VAE_HIDDEN, sample_vae, train_vae

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.05
DEFAULT_MAX_ITERATIONS = 10


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray
    iteration: int = 1

    def __post_init__(self):
        labels = np.array(self.labels, dtype=int)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)


@dataclass
class AssociationTrace:
    dist: np.ndarray
    rep_clus: np.ndarray
    class_of_cluster: np.ndarray
    y_ins: list
    fallback_clusters: list = field(default_factory=list)
    clustering: object = None


def mode(values, n_classes):
    """Most frequent value; ties go to the smallest class id."""
    return int(np.argmax(np.bincount(values, minlength=n_classes)))


def associate(clustering, rep_embeddings, rep_labels, n_classes):
    """Label every clustered row from the representatives nearest each centroid.

    A cluster that no representative is nearest to takes the class of the
    representative closest to its centroid.
    """
    rep_embeddings = np.asarray(getattr(rep_embeddings, "embeddings", rep_embeddings))
    rep_labels = np.asarray(rep_labels, dtype=int)
    if len(rep_embeddings) != len(rep_labels):
        raise ContractError("representative embeddings and labels differ in length")
    dist = clustering.measure.pairwise(clustering.centroids, rep_embeddings)
    rep_clus = np.argmin(dist, axis=0)
    class_of_cluster = np.empty(clustering.k, dtype=int)
    y_ins, fallback = [], []
    for j in range(clustering.k):
        ys = rep_labels[rep_clus == j]
        y_ins.append(ys)
        if len(ys):
            class_of_cluster[j] = mode(ys, n_classes)
        else:
            fallback.append(j)
            class_of_cluster[j] = rep_labels[int(np.argmin(dist[j]))]
    trace = AssociationTrace(dist, rep_clus, class_of_cluster, y_ins, fallback, clustering)
    return class_of_cluster[clustering.assignments], trace


def merged_embeddings(model, X_u, reps, merge=True):
    Z = encode(model, X_u).embeddings
    if merge:
        Z = np.vstack([Z, encode(model, reps.expert()).embeddings])
    return Z


def cluster_class_associate(X_u, reps, model, merge=True, linkage="average", clustering=None):
    """Noisy labels for ``X_u``.

    ``X_u`` is clustered together with the expert representatives (unless
    ``merge`` is False) into as many clusters as there are classes; synthetic
    representatives only take part in the centroid distance matrix.
    """
    k = reps.class_count
    rep_emb = encode(model, reps).embeddings
    if clustering is None:
        clustering = best_clustering(merged_embeddings(model, X_u, reps, merge), k, linkage)
    labels, trace = associate(clustering, rep_emb, reps.labels, k)
    return LabelVector(labels[: len(X_u)]), trace


def mismatch(current, previous):
    a = np.asarray(getattr(current, "labels", current))
    b = np.asarray(getattr(previous, "labels", previous))
    if a.shape != b.shape:
        raise ContractError(f"label vectors differ in length: {len(a)} vs {len(b)}")
    return float(np.count_nonzero(a != b)) / len(a)


def label_discriminator(current, previous, tau=DEFAULT_TAU):
    """0 once labels changed by at most ``tau`` since the previous iteration, else 1."""
    if previous is None:
        return 1
    return 0 if mismatch(current, previous) <= tau + 1e-12 else 1


def split_count(total, k):
    """``total`` spread over ``k`` classes as evenly as possible, extras to low ids."""
    base, extra = divmod(total, k)
    return [base + (1 if c < extra else 0) for c in range(k)]


@dataclass
class IterationRecord:
    iteration: int
    pool_size: int
    mismatch: float
    reward: int
    hubert: float
    measure: str
    labels: Optional[LabelVector] = field(default=None, repr=False)
    pool: object = field(default=None, repr=False)

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "pool_size": self.pool_size,
            "mismatch": round(self.mismatch, 6),
            "reward": self.reward,
            "hubert": None if self.hubert is None else round(self.hubert, 6),
            "measure": self.measure,
        }


def self_correct(X_u, reps, model, tau=DEFAULT_TAU, max_iterations=DEFAULT_MAX_ITERATIONS,
                 seed=0, vae_epochs=VAE_EPOCHS, vae_hidden=VAE_HIDDEN, merge=True,
                 linkage="average", clustering=None):
    """Iterate association while growing the representative pool with VAE samples.

    Iteration 1 uses the expert representatives only. Every later iteration adds
    another ``m`` synthetic series (``m`` = number of experts), so the pool holds
    ``i * m`` series at iteration ``i``. Stops when the discriminator reports
    saturation or after ``max_iterations``.
    """
    if max_iterations < 1:
        raise ConfigurationError("max_iterations must be >= 1")
    if not 0 <= tau < 1:
        raise ConfigurationError(f"tau must lie in [0, 1), got {tau}")
    k = reps.class_count
    pool = reps.expert()
    m = pool.m
    if clustering is None:
        clustering = best_clustering(merged_embeddings(model, X_u, pool, merge), k, linkage)
    pool_emb = encode(model, pool).embeddings
    vaes = None
    previous = None
    history = []
    for it in range(1, max_iterations + 1):
        if it > 1:
            if vaes is None:
                vaes = pmap(
                    lambda c: train_vae(pool, c, seed=stream_seed(seed, "vae"),
                                        epochs=vae_epochs, hidden=vae_hidden),
                    range(k),
                )
            it_seed = stream_seed(seed, f"self_correct.{it}")
            new_series, new_labels = [], []
            for c, count in enumerate(split_count(m, k)):
                if count:
                    s = sample_vae(vaes[c], count, it_seed)
                    new_series += s.series
                    new_labels.append(s.labels)
            new_labels = np.concatenate(new_labels)
            pool = pool.extend(new_series, new_labels)
            pool_emb = np.vstack([pool_emb, encode(model, new_series).embeddings])
        labels, _ = associate(clustering, pool_emb, pool.labels, k)
        current = LabelVector(labels[: len(X_u)], it)
        mm = 1.0 if previous is None else mismatch(current, previous)
        reward = label_discriminator(current, previous, tau)
        history.append(IterationRecord(it, pool.m, mm, reward, clustering.hubert,
                                       clustering.measure.tag, current, pool))
        log.info("iteration %d: pool %d, mismatch %.4f, reward %d", it, pool.m, mm, reward)
        previous = current
        if reward == 0:
            break
    else:
        log.info("self-correction stopped at max_iterations=%d without saturating", max_iterations)
    return previous, history
