"""Downstream validation: train simple classifiers on generated versus true
labels and score both on a held-out test set."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError

CLASSIFIERS = ("knn", "dt")


def _instances(data):
    return data.instances if hasattr(data, "instances") else tuple(data)


def feature_matrix(instances, length):
    """Flatten series to fixed-length rows, zero-padding or truncating in time."""
    d = instances[0].shape[1]
    out = np.zeros((len(instances), length, d))
    for i, x in enumerate(instances):
        t = min(len(x), length)
        out[i, :t] = x[:t]
    return out.reshape(len(instances), length * d)


def _majority(labels):
    return int(np.argmax(np.bincount(labels)))


def knn_classify(train, train_labels, test, k_neighbors=1):
    """Majority label of the ``k_neighbors`` Euclidean-nearest training series.

    Equal distances favour the lower training index; tied votes the smaller label.
    """
    tr, te = _instances(train), _instances(test)
    train_labels = np.asarray(train_labels, dtype=int)
    if not tr:
        raise ContractError("k-NN needs a non-empty training set")
    if len(train_labels) != len(tr):
        raise ContractError(f"{len(train_labels)} labels for {len(tr)} training series")
    if tr[0].shape[1] != te[0].shape[1]:
        raise ContractError("train and test channel counts differ")
    length = max(max(len(x) for x in tr), max(len(x) for x in te))
    A, B = feature_matrix(tr, length), feature_matrix(te, length)
    k = min(k_neighbors, len(tr))
    preds = np.empty(len(B), dtype=int)
    for s in range(0, len(B), 128):
        diff = B[s:s + 128, None, :] - A[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for r, idx in enumerate(nearest):
            preds[s + r] = _majority(train_labels[idx])
    return preds


@dataclass
class _Node:
    prediction: int
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None


class DecisionTree:
    """CART classifier with Gini impurity.

    Candidate thresholds are midpoints between consecutive distinct values.
    The lowest weighted impurity wins; ties go to the lowest feature index and
    then the lowest threshold. Impure nodes are split even when the split does
    not reduce impurity (XOR-like data needs this).
    """

    def __init__(self, max_depth=None):
        self.max_depth = max_depth
        self.root = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_classes = int(y.max()) + 1
        self.root = self._grow(X, y, 0)
        return self

    def _grow(self, X, y, depth):
        counts = np.bincount(y, minlength=self.n_classes)
        node = _Node(int(np.argmax(counts)))
        if np.count_nonzero(counts) <= 1:
            return node
        if self.max_depth is not None and depth >= self.max_depth:
            return node
        split = self._best_split(X, y)
        if split is None:
            return node
        node.feature, node.threshold = split
        go_left = X[:, node.feature] <= node.threshold
        node.left = self._grow(X[go_left], y[go_left], depth + 1)
        node.right = self._grow(X[~go_left], y[~go_left], depth + 1)
        return node

    def _best_split(self, X, y):
        n, F = X.shape
        onehot = np.eye(self.n_classes)[y]
        total = onehot.sum(axis=0)
        best, best_imp = None, np.inf
        n_left = np.arange(1, n)
        for f in range(F):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            left = np.cumsum(onehot[order], axis=0)[:-1]
            right = total - left
            nl = n_left[:, None]
            nr = n - nl
            gini_l = 1.0 - np.sum((left / nl) ** 2, axis=1)
            gini_r = 1.0 - np.sum((right / nr) ** 2, axis=1)
            imp = (nl[:, 0] * gini_l + nr[:, 0] * gini_r) / n
            imp[~valid] = np.inf
            pos = int(np.argmin(imp))
            if imp[pos] < best_imp - 1e-12:
                best_imp = imp[pos]
                best = (f, 0.5 * (xs[pos] + xs[pos + 1]))
        return best

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X), dtype=int)
        for i, x in enumerate(X):
            node = self.root
            while node.left is not None:
                node = node.left if x[node.feature] <= node.threshold else node.right
            out[i] = node.prediction
        return out


def decision_tree_classify(train, train_labels, test, max_depth=None):
    """Fit CART on series padded/truncated to the longest training series."""
    tr, te = _instances(train), _instances(test)
    if len(train_labels) != len(tr):
        raise ContractError(f"{len(train_labels)} labels for {len(tr)} training series")
    length = max(len(x) for x in tr)
    tree = DecisionTree(max_depth).fit(feature_matrix(tr, length), train_labels)
    return tree.predict(feature_matrix(te, length))


def accuracy(pred, truth):
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


def _r6(x):
    return None if x is None else round(float(x), 6)


@dataclass
class ClassifierScore:
    accuracy_generated: float
    accuracy_true: float
    gap: float


@dataclass
class EvaluationReport:
    dataset: str
    rep_fraction: Optional[float]
    label_accuracy: Optional[float]
    classifiers: dict = field(default_factory=dict)
    iterations_ref: Optional[str] = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        raw["classifiers"] = {k: ClassifierScore(**v) for k, v in raw["classifiers"].items()}
        return cls(**raw)


def run_classifier(name, train, labels, test, knn_k=1, max_depth=None):
    if name == "knn":
        return knn_classify(train, labels, test, knn_k)
    if name == "dt":
        return decision_tree_classify(train, labels, test, max_depth)
    raise ValueError(f"unknown classifier {name!r}; expected one of {CLASSIFIERS}")


def evaluate_pipeline(train, test, generated, true_train_labels, classifiers=CLASSIFIERS,
                      knn_k=1, max_depth=None, rep_fraction=None, iterations_ref=None,
                      dataset=None):
    """Train each classifier on generated and on true labels; score both on ``test``.

    Accuracies are stored rounded to 6 decimals and ``gap`` is their difference.
    """
    gen = np.asarray(getattr(generated, "labels", generated), dtype=int)
    true = np.asarray(true_train_labels, dtype=int)
    if len(gen) != len(train) or len(true) != len(train):
        raise ContractError(
            f"{len(gen)} generated and {len(true)} true labels for {len(train)} training series"
        )
    if test.labels is None:
        raise ContractError("the test set needs labels")
    scores = {}
    for name in classifiers:
        acc_gen = _r6(accuracy(run_classifier(name, train, gen, test, knn_k, max_depth), test.labels))
        acc_true = _r6(accuracy(run_classifier(name, train, true, test, knn_k, max_depth), test.labels))
        scores[name] = ClassifierScore(acc_gen, acc_true, _r6(acc_true - acc_gen))
    return EvaluationReport(
        dataset=dataset or getattr(train, "name", ""),
        rep_fraction=rep_fraction,
        label_accuracy=_r6(accuracy(gen, true)),
        classifiers=scores,
        iterations_ref=iterations_ref,
    )


def pca(X, n_components=2):
    """Principal component scores, components and mean.

    Each component is oriented so its first non-negligible loading is positive;
    components with negligible variance yield exactly-zero scores.
    """
    X = np.asarray(getattr(X, "embeddings", X), dtype=float)
    mean = X.mean(axis=0)
    Xc = X - mean
    _, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    tol = max(Xc.shape) * np.finfo(float).eps * (S[0] if len(S) else 0.0)
    comps = np.zeros((n_components, X.shape[1]))
    for c in range(min(n_components, len(S))):
        if S[c] <= tol:
            continue
        v = Vt[c]
        lead = np.flatnonzero(np.abs(v) > 1e-12)
        if len(lead) and v[lead[0]] < 0:
            v = -v
        comps[c] = v
    return Xc @ comps.T, comps, mean


def export_embedding_2d(X, labels, path):
    scores, _, _ = pca(X, 2)
    labels = np.asarray(getattr(labels, "labels", labels))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "label"])
        for (x, y), lab in zip(scores, labels):
            w.writerow([f"{x:.9g}", f"{y:.9g}", lab])
    return scores
