"""Time-series containers, UCR-style TSV loading, normalisation and
representative selection.

Series are kept ragged: each instance is a ``(length, channels)`` float array
and padding happens only when a batch is handed to a network (see
:meth:`TimeSeriesDataset.padded`).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ContractError, InputError
from .seeding import rng

EXPERT = "expert"
SYNTHETIC = "synthetic"

_NAN_TOKENS = {"nan", ""}


def _freeze(arr):
    arr = np.array(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    arr.setflags(write=False)
    return arr


def pad_batch(instances, length=None):
    """Stack ragged series into ``(n, length, d)`` with a boolean validity mask."""
    lengths = [len(x) for x in instances]
    T = max(lengths) if length is None else length
    d = instances[0].shape[1]
    out = np.zeros((len(instances), T, d))
    mask = np.zeros((len(instances), T), dtype=bool)
    for i, x in enumerate(instances):
        t = min(len(x), T)
        out[i, :t] = x[:t]
        mask[i, :t] = True
    return out, mask


@dataclass(frozen=True)
class TimeSeriesDataset:
    instances: tuple
    labels: Optional[np.ndarray] = None
    classes: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        insts = tuple(_freeze(x) for x in self.instances)
        object.__setattr__(self, "instances", insts)
        if len(insts) < 2:
            raise InputError(f"dataset {self.name!r} needs at least 2 instances, got {len(insts)}")
        d = insts[0].shape[1]
        for i, x in enumerate(insts):
            if x.shape[1] != d:
                raise ContractError(f"instance {i} has {x.shape[1]} channels, expected {d}")
            if x.shape[0] < 2:
                raise InputError(f"instance {i} has length {x.shape[0]}; at least 2 timesteps required")
            if not np.all(np.isfinite(x)):
                raise InputError(f"instance {i} contains non-finite values inside its valid length")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (len(insts),):
                raise ContractError(f"expected {len(insts)} labels, got {labels.shape}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
            if self.classes is None:
                object.__setattr__(self, "classes", np.arange(labels.max() + 1))
        if self.classes is not None:
            classes = np.asarray(self.classes)
            classes.setflags(write=False)
            object.__setattr__(self, "classes", classes)

    def __len__(self):
        return len(self.instances)

    @property
    def n(self):
        return len(self.instances)

    @property
    def channels(self):
        return self.instances[0].shape[1]

    @property
    def lengths(self):
        return np.array([len(x) for x in self.instances])

    @property
    def min_length(self):
        return int(self.lengths.min())

    @property
    def max_length(self):
        return int(self.lengths.max())

    @property
    def class_count(self):
        return None if self.classes is None else len(self.classes)

    def padded(self, length=None):
        return pad_batch(self.instances, length)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        labels = None if self.labels is None else self.labels[indices]
        return TimeSeriesDataset(
            tuple(self.instances[i] for i in indices), labels, self.classes, self.name
        )

    def without_labels(self):
        return TimeSeriesDataset(self.instances, None, self.classes, self.name)

    def with_labels(self, labels):
        return TimeSeriesDataset(self.instances, labels, self.classes, self.name)

    def original_labels(self, labels=None):
        """Map internal 0..k-1 labels back to the values found in the file."""
        labels = self.labels if labels is None else np.asarray(labels)
        return self.classes[labels]


@dataclass(frozen=True)
class RepresentativeSet:
    """Labelled representatives; grows with synthetic samples during self-correction.

    ``indices`` holds the row of each expert instance in the parent dataset and
    -1 for synthetic instances.
    """

    instances: tuple
    labels: np.ndarray
    origin: tuple
    indices: np.ndarray
    class_count: int

    def __post_init__(self):
        insts = tuple(_freeze(x) for x in self.instances)
        object.__setattr__(self, "instances", insts)
        labels = np.asarray(self.labels, dtype=int)
        indices = np.asarray(self.indices, dtype=int)
        if not (len(insts) == len(labels) == len(self.origin) == len(indices)):
            raise ContractError("representative instances, labels, origin and indices differ in length")
        missing = set(range(self.class_count)) - set(labels[np.asarray(self.origin) == EXPERT].tolist())
        if missing:
            raise ConfigurationError(f"no expert representative for classes {sorted(missing)}")
        for a in (labels, indices):
            a.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "origin", tuple(self.origin))

    def __len__(self):
        return len(self.instances)

    @property
    def m(self):
        return len(self.instances)

    @property
    def expert_mask(self):
        return np.array([o == EXPERT for o in self.origin])

    def expert(self):
        keep = np.flatnonzero(self.expert_mask)
        return RepresentativeSet(
            tuple(self.instances[i] for i in keep),
            self.labels[keep],
            tuple(EXPERT for _ in keep),
            self.indices[keep],
            self.class_count,
        )

    def of_class(self, class_id, expert_only=True):
        sel = self.labels == class_id
        if expert_only:
            sel &= self.expert_mask
        return [self.instances[i] for i in np.flatnonzero(sel)]

    def extend(self, instances, labels):
        """New set with ``instances`` appended as synthetic samples."""
        labels = np.asarray(labels, dtype=int)
        return RepresentativeSet(
            self.instances + tuple(instances),
            np.concatenate([self.labels, labels]),
            self.origin + tuple(SYNTHETIC for _ in labels),
            np.concatenate([self.indices, -np.ones(len(labels), dtype=int)]),
            self.class_count,
        )

    def as_dataset(self, name="representatives"):
        return TimeSeriesDataset(self.instances, self.labels, np.arange(self.class_count), name)


def _parse_value(tok, row, col, path):
    try:
        return float(tok)
    except ValueError:
        raise InputError(
            f"{path}: row {row}: non-numeric token {tok!r} in column {col + 1}"
        ) from None


def _read_rows(path, has_header, delimiter):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if has_header:
        lines = lines[1:]
    if not lines:
        raise InputError(f"{path}: no data rows")
    if delimiter is None:
        delimiter = "\t" if "\t" in lines[0] else ","
    raw_labels, series = [], []
    for row, line in enumerate(lines):
        toks = [t.strip() for t in line.rstrip("\r\n").split(delimiter)]
        if len(toks) < 2:
            raise InputError(f"{path}: row {row}: fewer than 2 columns")
        label = _parse_value(toks[0], row, 0, path)
        vals = toks[1:]
        # trailing NaN / empty cells mark the end of a shorter series
        end = len(vals)
        while end > 0 and vals[end - 1].lower() in _NAN_TOKENS:
            end -= 1
        values = np.array([_parse_value(t, row, c + 1, path) for c, t in enumerate(vals[:end])])
        if len(values) < 2:
            raise InputError(
                f"{path}: row {row}: series length {len(values)}; at least 2 valid values required"
            )
        if not np.all(np.isfinite(values)):
            raise InputError(f"{path}: row {row}: missing value inside the series")
        raw_labels.append(label)
        series.append(values)
    return np.array(raw_labels), series


def _renumber(raw_labels, classes, path):
    if classes is None:
        classes = np.unique(raw_labels)
    classes = np.asarray(classes, dtype=float)
    idx = np.searchsorted(classes, raw_labels)
    idx = np.clip(idx, 0, len(classes) - 1)
    bad = classes[idx] != raw_labels
    if np.any(bad):
        raise InputError(f"{path}: label {raw_labels[bad][0]:g} not among known classes {classes.tolist()}")
    return idx, classes


def load_ucr_tsv(path, has_header=False, classes=None, name=None, delimiter=None):
    """Load a univariate UCR-format file: label first, then the values.

    ``classes`` fixes the original-label ordering (pass the training set's
    ``classes`` when loading its test split so both share one numbering).
    """
    raw, series = _read_rows(path, has_header, delimiter)
    labels, classes = _renumber(raw, classes, path)
    return TimeSeriesDataset(tuple(series), labels, classes, name or Path(path).stem)


def load_ucr_multivariate(paths, has_header=False, classes=None, name=None, delimiter=None):
    """One file per channel, rows in identical order."""
    if not paths:
        raise InputError("no channel files given")
    per_channel = [_read_rows(p, has_header, delimiter) for p in paths]
    raw0, series0 = per_channel[0]
    for p, (raw, series) in zip(paths[1:], per_channel[1:]):
        if len(series) != len(series0):
            raise InputError(f"{p}: {len(series)} rows, expected {len(series0)}")
        if not np.array_equal(raw, raw0):
            raise InputError(f"{p}: labels disagree with {paths[0]}")
        for row, (a, b) in enumerate(zip(series, series0)):
            if len(a) != len(b):
                raise InputError(f"{p}: row {row}: length {len(a)} differs from channel 0 ({len(b)})")
    stacked = tuple(np.stack([ch[1][i] for ch in per_channel], axis=1) for i in range(len(series0)))
    labels, classes = _renumber(raw0, classes, paths[0])
    return TimeSeriesDataset(stacked, labels, classes, name or Path(paths[0]).stem)


_DIM_RE = re.compile(r"^(?P<stem>.+)_dim(?P<i>\d+)\.tsv$")


def load_dataset(path, has_header=False, classes=None, delimiter=None):
    """Load a file, or a directory of ``<name>_dim<i>.tsv`` channel files."""
    path = Path(path)
    if path.is_dir():
        found = {}
        for p in path.iterdir():
            m = _DIM_RE.match(p.name)
            if m:
                found.setdefault(m.group("stem"), []).append((int(m.group("i")), p))
        if len(found) != 1:
            raise InputError(
                f"{path}: expected channel files of exactly one dataset named <name>_dim<i>.tsv, "
                f"found {sorted(found) or 'none'}"
            )
        stem, chans = next(iter(found.items()))
        chans.sort()
        if [i for i, _ in chans] != list(range(len(chans))):
            raise InputError(f"{path}: channel indices must run 0..{len(chans) - 1}")
        return load_ucr_multivariate([p for _, p in chans], has_header, classes, stem, delimiter)
    return load_ucr_tsv(path, has_header, classes, delimiter=delimiter)


def znormalize(ds):
    """Per-instance, per-channel z-normalisation (population std); constant channels become 0."""
    out = []
    for x in ds.instances:
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        flat = sd < 1e-12 * np.maximum(1.0, np.abs(mu))
        z = (x - mu) / np.where(flat, 1.0, sd)
        z[:, flat] = 0.0
        out.append(z)
    return TimeSeriesDataset(tuple(out), ds.labels, ds.classes, ds.name)


def per_class_count(n, k, fraction):
    # round before ceil so 0.15 * 400 / 3 lands on 20, not 21
    return math.ceil(round(fraction * n / k, 9))


def select_representatives(ds, fraction, seed):
    """Stratified random subset with an equal count per class.

    Returns the representative set (tagged ``expert``) and the full dataset
    with labels stripped.
    """
    if ds.labels is None:
        raise ConfigurationError("representative selection needs a labelled dataset")
    if not 0 < fraction <= 1:
        raise ConfigurationError(f"representative fraction must lie in (0, 1], got {fraction}")
    k = ds.class_count
    if round(fraction * ds.n, 9) < k:
        raise ConfigurationError(
            f"fraction {fraction} of {ds.n} instances cannot cover all {k} classes"
        )
    if fraction == 1:
        chosen = np.arange(ds.n)
    else:
        gen = rng(seed, "representatives")
        per_class = per_class_count(ds.n, k, fraction)
        picks = []
        for c in range(k):
            members = np.flatnonzero(ds.labels == c)
            if len(members) == 0:
                raise ConfigurationError(f"class {c} has no instances")
            take = min(per_class, len(members))
            picks.append(gen.choice(members, size=take, replace=False))
        chosen = np.sort(np.concatenate(picks))
    reps = RepresentativeSet(
        tuple(ds.instances[i] for i in chosen),
        ds.labels[chosen],
        tuple(EXPERT for _ in chosen),
        chosen,
        k,
    )
    return reps, ds.without_labels()
