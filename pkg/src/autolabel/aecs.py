"""Seq2seq LSTM autoencoder producing the auto-encoded compact sequence (AECS).

Encoder: two stacked LSTMs, hidden sizes ``(2 * max(16, p), p)``. The final
hidden state of the top layer is the compact sequence. The decoder starts with
both its hidden and cell state set to that vector, is fed zeros, and emits one reconstruction step per input step
through two stacked LSTMs and a linear read-out.
"""
from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .dataset import pad_batch
from .errors import ConfigurationError, ShapeError
from .neuralnet import LSTMCell, Dense, Network, RMSProp, masked_mse, train_loop
from .seeding import rng

log = logging.getLogger(__name__)

DEFAULT_COMPACT_LENGTH = 12
DEFAULT_EPOCHS = 150


class AecsModel(Network):
    def __init__(self, channels, compact_length=DEFAULT_COMPACT_LENGTH, seed=0):
        gen = rng(seed, "aecs.init")
        p = int(compact_length)
        wide = 2 * max(16, p)
        self.channels = int(channels)
        self.compact_length = p
        self.seed = seed
        self.layers = {
            "enc0": LSTMCell(channels, wide, gen),
            "enc1": LSTMCell(wide, p, gen),
            "dec0": LSTMCell(1, p, gen),
            "dec1": LSTMCell(p, wide, gen),
            "out": Dense(wide, channels, "identity", gen),
        }
        self.history = []

    def hyperparameters(self):
        return {"channels": self.channels, "compact_length": self.compact_length, "seed": self.seed}

    def _encode(self, X, mask):
        L = self.layers
        H0, _, _, c0 = L["enc0"].forward(X, mask)
        _, z, _, c1 = L["enc1"].forward(H0, mask)
        return z, (c0, c1)

    def encode_batch(self, X, mask):
        if X.shape[2] != self.channels:
            raise ShapeError(f"model expects {self.channels} channels, data has {X.shape[2]}")
        return self._encode(X, mask)[0]

    def _forward(self, X, mask):
        L = self.layers
        B, T, _ = X.shape
        z, enc_caches = self._encode(X, mask)
        D0, _, _, cd0 = L["dec0"].forward(np.zeros((B, T, 1)), None, h0=z, c0=z)
        D1, _, _, cd1 = L["dec1"].forward(D0)
        Y, cout = L["out"].forward(D1)
        return Y, enc_caches + (cd0, cd1, cout)

    def reconstruct(self, X, mask):
        return self._forward(X, mask)[0]

    def loss(self, X, mask):
        return masked_mse(self._forward(X, mask)[0], X, mask)[0]

    def loss_and_grads(self, X, mask):
        """Masked reconstruction MSE and its gradient for every parameter."""
        L = self.layers
        Y, (ce0, ce1, cd0, cd1, cout) = self._forward(X, mask)
        loss, dY = masked_mse(Y, X, mask)

        grads = {}
        g, dD1 = L["out"].backward(cout, dY)
        grads["out"] = g
        g, dD0, _, _ = L["dec1"].backward(cd1, dD1)
        grads["dec1"] = g
        g, _, dh0, dc0 = L["dec0"].backward(cd0, dD0)
        grads["dec0"] = g
        # z seeds both decoder states
        g, dH0, _, _ = L["enc1"].backward(ce1, None, dh_last=dh0 + dc0)
        grads["enc1"] = g
        g, _, _, _ = L["enc0"].backward(ce0, dH0)
        grads["enc0"] = g
        flat = {f"{ln}.{pn}": v for ln, gs in grads.items() for pn, v in gs.items()}
        return loss, flat


@dataclass(frozen=True)
class CompactMatrix:
    embeddings: np.ndarray
    source_hash: str

    def __len__(self):
        return len(self.embeddings)


def dataset_digest(instances):
    h = hashlib.sha256()
    for x in instances:
        h.update(np.ascontiguousarray(x, dtype=float).tobytes())
        h.update(str(x.shape).encode())
    return h.hexdigest()


def _instances(data):
    return data.instances if hasattr(data, "instances") else tuple(data)


def check_undercomplete(min_length, p):
    if p < 2:
        raise ConfigurationError(f"compact length must be at least 2, got {p}")
    if p >= min_length:
        raise ConfigurationError(
            f"compact length {p} must be shorter than the shortest series ({min_length})"
        )


def train_aecs(data, p=DEFAULT_COMPACT_LENGTH, epochs=DEFAULT_EPOCHS, seed=0,
               learning_rate=0.003, patience=20):
    """Fit the autoencoder on ``data`` (a dataset or a sequence of series)."""
    insts = _instances(data)
    check_undercomplete(min(len(x) for x in insts), p)
    if epochs < 1:
        raise ConfigurationError("epochs must be >= 1")
    X, mask = pad_batch(insts)
    model = AecsModel(X.shape[2], p, seed)
    params = model.parameters()
    opt = RMSProp(learning_rate=learning_rate)
    model.history = train_loop(
        lambda: model.loss_and_grads(X, mask), params, epochs, opt, patience=patience,
        log=lambda e, l: log.info("aecs epoch %d loss %.6f", e, l),
    )
    return model


def encode(model, data):
    """Row ``i`` is the compact sequence of instance ``i``."""
    insts = _instances(data)
    if not insts:
        return CompactMatrix(np.zeros((0, model.compact_length)), dataset_digest(insts))
    if insts[0].shape[1] != model.channels:
        raise ShapeError(f"model expects {model.channels} channels, data has {insts[0].shape[1]}")
    X, mask = pad_batch(insts)
    Z = model.encode_batch(X, mask)
    Z.setflags(write=False)
    return CompactMatrix(Z, dataset_digest(insts))


def write_compact_csv(matrix, path):
    emb = matrix.embeddings if isinstance(matrix, CompactMatrix) else np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"z{j}" for j in range(emb.shape[1])])
        for row in emb:
            w.writerow([f"{v:.9g}" for v in row])
