"""Small numpy kernel for the two recurrent networks used here.

Every layer exposes ``forward`` returning its output plus a cache and
``backward`` consuming that cache. Parameters live in plain arrays that
the optimiser updates in place, so a model is fully described by the
``{name: array}`` mapping returned from ``parameters()``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError, TrainingError

CLIP_NORM = 5.0
CHECKPOINT_VERSION = 1


def sigmoid(x):
    # exp overflow for very negative x yields inf and a correct 0
    with np.errstate(over="ignore"):
        out = np.exp(-x)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def _uniform(gen, bound, shape):
    return gen.uniform(-bound, bound, size=shape)


class LSTMCell:
    """LSTM with gate blocks laid out as (input, forget, output, candidate)."""

    def __init__(self, input_size, hidden_size, gen=None):
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        H = self.hidden_size
        if gen is None:
            self.Wx = np.zeros((input_size, 4 * H))
            self.Wh = np.zeros((H, 4 * H))
            self.b = np.zeros(4 * H)
        else:
            bound = 1.0 / np.sqrt(H)
            self.Wx = _uniform(gen, bound, (input_size, 4 * H))
            self.Wh = _uniform(gen, bound, (H, 4 * H))
            self.b = _uniform(gen, bound, 4 * H)

    def parameters(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def forward(self, X, mask=None, h0=None, c0=None):
        """Run over ``X`` of shape ``(batch, steps, input_size)``.

        Where ``mask`` is False the state is carried over unchanged.
        Returns hidden states ``(batch, steps, hidden)``, the final hidden and
        cell state, and a cache for :meth:`backward`.
        """
        if X.ndim != 3 or X.shape[2] != self.input_size:
            raise ShapeError(f"LSTM expects (batch, steps, {self.input_size}) input, got {X.shape}")
        B, T, _ = X.shape
        H = self.hidden_size
        h = np.zeros((B, H)) if h0 is None else h0
        c = np.zeros((B, H)) if c0 is None else c0
        if h.shape != (B, H) or c.shape != (B, H):
            raise ShapeError(f"initial state must have shape {(B, H)}")
        if mask is None:
            mask = np.ones((B, T), dtype=bool)
        full = mask.all(axis=0)
        Zx = X @ self.Wx + self.b
        Hs = np.empty((B, T, H))
        steps = []
        for t in range(T):
            z = h @ self.Wh
            z += Zx[:, t]
            sig = sigmoid(z[:, :3 * H])
            i, f, o = sig[:, :H], sig[:, H:2 * H], sig[:, 2 * H:]
            g = np.tanh(z[:, 3 * H:])
            c_new = f * c
            c_new += i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            m = None if full[t] else mask[:, t, None]
            steps.append((h, c, sig, g, tc, m))
            if m is None:
                h, c = h_new, c_new
            else:
                h = np.where(m, h_new, h)
                c = np.where(m, c_new, c)
            Hs[:, t] = h
        return Hs, h, c, (X, steps)

    def backward(self, cache, dHs=None, dh_last=None, dc_last=None):
        """Gradients for the parameters and for the inputs/initial state."""
        X, steps = cache
        B, T, D = X.shape
        H = self.hidden_size
        dZ = np.empty((B, T, 4 * H))
        dh = np.zeros((B, H)) if dh_last is None else dh_last.copy()
        dc = np.zeros((B, H)) if dc_last is None else dc_last.copy()
        WhT = self.Wh.T
        for t in range(T - 1, -1, -1):
            h_prev, c_prev, sig, g, tc, m = steps[t]
            i, f, o = sig[:, :H], sig[:, H:2 * H], sig[:, 2 * H:]
            if dHs is not None:
                dh = dh + dHs[:, t]
            if m is None:
                dh_new, dc_new = dh, dc + dh * o * (1.0 - tc * tc)
            else:
                mf = m.astype(float)
                dh_new = mf * dh
                dc_new = mf * dc + dh_new * o * (1.0 - tc * tc)
            dz = dZ[:, t]
            dsig = dz[:, :3 * H]
            dsig[:, :H] = dc_new * g
            dsig[:, H:2 * H] = dc_new * c_prev
            dsig[:, 2 * H:] = dh_new * tc
            dsig *= sig * (1.0 - sig)
            dz[:, 3 * H:] = dc_new * i * (1.0 - g * g)
            if m is None:
                dh = dz @ WhT
                dc = dc_new * f
            else:
                dh = dz @ WhT + (1.0 - mf) * dh
                dc = dc_new * f + (1.0 - mf) * dc
        hs_prev = np.stack([s[0] for s in steps], axis=1)
        dZf = dZ.reshape(B * T, 4 * H)
        grads = {
            "Wx": X.reshape(B * T, D).T @ dZf,
            "Wh": hs_prev.reshape(B * T, H).T @ dZf,
            "b": dZf.sum(axis=0),
        }
        dX = dZ @ self.Wx.T
        return grads, dX, dh, dc


def forward_sequence(cell, sequence, mask=None):
    """Single-sequence convenience: ``(t, d)`` in, ``(t, h)`` states and final state out."""
    sequence = np.asarray(sequence, dtype=float)
    if sequence.ndim != 2:
        raise ShapeError(f"expected a (steps, channels) matrix, got shape {sequence.shape}")
    m = None if mask is None else np.asarray(mask, dtype=bool)[None, :]
    Hs, h, _, _ = cell.forward(sequence[None], m)
    return Hs[0], h[0]


_ACTIVATIONS = {
    "identity": (lambda x: x, lambda y: np.ones_like(y)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "sigmoid": (sigmoid, lambda y: y * (1.0 - y)),
}


class Dense:
    def __init__(self, in_features, out_features, activation="identity", gen=None):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.activation = activation
        if gen is None:
            self.W = np.zeros((in_features, out_features))
            self.b = np.zeros(out_features)
        else:
            bound = 1.0 / np.sqrt(in_features)
            self.W = _uniform(gen, bound, (in_features, out_features))
            self.b = _uniform(gen, bound, out_features)

    def parameters(self):
        return {"W": self.W, "b": self.b}

    def forward(self, X):
        if X.shape[-1] != self.in_features:
            raise ShapeError(f"Dense expects last dim {self.in_features}, got {X.shape}")
        Y = _ACTIVATIONS[self.activation][0](X @ self.W + self.b)
        return Y, (X, Y)

    def backward(self, cache, dY):
        X, Y = cache
        dA = dY * _ACTIVATIONS[self.activation][1](Y)
        Xf = X.reshape(-1, self.in_features)
        dAf = dA.reshape(-1, self.out_features)
        grads = {"W": Xf.T @ dAf, "b": dAf.sum(axis=0)}
        return grads, dA @ self.W.T


def masked_mse(pred, target, mask):
    """Mean squared error over valid timesteps; returns (loss, d loss / d pred)."""
    w = np.broadcast_to(mask[..., None], pred.shape).astype(float)
    count = w.sum()
    diff = (pred - target) * w
    return float((diff ** 2).sum() / count), 2.0 * diff / count


def kl_standard_normal(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the last axis."""
    return 0.5 * np.sum(mu ** 2 + np.exp(logvar) - 1.0 - logvar, axis=-1)


class Network:
    """Base for models made of named layers."""

    layers: dict

    def parameters(self):
        out = {}
        for lname, layer in self.layers.items():
            for pname, arr in layer.parameters().items():
                out[f"{lname}.{pname}"] = arr
        return out

    def hyperparameters(self):
        return {}

    def save(self, path, **extra):
        """Write shapes, flat parameter arrays and hyperparameters to an ``.npz`` file."""
        meta = {
            "version": CHECKPOINT_VERSION,
            "kind": type(self).__name__,
            "hyperparameters": self.hyperparameters(),
            **extra,
        }
        arrays = {f"param:{k}": v for k, v in self.parameters().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    def load_parameters(self, path):
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != type(self).__name__:
                raise InputError(f"{path}: not a {type(self).__name__} checkpoint (v{CHECKPOINT_VERSION})")
            params = self.parameters()
            for name, arr in params.items():
                stored = data[f"param:{name}"]
                if stored.shape != arr.shape:
                    raise ShapeError(f"{path}: {name} has shape {stored.shape}, expected {arr.shape}")
                arr[...] = stored
        return meta


def read_checkpoint_meta(path):
    with np.load(path, allow_pickle=False) as data:
        return json.loads(str(data["__meta__"]))


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm=CLIP_NORM):
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise TrainingError("non-finite gradient")
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads


@dataclass
class RMSProp:
    learning_rate: float = 0.003
    decay: float = 0.9
    epsilon: float = 1e-8
    accumulators: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")

    def step(self, params, grads):
        """In-place update ``a <- decay*a + (1-decay)*g^2; p <- p - lr*g/sqrt(a+eps)``."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {name}")
        for name, g in grads.items():
            p = params[name]
            if p.shape != g.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
            a = self.accumulators.get(name)
            if a is None:
                a = self.accumulators[name] = np.zeros_like(p)
            a *= self.decay
            a += (1.0 - self.decay) * g * g
            p -= self.learning_rate * g / np.sqrt(a + self.epsilon)
        return params


def rmsprop_step(params, grads, state):
    return state.step(params, grads)


def train_loop(loss_and_grads, params, epochs, optimizer, clip=CLIP_NORM,
               tol=1e-6, patience=20, log=None):
    """Full-batch descent. Stops early when the loss improves by less than
    ``tol`` for ``patience`` consecutive epochs. Returns the loss history."""
    history = []
    best = np.inf
    stale = 0
    for epoch in range(1, epochs + 1):
        loss, grads = loss_and_grads()
        if not np.isfinite(loss):
            raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch=epoch)
        history.append(loss)
        try:
            grads = clip_by_global_norm(grads, clip)
            optimizer.step(params, grads)
        except TrainingError as exc:
            raise TrainingError(f"{exc} at epoch {epoch}", epoch=epoch) from None
        if log is not None and (epoch == 1 or epoch % 25 == 0):
            log(epoch, loss)
        if best - loss < tol:
            stale += 1
            if patience and stale >= patience:
                break
        else:
            stale = 0
        best = min(best, loss)
    return history
