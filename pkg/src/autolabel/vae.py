"""Per-class recurrent VAE used to synthesise extra representatives.

A single-layer LSTM encoder reads a series; two dense heads give the mean and
log-variance of a latent vector whose length equals the series length. The
latent vector is fed to a single-layer LSTM decoder one element per step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import pad_batch
from .errors import ConfigurationError
from .neuralnet import Dense, LSTMCell, Network, RMSProp, kl_standard_normal, train_loop
from .seeding import rng

log = logging.getLogger(__name__)

DEFAULT_HIDDEN = 32
DEFAULT_EPOCHS = 150


def reparameterize(mu, logvar, eps):
    """z = mu + sqrt(Sigma) * eps with diagonal Sigma = exp(logvar)."""
    return mu + np.exp(0.5 * logvar) * eps


class VaeModel(Network):
    def __init__(self, channels, latent_length, class_id=0, hidden=DEFAULT_HIDDEN, seed=0):
        gen = rng(seed, f"vae.init.{class_id}")
        self.channels = int(channels)
        self.latent_length = int(latent_length)
        self.class_id = int(class_id)
        self.hidden = int(hidden)
        self.seed = seed
        self.layers = {
            "enc": LSTMCell(channels, hidden, gen),
            "mu": Dense(hidden, latent_length, "identity", gen),
            "logvar": Dense(hidden, latent_length, "identity", gen),
            "dec": LSTMCell(1, hidden, gen),
            "out": Dense(hidden, channels, "identity", gen),
        }
        self.instances = ()
        self.history = []

    def hyperparameters(self):
        return {"channels": self.channels, "latent_length": self.latent_length,
                "class_id": self.class_id, "hidden": self.hidden, "seed": self.seed}

    def posterior(self, X, mask):
        """Mean and log-variance of q(z | x) for each row of the padded batch."""
        _, h, _, cenc = self.layers["enc"].forward(X, mask)
        mu, cmu = self.layers["mu"].forward(h)
        logvar, clv = self.layers["logvar"].forward(h)
        return mu, logvar, (cenc, cmu, clv)

    def decode(self, z):
        D, _, _, cdec = self.layers["dec"].forward(z[:, :, None])
        Y, cout = self.layers["out"].forward(D)
        return Y, (cdec, cout)

    def _forward(self, X, mask, eps):
        mu, logvar, cpost = self.posterior(X, mask)
        z = reparameterize(mu, logvar, eps)
        Y, cdec = self.decode(z)
        w = mask[..., None].astype(float)
        recon = 0.5 * np.sum(((Y - X) * w) ** 2, axis=(1, 2))
        kl = kl_standard_normal(mu, logvar)
        loss = float(np.mean(recon + kl))
        return loss, (mu, logvar, Y, w, cpost, cdec)

    def loss(self, X, mask, eps):
        """Negative ELBO per instance (Gaussian reconstruction term plus KL), batch mean."""
        return self._forward(X, mask, eps)[0]

    def loss_and_grads(self, X, mask, eps):
        L = self.layers
        B = X.shape[0]
        loss, (mu, logvar, Y, w, (cenc, cmu, clv), (cdec, cout)) = self._forward(X, mask, eps)
        grads = {}
        dY = (Y - X) * w * w / B
        grads["out"], dD = L["out"].backward(cout, dY)
        grads["dec"], dZin, _, _ = L["dec"].backward(cdec, dD)
        dz = dZin[:, :, 0]
        std = np.exp(0.5 * logvar)
        dmu = dz + mu / B
        dlogvar = dz * eps * 0.5 * std + 0.5 * (std * std - 1.0) / B
        grads["mu"], dh1 = L["mu"].backward(cmu, dmu)
        grads["logvar"], dh2 = L["logvar"].backward(clv, dlogvar)
        grads["enc"], _, _, _ = L["enc"].backward(cenc, None, dh_last=dh1 + dh2)
        flat = {f"{ln}.{pn}": v for ln, gs in grads.items() for pn, v in gs.items()}
        return loss, flat


def train_vae(reps, class_id, seed=0, epochs=DEFAULT_EPOCHS, hidden=DEFAULT_HIDDEN,
              learning_rate=0.003):
    """Fit one VAE on the expert representatives of ``class_id``.

    The latent (and output) length is the longest expert series of the class;
    shorter series are masked.
    """
    insts = reps.of_class(class_id, expert_only=True)
    if not insts:
        raise ConfigurationError(f"class {class_id} has no expert representatives")
    if epochs < 1:
        raise ConfigurationError("epochs must be >= 1")
    X, mask = pad_batch(insts)
    model = VaeModel(X.shape[2], X.shape[1], class_id, hidden, seed)
    model.instances = tuple(insts)
    gen = rng(seed, f"vae.train.{class_id}")
    params = model.parameters()

    def step():
        eps = gen.standard_normal((X.shape[0], model.latent_length))
        return model.loss_and_grads(X, mask, eps)

    # the loss is stochastic, so no early stopping
    model.history = train_loop(
        step, params, epochs, RMSProp(learning_rate=learning_rate), patience=0,
        log=lambda e, l: log.info("vae[%d] epoch %d loss %.4f", class_id, e, l),
    )
    return model


@dataclass
class SyntheticSamples:
    series: list
    labels: np.ndarray
    latents: np.ndarray
    means: np.ndarray
    conditioned_on: np.ndarray


def sample_vae(model, count, seed, eps=None):
    """Draw ``count`` series, each conditioned on a random expert instance of the class.

    ``eps`` overrides the standard-normal draws (shape ``(count, latent_length)``).
    Each sample is cut to the length of the instance it was conditioned on.
    """
    if count < 1:
        raise ConfigurationError("sample count must be >= 1")
    if not model.instances:
        raise ConfigurationError("model has no training instances to condition on")
    gen = rng(seed, f"vae.sample.{model.class_id}")
    src = gen.integers(0, len(model.instances), size=count)
    if eps is None:
        eps = gen.standard_normal((count, model.latent_length))
    eps = np.asarray(eps, dtype=float).reshape(count, model.latent_length)
    X, mask = pad_batch([model.instances[i] for i in src], model.latent_length)
    mu, logvar, _ = model.posterior(X, mask)
    z = reparameterize(mu, logvar, eps)
    Y, _ = model.decode(z)
    series = [Y[i, : len(model.instances[s])].copy() for i, s in enumerate(src)]
    return SyntheticSamples(series, np.full(count, model.class_id), z, mu, src)
