"""End-to-end label generation shared by the CLI and library callers.

Every random choice derives from the one ``seed`` through named streams, so a
library call and a CLI run with the same settings produce the same labels.
"""
from __future__ import annotations

from dataclasses import dataclass

from .aecs import DEFAULT_COMPACT_LENGTH, check_undercomplete, train_aecs
from .dataset import select_representatives
from .labeling import self_correct
from .seeding import stream_seed


@dataclass
class LabelRun:
    reps: object
    X_u: object
    model: object
    final: object
    history: list


def generate_labels(ds, rep_fraction=0.15, seed=42, tau=0.05, max_iterations=10,
                    compact_length=DEFAULT_COMPACT_LENGTH, aecs_epochs=150, vae_epochs=150,
                    merge=True, linkage="average", on_stage=None):
    """Select representatives, train the AECS model and run self-correction.

    ``ds`` should already be normalised. ``on_stage`` is called with the name
    of each step as it starts.
    """
    stage = on_stage or (lambda name: None)
    stage("aecs")
    # fail before any selection or training
    check_undercomplete(ds.min_length, compact_length)
    stage("representatives")
    reps, X_u = select_representatives(ds, rep_fraction, seed)
    stage("aecs")
    train_on = X_u.instances + (reps.instances if merge else ())
    model = train_aecs(train_on, compact_length, aecs_epochs, seed=stream_seed(seed, "aecs"))
    stage("self-correction")
    final, history = self_correct(
        X_u, reps, model, tau=tau, max_iterations=max_iterations,
        seed=stream_seed(seed, "self_correct"), vae_epochs=vae_epochs,
        merge=merge, linkage=linkage,
    )
    return LabelRun(reps, X_u, model, final, history)
