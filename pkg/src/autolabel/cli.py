"""Command-line entry point: ``autolabel {label,evaluate,encode,cluster}``.

Exit codes: 0 success, 2 input/configuration error, 3 contract error,
4 training divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .aecs import DEFAULT_COMPACT_LENGTH, encode, train_aecs, write_compact_csv
from .clustering import LINKAGES, best_clustering, dendrogram_json
from .dataset import load_dataset, znormalize
from .errors import AutolabelError, ConfigurationError, ContractError, InputError
from .evaluate import CLASSIFIERS, evaluate_pipeline, export_embedding_2d, pca
from .labeling import LabelVector
from .pipeline import generate_labels
from .seeding import stream_seed

log = logging.getLogger("autolabel")


@dataclass
class PipelineConfig:
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    labels_path: Optional[str] = None
    output_dir: str = "autolabel_out"
    rep_fraction: float = 0.15
    tau: float = 0.05
    compact_length: int = DEFAULT_COMPACT_LENGTH
    seed: int = 42
    max_iterations: int = 10
    aecs_epochs: int = 150
    vae_epochs: int = 150
    linkage: str = "average"
    normalize: bool = True
    merge: bool = True
    has_header: bool = False
    classifiers: tuple = CLASSIFIERS
    knn_k: int = 1
    max_depth: Optional[int] = None
    figures: bool = True

    def validate(self):
        if not 0 < self.rep_fraction <= 1:
            raise ConfigurationError(f"rep_fraction must lie in (0, 1], got {self.rep_fraction}")
        if not 0 <= self.tau < 1:
            raise ConfigurationError(f"tau must lie in [0, 1), got {self.tau}")
        if self.compact_length < 2:
            raise ConfigurationError(f"compact_length must be >= 2, got {self.compact_length}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.aecs_epochs < 1 or self.vae_epochs < 1:
            raise ConfigurationError("epoch counts must be >= 1")
        if self.linkage not in LINKAGES:
            raise ConfigurationError(f"linkage must be one of {LINKAGES}")
        bad = [c for c in self.classifiers if c not in CLASSIFIERS]
        if bad or not self.classifiers:
            raise ConfigurationError(f"classifiers must be drawn from {CLASSIFIERS}, got {list(self.classifiers)}")
        if self.knn_k < 1:
            raise ConfigurationError("knn_k must be >= 1")
        if self.train_path is None:
            raise ConfigurationError("a training file is required (--train)")
        return self


def resolve_config(args):
    """Defaults, overridden by the config file, overridden by explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except FileNotFoundError:
            raise InputError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: invalid JSON ({exc})") from None
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if "classifiers" in values:
        values["classifiers"] = tuple(values["classifiers"])
    return PipelineConfig(**values).validate()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt_label(v):
    return f"{v:g}"


def write_labels_csv(path, original_labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance_index", "label"])
        for i, lab in enumerate(original_labels):
            w.writerow([i, _fmt_label(lab)])


def read_labels_csv(path, classes, n):
    """Generated labels (original values) mapped to internal ids; must cover ``n`` rows."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such labels file: {path}")
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["instance_index", "label"]:
            raise InputError(f"{path}: expected header instance_index,label")
        for line, row in enumerate(reader, start=2):
            try:
                rows[int(row[0])] = float(row[1])
            except (ValueError, IndexError):
                raise InputError(f"{path}: line {line}: malformed row {row}") from None
    if sorted(rows) != list(range(len(rows))) or len(rows) != n:
        raise ContractError(
            f"{path}: length mismatch, {len(rows)} labels for {n} training instances"
        )
    raw = np.array([rows[i] for i in range(n)])
    idx = np.clip(np.searchsorted(classes, raw), 0, len(classes) - 1)
    if np.any(classes[idx] != raw):
        raise InputError(f"{path}: labels outside the training classes {classes.tolist()}")
    return idx


class Run:
    """Shared state of one CLI invocation; ``stage`` names the step for error messages."""

    def __init__(self, config, command):
        self.config = config
        self.command = command
        self.stage = "setup"
        self.out = Path(config.output_dir)

    def load_train(self):
        self.stage = "load"
        ds = load_dataset(self.config.train_path, self.config.has_header)
        return znormalize(ds) if self.config.normalize else ds

    def load_test(self, train):
        self.stage = "load"
        if self.config.test_path is None:
            raise ConfigurationError("a test file is required (--test)")
        ds = load_dataset(self.config.test_path, self.config.has_header, classes=train.classes)
        return znormalize(ds) if self.config.normalize else ds

    def prepare(self):
        self.out.mkdir(parents=True, exist_ok=True)
        meta = {"command": self.command, "version": __version__, "config": asdict(self.config)}
        _write_json(self.out / "run_meta.json", meta)

    def _set_stage(self, name):
        self.stage = name

    def train_model(self, instances):
        self.stage = "aecs"
        c = self.config
        return train_aecs(instances, c.compact_length, c.aecs_epochs, seed=stream_seed(c.seed, "aecs"))

    def label(self, ds):
        c = self.config
        run = generate_labels(
            ds, rep_fraction=c.rep_fraction, seed=c.seed, tau=c.tau,
            max_iterations=c.max_iterations, compact_length=c.compact_length,
            aecs_epochs=c.aecs_epochs, vae_epochs=c.vae_epochs, merge=c.merge,
            linkage=c.linkage, on_stage=self._set_stage,
        )
        final, history, model, X_u = run.final, run.history, run.model, run.X_u
        self.stage = "write"
        original = ds.original_labels(final.labels)
        write_labels_csv(self.out / "labels.csv", original)
        records = [r.to_dict() for r in history]
        _write_json(self.out / "iterations.json", records)
        Z = encode(model, X_u)
        scores = export_embedding_2d(Z, [_fmt_label(v) for v in original], self.out / "embedding.csv")
        if c.figures:
            from .plotting import plot_embedding, plot_iterations
            plot_embedding(scores, [_fmt_label(v) for v in original], self.out / "embedding.png",
                           "AECS embedding, generated labels")
            plot_iterations(records, self.out / "iterations.png", c.tau)
        return final, history


def cmd_label(config):
    run = Run(config, "label")
    return _guard(run, lambda: _label(run))


def _label(run):
    run.prepare()
    ds = run.load_train()
    final, history = run.label(ds)
    last = history[-1]
    print(f"labelled {len(final)} instances in {last.iteration} iteration(s); "
          f"best measure {last.measure}; outputs in {run.out}")


def cmd_evaluate(config):
    run = Run(config, "evaluate")
    return _guard(run, lambda: _evaluate(run))


def _evaluate(run):
    c = run.config
    run.prepare()
    train = run.load_train()
    test = run.load_test(train)
    if c.labels_path is not None:
        run.stage = "labels"
        generated = read_labels_csv(c.labels_path, train.classes, len(train))
        iterations_ref = None
    else:
        generated = run.label(train)[0].labels
        iterations_ref = "iterations.json"
    run.stage = "evaluate"
    report = evaluate_pipeline(
        train, test, LabelVector(generated), train.labels, classifiers=c.classifiers,
        knn_k=c.knn_k, max_depth=c.max_depth, rep_fraction=c.rep_fraction,
        iterations_ref=iterations_ref, dataset=train.name,
    )
    (run.out / "report.json").write_text(report.to_json())
    if c.figures:
        from .plotting import plot_accuracies
        plot_accuracies(report, run.out / "accuracy.png")
    for name, s in report.classifiers.items():
        print(f"{name}: generated {s.accuracy_generated:.6f} true {s.accuracy_true:.6f} gap {s.gap:.6f}")
    print(f"label accuracy {report.label_accuracy:.6f}")


def cmd_encode(config):
    run = Run(config, "encode")
    return _guard(run, lambda: _encode(run))


def _encode(run):
    run.prepare()
    ds = run.load_train()
    model = run.train_model(ds.instances)
    run.stage = "write"
    write_compact_csv(encode(model, ds), run.out / "aecs.csv")
    model.save(run.out / "aecs_model.npz", history=[round(h, 9) for h in model.history])
    print(f"encoded {len(ds)} instances to length {model.compact_length}; outputs in {run.out}")


def cmd_cluster(config):
    run = Run(config, "cluster")
    return _guard(run, lambda: _cluster(run))


def _cluster(run):
    c = run.config
    run.prepare()
    ds = run.load_train()
    if ds.class_count is None or ds.class_count < 2:
        raise ConfigurationError("clustering needs at least 2 classes in the training labels")
    model = run.train_model(ds.instances)
    run.stage = "cluster"
    Z = encode(model, ds).embeddings
    result = best_clustering(Z, ds.class_count, c.linkage)
    run.stage = "write"
    _write_json(run.out / "clustering.json", {
        "k": result.k,
        "linkage": result.linkage,
        "measure": result.measure.tag,
        "hubert": {tag: round(v, 6) for tag, v in result.scores.items()},
        "assignments": result.assignments.tolist(),
    })
    (run.out / "dendrogram.json").write_text(dendrogram_json(result) + "\n")
    if c.figures:
        from .plotting import plot_embedding
        plot_embedding(pca(Z, 2)[0], result.assignments, run.out / "clusters.png",
                       f"clusters ({result.measure.tag})")
    scores = ", ".join(f"{t}={v:.6f}" for t, v in result.scores.items())
    print(f"Hubert scores: {scores}; best measure {result.measure.tag}")


def _guard(run, body):
    try:
        body()
    except AutolabelError as exc:
        print(f"autolabel {run.command}: {run.stage} failed: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="autolabel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with PipelineConfig fields")
    common.add_argument("--train", dest="train_path")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--compact-length", dest="compact_length", type=int)
    common.add_argument("--aecs-epochs", dest="aecs_epochs", type=int)
    common.add_argument("--linkage", choices=LINKAGES)
    common.add_argument("--has-header", dest="has_header", action="store_const", const=True)
    common.add_argument("--normalize", dest="normalize", action="store_const", const=True)
    common.add_argument("--no-normalize", dest="normalize", action="store_const", const=False)
    common.add_argument("--no-figures", dest="figures", action="store_const", const=False)
    common.add_argument("-v", "--verbose", action="store_true")

    labelling = argparse.ArgumentParser(add_help=False)
    labelling.add_argument("--rep-frac", dest="rep_fraction", type=float)
    labelling.add_argument("--tau", type=float)
    labelling.add_argument("--max-iterations", dest="max_iterations", type=int)
    labelling.add_argument("--vae-epochs", dest="vae_epochs", type=int)
    labelling.add_argument("--no-merge", dest="merge", action="store_const", const=False)

    sub.add_parser("label", parents=[common, labelling],
                   help="generate labels for the training set")
    ev = sub.add_parser("evaluate", parents=[common, labelling],
                        help="compare classifiers trained on generated vs true labels")
    ev.add_argument("--test", dest="test_path")
    ev.add_argument("--labels", dest="labels_path",
                    help="labels.csv from a previous run; generated inline when omitted")
    ev.add_argument("--classifier", dest="classifiers", action="append", choices=CLASSIFIERS)
    ev.add_argument("--knn-k", dest="knn_k", type=int)
    ev.add_argument("--max-depth", dest="max_depth", type=int)
    sub.add_parser("encode", parents=[common], help="train the autoencoder and dump AECS vectors")
    sub.add_parser("cluster", parents=[common],
                   help="cluster AECS vectors and report Hubert scores per measure")
    return p


COMMANDS = {"label": cmd_label, "evaluate": cmd_evaluate, "encode": cmd_encode, "cluster": cmd_cluster}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = resolve_config(args)
    except AutolabelError as exc:
        print(f"autolabel {args.command}: configuration failed: {exc}", file=sys.stderr)
        return exc.exit_code
    return COMMANDS[args.command](config)


if __name__ == "__main__":
    sys.exit(main())
