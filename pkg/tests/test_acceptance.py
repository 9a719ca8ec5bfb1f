"""Acceptance criteria, one test each.

Every test records a single ``criterion N: PASS|FAIL|SKIP ...`` line, shown in
the pytest terminal summary. Tolerances and runtime limits are the pinned
values; nothing is loosened to turn a line green.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import autolabel.aecs as aecs_module
from autolabel.aecs import AecsModel, encode
from autolabel.cli import main
from autolabel.clustering import DistanceMeasure, hierarchical_cluster, modified_hubert, select_measure
from autolabel.dataset import EXPERT, RepresentativeSet, load_dataset, pad_batch, znormalize
from autolabel.errors import ConfigurationError
from autolabel.evaluate import accuracy, knn_classify
from autolabel.labeling import cluster_class_associate, label_discriminator, mismatch
from autolabel.neuralnet import kl_standard_normal
from autolabel.pipeline import generate_labels
from autolabel.synthetic import make_benchmark, write_ucr_tsv
from autolabel.vae import VaeModel, sample_vae, train_vae
from conftest import ACCEPTANCE_LINES
from gradcheck import check_gradients
from oracles import brute_hubert, oracle_cca, random_instance

BENCHMARK_SEED = 42
UCR_DIR_ENV = "AUTOLABEL_UCR_DIR"


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def skip(n, detail):
    line = f"criterion {n}: SKIP  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    pytest.skip(detail)


@pytest.fixture(scope="module")
def benchmark():
    return znormalize(make_benchmark(n_per_class=80, length=64, noise=0.2, seed=BENCHMARK_SEED))


def test_criterion_1_hubert_oracle():
    g = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(g.integers(2, 61))
        p = int(g.integers(1, 13))
        X = g.normal(size=(n, p)) * g.uniform(0.1, 10, size=p)
        k = int(g.integers(1, min(n, 8) + 1))
        res = hierarchical_cluster(X, k, DistanceMeasure.manhattan())
        inv = DistanceMeasure.fit_mahalanobis(X).inv_cov
        ref = brute_hubert(X, res.assignments, res.centroids, inv)
        got = modified_hubert(X, res)
        err = abs(got - ref) / abs(ref) if ref else abs(got)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-12 and elapsed < 10,
           f"max relative error {worst:.2e} (<= 1e-12) over 100 instances, {elapsed:.1f} s (< 10 s)")


def test_criterion_2_cca_oracle():
    model = AecsModel(1, 3, seed=5)
    start = time.perf_counter()
    matches = 0
    for seed in range(100):
        X_u, reps, _ = random_instance(1000 + seed)
        labels, trace = cluster_class_associate(X_u, reps, model)
        cl = trace.clustering
        clustered = np.vstack([encode(model, X_u).embeddings, encode(model, reps).embeddings])
        expected = oracle_cca(clustered, cl.assignments, cl.centroids, cl.measure,
                              encode(model, reps).embeddings, reps.labels, X_u.n)
        matches += labels.labels.tolist() == expected
    elapsed = time.perf_counter() - start
    record(2, matches == 100 and elapsed < 30,
           f"{matches}/100 exact label-vector matches, {elapsed:.1f} s (< 30 s)")


def test_criterion_3_gradients():
    g = np.random.default_rng(3)
    start = time.perf_counter()
    X, mask = pad_batch([g.normal(size=(6, 1)) for _ in range(3)])
    ae = AecsModel(1, 3, seed=1)
    _, grads = ae.loss_and_grads(X, mask)
    ae_fail, ae_n = check_gradients(lambda: ae.loss(X, mask), ae.parameters(), grads)

    vae = VaeModel(1, 6, hidden=3, seed=2)
    eps = g.normal(size=(3, 6))
    _, vgrads = vae.loss_and_grads(X, mask, eps)
    vae_fail, vae_n = check_gradients(lambda: vae.loss(X, mask, eps), vae.parameters(), vgrads)
    elapsed = time.perf_counter() - start
    ok = not ae_fail and not vae_fail and elapsed < 60
    record(3, ok, f"autoencoder {ae_n - len(ae_fail)}/{ae_n} and VAE {vae_n - len(vae_fail)}/{vae_n} "
                  f"coordinates within max(1e-4, 1e-2|g|), {elapsed:.1f} s (< 60 s)")


def test_criterion_4_reparameterization():
    t = np.linspace(0, 2 * np.pi, 10)
    insts = tuple(np.sin(t + s)[:, None] for s in (0.0, 0.2, 0.4))
    reps = RepresentativeSet(insts, [0, 0, 0], (EXPERT,) * 3, [0, 1, 2], 1)
    model = train_vae(reps, 0, seed=1, epochs=5, hidden=4)
    s = sample_vae(model, 8, seed=2, eps=np.zeros((8, model.latent_length)))
    exact = np.array_equal(s.latents, s.means)
    kl0 = kl_standard_normal(np.zeros(1), np.zeros(1))
    kl1 = kl_standard_normal(np.array([1.0]), np.zeros(1))
    ok = exact and abs(kl0) <= 1e-12 and abs(kl1 - 0.5) <= 1e-12
    record(4, ok, f"eps=0 latent equals mean: {exact}; KL(0,1)={kl0:.1e}, KL(1,1)={kl1:.15f}")


@pytest.mark.slow
def test_criterion_5_end_to_end(benchmark):
    start = time.perf_counter()
    run = generate_labels(benchmark, rep_fraction=0.10, seed=BENCHMARK_SEED)
    elapsed = time.perf_counter() - start
    final = accuracy(run.final.labels, benchmark.labels)
    first = accuracy(run.history[0].labels.labels, benchmark.labels)
    ok = final >= 0.90 and final >= first and elapsed < 300
    record(5, ok, f"label accuracy {final:.3f} (>= 0.90), iteration-1 {first:.3f} (final >= it-1), "
                  f"{len(run.history)} iteration(s), {elapsed:.0f} s (< 300 s)")


@pytest.mark.slow
def test_criterion_6_discriminator_and_termination(benchmark):
    tau, n = 0.05, 100
    prev = np.zeros(n, int)
    at_tau = prev.copy()
    at_tau[:5] = 1
    above = prev.copy()
    above[:6] = 1
    boundary = (mismatch(at_tau, prev) == tau and label_discriminator(at_tau, prev, tau) == 0
                and label_discriminator(above, prev, tau) == 1)
    max_iterations = 10
    lengths = {}
    for seed in range(1, 21):
        run = generate_labels(benchmark, rep_fraction=0.10, seed=seed, max_iterations=max_iterations)
        lengths[seed] = len(run.history)
    terminated = all(1 <= v <= max_iterations for v in lengths.values())
    saturated = sum(1 for s in lengths if lengths[s] < max_iterations)
    record(6, boundary and terminated,
           f"mismatch=tau -> reward 0, tau+1/n -> reward 1: {boundary}; seeds 1-20 stopped within "
           f"{max_iterations} iterations: {terminated} (iterations {sorted(lengths.values())}, "
           f"{saturated}/20 saturated)")


def _ucr_files():
    root = os.environ.get(UCR_DIR_ENV)
    if not root:
        return None
    root = Path(root)
    train = root / "DistalPhalanxOutlineAgeGroup_TRAIN.tsv"
    test = root / "DistalPhalanxOutlineAgeGroup_TEST.tsv"
    return (train, test) if train.is_file() and test.is_file() else None


def test_criterion_7_distal_phalanx():
    files = _ucr_files()
    if files is None:
        skip(7, f"non-gating; set {UCR_DIR_ENV} to a directory holding "
                "DistalPhalanxOutlineAgeGroup_TRAIN.tsv and _TEST.tsv")
    train = znormalize(load_dataset(files[0]))
    test = znormalize(load_dataset(files[1], classes=train.classes))
    run = generate_labels(train, rep_fraction=0.15, seed=BENCHMARK_SEED)
    cl_scores = run.history[-1]
    # measure chosen must be the Hubert argmax over the three measures
    from autolabel.labeling import merged_embeddings
    from autolabel.clustering import best_clustering
    cl = best_clustering(merged_embeddings(run.model, run.X_u, run.reps), train.class_count)
    chosen_ok = cl.measure.tag == select_measure(cl.scores) == cl_scores.measure
    acc_gen = accuracy(knn_classify(train, run.final.labels, test, 1), test.labels)
    acc_true = accuracy(knn_classify(train, train.labels, test, 1), test.labels)
    ok = chosen_ok and abs(acc_true - acc_gen) <= 0.15
    scores = ", ".join(f"{k}={v:.3f}" for k, v in cl.scores.items())
    record(7, ok, f"measure {cl.measure.tag} ({scores}); 1-NN generated {acc_gen:.3f} vs true "
                  f"{acc_true:.3f} (gap <= 0.15)")


@pytest.mark.slow
def test_criterion_8_determinism(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    write_ucr_tsv(make_benchmark(seed=BENCHMARK_SEED), data / "synthetic_TRAIN.tsv")
    write_ucr_tsv(make_benchmark(n_per_class=40, seed=BENCHMARK_SEED + 1), data / "synthetic_TEST.tsv")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["evaluate", "--train", str(data / "synthetic_TRAIN.tsv"),
                     "--test", str(data / "synthetic_TEST.tsv"), "--rep-frac", "0.10",
                     "--output-dir", str(out), "--no-figures"])
        assert code == 0
        outs.append(out)
    files = ("labels.csv", "iterations.json", "report.json")
    same = {f: (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files}
    label_acc = json.loads((outs[0] / "report.json").read_text())["label_accuracy"]
    record(8, all(same.values()),
           "byte-identical " + ", ".join(f"{f}={v}" for f, v in same.items())
           + f" (label accuracy {label_acc})")


def test_criterion_9_undercomplete_guard(monkeypatch, tmp_path, capsys):
    calls = []
    real = aecs_module.train_loop
    monkeypatch.setattr(aecs_module, "train_loop", lambda *a, **k: calls.append(1) or real(*a, **k))
    insts = [np.zeros((12, 1)) for _ in range(4)]
    raised = False
    try:
        aecs_module.train_aecs(insts, p=12)
    except ConfigurationError:
        raised = True
    path = tmp_path / "short.tsv"
    write_ucr_tsv(make_benchmark(n_per_class=20, length=10, seed=1), path)
    code = main(["label", "--train", str(path), "--compact-length", "10", "--output-dir", str(tmp_path / "o")])
    err = capsys.readouterr().err
    ok = raised and not calls and code == 2 and "compact length" in err
    record(9, ok, f"p = min length raises ConfigurationError: {raised}; training epochs run: {len(calls)}; "
                  f"CLI exit {code} (2)")
