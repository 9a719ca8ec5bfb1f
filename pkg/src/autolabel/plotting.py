"""PNG figures written next to the CSV/JSON outputs."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_embedding(scores, labels, path, title="AECS embedding (PCA)"):
    labels = np.asarray(labels)
    fig, ax = plt.subplots(figsize=(5, 4))
    for lab in np.unique(labels):
        sel = labels == lab
        ax.scatter(scores[sel, 0], scores[sel, 1], s=12, alpha=0.8, label=str(lab))
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    ax.set_title(title)
    ax.legend(title="label", fontsize=8)
    return _save(fig, path)


def plot_iterations(records, path, tau=None):
    its = [r["iteration"] for r in records]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(its, [r["mismatch"] for r in records], "o-", label="mismatch")
    if tau is not None:
        ax.axhline(tau, color="grey", ls="--", lw=1, label="tau")
    ax.set_xlabel("iteration")
    ax.set_ylabel("label mismatch")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xticks(its)
    ax2 = ax.twinx()
    ax2.bar(its, [r["pool_size"] for r in records], alpha=0.2, color="C1", label="pool size")
    ax2.set_ylabel("representative pool size")
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def plot_accuracies(report, path):
    names = list(report.classifiers)
    gen = [report.classifiers[n].accuracy_generated for n in names]
    true = [report.classifiers[n].accuracy_true for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.bar(x - 0.18, true, 0.36, label="true labels")
    ax.bar(x + 0.18, gen, 0.36, label="generated labels")
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1)
    ax.set_ylabel("test accuracy")
    ax.set_title(report.dataset)
    ax.legend(fontsize=8)
    return _save(fig, path)
