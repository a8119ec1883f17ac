"""Report figures rendered headlessly next to the delimited outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import BREAKDOWN_CATEGORIES


def training_curve(report, path):
    """Train loss and dev F1 per epoch on twin axes."""
    epochs = [r.epoch for r in report.rows]
    fig, ax_loss = plt.subplots(figsize=(7, 4))
    ax_loss.plot(epochs, [r.train_loss for r in report.rows], "o-", color="tab:red", label="train loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss", color="tab:red")
    ax_f1 = ax_loss.twinx()
    ax_f1.plot(epochs, [r.dev_seg_f1 for r in report.rows], "s-", color="tab:blue", label="dev seg F1")
    if any(r.dev_labeled_f1 is not None for r in report.rows):
        ax_f1.plot(
            epochs,
            [r.dev_labeled_f1 for r in report.rows],
            "^-",
            color="tab:green",
            label="dev labeled F1",
        )
    ax_f1.set_ylabel("dev F1")
    ax_f1.set_ylim(0.0, 1.05)
    if report.best_epoch:
        ax_f1.axvline(report.best_epoch, color="gray", linestyle=":", label="best epoch")
    lines, labels = [], []
    for ax in (ax_loss, ax_f1):
        ln, lb = ax.get_legend_handles_labels()
        lines += ln
        labels += lb
    ax_f1.legend(lines, labels, loc="center right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def error_breakdown_figure(breakdown, path):
    """Bar chart of the five error-taxonomy categories."""
    titles = [title for _, title in BREAKDOWN_CATEGORIES]
    counts = [getattr(breakdown, name) for name, _ in BREAKDOWN_CATEGORIES]
    fig, ax = plt.subplots(figsize=(7, 4))
    bars = ax.bar(range(len(titles)), counts, color="tab:blue")
    ax.bar_label(bars)
    ax.set_xticks(range(len(titles)))
    ax.set_xticklabels(titles, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("events")
    total = breakdown.total
    ax.set_title(f"{total} error events in {breakdown.sampled_sentences} sampled sentences")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def eval_figure(report, path):
    """Precision/recall/F1 bars for one evaluation report."""
    fig, ax = plt.subplots(figsize=(5, 4))
    values = [report.precision, report.recall, report.f1]
    bars = ax.bar(["precision", "recall", "F1"], values, color=["tab:blue", "tab:orange", "tab:green"])
    ax.bar_label(bars, fmt="%.4f")
    ax.set_ylim(0.0, 1.1)
    ax.set_title(f"task {report.task}: {report.matched} matched / {report.predicted} predicted / {report.gold} gold")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
