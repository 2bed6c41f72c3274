"""Render training and evaluation reports as figures plus delimited files."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_training_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "wallclock"])
        for stats in report.epochs:
            writer.writerow([stats.epoch, f"{stats.mean_loss:.6f}",
                             f"{stats.wallclock:.3f}"])


def save_loss_curve(report, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([s.epoch for s in report.epochs], [s.mean_loss for s in report.epochs],
            marker="o", markersize=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean token NLL")
    ax.set_title(f"training loss ({report.model_variant})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_score_csv(score_report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "top_n", "score"])
        for metric, by_n in score_report.scores.items():
            for n in score_report.n_values:
                writer.writerow([metric, n, f"{by_n[n]:.4f}"])
        writer.writerow(["diversity", "", f"{score_report.diversity:.4f}"])


def save_score_figure(score_report, path) -> None:
    metric_names = list(score_report.scores)
    n_values = score_report.n_values
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(n_values), 1)
    for slot, n in enumerate(n_values):
        xs = [i + slot * width for i in range(len(metric_names))]
        ys = [score_report.scores[m][n] for m in metric_names]
        ax.bar(xs, ys, width=width, label=f"N={n}")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(metric_names))])
    ax.set_xticklabels(metric_names)
    ax.set_ylabel("score")
    ax.set_title(f"top-N scores ({score_report.top_n_mode} of best N)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
