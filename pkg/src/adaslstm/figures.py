"""Matplotlib figures rendered to files next to the machine-readable output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def training_curves(history: list[dict], path: str) -> str:
    epochs = [r["epoch"] for r in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [r["train_loss"] for r in history], marker="o", ms=3)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax1.grid(alpha=0.3)
    ax2.plot(epochs, [r["train_accuracy"] for r in history],
             marker="o", ms=3, label="train")
    if any("dev_accuracy" in r for r in history):
        ax2.plot([r["epoch"] for r in history if "dev_accuracy" in r],
                 [r["dev_accuracy"] for r in history if "dev_accuracy" in r],
                 marker="s", ms=3, label="dev")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.legend()
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def depth_histogram_figure(counts: dict[int, int], path: str) -> str:
    depths = sorted(counts)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(depths, [counts[d] for d in depths], color="#4878a8")
    ax.set_xlabel("executed depth")
    ax.set_ylabel("word count")
    ax.set_xticks(depths)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def throughput_figure(names: list[str], values: list[float], errors: list[float],
                      path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, values, yerr=errors, capsize=4, color="#6a9f58")
    ax.set_ylabel("samples / sec")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def ablation_figure(names: list[str], means: list[float], stds: list[float],
                    path: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(names, means, yerr=stds, capsize=4, color="#b0604f")
    ax.set_ylabel("test accuracy")
    lo = min(m - s for m, s in zip(means, stds))
    ax.set_ylim(max(0.0, lo - 0.05), 1.0)
    ax.tick_params(axis="x", rotation=20)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
