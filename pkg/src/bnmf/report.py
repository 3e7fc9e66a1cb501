"""Figure rendering for the experiment reports.

All figures go straight to PNG files through the Agg backend, which keeps
rendering deterministic and display-free.  Styling is deliberately plain:
one color per model, log-scaled error axes where curves span decades.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

MODEL_COLORS = {
    "gee": "tab:blue",
    "gl12": "tab:orange",
    "gl22": "tab:green",
    "glinf": "tab:red",
    "gl2inf": "tab:purple",
}


def _color(label: str) -> str:
    return MODEL_COLORS.get(label, "tab:gray")


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=150, facecolor="white", bbox_inches="tight")
    plt.close(fig)


def fit_figure(iterations, train_mse, sigma2_history, title: str):
    """Training error and noise variance along a single chain."""
    fig, (ax_mse, ax_s2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    ax_mse.plot(iterations, train_mse, color="tab:blue", lw=1.2)
    ax_mse.set_yscale("log")
    ax_mse.set_xlabel("iteration")
    ax_mse.set_ylabel("training MSE")
    ax_mse.grid(True, alpha=0.3)
    ax_s2.plot(iterations, sigma2_history, color="tab:red", lw=1.2)
    ax_s2.set_yscale("log")
    ax_s2.set_xlabel("iteration")
    ax_s2.set_ylabel("noise variance")
    ax_s2.grid(True, alpha=0.3)
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def sweep_figure(curves: dict, title: str):
    """Convergence curves on a model-by-K grid.

    ``curves`` maps (model_label, k) to an array of per-iteration MSE.
    One panel per k, one line per model.
    """
    ks = sorted({k for _, k in curves})
    fig, axes = plt.subplots(
        1, len(ks), figsize=(3.2 * len(ks), 3.2), squeeze=False, sharey=True
    )
    for ax, k in zip(axes[0], ks):
        for (label, kk), mse in sorted(curves.items()):
            if kk != k:
                continue
            ax.plot(
                np.arange(1, len(mse) + 1), mse,
                color=_color(label), lw=1.0, label=label,
            )
        ax.set_yscale("log")
        ax.set_title(f"K = {k}")
        ax.set_xlabel("iteration")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("training MSE")
    axes[0][-1].legend(fontsize=8, frameon=False)
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def holdout_figure(rows: list[dict], title: str):
    """Held-out MSE against K, one panel per unobserved fraction."""
    fractions = sorted({row["unobserved_fraction"] for row in rows})
    fig, axes = plt.subplots(
        1, len(fractions), figsize=(3.4 * len(fractions), 3.2),
        squeeze=False, sharey=True,
    )
    for ax, frac in zip(axes[0], fractions):
        sub = [row for row in rows if row["unobserved_fraction"] == frac]
        for label in sorted({row["model"] for row in sub}):
            pts = sorted(
                (row["k"], row["test_mse"]) for row in sub if row["model"] == label
            )
            ax.plot(
                [p[0] for p in pts], [p[1] for p in pts],
                marker="o", ms=3.5, lw=1.0, color=_color(label), label=label,
            )
        ax.set_yscale("log")
        ax.set_title(f"unobserved {frac:g}")
        ax.set_xlabel("K")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("test MSE")
    axes[0][-1].legend(fontsize=8, frameon=False)
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def noise_figure(rows: list[dict], title: str):
    """Variance-to-MSE ratio against the noise ratio, one line per model."""
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    for label in sorted({row["model"] for row in rows}):
        pts = sorted(
            (row["noise_ratio"], row["variance_to_mse"])
            for row in rows
            if row["model"] == label
        )
        ax.plot(
            [p[0] for p in pts], [p[1] for p in pts],
            marker="o", ms=3.5, lw=1.0, color=_color(label), label=label,
        )
    ax.set_yscale("log")
    ax.set_xlabel("noise-to-signal ratio")
    ax.set_ylabel("variance / test MSE")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, frameon=False)
    ax.set_title(title)
    fig.tight_layout()
    return fig


def histogram_figure(values, title: str):
    """Distribution of the observed entries."""
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    ax.hist(np.asarray(values).ravel(), bins=40, color="tab:blue", alpha=0.85)
    ax.set_xlabel("value")
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    return fig
