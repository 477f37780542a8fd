"""Step-curve figures for reports.

Figures are written with fixed metadata so repeated runs give identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "svg.hashsalt": "dcsurv",
    "svg.fonttype": "none",
}


def _save(fig, path):
    path = str(path)
    meta = {"Date": None} if path.endswith((".svg", ".pdf")) else {"Software": None}
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=meta)
    plt.close(fig)


def plot_mean_curves(grid, curves: dict, path, title: str = "") -> None:
    """Two panels (treated, control), one step line per method."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2), sharey=True)
        for ax, idx, label in ((axes[0], 0, "treated"), (axes[1], 1, "control")):
            for name, pair in curves.items():
                lw, ls = (1.8, "-") if name.upper().startswith("CA") else (1.0, "--")
                ax.step(grid, pair[idx], where="post", lw=lw, ls=ls, label=name)
            ax.set_title(label)
            ax.set_xlabel("time")
            ax.set_ylim(0, 1.02)
        axes[0].set_ylabel("survival probability")
        axes[1].legend(fontsize=7, loc="upper right")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def plot_arms(treated, control, path, title: str = "") -> None:
    """Kaplan-Meier curves of the two matched arms."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for curve, label, ls in ((treated, "treated", "-"), (control, "control", "--")):
            t = np.concatenate([[0.0], curve.times])
            s = np.concatenate([[1.0], curve.survival])
            ax.step(t, s, where="post", ls=ls, label=label)
        ax.set_xlabel("time")
        ax.set_ylabel("survival probability")
        ax.set_ylim(0, 1.02)
        ax.legend()
        if title:
            ax.set_title(title)
        _save(fig, path)
