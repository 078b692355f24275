"""Figures written next to the CLI's delimited reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _savefig(fig, path):
    fig.tight_layout()
    fig.savefig(path, bbox_inches="tight", dpi=120)
    plt.close(fig)


def plot_scaling(rows, path, title=None):
    """Log-log timing plot from bench rows ``{"backend", "n", "t_pre", "t_main"}``.

    An ``N log N`` guide is anchored at the smallest treecode run.
    """
    fig, ax = plt.subplots(figsize=(5, 4))
    for backend in sorted({r["backend"] for r in rows}):
        sel = sorted((r for r in rows if r["backend"] == backend), key=lambda r: r["n"])
        n = np.array([r["n"] for r in sel], dtype=float)
        ax.loglog(n, [r["t_main"] for r in sel], "o-", label=f"{backend} T_main")
        ax.loglog(n, [r["t_pre"] for r in sel], "s--", alpha=0.6, label=f"{backend} T_pre")
        if backend == "treecode" and len(n) > 1:
            guide = n * np.log(n)
            ax.loglog(n, sel[0]["t_main"] * guide / guide[0], ":", color="gray", label="N log N")
    ax.set_xlabel("points")
    ax.set_ylabel("seconds")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    _savefig(fig, path)


def plot_convergence(result, path):
    """Energy, step size and smoothing width per iteration of a solve."""
    it = np.arange(1, len(result.energies) + 1)
    fig, axs = plt.subplots(1, 3, figsize=(12, 3.5))
    axs[0].semilogy(it, result.energies)
    axs[0].set_ylabel("energy after gradient step")
    axs[1].semilogy(it, result.alphas)
    axs[1].set_ylabel("step size alpha")
    axs[2].plot(it, result.widths)
    axs[2].set_ylabel("smoothing width")
    for ax in axs:
        ax.set_xlabel("iteration")
        ax.grid(True, alpha=0.3)
    _savefig(fig, path)


def plot_error_histogram(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(report.per_point_errors, bins=50, range=(0.0, 1.0), log=True)
    ax.set_xlabel("(1 - n_gt . n) / 2")
    ax.set_ylabel("points")
    ax.set_title(f"AE = {report.ae_pcd:.3g}, P_co = {report.p_co:.2f}%")
    _savefig(fig, path)
