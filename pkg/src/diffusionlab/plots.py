"""Figure rendering for reports and traces.

Figures are written as SVG through matplotlib's Agg backend with a fixed
hash salt and no embedded date, so identical inputs produce byte-identical
files; parallel/diffusion axes use a logarithmic grid scale.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "diffusionlab"
matplotlib.rcParams["svg.fonttype"] = "none"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _new_axes(figsize=(6.0, 4.0)):
    fig, ax = plt.subplots(figsize=figsize)
    return fig, ax


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_scaling_report(report, path) -> None:
    """Accuracy against the swept axis; log grid for parallel/diffusion."""
    if not report.grid:
        raise ValueError("cannot plot an empty report")
    fig, ax = _new_axes()
    if report.axis == "parallel" and report.pass_at_k_table:
        for temp in sorted(report.pass_at_k_table):
            ax.plot(
                report.grid,
                report.pass_at_k_table[temp],
                marker="o",
                label=f"temperature {temp:g}",
            )
        ax.set_xlabel("k (samples)")
        ax.set_ylabel("pass@k (success probability)")
        ax.set_xscale("log", base=2)
        ax.legend()
    else:
        ax.plot(report.grid, report.accuracy, marker="o")
        ax.set_ylabel("accuracy (exact answer match)")
        if report.axis == "diffusion":
            ax.set_xlabel("diffusion steps")
            ax.set_xscale("log", base=2)
        else:
            ax.set_xlabel("generation length (tokens)")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.set_title(f"{report.axis} scaling")
    _finish(fig, path)


def plot_entropy_gap(ks, serial_entropy, parallel_entropy, path) -> None:
    """Mean skip entropies and their gap as a function of skip distance."""
    ks = list(ks)
    if not ks:
        raise ValueError("cannot plot an empty entropy curve")
    fig, ax = _new_axes()
    gap = [s - p for s, p in zip(serial_entropy, parallel_entropy)]
    ax.plot(ks, serial_entropy, marker="o", label="serial")
    ax.plot(ks, parallel_entropy, marker="s", label="parallel")
    ax.plot(ks, gap, marker="^", linestyle="--", label="gap")
    ax.set_xlabel("skip distance k (steps)")
    ax.set_ylabel("conditional entropy (bits)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title("skip-step conditional entropy")
    _finish(fig, path)


def plot_sensitivity_profiles(profiles, path) -> None:
    """Reference-outcome probability against perturbation radius."""
    if not profiles:
        raise ValueError("cannot plot an empty profile set")
    fig, ax = _new_axes()
    for label, profile in sorted(profiles.items()):
        ax.plot(profile.radii, profile.mean_reference_prob, marker="o", label=label)
    ax.set_xlabel("perturbation radius (state units)")
    ax.set_ylabel("mean reference-outcome probability")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title("sensitivity to initial-state perturbations")
    _finish(fig, path)


def plot_overlap_history(trace, path) -> None:
    """Per-step overlap ratios of one decode, with the commit counts."""
    fig, ax = _new_axes()
    steps = [record.step for record in trace.records]
    commits = [len(record.committed_positions) for record in trace.records]
    ax.bar(steps, commits, alpha=0.3, label="tokens committed")
    ax.set_xlabel("diffusion step")
    ax.set_ylabel("tokens committed")
    if trace.overlap_ratios:
        ax2 = ax.twinx()
        ax2.plot(steps[1:], trace.overlap_ratios, marker="o", color="C1", label="overlap ratio")
        ax2.set_ylabel("overlap ratio")
        ax2.set_ylim(-0.02, 1.02)
    ax.set_title("decode progress")
    _finish(fig, path)


def plot_frontier(frontier, path) -> None:
    """Accuracy heatmap over (steps, length) with the minimal-steps curve."""
    fig, ax = _new_axes()
    mesh = ax.imshow(
        frontier.accuracy,
        origin="lower",
        aspect="auto",
        vmin=0.0,
        vmax=1.0,
        cmap="viridis",
    )
    ax.set_xticks(np.arange(len(frontier.steps)), [str(s) for s in frontier.steps])
    ax.set_yticks(np.arange(len(frontier.lengths)), [str(v) for v in frontier.lengths])
    ax.set_xlabel("diffusion steps")
    ax.set_ylabel("generation length (tokens)")
    steps_index = {s: i for i, s in enumerate(frontier.steps)}
    ax.plot(
        [steps_index[s] for s in frontier.minimal_steps],
        np.arange(len(frontier.lengths)),
        marker="o",
        color="white",
        label="minimal steps",
    )
    fig.colorbar(mesh, ax=ax, label="accuracy")
    ax.legend()
    ax.set_title("step-budget efficiency frontier")
    _finish(fig, path)
