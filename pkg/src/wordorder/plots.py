"""Figure rendering for evaluation reports (written next to the delimited
output by the CLI)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_lexical_errors(report, path):
    """Binned missing/redundant rates as bars with the length ratio overlaid."""
    bins = sorted(report.bins)
    if not bins:
        return
    xs = range(len(bins))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar([x - width / 2 for x in xs], [report.bins[b]["missing"] for b in bins],
           width=width, label="missing", color="#d62728")
    ax.bar([x + width / 2 for x in xs], [report.bins[b]["redundant"] for b in bins],
           width=width, label="redundant", color="#1f77b4")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([f"{b}-{b + report.bin_width - 1}" for b in bins], rotation=45)
    ax.set_xlabel("reference length")
    ax.set_ylabel("rate")
    ax2 = ax.twinx()
    ax2.plot(list(xs), [report.bins[b]["length_ratio"] for b in bins],
             color="#2ca02c", marker="o", label="length ratio")
    ax2.set_ylabel("length ratio")
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_beam_sweep(table, path):
    """BLEU against beam size, one line per decoding mode."""
    beams = sorted({b for b, _ in table})
    modes = sorted({m for _, m in table})
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in modes:
        ax.plot(beams, [table[(b, mode)] for b in beams], marker="o", label=mode)
    ax.set_xscale("log", base=2)
    ax.set_xticks(beams)
    ax.set_xticklabels([str(b) for b in beams])
    ax.set_xlabel("beam size")
    ax.set_ylabel("BLEU")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
