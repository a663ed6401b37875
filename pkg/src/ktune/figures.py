"""Figure rendering for the report and analysis commands.

Every plot is written straight to a file (Agg backend, no display) next
to the CSV/JSON it visualizes. The delimited outputs stay the canonical
machine-readable artifacts; figures are for humans.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .asmstats import DiversityReport
from .report import CdfSummary, NormalizedRow, TransferCell


def render_normalized(
    rows: list[NormalizedRow], x_key: str, group_keys: tuple[str, ...], path
) -> None:
    """One panel per group: normalized latency vs x, one line per impl."""
    groups: list[tuple] = []
    for r in rows:
        g = tuple(r.shape.dims[k] for k in group_keys)
        if g not in groups:
            groups.append(g)
    ncols = max(1, len(groups))
    fig, axes = plt.subplots(1, ncols, figsize=(4.2 * ncols, 3.4), squeeze=False, sharey=True)
    for ax, g in zip(axes[0], groups):
        members = [r for r in rows if tuple(r.shape.dims[k] for k in group_keys) == g]
        impls = []
        for r in members:
            if r.impl not in impls:
                impls.append(r.impl)
        for impl in impls:
            pts = sorted(
                ((r.shape.dims[x_key], r.normalized) for r in members if r.impl == impl),
                key=lambda p: p[0],
            )
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=impl)
        title = ", ".join(f"{k}={v}" for k, v in zip(group_keys, g)) or "all shapes"
        ax.set_title(title, fontsize=9)
        ax.set_xlabel(x_key)
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("normalized latency (lower is better)")
    axes[0][-1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_cdf(summary: CdfSummary, path, label: str = "candidate vs baseline") -> None:
    """Cumulative distribution of per-shape relative performance."""
    n = len(summary.ratios)
    xs = summary.ratios
    ys = [(i + 1) / n for i in range(n)]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.step(xs, ys, where="post", label=label)
    ax.axvline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("relative performance (baseline / candidate; >1 means faster)")
    ax.set_ylabel("cumulative fraction of shapes")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_transfer(cells: list[TransferCell], x_key: str | None, path) -> None:
    """Relative performance of the transferred config per shape; invalid
    cells show as hatched markers at zero, mirroring missing values."""
    if x_key is None and cells:
        x_key = next(iter(cells[0].shape.dims))
    labels = [str(c.shape.dims.get(x_key, c.shape)) for c in cells]
    values = [c.relative_perf if c.relative_perf is not None else 0.0 for c in cells]
    colors = ["#d62728" if c.is_invalid else "#1f77b4" for c in cells]
    hatches = ["//" if c.is_invalid else "" for c in cells]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(cells) + 2), 3.4))
    bars = ax.bar(range(len(cells)), values, color=colors)
    for bar, h in zip(bars, hatches):
        bar.set_hatch(h)
    ax.axhline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_xlabel(x_key or "shape")
    ax.set_ylabel("relative perf of transferred config")
    if any(c.is_invalid for c in cells):
        ax.set_title("hatched red = invalid on target platform", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_diversity(report: DiversityReport, path) -> None:
    """Unique mnemonics (left axis) and total instructions (right axis)
    per variant, with the tuner's pick marked."""
    xs = list(range(len(report.rows)))
    unique = [s.unique_mnemonics for s in report.rows]
    total = [s.total_instructions for s in report.rows]
    fig, ax1 = plt.subplots(figsize=(6.4, 3.6))
    ax1.plot(xs, unique, color="#1f77b4", label="unique mnemonics")
    ax1.set_xlabel("variant")
    ax1.set_ylabel("unique mnemonics", color="#1f77b4")
    ax2 = ax1.twinx()
    ax2.plot(xs, total, color="#2ca02c", label="total instructions")
    ax2.set_ylabel("total instructions", color="#2ca02c")
    if report.best_id is not None:
        for i, s in enumerate(report.rows):
            if s.source_id == report.best_id:
                ax1.plot([i], [s.unique_mnemonics], "o", color="#d62728", markersize=9,
                         label="selected best")
                break
    ax1.grid(True, alpha=0.3)
    fig.legend(loc="upper left", bbox_to_anchor=(0.12, 0.95), fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
