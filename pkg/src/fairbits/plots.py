"""Figure rendering for sweep and bounds reports (PNG files next to the CSV)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bounds import RdcEstimate
from .harness import ExperimentRow


def render_sweep_figure(rows: list[ExperimentRow], path: str | Path) -> Path:
    """Bits per agent across the sweep grid, one line per protocol."""
    path = Path(path)
    fig, (ax_bits, ax_rate) = plt.subplots(
        1, 2, figsize=(9, 3.6), constrained_layout=True
    )
    by_protocol: dict[str, list[ExperimentRow]] = {}
    for r in rows:
        by_protocol.setdefault(r.protocol, []).append(r)
    ns = {r.n for r in rows}
    x_attr = "n" if len(ns) > 1 else "m"
    for pid, group in sorted(by_protocol.items()):
        group = sorted(group, key=lambda r: (getattr(r, x_attr), r.m))
        xs = [getattr(r, x_attr) for r in group]
        ax_bits.plot(xs, [r.mean_bits_per_agent for r in group], "o-", label=pid)
        ax_rate.plot(xs, [r.fairness_pass_rate for r in group], "s--", label=pid)
    ax_bits.set_xlabel(x_attr)
    ax_bits.set_ylabel("mean bits per agent")
    ax_bits.set_title("communication per agent")
    ax_bits.grid(True, alpha=0.3)
    ax_bits.legend(fontsize=8)
    ax_rate.set_xlabel(x_attr)
    ax_rate.set_ylabel("fairness pass rate")
    ax_rate.set_ylim(-0.05, 1.05)
    ax_rate.set_title("verification")
    ax_rate.grid(True, alpha=0.3)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_bounds_figure(estimates: list[RdcEstimate], path: str | Path) -> Path:
    """Bar chart of the implied bits floor per estimate."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.5, 3.6), constrained_layout=True)
    labels = [f"{e.family}\n{e.notion} n={e.n} m={e.m}" for e in estimates]
    ax.bar(range(len(estimates)), [e.bound_bits for e in estimates], color="#4477aa")
    ax.set_xticks(range(len(estimates)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("bits floor  log2(1/p)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
