"""Figures rendered next to the delimited report files.

Only the CLI imports this module, and only when ``--plot`` is given, so
the library itself never needs a rendering backend. PNGs are written
without timestamp metadata so reruns are byte-identical.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .select import SweepRow  # noqa: E402
from .sim import EpochOutcome  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "savefig.dpi": 120,
}

HIGH_COLOR = "#c0392b"
LOW_COLOR = "#2e6fb5"


def save(fig, path: Path) -> Path:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _hours(outcomes: Sequence[EpochOutcome], epoch_minutes: int) -> list[float]:
    return [o.epoch_id * epoch_minutes / 60 for o in outcomes]


def plot_zone_day(
    outcomes: Sequence[EpochOutcome], path: Path, budget: float, epoch_minutes: int = 10
) -> Path:
    """Witness counts, cost and error over one zone's day, stacked vertically."""
    with plt.rc_context(STYLE):
        fig, (ax_w, ax_c, ax_e) = plt.subplots(3, 1, sharex=True, figsize=(6.4, 6.4))
        t = _hours(outcomes, epoch_minutes)
        ax_w.step(t, [o.high_available for o in outcomes], where="post", color=HIGH_COLOR,
                  ls="--", label="high available")
        ax_w.step(t, [o.low_available for o in outcomes], where="post", color=LOW_COLOR,
                  ls=":", label="low available")
        ax_w.step(t, [o.high_selected for o in outcomes], where="post", color=HIGH_COLOR,
                  label="high selected")
        ax_w.step(t, [o.low_selected for o in outcomes], where="post", color=LOW_COLOR,
                  label="low selected")
        ax_w.set_ylabel("witnesses")
        ax_w.legend(ncol=2, loc="upper left")

        ax_c.step(t, [o.all_witness_cost for o in outcomes], where="post", color="0.5",
                  ls=":", label="all available")
        ax_c.step(t, [o.total_cost for o in outcomes], where="post", color="k", label="selected")
        ax_c.axhline(budget, color="0.3", lw=0.8, ls="--")
        ax_c.set_ylabel("cost (cents)")
        ax_c.legend(loc="upper left")

        ax_e.step(t, [o.theoretical_error for o in outcomes], where="post", color="k")
        ax_e.set_yscale("log")
        ax_e.set_ylabel("verification error")
        ax_e.set_xlabel("hour of day")
        ax_e.set_xlim(0, 24)
        ax_e.set_xticks(range(0, 25, 3))
        ax_w.set_title(outcomes[0].zone if outcomes else "")
        fig.tight_layout()
        return save(fig, path)


def plot_ccdf(points: Sequence[tuple[float, float]], path: Path, xlabel: str, marker: float | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        xs = [points[0][0]] + [x for x, _ in points]
        ys = [1.0] + [y for _, y in points]
        ax.step(xs, ys, where="post", color="k")
        if marker is not None:
            ax.axvline(marker, color="0.4", lw=0.8, ls="--")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("CCDF")
        ax.set_ylim(0, 1.02)
        fig.tight_layout()
        return save(fig, path)


def plot_budget_sweep(rows: Sequence[SweepRow], path: Path) -> Path:
    """Stacked high/low counts per budget with the resulting error on a twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        budgets = [r.budget for r in rows]
        highs = [r.high for r in rows]
        lows = [r.low for r in rows]
        width = (budgets[1] - budgets[0]) * 0.8 if len(budgets) > 1 else 0.8
        ax.bar(budgets, highs, width=width, color=HIGH_COLOR, label="high-class")
        ax.bar(budgets, lows, width=width, bottom=highs, color=LOW_COLOR, label="low-class")
        ax.set_xlabel("budget (cents)")
        ax.set_ylabel("selected witnesses")
        ax.legend(loc="upper left")
        err = ax.twinx()
        err.plot(budgets, [r.error for r in rows], color="k", lw=1.0)
        err.set_yscale("log")
        err.set_ylabel("verification error")
        err.grid(False)
        fig.tight_layout()
        return save(fig, path)
