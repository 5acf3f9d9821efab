"""Figure rendering for race traces.

Reads the per-lap trace CSV and renders the duel as PNG files next to the
delimited output: a four-panel race overview (fuel allocation, battery
allocation, pit decisions, gap evolution) and a compound-colored strategy
timeline with pit markers.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .config import CODE_COMPOUND

CAR_COLORS = {1: "tab:blue", 2: "tab:red"}
COMPOUND_COLORS = {1: "#d62728", 2: "#f2c200", 3: "#e8e8e8"}  # soft, medium, hard


@dataclass
class TraceSeries:
    lap: np.ndarray
    e_b: np.ndarray
    e_f: np.ndarray
    tc: np.ndarray
    tw: np.ndarray
    ta: np.ndarray
    ps: np.ndarray
    d_ef: np.ndarray
    d_eb: np.ndarray
    t_lap: np.ndarray
    t_race: np.ndarray
    t_gap: np.ndarray
    dt_int: np.ndarray


def read_trace(path: str | Path) -> dict[int, TraceSeries]:
    """Parse a trace CSV into per-car series keyed by car number."""
    rows: dict[int, list[dict]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["car"]), []).append(row)
    out = {}
    for car, items in rows.items():
        items.sort(key=lambda r: int(r["lap"]))
        grab = lambda key, cast=float: np.array([cast(r[key]) for r in items])
        out[car] = TraceSeries(
            lap=grab("lap", int),
            e_b=grab("e_b"),
            e_f=grab("e_f"),
            tc=grab("tc", int),
            tw=grab("tw"),
            ta=grab("ta", int),
            ps=grab("ps", int),
            d_ef=grab("d_ef_realized"),
            d_eb=grab("d_eb_realized"),
            t_lap=grab("t_lap"),
            t_race=grab("t_race"),
            t_gap=grab("t_gap"),
            dt_int=grab("dt_int"),
        )
    return out


def render_race_overview(
    trace_path: str | Path,
    out_path: str | Path | None = None,
    labels: dict[int, str] | None = None,
) -> Path:
    """Four stacked panels: fuel %, battery allocation, pit calls, gap."""
    cars = read_trace(trace_path)
    labels = labels or {1: "car 1", 2: "car 2"}
    if out_path is None:
        out_path = Path(trace_path).with_suffix(".overview.png")
    out_path = Path(out_path)

    fig, axes = plt.subplots(4, 1, figsize=(9, 10), sharex=True)
    for car, s in sorted(cars.items()):
        color = CAR_COLORS.get(car, None)
        axes[0].plot(s.lap, 100.0 * s.d_ef, color=color, label=labels.get(car, str(car)))
        axes[1].plot(s.lap, s.d_eb, color=color)
        mask = s.ps > 0
        if mask.any():
            axes[2].vlines(s.lap[mask], 0, s.ps[mask], color=color, lw=1)
            axes[2].plot(s.lap[mask], s.ps[mask], "o", color=color, fillstyle="none")
    axes[0].set_ylabel("fuel allocation [%]")
    axes[0].legend(loc="best")
    axes[1].set_ylabel("battery allocation [-]")
    axes[1].set_ylim(-1.3, 1.3)
    axes[2].set_ylabel("pit decision")
    axes[2].set_yticks([0, 1, 2, 3], ["stay", "soft", "medium", "hard"])
    axes[2].set_ylim(-0.3, 3.3)
    if 1 in cars:
        axes[3].plot(cars[1].lap, cars[1].t_gap, color="black")
        axes[3].axhline(0.0, color="gray", lw=0.5)
    axes[3].set_ylabel("gap of car 1 [s]")
    axes[3].set_xlabel("lap")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)
    return out_path


def render_strategy_timeline(
    trace_path: str | Path,
    out_path: str | Path | None = None,
    labels: dict[int, str] | None = None,
) -> Path:
    """Stint bars colored by compound, with pit-stop markers."""
    cars = read_trace(trace_path)
    labels = labels or {1: "car 1", 2: "car 2"}
    if out_path is None:
        out_path = Path(trace_path).with_suffix(".strategy.png")
    out_path = Path(out_path)

    fig, ax = plt.subplots(figsize=(9, 1.2 + 0.8 * len(cars)))
    yticks, ylabels = [], []
    for row, (car, s) in enumerate(sorted(cars.items())):
        stints = []
        start = 0
        for i in range(len(s.lap)):
            if s.ps[i] > 0:
                # a pit lap is raced on the outgoing set; trace rows carry the new one
                old_code = s.tc[i - 1] if i > 0 else 2
                stints.append((start, i + 1, old_code))
                start = i + 1
        stints.append((start, len(s.lap), s.tc[-1]))
        for lo, hi, code in stints:
            ax.barh(
                row, hi - lo, left=lo, height=0.5,
                color=COMPOUND_COLORS.get(int(code), "gray"),
                edgecolor="black", linewidth=0.6,
            )
        pit_laps = s.lap[s.ps > 0]
        ax.plot(pit_laps, np.full(len(pit_laps), row), "kv", markersize=7)
        yticks.append(row)
        ylabels.append(labels.get(car, str(car)))
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=COMPOUND_COLORS[c], ec="black")
        for c in (1, 2, 3)
    ]
    ax.legend(handles, [CODE_COMPOUND[c] for c in (1, 2, 3)], loc="upper right", ncols=3)
    ax.set_yticks(yticks, ylabels)
    ax.set_xlabel("lap")
    ax.set_ylim(-0.6, len(cars) - 0.2)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    plt.close(fig)
    return out_path


def render_trace_report(trace_path: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render every figure for one trace; returns the written paths."""
    trace_path = Path(trace_path)
    if out_dir is not None:
        base = Path(out_dir) / trace_path.stem
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    else:
        base = trace_path.with_suffix("")
    return [
        render_race_overview(trace_path, Path(str(base) + ".overview.png")),
        render_strategy_timeline(trace_path, Path(str(base) + ".strategy.png")),
    ]
