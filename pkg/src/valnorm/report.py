"""Report rendering: delimited records, summary tables, and figures.

Every report path writes machine-readable CSV/JSONL next to any figures;
figures are optional and rendered with the Agg backend so headless runs
work.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .costmodel import PlanEstimate


def format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def plan_rows(estimates: Sequence[PlanEstimate],
              true_costs: dict[int, float] | None = None) -> list[dict]:
    rows = []
    for rank, est in enumerate(estimates, start=1):
        row = {
            "rank": rank,
            "cap": est.cap,
            "estimated_minutes": round(est.estimated_seconds / 60.0, 3),
            "estimated_seconds": round(est.estimated_seconds, 3),
            "clusters": est.cluster_count,
            "max_cluster_size": est.max_cluster_size,
            "purity": round(est.purity, 4),
            "split_outputs": round(est.split_output_count, 2),
            "merge_list": round(est.local_merge_output_count, 2),
        }
        if true_costs is not None and est.cap in true_costs:
            row["simulated_seconds"] = round(true_costs[est.cap], 3)
        rows.append(row)
    return rows


def write_plan_report(outdir: Path, estimates: Sequence[PlanEstimate],
                      true_costs: dict[int, float] | None = None,
                      figures: bool = False) -> list[Path]:
    """plans.csv + plans.jsonl (+ cost-vs-cap figure) under ``outdir``."""
    outdir.mkdir(parents=True, exist_ok=True)
    rows = plan_rows(estimates, true_costs)
    written = []
    csv_path = outdir / "plans.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    written.append(csv_path)
    jsonl_path = outdir / "plans.jsonl"
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    written.append(jsonl_path)
    if figures:
        written.append(plot_plan_costs(outdir / "plan_costs.png", estimates, true_costs))
    return written


def plot_plan_costs(path: Path, estimates: Sequence[PlanEstimate],
                    true_costs: dict[int, float] | None = None) -> Path:
    ordered = sorted(estimates, key=lambda e: e.cap)
    caps = [e.cap for e in ordered]
    est_min = [e.estimated_seconds / 60.0 for e in ordered]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(caps, est_min, marker="o", ms=3, label="estimated")
    if true_costs:
        sim = [(c, true_costs[c] / 60.0) for c in caps if c in true_costs]
        if sim:
            ax.plot(*zip(*sim), marker="s", ms=3, label="simulated")
    best = min(ordered, key=lambda e: e.estimated_seconds)
    ax.axvline(best.cap, color="gray", lw=0.8, ls="--")
    ax.annotate(f"selected cap={best.cap}", (best.cap, best.estimated_seconds / 60.0),
                textcoords="offset points", xytext=(6, 6), fontsize=8)
    ax.set_xlabel("cluster-size cap")
    ax.set_ylabel("predicted cleaning minutes")
    ax.set_xscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_method_times(path: Path, label_to_minutes: dict[str, float]) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(label_to_minutes)
    ax.bar(labels, [label_to_minutes[k] for k in labels], color="#4878a8")
    ax.set_ylabel("mean simulated minutes")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_team_scaling(path: Path, k_to_minutes: dict[int, float]) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = sorted(k_to_minutes)
    ax.plot(ks, [k_to_minutes[k] for k in ks], marker="o")
    ax.set_xlabel("team size")
    ax.set_ylabel("median wall minutes")
    ax.set_xticks(ks)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_cluster_histogram(path: Path, sizes: Sequence[int], title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(sizes, bins=range(1, max(sizes, default=1) + 2), color="#6b8e5a",
            edgecolor="white", align="left")
    ax.set_xlabel("cluster size")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
