"""Metrics report rendering: JSON + CSV alongside matplotlib figures.

The review-flow figure mirrors how a session unfolds: per-pair review cost
over the review order, with revision activity overlaid.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_CSV_FIELDS = (
    "submission_id", "draft_id", "opened_at", "duration", "reaction_time",
    "first_action_kind", "revisions_requested", "revisions_accepted",
    "propagations_accepted", "validated",
)


def write_metrics_report(metrics: dict, out_dir: str | Path) -> dict[str, Path]:
    """Write metrics.json, metrics.csv and the figures; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    json_path = out / "metrics.json"
    json_path.write_text(json.dumps(metrics, indent=2), encoding="utf-8")
    paths["json"] = json_path

    csv_path = out / "metrics.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for pair in metrics["pairs"]:
            writer.writerow({k: pair.get(k) for k in _CSV_FIELDS})
    paths["csv"] = csv_path

    pairs = metrics["pairs"]
    if pairs:
        paths["reaction_times"] = _reaction_time_figure(pairs, metrics, out)
        paths["review_flow"] = _review_flow_figure(pairs, out)
    return paths


def _reaction_time_figure(pairs: list[dict], metrics: dict, out: Path) -> Path:
    labels = [p["submission_id"].rsplit("-", 1)[-1] for p in pairs]
    values = [p["reaction_time"] or 0.0 for p in pairs]
    fig, ax = plt.subplots(figsize=(max(6, len(pairs) * 0.35), 4))
    ax.bar(range(len(pairs)), values, color="#4878a8")
    mean = metrics["aggregates"].get("mean_reaction_time")
    if mean is not None:
        ax.axhline(mean, color="#c44e52", linestyle="--", linewidth=1,
                   label=f"mean {mean:.2f}s")
        ax.legend()
    ax.set_xticks(range(len(pairs)))
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_xlabel("pair (review order)")
    ax.set_ylabel("reaction time (s)")
    ax.set_title("Reaction time per reviewed pair")
    fig.tight_layout()
    path = out / "reaction_times.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _review_flow_figure(pairs: list[dict], out: Path) -> Path:
    xs = range(1, len(pairs) + 1)
    durations = [p["duration"] or 0.0 for p in pairs]
    revisions = [p["revisions_requested"] for p in pairs]
    accepted = [p["propagations_accepted"] for p in pairs]
    fig, ax = plt.subplots(figsize=(max(6, len(pairs) * 0.35), 4))
    ax.plot(xs, durations, color="#4878a8", marker="o", markersize=3,
            label="review duration (s)")
    ax2 = ax.twinx()
    ax2.bar(xs, revisions, color="#dd8452", alpha=0.6, label="revisions requested")
    ax2.bar(xs, accepted, color="#55a868", alpha=0.6,
            bottom=revisions, label="propagations accepted")
    ax.set_xlabel("reviewed pair #")
    ax.set_ylabel("seconds")
    ax2.set_ylabel("count")
    lines, labels = ax.get_legend_handles_labels()
    bars, bar_labels = ax2.get_legend_handles_labels()
    ax.legend(lines + bars, labels + bar_labels, loc="upper right", fontsize=8)
    ax.set_title("Review flow: time and revision activity per pair")
    fig.tight_layout()
    path = out / "review_flow.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
