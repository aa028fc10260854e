"""Run outputs: metrics CSV, summary text, JSON manifest, rendered figures.

The metrics CSV holds only deterministic fields so reruns with identical
seeds are byte-stable; wall-clock timings live in the JSON manifest.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .. import __version__
from ..models import CLASS_NAMES
from .scenarios import summary_table

CSV_FIELDS = [
    "mode",
    "n_centres",
    "strategy",
    "modalities",
    "fraction",
    "seed",
    "accuracy",
    "best_round",
    "error",
]


def write_metrics_csv(rows, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    "mode": row.mode,
                    "n_centres": row.n_centres,
                    "strategy": row.strategy,
                    "modalities": row.modalities,
                    "fraction": f"{row.fraction:.2f}",
                    "seed": row.seed,
                    "accuracy": "" if np.isnan(row.accuracy) else f"{row.accuracy:.6f}",
                    "best_round": row.best_round,
                    "error": row.error or "",
                }
            )
    return path


def write_summary(rows, path):
    path = Path(path)
    path.write_text(summary_table(rows))
    return path


def write_run_manifest(path, config, rows=None):
    """Config, seeds and versions; also per-row wall-clock timings."""
    manifest = {
        "config": config,
        "versions": {
            "rtfed": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    if rows is not None:
        manifest["wall_times"] = [
            {
                "mode": r.mode,
                "n_centres": r.n_centres,
                "strategy": r.strategy,
                "modalities": r.modalities,
                "fraction": r.fraction,
                "seed": r.seed,
                "wall_time": round(r.wall_time, 3),
            }
            for r in rows
        ]
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def write_points_csv(path, embedding, labels):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "label", "class_name"])
        for (x, y), label in zip(embedding, labels):
            writer.writerow([f"{x:.6f}", f"{y:.6f}", int(label), CLASS_NAMES[label]])
    return path


def fig_tsne(path, embedding, labels, title):
    fig, ax = plt.subplots(figsize=(6, 5))
    for label in sorted(set(int(l) for l in labels)):
        pts = embedding[np.asarray(labels) == label]
        ax.scatter(pts[:, 0], pts[:, 1], s=12, label=CLASS_NAMES[label], alpha=0.75)
    ax.set_title(title)
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    ax.legend(fontsize=7, markerscale=1.2, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fig_grid(path, rows):
    """Mean accuracy per (centres, strategy) cell, one line per modality set."""
    from .scenarios import summarize

    cells = summarize(rows)
    fed = {k: v for k, v in cells.items() if k[0] == "federated" and v != "failed"}
    if not fed:
        return None
    modalities = sorted({k[3] for k in fed})
    groups = sorted({(k[1], k[2]) for k in fed})
    xs = np.arange(len(groups))
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(groups)), 4))
    for mod in modalities:
        ys = []
        for g in groups:
            cell = ("federated", g[0], g[1], mod, 1.0)
            val = cells.get(cell, "")
            ys.append(float(val.split()[0]) if val and val != "failed" else np.nan)
        ax.plot(xs, ys, marker="o", label=mod)
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{c}c/{s}" for c, s in groups], rotation=45, ha="right")
    ax.set_ylabel("hold-out accuracy (%)")
    ax.set_title("Federated grid: mean accuracy by scenario")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fig_ablation(path, rows):
    """Accuracy vs per-class sample fraction, one line per (centres, strategy)."""
    from .scenarios import summarize

    cells = summarize(rows)
    fed = {k: v for k, v in cells.items() if k[0] == "federated" and v != "failed"}
    series = {}
    for (_, centres, strategy, mod, fraction), val in fed.items():
        series.setdefault((centres, strategy, mod), []).append(
            (fraction, float(val.split()[0]))
        )
    fig, ax = plt.subplots(figsize=(6, 4))
    for (centres, strategy, mod), pts in sorted(series.items()):
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=f"{centres}c {strategy} {mod}",
        )
    cen = {k: v for k, v in cells.items() if k[0] == "centralized" and v != "failed"}
    for (_, _, _, mod, fraction), val in sorted(cen.items()):
        ax.scatter([fraction], [float(val.split()[0])], marker="x", color="k")
    ax.set_xlabel("per-class sample fraction")
    ax.set_ylabel("hold-out accuracy (%)")
    ax.set_title("Ablation: accuracy vs per-class samples per centre")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
