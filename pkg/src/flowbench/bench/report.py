"""results.csv plus one log-scale SVG per (problem, metric) group of rollout curves."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

from ..errors import InputError

COLUMNS = ("model", "problem", "subset", "split", "metric", "step", "value")


def _key(r):
    return tuple(str(r[c]) for c in COLUMNS[:-1])


def emit_report(records, out_dir) -> dict:
    """Write ``results.csv`` and rollout plots; returns the written paths."""
    records = [dict(r) for r in records]
    seen = set()
    for r in records:
        missing = set(COLUMNS) - set(r)
        if missing:
            raise InputError(f"result record lacks {sorted(missing)}")
        k = _key(r)
        if k in seen:
            raise InputError(f"conflicting results for {k}")
        seen.add(k)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(records)
    plots = [_plot(problem, metric, rows, out) for (problem, metric), rows in _curve_groups(records).items()]
    return {"csv": csv_path, "plots": plots}


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["value"] = float(r["value"])
        r["step"] = int(r["step"]) if r["step"] != "" else ""
    return rows


def _curve_groups(records):
    groups = defaultdict(list)
    for r in records:
        if r["step"] not in ("", None):
            groups[(r["problem"], r["metric"])].append(r)
    return groups


def _plot(problem, metric, rows, out):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lines = defaultdict(list)
    for r in rows:
        label = r["model"] if not r["subset"] else f"{r['model']} ({r['subset']})"
        lines[label].append((int(r["step"]), float(r["value"])))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, pts in sorted(lines.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [max(p[1], 1e-300) for p in pts], marker="o", ms=3, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("forward propagation steps")
    ax.set_ylabel(metric)
    ax.set_title(f"{problem}: rollout {metric}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out / f"rollout_{problem}_{metric}.svg"
    fig.savefig(path)
    plt.close(fig)
    return path
