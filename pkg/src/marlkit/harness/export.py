"""Consolidate per-seed metrics into run-level CSVs for external plotting."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .training import trailing_mean


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def seed_dirs(run_dir):
    run_dir = Path(run_dir)
    found = []
    for d in sorted(run_dir.glob("seed_*")):
        if (d / "metrics.csv").exists():
            found.append((int(d.name.split("_", 1)[1]), d))
    return sorted(found)


def recompute_win_rate(episodes_csv, column="win"):
    """Trailing-500 rate recomputed from the raw episode log, one value per episode."""
    header, rows = _read(episodes_csv)
    k = header.index(column)
    return trailing_mean([float(r[k]) for r in rows])


def export_metrics(run_dir):
    """Write ``consolidated.csv`` and ``win_rate_series.csv`` into ``run_dir``.

    The series has one column per seed plus their mean, over the episodes
    all seeds have completed. Returns the two paths.
    """
    run_dir = Path(run_dir)
    seeds = seed_dirs(run_dir)
    if not seeds:
        raise FileNotFoundError(f"no seed_*/metrics.csv under {run_dir}")
    header = None
    out_rows = []
    for seed, d in seeds:
        h, rows = _read(d / "metrics.csv")
        if header is None:
            header = h
        elif h != header:
            raise ValueError(f"{d}: metrics columns differ from the other seeds")
        out_rows.extend([str(seed), *r] for r in rows)
    consolidated = run_dir / "consolidated.csv"
    with open(consolidated, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", *header])
        w.writerows(out_rows)

    series = {s: recompute_win_rate(d / "episodes.csv") for s, d in seeds if (d / "episodes.csv").exists()}
    n = min((len(v) for v in series.values()), default=0)
    series_path = run_dir / "win_rate_series.csv"
    with open(series_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", *[f"win_rate_seed_{s}" for s in series], "win_rate_mean"])
        for i in range(n):
            vals = [series[s][i] for s in series]
            w.writerow([i + 1, *[repr(float(v)) for v in vals], repr(float(np.mean(vals)))])
    return consolidated, series_path
