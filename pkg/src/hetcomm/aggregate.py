"""Cross-seed aggregation: per-step 25/50/75 percentile tables and figures.

Percentiles use linear interpolation between order statistics. The report
path writes a CSV table and, unless disabled, one PNG figure per metric
with the median line and the interquartile band.
"""

from __future__ import annotations

import csv
import os

import numpy as np

AGGREGATE_METRICS = ["win_rate", "mean_defeated_enemies", "mean_episode_reward"]
PERCENTILES = (25, 50, 75)


class MisalignedStepsError(ValueError):
    pass


def read_metrics(path: str) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        row["env_step"] = int(row["env_step"])
        for key in AGGREGATE_METRICS + ["loss", "epsilon"]:
            row[key] = float(row[key])
    return rows


def aggregate_percentiles(metric_paths: list[str]) -> dict:
    """Per-step percentile table across >= 2 seed metric files.

    Returns {"steps": [...], "<metric>_p25": [...], ...}. Raises if the
    evaluation steps are not aligned across files.
    """
    if len(metric_paths) < 2:
        raise ValueError("aggregation needs metric files from at least 2 seeds")
    per_file = [read_metrics(p) for p in metric_paths]
    step_sets = [[r["env_step"] for r in rows] for rows in per_file]
    reference = step_sets[0]
    for path, steps in zip(metric_paths[1:], step_sets[1:]):
        if steps != reference:
            missing = sorted(set(reference).symmetric_difference(steps))
            raise MisalignedStepsError(
                f"{path} has eval steps misaligned with {metric_paths[0]}; "
                f"differing steps: {missing}"
            )
    table: dict = {"steps": reference}
    for metric in AGGREGATE_METRICS:
        values = np.array([[r[metric] for r in rows] for rows in per_file])  # (S, T)
        for p in PERCENTILES:
            table[f"{metric}_p{p}"] = np.percentile(
                values, p, axis=0, method="linear"
            ).tolist()
    return table


def write_aggregate_csv(table: dict, path: str):
    cols = ["env_step"] + [
        f"{m}_p{p}" for m in AGGREGATE_METRICS for p in PERCENTILES
    ]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(cols)
        for i, step in enumerate(table["steps"]):
            writer.writerow([step] + [repr(table[c][i]) for c in cols[1:]])


def render_figures(table: dict, out_dir: str, prefix: str = "aggregate") -> list[str]:
    """One PNG per metric: median line with the 25-75 percentile band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    steps = table["steps"]
    paths = []
    for metric in AGGREGATE_METRICS:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.fill_between(
            steps, table[f"{metric}_p25"], table[f"{metric}_p75"],
            alpha=0.3, label="25-75 percentile",
        )
        ax.plot(steps, table[f"{metric}_p50"], label="median")
        ax.set_xlabel("environment steps")
        ax.set_ylabel(metric.replace("_", " "))
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"{prefix}_{metric}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
