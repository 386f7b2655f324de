"""Report emission: delimited metrics/samples files plus SVG scatter plots."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np

from .experiment import RunRecord

METRICS_COLUMNS = (
    "run_id", "seed", "variant", "adjacency", "dataset",
    "final_loss", "energy_distance", "sliced_w2", "knn_recall",
    "nfe_mean", "nfe_std", "time_per_sample_s", "params_total", "params_diff",
)

# Columns whose values depend on the wall clock; excluded from any
# byte-level determinism comparison.
WALL_TIME_COLUMNS = ("time_per_sample_s",)


def _fmt(value) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_metrics_csv(records: list[RunRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted(records, key=lambda r: (r.variant, r.seed, r.run_id))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRICS_COLUMNS)
        for r in rows:
            writer.writerow([
                r.run_id, r.seed, r.variant, r.adjacency, r.dataset,
                _fmt(r.final_loss), _fmt(r.energy_distance), _fmt(r.sliced_w2),
                _fmt(r.knn_recall), _fmt(r.nfe_mean), _fmt(r.nfe_std),
                _fmt(r.time_per_sample_s), r.params_total, r.params_diff,
            ])
    return path


def write_samples_csv(records: list[RunRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dims = max((r.samples.shape[1] for r in records if r.samples is not None), default=2)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run_id", "sample_id", *(f"coord{i}" for i in range(dims))])
        for r in sorted(records, key=lambda rec: (rec.variant, rec.seed, rec.run_id)):
            if r.samples is None:
                continue
            for i, row in enumerate(r.samples):
                writer.writerow([r.run_id, i, *(_fmt(v) for v in row)])
    return path


def write_scatter_svg(record: RunRecord, path, max_trajectories: int = 32) -> Path:
    """Generated-vs-target overlay; one marker node per plotted sample."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    if record.target_ref is not None:
        ax.scatter(
            record.target_ref[:, 0], record.target_ref[:, 1],
            s=6, c="#b0b0b0", alpha=0.5, linewidths=0, label="target",
        )
    if record.samples is not None:
        ax.scatter(
            record.samples[:, 0], record.samples[:, 1],
            s=6, c="#1f77b4", alpha=0.7, linewidths=0, label="generated",
        )
    if record.trajectory is not None:
        paths = np.stack([s.points.data for s in record.trajectory.states], axis=0)
        keep = min(max_trajectories, paths.shape[1])
        for j in range(keep):
            ax.plot(paths[:, j, 0], paths[:, j, 1], lw=0.5, c="#d62728", alpha=0.4)
    ax.set_title(record.run_id)
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def emit_report(records: list[RunRecord], out_dir) -> dict[str, object]:
    """metrics.csv + samples.csv + one SVG per run; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, object] = {
        "metrics": write_metrics_csv(records, out / "metrics.csv"),
        "samples": write_samples_csv(records, out / "samples.csv"),
    }
    svg_paths = []
    for record in sorted(records, key=lambda r: (r.variant, r.seed, r.run_id)):
        if record.samples is None:
            continue
        svg_paths.append(write_scatter_svg(record, out / "plots" / f"{record.run_id}.svg"))
    paths["plots"] = svg_paths
    return paths


def write_sweep_csv(per_k: dict[int, list[RunRecord]], path) -> Path:
    """k-vs-metric table: per k, mean and spread over seeds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metric_fields = ("energy_distance", "sliced_w2", "knn_recall", "nfe_mean")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        header = ["k"]
        for name in metric_fields:
            header += [f"{name}_mean", f"{name}_std"]
        writer.writerow(header)
        for k in sorted(per_k):
            row: list[str] = [str(k)]
            for name in metric_fields:
                values = np.asarray([getattr(r, name) for r in per_k[k]], dtype=np.float64)
                row += [_fmt(values.mean()), _fmt(values.std())]
            writer.writerow(row)
    return path
