"""Experiment harness: config parsing, run orchestration, reports, CLI."""

from .config import ExperimentConfig, config_echo, config_from_echo, load_config, parse_overrides
from .experiment import (
    RunRecord,
    ablate_adjacency,
    generate_samples,
    run_experiment,
    run_id_for,
    sweep_knn,
)
from .report import (
    METRICS_COLUMNS,
    WALL_TIME_COLUMNS,
    emit_report,
    write_metrics_csv,
    write_samples_csv,
    write_scatter_svg,
    write_sweep_csv,
)

__all__ = [
    "ExperimentConfig",
    "config_echo",
    "config_from_echo",
    "load_config",
    "parse_overrides",
    "RunRecord",
    "ablate_adjacency",
    "generate_samples",
    "run_experiment",
    "run_id_for",
    "sweep_knn",
    "METRICS_COLUMNS",
    "WALL_TIME_COLUMNS",
    "emit_report",
    "write_metrics_csv",
    "write_samples_csv",
    "write_scatter_svg",
    "write_sweep_csv",
]
