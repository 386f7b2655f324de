"""Experiment orchestration: train, sample, evaluate, repeat over seeds."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ContractViolation, NumericFailure
from ..fmtrain import TrainLog, save_checkpoint, train
from ..integrate import Trajectory, integrate_batch, sample_generation
from ..metrics import energy_distance, knn_recall, sliced_w2
from ..seeding import derive_seed
from ..synthdata import sample_source, sample_target
from ..velocity import CompositeField, build_composite_field
from .config import ExperimentConfig, config_echo


def run_id_for(cfg: ExperimentConfig, seed: int, identity_twin: bool = False) -> str:
    model = cfg.model
    adjacency = "identity" if identity_twin else model.adjacency
    if adjacency == "knn":
        adjacency = f"knn{model.knn_k}"
    return f"{model.variant}-{adjacency}-{cfg.dataset.name}-s{seed}"


@dataclass
class RunRecord:
    """Everything one (config, seed) run produced."""

    run_id: str
    seed: int
    variant: str
    adjacency: str
    dataset: str
    final_loss: float = math.nan
    energy_distance: float = math.nan
    sliced_w2: float = math.nan
    knn_recall: float = math.nan
    nfe_mean: float = math.nan
    nfe_std: float = math.nan
    time_per_sample_s: float = math.nan
    params_total: int = 0
    params_diff: int = 0
    samples: np.ndarray | None = None
    target_ref: np.ndarray | None = None
    trajectory: Trajectory | None = None
    checkpoint_path: str | None = None
    error: str | None = None


def generate_samples(
    field: CompositeField, cfg: ExperimentConfig, seed: int
) -> tuple[np.ndarray, list[int], float, Trajectory | None]:
    """Sample cfg.eval_samples points in independent integration chunks.

    Returns (points, per-chunk NFEs, wall seconds, optional first-chunk
    trajectory for plotting).  The wall clock wraps only the sampling.
    """
    chunks: list[np.ndarray] = []
    nfes: list[int] = []
    kept_trajectory: Trajectory | None = None
    remaining = cfg.eval_samples
    chunk_index = 0
    tick = time.perf_counter()
    while remaining > 0:
        n = min(cfg.sample_batch, remaining)
        chunk_seed = derive_seed(seed, "sample-chunk", chunk_index)
        if cfg.plot_trajectories and chunk_index == 0:
            x0 = sample_source(n, cfg.dataset.dim, chunk_seed)
            trajectory = integrate_batch(
                field, x0.points.data, cfg.integrator, seed_provenance=chunk_seed
            )
            kept_trajectory = trajectory
            chunks.append(trajectory.final_points.copy())
            nfes.append(trajectory.nfe)
        else:
            batch, nfe = sample_generation(field, n, cfg.dataset.dim, chunk_seed, cfg.integrator)
            chunks.append(batch.points.data)
            nfes.append(nfe)
        remaining -= n
        chunk_index += 1
    elapsed = time.perf_counter() - tick
    return np.concatenate(chunks, axis=0), nfes, elapsed, kept_trajectory


def _nfe_stats(field: CompositeField, cfg: ExperimentConfig, seed: int, chunk_nfes: list[int]) -> tuple[float, float]:
    """NFE mean/std over cfg.nfe_repeats sampling runs at sample_batch size.

    Generation chunks already measured some; extra repeats top the count up.
    """
    nfes = list(chunk_nfes[: cfg.nfe_repeats])
    extra = 0
    while len(nfes) < cfg.nfe_repeats:
        repeat_seed = derive_seed(seed, "nfe-repeat", extra)
        _, nfe = sample_generation(
            field, cfg.sample_batch, cfg.dataset.dim, repeat_seed, cfg.integrator
        )
        nfes.append(nfe)
        extra += 1
    arr = np.asarray(nfes, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _run_single(cfg: ExperimentConfig, seed: int, identity_twin: bool = False) -> RunRecord:
    rid = run_id_for(cfg, seed, identity_twin)
    field_obj = build_composite_field(cfg.model, seed, force_identity_adjacency=identity_twin)
    record = RunRecord(
        run_id=rid,
        seed=seed,
        variant=cfg.model.variant,
        adjacency="identity" if identity_twin else cfg.model.adjacency,
        dataset=cfg.dataset.name,
        params_total=field_obj.param_count(),
        params_diff=field_obj.diffusion_param_count(),
    )
    try:
        log: TrainLog = train(field_obj, cfg.dataset, cfg.train, seed)
        record.final_loss = log.final_loss(cfg.train.final_window)

        out_dir = Path(cfg.out_dir)
        ckpt_dir = out_dir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = ckpt_dir / f"{rid}.npz"
        echo = config_echo(cfg)
        echo["effective_adjacency"] = field_obj.adjacency_kind
        echo["final_loss"] = record.final_loss
        save_checkpoint(ckpt_path, field_obj, echo, seed)
        record.checkpoint_path = str(ckpt_path)

        samples, chunk_nfes, wall, trajectory = generate_samples(field_obj, cfg, seed)
        record.samples = samples
        record.trajectory = trajectory
        record.time_per_sample_s = wall / cfg.eval_samples
        record.nfe_mean, record.nfe_std = _nfe_stats(field_obj, cfg, seed, chunk_nfes)

        ref = sample_target(cfg.dataset, cfg.eval_samples, derive_seed(seed, "eval-target"))
        record.target_ref = ref.points.data
        record.energy_distance = energy_distance(samples, record.target_ref)
        record.sliced_w2 = sliced_w2(
            samples, record.target_ref, cfg.sliced_projections, seed=derive_seed(seed, "sw2")
        )
        record.knn_recall = knn_recall(record.target_ref, samples, cfg.recall_k)
    except NumericFailure as failure:
        record.error = str(failure)
    return record


def run_experiment(cfg: ExperimentConfig, identity_twin: bool = False) -> list[RunRecord]:
    """One record per seed; a numeric failure in one seed is recorded on its
    RunRecord and does not stop the others."""
    cfg.validate()
    return [_run_single(cfg, seed, identity_twin) for seed in cfg.seeds]


def ablate_adjacency(cfg: ExperimentConfig) -> list[RunRecord]:
    """Paired runs: configured adjacency vs identity, same seeds and sizes.

    The identity twin keeps the graph-builder parameters (and their init
    draws), so both members of a pair report identical parameter counts.
    """
    if cfg.model.variant in ("none", "mpnn"):
        raise ConfigError(
            f"ablate-adjacency supports gps-lite and laplacian-knn; variant {cfg.model.variant!r} "
            "has no graph term to ablate"
            + (
                " (identity adjacency empties the mpnn edge set, making its diffusion identically zero)"
                if cfg.model.variant == "mpnn"
                else ""
            )
        )
    if cfg.model.adjacency == "identity":
        raise ConfigError("configured adjacency is already identity; nothing to ablate")
    active = run_experiment(cfg)
    twins = run_experiment(cfg, identity_twin=True)
    for a, b in zip(active, twins):
        if (a.params_total, a.params_diff) != (b.params_total, b.params_diff):
            raise ContractViolation(
                f"ablation parity broken for seed {a.seed}: "
                f"{a.params_total}/{a.params_diff} vs {b.params_total}/{b.params_diff}"
            )
    return active + twins


def sweep_knn(cfg: ExperimentConfig, k_values: tuple[int, ...]) -> dict[int, list[RunRecord]]:
    """Re-run the experiment with knn adjacency at each k; returns k -> records."""
    max_valid = min(cfg.train.batch_size, cfg.sample_batch) - 1
    for k in k_values:
        if not 1 <= k <= max_valid:
            raise ContractViolation(
                f"k must be in [1, {max_valid}] (batch sizes bound it), got {k}"
            )
    out: dict[int, list[RunRecord]] = {}
    for k in k_values:
        k_cfg = replace_model(cfg, adjacency="knn", knn_k=k)
        out[k] = run_experiment(k_cfg)
    return out


def replace_model(cfg: ExperimentConfig, **model_fields) -> ExperimentConfig:
    """Copy of cfg with some model fields replaced."""
    new = ExperimentConfig(
        dataset=cfg.dataset,
        model=replace(cfg.model, **model_fields),
        train=cfg.train,
        integrator=cfg.integrator,
        sliced_projections=cfg.sliced_projections,
        recall_k=cfg.recall_k,
        seeds=cfg.seeds,
        out_dir=cfg.out_dir,
        eval_samples=cfg.eval_samples,
        sample_batch=cfg.sample_batch,
        nfe_repeats=cfg.nfe_repeats,
        plot_trajectories=cfg.plot_trajectories,
    )
    return new
