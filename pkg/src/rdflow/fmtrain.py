"""Flow-matching training: straight-line targets, AdamW, cosine schedule.

Pairs (x0, x1) are interpolated to x_t = (1-t) x0 + t x1 with supervision
x1 - x0 (noise lives at t=0 by default; noise_at_one swaps the roles).
The loss is the mean squared entry-wise error of the field against the
supervision.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, NumericFailure
from .numcore import AdamW, CosineSchedule, Tensor, backward, mean
from .seeding import derive_rng, derive_seed
from .synthdata import DatasetSpec, sample_source, sample_target
from .velocity import CompositeField

CHECKPOINT_VERSION = 1


@dataclass
class TrainingTriplet:
    """Interpolated position, its time, and the straight-line velocity."""

    x_t: np.ndarray
    t: float | np.ndarray
    target_velocity: np.ndarray


def make_training_triplet(
    x0: np.ndarray, x1: np.ndarray, t, noise_at_one: bool = False
) -> TrainingTriplet:
    """x0 is the source (noise) draw, x1 the data draw.

    t may be a shared scalar or a per-row vector; values must lie in [0,1].
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape or x0.ndim != 2:
        raise ContractViolation("x0 and x1 must be matching (B, d) arrays")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ContractViolation("t must lie in [0, 1]")
    if t_arr.ndim not in (0, 1):
        raise ContractViolation("t must be a scalar or a (B,) vector")
    if t_arr.ndim == 1 and t_arr.shape[0] != x0.shape[0]:
        raise ContractViolation("per-row t must have one entry per row")
    start, end = (x1, x0) if noise_at_one else (x0, x1)
    tcol = t_arr.reshape(-1, 1) if t_arr.ndim == 1 else t_arr
    x_t = (1.0 - tcol) * start + tcol * end
    velocity = end - start
    t_out = float(t_arr) if t_arr.ndim == 0 else t_arr
    return TrainingTriplet(x_t=x_t, t=t_out, target_velocity=velocity)


def fm_loss(field: CompositeField, triplet: TrainingTriplet) -> Tensor:
    """Mean over all B*d entries of the squared prediction error."""
    pred = field.eval(Tensor(triplet.x_t), triplet.t)
    diff = pred - Tensor(triplet.target_velocity)
    loss = mean(diff * diff)
    if not np.isfinite(loss.data):
        raise NumericFailure("non-finite loss", node="fm_loss")
    return loss


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 256
    lr: float = 2e-4
    floor_lr: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    time_per_sample: bool = False
    noise_at_one: bool = False
    final_window: int = 50

    def validate(self) -> None:
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


@dataclass
class TrainLog:
    """Per-iteration records; wall_times are informational only and are
    excluded from determinism comparisons."""

    iterations: np.ndarray
    losses: np.ndarray
    lrs: np.ndarray
    wall_times: np.ndarray

    def final_loss(self, window: int = 50) -> float:
        w = min(window, len(self.losses))
        return float(self.losses[-w:].mean())


def train(
    field: CompositeField,
    spec: DatasetSpec,
    cfg: TrainConfig,
    seed: int,
    target_sampler=None,
    source_sampler=None,
) -> TrainLog:
    """Optimize the field in place; returns the per-iteration log.

    Batches come from the dataset spec by default; either side can be
    swapped for a custom (batch_size, seed) -> SampleBatch callable.  On a
    numeric failure the parameters are rolled back to the last iteration
    that completed cleanly, then the failure is re-raised with the
    iteration attached.
    """
    cfg.validate()
    params = field.parameters()
    opt = AdamW(
        params,
        lr=cfg.lr,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    sched = CosineSchedule(cfg.lr, cfg.iterations, cfg.floor_lr)
    time_rng = derive_rng(seed, "time-draws")

    losses = np.zeros(cfg.iterations)
    lrs = np.zeros(cfg.iterations)
    walls = np.zeros(cfg.iterations)
    last_good = [p.data.copy() for p in params]

    if target_sampler is None:
        target_sampler = lambda n, s: sample_target(spec, n, s)  # noqa: E731
    if source_sampler is None:
        source_sampler = lambda n, s: sample_source(n, spec.dim, s)  # noqa: E731

    for i in range(cfg.iterations):
        tick = time.perf_counter()
        x1 = target_sampler(cfg.batch_size, derive_seed(seed, "target-draw", i))
        x0 = source_sampler(cfg.batch_size, derive_seed(seed, "source-draw", i))
        if cfg.time_per_sample:
            t = time_rng.uniform(0.0, 1.0, size=cfg.batch_size)
        else:
            t = float(time_rng.uniform(0.0, 1.0))
        triplet = make_training_triplet(
            x0.points.data, x1.points.data, t, noise_at_one=cfg.noise_at_one
        )
        try:
            loss = fm_loss(field, triplet)
            opt.zero_grad()
            backward(loss)
            opt.step(lr=sched.lr(i))
        except NumericFailure as failure:
            for p, good in zip(params, last_good):
                p.data = good
            raise NumericFailure(str(failure), iteration=i) from failure
        for p, good in zip(params, last_good):
            np.copyto(good, p.data)
        losses[i] = float(loss.data)
        lrs[i] = sched.lr(i)
        walls[i] = time.perf_counter() - tick
    return TrainLog(
        iterations=np.arange(cfg.iterations), losses=losses, lrs=lrs, wall_times=walls
    )


def save_checkpoint(path, field: CompositeField, config_echo: dict, seed: int) -> None:
    """One npz file: parameters keyed by module path, plus a JSON meta blob.

    float64 arrays round-trip bit-exactly through the npy container.
    """
    arrays = {f"param/{name}": p.data for name, p in field.named_parameters()}
    meta = {"version": CHECKPOINT_VERSION, "seed": int(seed), "config": config_echo}
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns ({parameter path: array}, meta dict)."""
    with np.load(path, allow_pickle=False) as bundle:
        if "meta" not in bundle:
            raise ConfigError(f"{path} is not a checkpoint (no meta entry)")
        meta = json.loads(str(bundle["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(
                f"checkpoint version {meta.get('version')} unsupported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        params = {
            key[len("param/"):]: bundle[key] for key in bundle.files if key.startswith("param/")
        }
    return params, meta


def restore_parameters(field: CompositeField, params: dict[str, np.ndarray]) -> None:
    """Load arrays into a field with the exact same parameter paths."""
    own = dict(field.named_parameters())
    if set(own) != set(params):
        missing = sorted(set(own) ^ set(params))
        raise ConfigError(f"checkpoint does not match the field; mismatched keys: {missing[:5]}")
    for name, tensor in own.items():
        arr = params[name]
        if arr.shape != tensor.data.shape:
            raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {tensor.data.shape}")
        tensor.data = arr.astype(np.float64, copy=True)
