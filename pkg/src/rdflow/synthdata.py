"""Seeded samplers for the source distribution and the 2-D toy targets.

The source is a standard normal in any dimension.  Targets are the four
classic planar benchmarks; each sampler is a pure function of
(spec, batch_size, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation
from .numcore import Tensor
from .seeding import derive_rng

DATASET_NAMES = ("two-moons", "eight-gaussians", "checkerboard", "spiral")

# Used when DatasetSpec.noise_scale is None.  The checkerboard sampler is
# exactly uniform on its cells and never adds noise (the support contract
# forbids mass outside the black cells).
_DEFAULT_NOISE = {
    "eight-gaussians": 0.3,
    "two-moons": 0.05,
    "spiral": 0.05,
    "checkerboard": 0.0,
}


@dataclass(frozen=True)
class DatasetSpec:
    """Which target to sample and how much jitter to add."""

    name: str
    noise_scale: float | None = None
    dim: int = 2

    def resolved_noise(self) -> float:
        if self.noise_scale is None:
            return _DEFAULT_NOISE[self.name]
        return self.noise_scale


@dataclass
class SampleBatch:
    """A batch of points tagged with the time they live at."""

    points: Tensor
    time: float
    seed_provenance: int

    @property
    def size(self) -> int:
        return self.points.data.shape[0]

    @property
    def dim(self) -> int:
        return self.points.data.shape[1]


def _validate_counts(batch_size: int, dim: int) -> None:
    if batch_size <= 0:
        raise ContractViolation(f"batch_size must be positive, got {batch_size}")
    if dim <= 0:
        raise ContractViolation(f"dim must be positive, got {dim}")


def sample_source(batch_size: int, dim: int, seed: int) -> SampleBatch:
    """Standard normal draw at time 0."""
    _validate_counts(batch_size, dim)
    rng = derive_rng(seed, "source")
    pts = rng.standard_normal((batch_size, dim))
    return SampleBatch(points=Tensor(pts), time=0.0, seed_provenance=seed)


def _eight_gaussians(rng: np.random.Generator, n: int, noise: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    means = 4.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    which = rng.integers(0, 8, size=n)
    return means[which] + noise * rng.standard_normal((n, 2))


def _two_moons(rng: np.random.Generator, n: int, noise: float) -> np.ndarray:
    n_upper = n // 2
    n_lower = n - n_upper
    t_up = rng.uniform(0.0, np.pi, size=n_upper)
    t_lo = rng.uniform(0.0, np.pi, size=n_lower)
    upper = np.stack([np.cos(t_up), np.sin(t_up)], axis=1)
    lower = np.stack([1.0 - np.cos(t_lo), 0.5 - np.sin(t_lo)], axis=1)
    pts = np.concatenate([upper, lower], axis=0)
    return pts + noise * rng.standard_normal((n, 2))


def _checkerboard(rng: np.random.Generator, n: int) -> np.ndarray:
    # 4x4 board on [-2,2]^2, unit cells; the 8 cells with even (col+row)
    # carry the mass.  Exactly uniform inside each chosen cell.
    cells = np.array([(i, j) for i in range(4) for j in range(4) if (i + j) % 2 == 0])
    which = rng.integers(0, len(cells), size=n)
    corner = -2.0 + cells[which]
    return corner + rng.uniform(0.0, 1.0, size=(n, 2))


def _spiral(rng: np.random.Generator, n: int, noise: float) -> np.ndarray:
    theta = rng.uniform(0.0, 3.0 * np.pi, size=n)
    r = theta / np.pi
    pts = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return pts + noise * rng.standard_normal((n, 2))


def sample_target(spec: DatasetSpec, batch_size: int, seed: int) -> SampleBatch:
    """Draw from the named target at time 1."""
    _validate_counts(batch_size, spec.dim)
    if spec.name not in DATASET_NAMES:
        raise ConfigError(f"unknown dataset {spec.name!r}; valid names: {', '.join(DATASET_NAMES)}")
    if spec.dim != 2:
        raise ContractViolation(f"target datasets are 2-D, got dim={spec.dim}")
    if spec.noise_scale is not None and spec.noise_scale < 0:
        raise ContractViolation("noise_scale must be non-negative")
    rng = derive_rng(seed, "target", spec.name)
    noise = spec.resolved_noise()
    if spec.name == "eight-gaussians":
        pts = _eight_gaussians(rng, batch_size, noise)
    elif spec.name == "two-moons":
        pts = _two_moons(rng, batch_size, noise)
    elif spec.name == "checkerboard":
        pts = _checkerboard(rng, batch_size)
    else:
        pts = _spiral(rng, batch_size, noise)
    return SampleBatch(points=Tensor(pts), time=1.0, seed_provenance=seed)
