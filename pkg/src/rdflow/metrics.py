"""Distribution comparison metrics for generated vs reference samples.

All three are pure functions of their array inputs (plus an explicit seed
where random projections are involved).
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation
from .seeding import derive_rng


def _as_points(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be a (n, d) array")
    return arr


def _pairwise_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    sq = (
        (x * x).sum(axis=1)[:, None]
        + (y * y).sum(axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def energy_distance(x, y) -> float:
    """2 E|X-Y| - E|X-X'| - E|Y-Y'| with all-pairs empirical means.

    The all-pairs (V-statistic) form is non-negative and exactly zero on
    identical sets, which the slightly-less-biased distinct-pairs variant
    is not.  Symmetric in its arguments.
    """
    x = _as_points(x, "x")
    y = _as_points(y, "y")
    n, m = len(x), len(y)
    if n < 2 or m < 2:
        raise ContractViolation("energy distance needs at least 2 points per set")
    if x.shape[1] != y.shape[1]:
        raise ContractViolation("x and y must share a dimension")
    cross = _pairwise_distances(x, y).mean()
    within_x = _pairwise_distances(x, x).mean()
    within_y = _pairwise_distances(y, y).mean()
    return float(2.0 * cross - within_x - within_y)


def sliced_w2(x, y, n_projections: int = 128, seed: int = 0) -> float:
    """Root of the mean (over random unit directions) squared 1-D
    Wasserstein-2 between the projected samples. Requires equal sizes."""
    x = _as_points(x, "x")
    y = _as_points(y, "y")
    if len(x) != len(y):
        raise ContractViolation("sliced_w2 requires equally sized sets")
    if x.shape[1] != y.shape[1]:
        raise ContractViolation("x and y must share a dimension")
    if n_projections < 1:
        raise ContractViolation("n_projections must be >= 1")
    rng = derive_rng(seed, "sliced-w2")
    dirs = rng.standard_normal((n_projections, x.shape[1]))
    dirs /= np.sqrt((dirs * dirs).sum(axis=1, keepdims=True))
    px = np.sort(x @ dirs.T, axis=0)
    py = np.sort(y @ dirs.T, axis=0)
    w2_sq = ((px - py) ** 2).mean(axis=0)
    return float(np.sqrt(w2_sq.mean()))


def knn_recall(real, generated, k: int = 3) -> float:
    """Fraction of real points inside some generated point's k-NN ball.

    The ball radius of a generated point is the distance to its k-th
    nearest other generated point.  Deliberately asymmetric: it measures
    how much of the real set the generated set covers.
    """
    real = _as_points(real, "real")
    generated = _as_points(generated, "generated")
    if real.shape[1] != generated.shape[1]:
        raise ContractViolation("real and generated must share a dimension")
    m = len(generated)
    if k < 1:
        raise ContractViolation("k must be >= 1")
    if m <= k:
        raise ContractViolation(f"need more than k={k} generated points, got {m}")
    dgg = _pairwise_distances(generated, generated)
    np.fill_diagonal(dgg, np.inf)
    radii = np.partition(dgg, k - 1, axis=1)[:, k - 1]
    drg = _pairwise_distances(real, generated)
    covered = (drg <= radii[None, :]).any(axis=1)
    return float(covered.mean())
