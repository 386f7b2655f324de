"""ODE integration of a velocity field over a whole batch.

The batch is one coupled state: every field evaluation sees all rows at
the shared clock time, and graph-coupled fields rebuild their graph at
each evaluation.  Fixed-step Euler/RK4 and an adaptive embedded 5(4)
pair with first-same-as-last reuse are provided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, DivergenceError, NumericFailure
from .numcore import Tensor, no_grad
from .synthdata import SampleBatch, sample_source
from .velocity import CompositeField

METHODS = ("euler", "rk4", "dopri5")

# Dormand-Prince 5(4) tableau: stage times, stage weights, 5th-order
# solution row, and the (5th minus 4th) error row.
_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_B5 = _A[6] + (0.0,)
_ERR = (
    71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
    -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
)


@dataclass
class IntegratorConfig:
    method: str = "dopri5"
    n_steps: int = 100           # fixed-step methods
    rtol: float = 1e-5
    atol: float = 1e-5
    safety: float = 0.9
    min_factor: float = 0.2
    max_factor: float = 10.0
    h_init: float = 1e-2
    max_steps: int = 10000

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")
        if self.method in ("euler", "rk4") and self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.method == "dopri5" and (self.rtol <= 0 or self.atol <= 0):
            raise ConfigError("rtol and atol must be positive")


@dataclass
class Trajectory:
    """Accepted states from t=0 to t=1, plus the evaluation count."""

    times: list[float]
    states: list[SampleBatch]
    nfe: int

    @property
    def final_points(self) -> np.ndarray:
        return self.states[-1].points.data


def _field_fn(field: CompositeField, counter: list[int]):
    def f(t: float, y: np.ndarray) -> np.ndarray:
        counter[0] += 1
        with no_grad():
            out = field.eval(Tensor(y), t).data
        if not np.isfinite(out).all():
            raise NumericFailure("non-finite velocity during integration", node="field eval")
        return out

    return f


def integrate_batch(
    field: CompositeField, x0: np.ndarray, cfg: IntegratorConfig, seed_provenance: int = -1
) -> Trajectory:
    """Drive the coupled batch from t=0 to t=1."""
    cfg.validate()
    y = np.array(x0, dtype=np.float64)
    if y.ndim != 2:
        raise ContractViolation("x0 must be a (B, d) array")
    counter = [0]
    f = _field_fn(field, counter)
    times = [0.0]
    states = [SampleBatch(points=Tensor(y.copy()), time=0.0, seed_provenance=seed_provenance)]

    def record(t: float, state: np.ndarray) -> None:
        times.append(t)
        states.append(
            SampleBatch(points=Tensor(state.copy()), time=t, seed_provenance=seed_provenance)
        )

    if cfg.method == "euler":
        grid = np.arange(cfg.n_steps + 1) / cfg.n_steps
        for k in range(cfg.n_steps):
            h = grid[k + 1] - grid[k]
            y = y + h * f(grid[k], y)
            record(float(grid[k + 1]), y)
    elif cfg.method == "rk4":
        grid = np.arange(cfg.n_steps + 1) / cfg.n_steps
        for k in range(cfg.n_steps):
            t, h = grid[k], grid[k + 1] - grid[k]
            k1 = f(t, y)
            k2 = f(t + h / 2.0, y + (h / 2.0) * k1)
            k3 = f(t + h / 2.0, y + (h / 2.0) * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h * ((k1 + 2.0 * (k2 + k3) + k4) / 6.0)
            record(float(grid[k + 1]), y)
    else:
        y = _dopri5(f, y, cfg, record)

    if not np.isfinite(y).all():
        raise NumericFailure("non-finite final state", node="integrate")
    return Trajectory(times=times, states=states, nfe=counter[0])


def _dopri5(f, y: np.ndarray, cfg: IntegratorConfig, record) -> np.ndarray:
    """Embedded 5(4) pair; the 7th stage of an accepted step is reused as
    the first stage of the next (FSAL), so each attempt after the very
    first evaluation costs 6 evaluations."""
    t = 0.0
    h = cfg.h_init
    k = [None] * 7
    k[0] = f(t, y)
    attempts = 0
    while t < 1.0:
        attempts += 1
        if attempts > cfg.max_steps:
            raise DivergenceError(
                f"no convergence within {cfg.max_steps} attempted steps", t, y
            )
        if h < 1e-14:
            raise DivergenceError("step size underflow", t, y)
        last = t + h >= 1.0
        if last:
            h = 1.0 - t
        for s in range(1, 7):
            ts = t + _C[s] * h
            ys = y + h * sum(_A[s][j] * k[j] for j in range(s))
            k[s] = f(ts, ys)
        y_new = y + h * sum(_B5[j] * k[j] for j in range(7) if _B5[j] != 0.0)
        err = h * sum(_ERR[j] * k[j] for j in range(7) if _ERR[j] != 0.0)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if not np.isfinite(err_norm):
            raise NumericFailure("non-finite error norm", node="dopri5")
        if err_norm <= 1.0:
            t = 1.0 if last else t + h
            y = y_new
            k[0] = k[6]
            record(t, y)
        if err_norm == 0.0:
            factor = cfg.max_factor
        else:
            factor = min(
                cfg.max_factor, max(cfg.min_factor, cfg.safety * err_norm ** -0.2)
            )
        h = h * factor
    return y


def sample_generation(
    field: CompositeField, batch_size: int, dim: int, seed: int, cfg: IntegratorConfig
) -> tuple[SampleBatch, int]:
    """Integrate a fresh source draw to t=1; returns the batch and its NFE."""
    x0 = sample_source(batch_size, dim, seed)
    trajectory = integrate_batch(field, x0.points.data, cfg, seed_provenance=seed)
    final = SampleBatch(
        points=Tensor(trajectory.final_points.copy()), time=1.0, seed_provenance=seed
    )
    return final, trajectory.nfe
