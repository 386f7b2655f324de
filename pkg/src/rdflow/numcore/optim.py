"""AdamW with decoupled weight decay, plus a cosine learning-rate schedule."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .tensor import Tensor


class AdamW:
    """Adam moments with weight decay applied directly to the parameter.

    The decay step p <- p - lr * weight_decay * p happens independently of
    the moment update, so a parameter with zero gradient still decays
    geometrically and the moments stay exactly zero.
    """

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        """Apply one update using each parameter's .grad (missing grad = 0)."""
        if lr is None:
            lr = self.lr
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self._m, self._v):
            if self.weight_decay != 0.0:
                p.data -= lr * self.weight_decay * p.data
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment snapshot keyed by parameter index (for checkpointing)."""
        out: dict[str, np.ndarray] = {}
        for i, (m, v) in enumerate(zip(self._m, self._v)):
            out[f"m{i}"] = m.copy()
            out[f"v{i}"] = v.copy()
        return out


class CosineSchedule:
    """lr(step) = floor + 0.5*(base - floor)*(1 + cos(pi * step / total)).

    Out-of-range steps clamp to the endpoints; each clamp sets the
    `clamped` flag and emits a warning once.
    """

    def __init__(self, base_lr: float, total_steps: int, floor_lr: float = 0.0):
        if total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if floor_lr > base_lr:
            raise ValueError("floor_lr must not exceed base_lr")
        self.base_lr = base_lr
        self.floor_lr = floor_lr
        self.total_steps = total_steps
        self.clamped = False

    def lr(self, step: int) -> float:
        if step < 0 or step > self.total_steps:
            if not self.clamped:
                warnings.warn(
                    f"cosine schedule queried at step {step} outside [0, {self.total_steps}]; clamping",
                    RuntimeWarning,
                    stacklevel=2,
                )
            self.clamped = True
            step = min(max(step, 0), self.total_steps)
        frac = step / self.total_steps
        return self.floor_lr + 0.5 * (self.base_lr - self.floor_lr) * (1.0 + math.cos(math.pi * frac))
