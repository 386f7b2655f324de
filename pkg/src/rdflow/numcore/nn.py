"""Parameter containers and initialization rules.

Weight matrices are drawn uniform in +-sqrt(6/(fan_in+fan_out)); biases
start at zero.  Output layers of graph-correction networks are created
with zero_init so a freshly built composite field reproduces its
pointwise part exactly.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor, elu, matmul


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Module:
    """Minimal parameter registry.

    Any Tensor attribute with requires_grad, directly or inside a child
    Module or a list of Modules, is a parameter.  Traversal follows
    attribute insertion order, so parameter order is deterministic.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{path}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{path}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


class Linear(Module):
    """Affine map x @ W + b on row batches."""

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int, zero_init: bool = False):
        if zero_init:
            w = np.zeros((fan_in, fan_out))
        else:
            w = glorot_uniform(rng, fan_in, fan_out)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias


class Mlp(Module):
    """Stack of Linear layers with ELU between them (none after the last)."""

    def __init__(self, rng: np.random.Generator, dims: list[int], zero_init_last: bool = False):
        if len(dims) < 2:
            raise ValueError("Mlp needs at least input and output dims")
        self.layers = [
            Linear(rng, dims[i], dims[i + 1], zero_init=(zero_init_last and i == len(dims) - 2))
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = elu(x)
        return x
