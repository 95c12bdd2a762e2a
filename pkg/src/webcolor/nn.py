"""Parameter containers and the basic trainable layers."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.ascontiguousarray(data, dtype=np.float64), requires_grad=True)


class Module:
    """Walks attributes in definition order to enumerate named parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise T.ShapeError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = np.ascontiguousarray(arr.copy())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        bound = math.sqrt(1.0 / d_in)
        self.weight = parameter(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.bias = parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.weight) + self.bias


class Embedding(Module):
    """Lookup table; rows are multiplied by ``scale`` on the way out."""

    def __init__(self, n: int, d: int, rng: np.random.Generator, std: float = 0.02, scale: float = 1.0):
        self.table = parameter(rng.normal(0.0, std, size=(n, d)))
        self.scale = scale

    def __call__(self, index) -> Tensor:
        out = T.embedding_lookup(self.table, index)
        return out if self.scale == 1.0 else out * self.scale


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(d))
        self.bias = parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Two linear layers with a ReLU in between."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng: np.random.Generator):
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))
