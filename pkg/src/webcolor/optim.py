from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class AdamWState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adamw_step(state: AdamWState, params: list[Tensor], grads: list[np.ndarray | None]) -> None:
    """One decoupled-weight-decay Adam update, in place.

    ``theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)``.
    A ``None`` gradient is treated as zero.
    """
    if len(params) != len(grads):
        raise ShapeError(f"adamw: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros(p.shape) for p in params]
        state.v = [np.zeros(p.shape) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("adamw: optimizer state does not match parameter list")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.shape:
            raise ShapeError(f"adamw: moment shape {m.shape} vs param {p.shape}")
        g = np.zeros(p.shape) if g is None else g
        if g.shape != p.shape:
            raise ShapeError(f"adamw: grad shape {g.shape} vs param {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps) + state.weight_decay * p.data
        p.data = p.data - state.lr * update


class AdamW:
    def __init__(self, params: list[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = list(params)
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    def step(self) -> None:
        adamw_step(self.state, self.params, [p.grad for p in self.params])

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
