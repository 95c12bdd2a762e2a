"""Dense float64 arrays with reverse-mode automatic differentiation.

Every op builds a node holding its parents and a backward rule; ``backward``
walks the graph in reverse topological order exactly once and then frees it.
Broadcasting is limited to scalar operands and trailing-dimension (row-wise)
operands such as biases.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    pass


class BackwardError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data.astype(np.float64, copy=False)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self.shape)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("div: only division by a constant is supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def _raise_item(shape):
    raise ShapeError(f"item: tensor of shape {shape} is not a scalar")


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor(data)
    out._op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


# ---------------------------------------------------------------- broadcasting

def _broadcast_ok(a: tuple, b: tuple) -> bool:
    if a == b or len(a) == 0 or len(b) == 0:
        return True
    if int(np.prod(a)) == 1 or int(np.prod(b)) == 1:
        return True
    if len(b) < len(a) and a[len(a) - len(b):] == b:
        return True
    if len(a) < len(b) and b[len(b) - len(a):] == a:
        return True
    return False


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if int(np.prod(shape)) == 1:
        return np.asarray(g.sum()).reshape(shape)
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead))).reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), bw, "mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return _make(np.where(mask, x.data, 0.0), (x,), bw, "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), bw, "sigmoid")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g):
        return (g * out,)

    return _make(out, (x,), bw, "exp")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)

    def bw(g):
        return (g * inside,)

    return _make(np.clip(x.data, lo, hi), (x,), bw, "clip")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``(..., n, k) @ (k, m)`` or batched ``(..., n, k) @ (..., k, m)``."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    if b.ndim == 2:
        k, m = bd.shape

        def bw(g):
            ga = g @ bd.T
            gb = ad.reshape(-1, k).T @ g.reshape(-1, m)
            return ga, gb

    elif a.ndim == b.ndim and a.shape[:-2] == b.shape[:-2]:

        def bw(g):
            return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    else:
        raise ShapeError(f"matmul: incompatible batch shapes {a.shape} and {b.shape}")
    return _make(ad @ bd, (a, b), bw, "matmul")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {src} into {tuple(shape)}") from exc

    def bw(g):
        return (g.reshape(src),)

    return _make(out, (x,), bw, "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: bad axes {axes} for shape {x.shape}")
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (g.transpose(inv),)

    return _make(x.data.transpose(axes), (x,), bw, "transpose")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat: empty input")
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from exc
    ax = axis % out.ndim
    bounds = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(out, xs, bw, "concat")


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise ShapeError(f"stack: shapes differ {[x.shape for x in xs]}")
    expanded = [reshape(x, x.shape[:axis] + (1,) + x.shape[axis:]) for x in xs] if axis >= 0 else None
    if expanded is None:
        raise ShapeError("stack: negative axis not supported")
    return concat(expanded, axis=axis)


def slice_(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    ax = axis % x.ndim
    if not 0 <= start <= stop <= x.shape[ax]:
        raise ShapeError(f"slice: [{start}:{stop}] out of range for axis {ax} of {x.shape}")
    idx = [slice(None)] * x.ndim
    idx[ax] = slice(start, stop)
    idx = tuple(idx)
    src = x.shape

    def bw(g):
        full = np.zeros(src)
        full[idx] = g
        return (full,)

    return _make(x.data[idx], (x,), bw, "slice")


def take(x: Tensor, index) -> Tensor:
    """Gather rows along axis 0; output shape is ``index.shape + x.shape[1:]``."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise ShapeError(f"take: index out of range for {x.shape[0]} rows")
    src = x.shape

    def bw(g):
        full = np.zeros(src)
        np.add.at(full, index.reshape(-1), g.reshape((-1,) + src[1:]))
        return (full,)

    return _make(x.data[index], (x,), bw, "take")


def embedding_lookup(table: Tensor, index) -> Tensor:
    return take(table, index)


# ---------------------------------------------------------------- reductions

def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001
    src = x.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, src).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), src).copy(),)

    return _make(np.asarray(x.data.sum(axis=axis)), (x,), bw, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis), 1.0 / n)


def _tie_split(mask: np.ndarray, axis) -> np.ndarray:
    counts = mask.sum(axis=axis, keepdims=True)
    return mask / counts


def maxpool_over_set(x: Tensor, axis: int = 0) -> Tensor:
    """Elementwise max over one axis; ties share the gradient equally."""
    out = x.data.max(axis=axis)
    mask = x.data == np.expand_dims(out, axis)
    share = _tie_split(mask, axis)

    def bw(g):
        return (share * np.expand_dims(g, axis),)

    return _make(out, (x,), bw, "maxpool")


def segment_max(x: Tensor, segments, n_segments: int) -> Tensor:
    """Max over rows of ``x`` grouped by ``segments``; every segment must be non-empty."""
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape[0] != x.shape[0]:
        raise ShapeError(f"segment_max: {segments.shape[0]} segment ids for {x.shape[0]} rows")
    if np.bincount(segments, minlength=n_segments).min(initial=1) == 0:
        raise ShapeError("segment_max: empty segment")
    out = np.full((n_segments,) + x.shape[1:], -np.inf)
    np.maximum.at(out, segments, x.data)
    mask = (x.data == out[segments]).astype(np.float64)
    counts = np.zeros_like(out)
    np.add.at(counts, segments, mask)
    share = mask / counts[segments]

    def bw(g):
        return (share * g[segments],)

    return _make(out, (x,), bw, "segment_max")


# ---------------------------------------------------------------- normalisation

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make(p, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), bw, "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out, (x, gain, bias), bw, "layer_norm")


# ---------------------------------------------------------------- losses

def mse(pred: Tensor, target, weight=None) -> Tensor:
    """Mean squared error; with ``weight`` it is ``sum(weight * (pred - target)**2)``."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"mse: pred {pred.shape} vs target {target.shape}")
    w = np.full(pred.shape, 1.0 / pred.data.size) if weight is None else np.asarray(weight, dtype=np.float64)
    if w.shape != pred.shape:
        raise ShapeError(f"mse: weight {w.shape} vs pred {pred.shape}")
    diff = pred.data - target

    def bw(g):
        return (g * 2.0 * w * diff,)

    return _make(np.asarray((w * diff * diff).sum()), (pred,), bw, "mse")


def cross_entropy(logits: Tensor, target, weight=None) -> Tensor:
    """Categorical negative log-likelihood over the last axis.

    ``target`` holds 0-based class ids with the leading shape of ``logits``.
    Without ``weight`` the mean over rows is returned, otherwise
    ``sum(weight * nll)``.
    """
    target = np.asarray(target, dtype=np.int64)
    lead = logits.shape[:-1]
    if target.shape != lead:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs target {target.shape}")
    k = logits.shape[-1]
    w = np.full(lead, 1.0 / max(1, int(np.prod(lead)))) if weight is None else np.asarray(weight, dtype=np.float64)
    if w.shape != lead:
        raise ShapeError(f"cross_entropy: weight {w.shape} vs rows {lead}")
    safe = np.where(w != 0, target, 0)
    if safe.size and (safe.min() < 0 or safe.max() >= k):
        raise ShapeError(f"cross_entropy: target out of range for {k} classes")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    nll = -np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]

    def bw(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        return (g * w[..., None] * (p - onehot),)

    return _make(np.asarray((w * nll).sum()), (logits,), bw, "cross_entropy")


def gaussian_kl(mu: Tensor, logvar: Tensor, weight=None) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed (or ``weight``-summed) over entries."""
    if mu.shape != logvar.shape:
        raise ShapeError(f"gaussian_kl: mu {mu.shape} vs logvar {logvar.shape}")
    w = np.ones(mu.shape) if weight is None else np.asarray(weight, dtype=np.float64)
    if w.shape != mu.shape:
        raise ShapeError(f"gaussian_kl: weight {w.shape} vs mu {mu.shape}")
    var = np.exp(logvar.data)
    kl = 0.5 * (mu.data ** 2 + var - 1.0 - logvar.data)

    def bw(g):
        return g * w * mu.data, g * w * 0.5 * (var - 1.0)

    return _make(np.asarray((w * kl).sum()), (mu, logvar), bw, "gaussian_kl")


def reparam_sample(mu: Tensor, logvar: Tensor, noise) -> Tensor:
    """``mu + exp(logvar / 2) * noise`` with ``noise`` a fixed standard-normal draw."""
    noise = np.asarray(noise, dtype=np.float64)
    if mu.shape != logvar.shape or noise.shape != mu.shape:
        raise ShapeError(f"reparam_sample: mu {mu.shape}, logvar {logvar.shape}, noise {noise.shape}")
    std = np.exp(0.5 * logvar.data)

    def bw(g):
        return g, g * noise * 0.5 * std

    return _make(mu.data + std * noise, (mu, logvar), bw, "reparam")


# ---------------------------------------------------------------- backward pass

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    The graph is released afterwards; calling again without a fresh forward
    pass raises :class:`BackwardError`.
    """
    if loss.data.size != 1:
        raise BackwardError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if loss._consumed:
        raise BackwardError("backward: graph already consumed; run the forward pass again")
    if not loss.requires_grad:
        raise BackwardError("backward: loss does not depend on any tensor requiring grad")
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        if node._backward is not None:
            node._parents = ()
            node._backward = None
    loss._consumed = True


# ---------------------------------------------------------------- gradient checking

def numerical_grad(f: Callable[[], Tensor], x: Tensor, h: float = 1e-5, indices: Iterable[int] | None = None) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. selected flat entries of ``x``."""
    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(flat.size)
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            out[i] = (fp - fm) / (2 * h)
    return out.reshape(x.shape)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error ``|a-b| / max(|a|+|b|, 1e-12)``."""
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def check_gradients(f: Callable[[], Tensor], params: dict[str, Tensor], h: float = 1e-5,
                    max_entries: int | None = 24, seed: int = 0, atol: float = 1e-8) -> dict[str, float]:
    """Compare analytic and central-difference gradients for each named tensor.

    At most ``max_entries`` randomly chosen entries per tensor are probed.
    Returns the relative error per name.  A tensor whose probed gradients are
    both below ``atol`` in norm scores 0: its true gradient is zero (e.g. a key
    bias under softmax shift invariance) and the ratio would only measure
    finite-difference round-off.
    """
    for p in params.values():
        p.grad = None
    loss = f()
    backward(loss)
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        analytic = np.zeros(p.shape) if p.grad is None else p.grad
        n = p.data.size
        idx = np.arange(n) if max_entries is None or n <= max_entries else rng.choice(n, max_entries, replace=False)
        numeric = numerical_grad(f, p, h=h, indices=idx)
        a, b = analytic.reshape(-1)[idx], numeric.reshape(-1)[idx]
        if max(np.linalg.norm(a), np.linalg.norm(b)) <= atol:
            errors[name] = 0.0
        else:
            errors[name] = relative_error(a, b)
    return errors
