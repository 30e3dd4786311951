"""Reverse-mode automatic differentiation over dense numpy arrays.

Graphs are built eagerly: every operation computes its output immediately
and records a closure that maps the upstream gradient onto its inputs.
:func:`backward` walks the recorded graph in reverse topological order.

Besides the usual arithmetic this module holds the pieces the sequence
models need directly: gradient reversal, inverted dropout, a fused masked
cross-entropy, and Adam with multiplicative learning-rate decay.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled = True


class ShapeError(ValueError):
    """Raised when the inputs of an operation have incompatible shapes."""


class NonFiniteGradientError(FloatingPointError):
    """Raised when an optimizer step is handed NaN or Inf gradients."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A node in the computation graph.

    Leaves are created by the user (parameters, inputs); interior nodes are
    created by operations and keep references to their inputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")
    # make ``ndarray * Tensor`` defer to Tensor.__rmul__
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 op: str = "leaf", parents: tuple = (), backward_fn=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.op = op
        self.name = name
        self._parents = parents
        self._backward = backward_fn

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor<{self.op}{label}>(shape={self.shape})"

    def __len__(self):
        return len(self.data)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))


def _make(data, parents: Sequence[Tensor], op: str, backward_fn) -> Tensor:
    """Wrap an op result, recording the graph edge only when needed."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, parents=tuple(parents),
                      backward_fn=backward_fn)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# -- elementwise arithmetic ----------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(out, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(out, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(out, (a, b), "mul", bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data

    def bw(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _make(out, (a, b), "div", bw)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** exponent

    def bw(g):
        return (g * exponent * a.data ** (exponent - 1),)
    return _make(out, (a,), "pow", bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), "exp", lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), "tanh", lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # split by sign to stay finite for large |x|
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), "relu", lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    k = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * k, (a,), "leaky_relu", lambda g: (g * k,))


# -- linear algebra and shape ops ------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _make(out, (a, b), "matmul", bw)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _make(out, (a,), "sum", bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return _make(out, (a,), "reshape", lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), "transpose", lambda g: (np.transpose(g, inv),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))
    return _make(out, ts, "concat", bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in ts]}") from None

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))
    return _make(out, ts, "stack", bw)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)
    return _make(np.array(out, copy=True), (a,), "getitem", bw)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup ``weight[ids]``; repeated ids accumulate gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    if weight.ndim != 2:
        raise ShapeError(f"embedding: weight must be 2-d, got {weight.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ShapeError(f"embedding: id out of range for table of {weight.shape[0]} rows")
    out = weight.data[ids]

    def bw(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (full,)
    return _make(out, (weight,), "embedding", bw)


def take_along_axis(a, idx, axis: int) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = np.take_along_axis(a.data, idx, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        # put_along_axis does not accumulate, so scatter through add.at
        grids = list(np.indices(idx.shape, sparse=True))
        grids[axis] = idx
        np.add.at(full, tuple(grids), g)
        return (full,)
    return _make(out, (a,), "take_along_axis", bw)


# -- normalisation and losses ---------------------------------------------
def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)
    return _make(out, (a,), "softmax", bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bw(g):
        sm = np.exp(out)
        return (g - sm * g.sum(axis=axis, keepdims=True),)
    return _make(out, (a,), "log_softmax", bw)


def cross_entropy(logits, targets, mask=None) -> Tensor:
    """Mean softmax cross-entropy over the last axis.

    ``targets`` holds integer class ids with shape ``logits.shape[:-1]``.
    Positions where ``mask`` is 0 contribute neither loss nor gradient; the
    mean is taken over unmasked positions.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"cross_entropy: targets {targets.shape} vs logits {logits.shape}")
    m = np.ones(targets.shape, dtype=DTYPE) if mask is None else np.asarray(mask, dtype=DTYPE)
    count = m.sum()
    if count <= 0:
        raise ValueError("cross_entropy: mask selects no positions")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * m).sum() / count

    def bw(g):
        p = np.exp(logp)
        np.put_along_axis(p, targets[..., None],
                          np.take_along_axis(p, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (g * p * (m / count)[..., None],)
    return _make(np.asarray(loss), (logits,), "cross_entropy", bw)


# -- regularisation and adversarial ops ------------------------------------
@dataclass(frozen=True)
class GrlSpec:
    scale: float = 1.0

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError(f"GRL scale must be non-negative, got {self.scale}")


def grl(a, spec: GrlSpec | float = 1.0) -> Tensor:
    """Gradient reversal: identity forward, ``-scale * grad`` backward."""
    a = as_tensor(a)
    lam = spec.scale if isinstance(spec, GrlSpec) else float(spec)
    if lam < 0:
        raise ValueError(f"GRL scale must be non-negative, got {lam}")
    return _make(a.data, (a,), "grl", lambda g: (-lam * g,))


def dropout(a, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; an exact identity outside training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    a = as_tensor(a)
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit RNG")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _make(a.data * mask, (a,), "dropout", lambda g: (g * mask,))


# -- backward pass -----------------------------------------------------
def _topo_order(root: Tensor) -> List[Tensor]:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(root: Tensor, seed: np.ndarray | None = None) -> Dict[int, np.ndarray]:
    """Back-propagate from ``root``; leaf gradients accumulate into ``.grad``.

    Returns a mapping from ``id(leaf)`` to the gradient deposited by this call.
    """
    if seed is None:
        if root.data.size != 1:
            raise ShapeError(f"backward: implicit seed needs a scalar root, got {root.shape}")
        seed = np.ones_like(root.data)
    seed = np.asarray(seed, dtype=root.data.dtype)
    if seed.shape != root.shape:
        raise ShapeError(f"backward: seed shape {seed.shape} does not match root {root.shape}")
    if not root.requires_grad:
        return {}
    grads: Dict[int, np.ndarray] = {id(root): seed}
    leaves: Dict[int, np.ndarray] = {}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            leaves[id(node)] = g
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaves


def grad(root: Tensor, wrt: Sequence[Tensor]) -> List[np.ndarray]:
    """Gradients of scalar ``root`` w.r.t. ``wrt`` without touching ``.grad``."""
    saved = [t.grad for t in wrt]
    for t in wrt:
        t.grad = None
    try:
        got = backward(root)
        return [got.get(id(t), np.zeros_like(t.data)) for t in wrt]
    finally:
        for t, s in zip(wrt, saved):
            t.grad = s


# -- optimisation ------------------------------------------------------
@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    # optional per-parameter multipliers on lr
    lr_scale: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    Parameters missing from ``grads`` are treated as having zero gradient.
    Any non-finite gradient rejects the whole step before anything changes.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"adam_step: gradient {g.shape} vs parameter {params[name].shape} for {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        lr = state.lr * state.lr_scale.get(name, 1.0)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def decay_lr(state: AdamState, factor: float) -> AdamState:
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"decay factor must be in (0, 1], got {factor}")
    state.lr *= factor
    return state


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale ``grads`` in place to global L2 norm ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for k in grads:
            grads[k] = grads[k] * scale
    return total


def numerical_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. array ``x`` (mutated and restored)."""
    out = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        out[i] = (fp - fm) / (2 * eps)
    return out
