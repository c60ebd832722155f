"""A small reverse-mode autodiff engine over float64 numpy arrays.

Row-vector convention throughout: a linear layer is ``x @ W + b`` with ``W``
shaped ``(fan_in, fan_out)`` and ``x`` shaped ``(..., fan_in)``.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class GradientError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    __array_priority__ = 100

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ------------------------------------------------------------------ primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Element-wise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    """``a @ b`` for ``a`` of shape ``(..., k)`` and a 2-D ``b`` of shape ``(k, m)``."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
                t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[x.shape for x in ts]}")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _make(np.concatenate([t.data for t in ts], axis=ax), ts,
                 lambda g: tuple(np.split(g, bounds, axis=ax)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if len({t.shape for t in ts}) != 1:
        raise ShapeError(f"stack: shapes differ {[t.shape for t in ts]}")
    return _make(np.stack([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.moveaxis(g, axis, 0)))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def softmax(a, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis``. Entries where ``mask`` is False get weight 0;
    a slice with no unmasked entries returns all zeros."""
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), backward)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.sum(a.data, axis=axis), (a,), backward)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / count)


def maxpool_rows(a, axis: int = 0) -> Tensor:
    """Element-wise max across ``axis``. Ties send the gradient to the first maximiser."""
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeError("maxpool_rows: empty input")
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _make(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),))


def take(a, idx) -> Tensor:
    """Basic or integer-array indexing."""
    a = as_tensor(a)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return _make(a.data[idx], (a,), backward)


def put_rows(base, rows, values) -> Tensor:
    """Copy of ``base`` with ``base[rows] = values`` (rows unique)."""
    base, values = as_tensor(base), as_tensor(values)
    rows = np.asarray(rows, dtype=np.int64)
    if values.shape != (len(rows),) + base.shape[1:]:
        raise ShapeError(f"put_rows: values {values.shape} do not fit rows {len(rows)} of {base.shape}")
    out = base.data.copy()
    out[rows] = values.data

    def backward(g):
        gb = g.copy()
        gb[rows] = 0.0
        return gb, g[rows]

    return _make(out, (base, values), backward)


def linear(x, weight, bias=None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# ------------------------------------------------------------------ backward

def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
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


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> None:
    """Populate ``.grad`` on every leaf reachable from a scalar ``loss``.

    Leaves in ``params`` that the loss does not depend on get a zero gradient.
    Calling again before gradients are cleared raises ``GradientError``.
    """
    params = list(params)
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    order = _topo(loss) if loss.requires_grad else []
    leaves = [t for t in order if t._backward is None] + params
    if any(t.grad is not None for t in leaves):
        raise GradientError("gradients already populated; clear them (adam_step or zero_grad) first")
    grads = {id(loss): np.ones(())}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


# ------------------------------------------------------------------ parameters

class ParamSet:
    """Named trainable tensors plus their Adam state."""

    def __init__(self, seed: int | None = None):
        self.params: dict[str, Tensor] = {}
        self.state: dict[str, dict] = {}
        self.rng = np.random.default_rng(seed)

    def __contains__(self, name):
        return name in self.params

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self):
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = t
        self.state[name] = {"m": np.zeros_like(t.data), "v": np.zeros_like(t.data), "step": 0}
        return t

    def weight(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        bound = 1.0 / math.sqrt(fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def vector(self, name: str, size: int, fan_in: int | None = None) -> Tensor:
        if fan_in is None:
            return self.add(name, np.zeros(size))
        bound = 1.0 / math.sqrt(fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=size))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def values(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_values(self, values: dict) -> None:
        for k, v in values.items():
            if k not in self.params:
                raise KeyError(f"unknown parameter {k!r}")
            if self.params[k].shape != np.shape(v):
                raise ShapeError(f"{k}: shape {np.shape(v)} != {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    def copy(self) -> "ParamSet":
        other = ParamSet()
        other.rng = np.random.default_rng()
        other.rng.bit_generator.state = self.rng.bit_generator.state
        for k, t in self.params.items():
            other.add(k, t.data.copy())
            st = self.state[k]
            other.state[k] = {"m": st["m"].copy(), "v": st["v"].copy(), "step": st["step"]}
        return other


def adam_step(params: ParamSet, lr: float = 1e-3, betas: tuple = (0.9, 0.999), eps: float = 1e-8) -> None:
    b1, b2 = betas
    missing = [k for k, t in params.params.items() if t.grad is None]
    if missing:
        raise GradientError(f"adam_step: no gradient for {missing[:5]}")
    for k, t in params.params.items():
        st = params.state[k]
        g = t.grad
        st["step"] += 1
        st["m"] = b1 * st["m"] + (1.0 - b1) * g
        st["v"] = b2 * st["v"] + (1.0 - b2) * (g * g)
        m_hat = st["m"] / (1.0 - b1 ** st["step"])
        v_hat = st["v"] / (1.0 - b2 ** st["step"])
        t.data = t.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        t.grad = None


# ------------------------------------------------------------------ GRU

GRU_PARTS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_n", "U_n", "b_n")


def init_gru(params: ParamSet, prefix: str, d_in: int, d_hidden: int) -> None:
    for gate in ("z", "r", "n"):
        params.weight(f"{prefix}.W_{gate}", d_in, d_hidden)
        params.weight(f"{prefix}.U_{gate}", d_hidden, d_hidden)
        params.vector(f"{prefix}.b_{gate}", d_hidden)


def gru_cell(h, x, params: ParamSet, prefix: str = "gru") -> Tensor:
    """Gated recurrent update ``h' = z * n + (1 - z) * h``.

    ``z`` is the update gate, ``r`` the reset gate applied to the recurrent
    term of the candidate ``n``. Works row-wise on batches.
    """
    h, x = as_tensor(h), as_tensor(x)
    p = {k: params[f"{prefix}.{k}"] for k in GRU_PARTS}
    d_hidden = p["U_z"].shape[0]
    if h.shape[-1] != d_hidden or x.shape[-1] != p["W_z"].shape[0] or h.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"gru_cell: h {h.shape} / x {x.shape} do not match "
                         f"W {p['W_z'].shape}, U {p['U_z'].shape}")
    z = sigmoid(x @ p["W_z"] + h @ p["U_z"] + p["b_z"])
    r = sigmoid(x @ p["W_r"] + h @ p["U_r"] + p["b_r"])
    n = tanh(x @ p["W_n"] + p["b_n"] + r * (h @ p["U_n"]))
    return z * n + (1.0 - z) * h


# ------------------------------------------------------------------ checkpoints

CKPT_FORMAT = "hmod-ckpt"
CKPT_VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> None:
    """Write named arrays to an ``.npz`` container with a versioned header entry."""
    payload = {"__format__": np.array(f"{CKPT_FORMAT}/{CKPT_VERSION}")}
    for k, v in (meta or {}).items():
        payload[f"__meta__/{k}"] = np.array(str(v))
    for k, v in tensors.items():
        if k.startswith("__"):
            raise KeyError(f"reserved tensor name {k!r}")
        payload[k] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with np.load(path, allow_pickle=False) as z:
        if "__format__" not in z.files:
            raise ValueError(f"{path}: not a checkpoint (missing header)")
        fmt, _, ver = str(z["__format__"]).partition("/")
        if fmt != CKPT_FORMAT or int(ver) > CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format {fmt}/{ver}")
        meta = {k[len("__meta__/"):]: str(z[k]) for k in z.files if k.startswith("__meta__/")}
        tensors = {k: z[k].copy() for k in z.files if not k.startswith("__")}
    return tensors, meta
