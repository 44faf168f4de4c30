"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable op appends one node to the active :class:`Graph`.
``Graph.backward`` walks the tape in reverse insertion order, so the graph is
topologically ordered by construction and each node is visited once.

    >>> w = Tensor(np.ones(3), requires_grad=True)
    >>> with Graph() as g:
    ...     loss = mean(w * w)
    ...     g.backward(loss)
    >>> w.grad
    array([0.66666667, 0.66666667, 0.66666667])
"""
from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_local = threading.local()

# incremented whenever cross_entropy has to clamp a zero probability
clamp_events = 0


class ShapeError(ValueError):
    pass


class Node:
    __slots__ = ("tag", "out", "inputs", "backward_fn")

    def __init__(self, tag, out, inputs, backward_fn):
        self.tag = tag
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Graph:
    """Append-only tape of op nodes. One graph per training step."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def record(self, tag, out, inputs, backward_fn):
        if self.consumed:
            raise RuntimeError("graph already differentiated; call reset() before recording")
        out._node = len(self.nodes)
        out._graph = self
        self.nodes.append(Node(tag, out, inputs, backward_fn))

    def reset(self):
        for node in self.nodes:
            node.out._node = None
            node.out._graph = None
        self.nodes = []
        self.consumed = False

    def backward(self, loss: "Tensor"):
        if self.consumed:
            raise RuntimeError("backward called twice on the same graph without reset()")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._graph is not self:
            raise RuntimeError("loss was not recorded on this graph")
        self.consumed = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes[: loss._node + 1]):
            g = node.out.grad
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for t, dg in zip(node.inputs, in_grads):
                if dg is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(dg, dtype=np.float64, copy=True)
                else:
                    t.grad = t.grad + dg


def _stack():
    if not hasattr(_local, "stack"):
        _local.stack = [Graph()]
        _local.grad_enabled = True
    return _local.stack


def current_graph() -> Graph:
    return _stack()[-1]


def grad_enabled() -> bool:
    _stack()
    return _local.grad_enabled


@contextmanager
def no_grad():
    _stack()
    prev = _local.grad_enabled
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


def backward(loss: "Tensor"):
    """Differentiate ``loss`` through the graph it was recorded on."""
    if loss._graph is None:
        raise RuntimeError("loss has no recorded graph (created under no_grad or from constants)")
    loss._graph.backward(loss)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_node", "_graph")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._node = None
        self._graph = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(tag, data, inputs, backward_fn):
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{tag}: non-finite value produced")
    needs = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        current_graph().record(tag, out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(tag, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{tag}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def neg(a):
    a = as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make("relu", a.data * mask, (a,), lambda g: (g * mask,))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make("exp", y, (a,), lambda g: (g * y,))


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise FloatingPointError("log: non-positive input")
    return _make("log", np.log(a.data), (a,), lambda g: (g / a.data,))


# ---------------------------------------------------------------- reductions

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _make("sum", y, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    y = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size / max(y.size, 1) if axis is not None else a.data.size

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape),)

    return _make("mean", y, (a,), bw)


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make("softmax", y, (a,), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    """``a`` of shape (..., D) times a 2-D ``b`` of shape (D, H)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    a2 = a.data.reshape(-1, a.shape[-1])
    out_shape = a.shape[:-1] + (b.shape[1],)

    def bw(g):
        g2 = g.reshape(-1, b.shape[1])
        return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

    return _make("matmul", (a2 @ b.data).reshape(out_shape), (a, b), bw)


# ---------------------------------------------------------------- shape ops

def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make("concat", y, tuple(tensors), bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from None

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make("stack", y, tuple(tensors), bw)


def getitem(a, idx):
    """Basic (slice / integer) indexing only."""
    a = as_tensor(a)
    y = a.data[idx]

    def bw(g):
        out = np.zeros_like(a.data)
        out[idx] = g
        return (out,)

    return _make("getitem", np.array(y), (a,), bw)


def reshape(a, shape):
    a = as_tensor(a)
    return _make("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def flip(a, axis):
    a = as_tensor(a)
    return _make("flip", np.flip(a.data, axis=axis).copy(), (a,), lambda g: (np.flip(g, axis=axis),))


# ---------------------------------------------------------------- sequence ops

def conv1d(x, w, b=None):
    """Valid 1-D convolution over time.

    x: (B, L, C), w: (k, C, F), b: (F,) -> (B, L - k + 1, F)
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {w.shape}")
    k, C, F = w.shape
    B, L, _ = x.shape
    if L < k:
        raise ShapeError(f"conv1d: input length {L} shorter than window {k}")
    Lo = L - k + 1
    # project every position through all k taps at once, then sum shifted taps
    w_all = w.data.transpose(1, 0, 2).reshape(C, k * F)
    x2 = x.data.reshape(-1, C)
    xw = (x2 @ w_all).reshape(B, L, k, F)
    y = xw[:, 0:Lo, 0].copy()
    for j in range(1, k):
        y += xw[:, j:j + Lo, j]
    inputs = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (F,):
            raise ShapeError(f"conv1d: bias {b.shape} does not match {F} filters")
        y += b.data
        inputs = (x, w, b)

    def bw(g):
        gxw = np.zeros((B, L, k, F))
        for j in range(k):
            gxw[:, j:j + Lo, j] = g
        gxw = gxw.reshape(-1, k * F)
        gx = (gxw @ w_all.T).reshape(B, L, C)
        gw = (x2.T @ gxw).reshape(C, k, F).transpose(1, 0, 2)
        grads = (gx, gw)
        if b is not None:
            grads += (g.sum(axis=(0, 1)),)
        return grads

    return _make("conv1d", y, inputs, bw)


def maxpool1d(x, width):
    """Non-overlapping max pooling over axis 1 of (B, L, C); the tail
    shorter than ``width`` is dropped. Ties send gradient to the first max."""
    x = as_tensor(x)
    if x.ndim != 3 or width < 1:
        raise ShapeError(f"maxpool1d: bad input {x.shape} / width {width}")
    B, L, C = x.shape
    Lo = L // width
    if Lo == 0:
        raise ShapeError(f"maxpool1d: length {L} shorter than pool width {width}")
    blocks = x.data[:, : Lo * width, :].reshape(B, Lo, width, C)
    arg = blocks.argmax(axis=2)  # first maximal element
    y = np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def bw(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[:, :, None, :], g[:, :, None, :], axis=2)
        gx = np.zeros_like(x.data)
        gx[:, : Lo * width, :] = gb.reshape(B, Lo * width, C)
        return (gx,)

    return _make("maxpool1d", y, (x,), bw)


def adaptive_maxpool(x, n_out):
    """Max-pool the last axis of (B, W) down to exactly ``n_out`` bins.

    Bin i covers [floor(i*W/n), ceil((i+1)*W/n)). Requires n_out <= W.
    """
    x = as_tensor(x)
    W = x.shape[-1]
    if n_out < 1 or n_out > W:
        raise ShapeError(f"adaptive_maxpool: cannot pool width {W} to {n_out}")
    starts = [(i * W) // n_out for i in range(n_out)]
    ends = [-((-(i + 1) * W) // n_out) for i in range(n_out)]
    flat = x.data.reshape(-1, W)
    idx = np.empty((flat.shape[0], n_out), dtype=np.int64)
    for i, (s, e) in enumerate(zip(starts, ends)):
        idx[:, i] = s + flat[:, s:e].argmax(axis=1)
    y = np.take_along_axis(flat, idx, axis=1).reshape(x.shape[:-1] + (n_out,))

    def bw(g):
        gx = np.zeros_like(flat)
        rows = np.arange(flat.shape[0])[:, None]
        np.add.at(gx, (rows, idx), g.reshape(-1, n_out))
        return (gx.reshape(x.shape),)

    return _make("adaptive_maxpool", y, (x,), bw)


def embedding_lookup(table, ids):
    """Rows of ``table`` (V, E) at integer ``ids`` of any shape -> ids.shape + (E,)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: ids outside [0, {table.shape[0]})")

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _make("embedding_lookup", table.data[ids], (table,), bw)


def cross_entropy(probs, onehot, floor=1e-12):
    """Mean over rows of -sum(onehot * log p). Probabilities under ``floor``
    are clamped and counted in ``clamp_events``."""
    global clamp_events
    probs = as_tensor(probs)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.shape != onehot.shape:
        raise ShapeError(f"cross_entropy: probabilities {probs.shape} vs targets {onehot.shape}")
    low = probs.data < floor
    if np.any(low & (onehot > 0)):
        clamp_events += int(np.sum(low & (onehot > 0)))
    p = np.where(low, floor, probs.data)
    n = probs.shape[0] if probs.ndim > 1 else 1
    y = -np.sum(onehot * np.log(p)) / n

    def bw(g):
        return (np.where(low, 0.0, -g * onehot / p / n),)

    return _make("cross_entropy", np.array(y), (probs,), bw)


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update applied in place to ``params``.

    ``grads`` entries may be None (treated as zero).
    """
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params, grads and state differ in length")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"adam_step: grad {g.shape} vs param {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------- init + io

def glorot_uniform(rng, shape, fan_in, fan_out, name=None):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape), requires_grad=True, name=name)


def zeros(shape, name=None):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def save_checkpoint(prefix, named, seed, step, extra=None):
    """Write ``prefix.bin`` (f64, declaration order) and ``prefix.json`` manifest."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(prefix.with_suffix(".bin"), "wb") as fh:
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    manifest = {
        "names": [n for n, _ in named],
        "shapes": [list(np.shape(a)) for _, a in named],
        "seed": seed,
        "step": step,
    }
    if extra:
        manifest.update(extra)
    prefix.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_checkpoint(prefix):
    """Inverse of :func:`save_checkpoint`; returns (list of (name, array), manifest)."""
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    flat = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    out, pos = [], 0
    for name, shape in zip(manifest["names"], manifest["shapes"]):
        n = int(np.prod(shape)) if shape else 1
        if pos + n > flat.size:
            raise ValueError(f"checkpoint {prefix}: binary shorter than manifest")
        out.append((name, flat[pos:pos + n].reshape(shape).astype(np.float64)))
        pos += n
    if pos != flat.size:
        raise ValueError(f"checkpoint {prefix}: {flat.size - pos} trailing values")
    return out, manifest
