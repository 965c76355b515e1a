"""A small reverse-mode autodiff kernel on numpy arrays.

Only the operations the separation GNN needs are provided: affine maps,
ReLU, sigmoid, concatenation, row gathers, sparse aggregation, and the
positive-weighted BCE loss.  Training uses Adam with a cosine-annealing
schedule that restarts every `t0` steps.
"""

from __future__ import annotations

import contextlib
import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, ShapeError, StateError

PROB_CLAMP = 1e-7
CHECKPOINT_VERSION = 1


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    """Skip tape recording inside the block (inference only)."""
    prev = _GRAD_ENABLED[0]
    _GRAD_ENABLED[0] = False
    try:
        yield
    finally:
        _GRAD_ENABLED[0] = prev


def _make(data, parents, backward):
    parents = tuple(p for p in parents if p.requires_grad)
    if not parents or not _GRAD_ENABLED[0]:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = _t(a), _t(b)
    out = a.data + b.data

    def back(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _make(out, (a, b), back)


def mul(a, b):
    a, b = _t(a), _t(b)
    out = a.data * b.data

    def back(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), back)


def matmul(a, b):
    a, b = _t(a), _t(b)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def back(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return _make(out, (a, b), back)


def reshape(a, shape):
    def back(g):
        a._accum(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), back)


def relu(a):
    mask = a.data > 0

    def back(g):
        a._accum(g * mask)

    return _make(a.data * mask, (a,), back)


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def back(g):
        a._accum(g * out * (1.0 - out))

    return _make(out, (a,), back)


def log(a):
    def back(g):
        a._accum(g / a.data)

    return _make(np.log(a.data), (a,), back)


def clamp(a, lo, hi):
    inside = (a.data >= lo) & (a.data <= hi)

    def back(g):
        a._accum(g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), back)


def total(a):
    def back(g):
        a._accum(np.full(a.shape, float(g)))

    return _make(np.array(a.data.sum()), (a,), back)


def concat(parts, axis=-1):
    parts = [_t(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def back(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accum(np.take(g, np.arange(lo, hi), axis=axis))

    return _make(out, parts, back)


def gather_rows(a, index):
    index = np.asarray(index, dtype=np.int64)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a._accum(full)

    return _make(a.data[index], (a,), back)


def spmm(matrix, a):
    """Sparse (constant) matrix times tensor; used for neighbourhood aggregation."""
    if matrix.shape[1] != a.shape[0]:
        raise ShapeError(f"cannot aggregate {a.shape} with operator {matrix.shape}")
    def back(g):
        a._accum(matrix.T @ g)

    return _make(matrix @ a.data, (a,), back)


def mean_aggregator(receivers, n_rows):
    """Row-normalised incidence operator: row i averages the messages sent to i."""
    receivers = np.asarray(receivers, dtype=np.int64)
    cols = np.arange(len(receivers))
    counts = np.bincount(receivers, minlength=n_rows).astype(float)
    vals = 1.0 / counts[receivers] if len(receivers) else np.zeros(0)
    return sp.csr_matrix((vals, (receivers, cols)), shape=(n_rows, len(receivers)))


def backward(loss):
    """Accumulate d(loss)/d(leaf) into `.grad` of every reachable leaf."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward is None:
        raise StateError("no recorded forward pass reaches this tensor")
    topo, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # interior grads are not needed after propagation
            node.grad = None
            node._parents = ()
            node._backward = None


def glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Mlp:
    """Affine layers with ReLU in between; output is identity or sigmoid."""

    def __init__(self, dims, rng, output="identity"):
        if output not in ("identity", "sigmoid"):
            raise ValueError(f"unknown output activation {output!r}")
        self.dims = list(dims)
        self.output = output
        self.weights = [Tensor(glorot(rng, a, b), requires_grad=True) for a, b in zip(dims[:-1], dims[1:])]
        self.biases = [Tensor(np.zeros(b), requires_grad=True) for b in dims[1:]]

    def parameters(self):
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{k}"] = w
            out[f"b{k}"] = b
        return out

    def __call__(self, x):
        x = _t(x)
        if x.shape[-1] != self.dims[0]:
            raise ShapeError(f"input shape {x.shape} does not match layer shape {self.weights[0].shape}")
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = add(matmul(x, w), b)
            if k < last:
                x = relu(x)
        return sigmoid(x) if self.output == "sigmoid" else x


mlp_forward = Mlp.__call__


def weighted_bce(p, y, pos_coef, neg_coef):
    """-sum(pos_coef*y*log p + neg_coef*(1-y)*log(1-p)), p clamped to [1e-7, 1-1e-7]."""
    p = _t(p)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"probabilities {p.shape} and labels {y.shape} differ in shape")
    pos_coef = np.broadcast_to(np.asarray(pos_coef, dtype=np.float64), y.shape)
    neg_coef = np.broadcast_to(np.asarray(neg_coef, dtype=np.float64), y.shape)
    pc = clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = mul(log(pc), -pos_coef * y)
    neg = mul(log(add(mul(pc, -1.0), 1.0)), -neg_coef * (1.0 - y))
    return total(add(pos, neg))


def bce_pos_weight(p, y, rho):
    """Mean positive-weighted BCE: -mean(rho*y*log p + (1-y)*log(1-p))."""
    size = np.asarray(y).size
    if size == 0:
        raise ShapeError("empty label vector")
    return weighted_bce(p, y, np.asarray(rho, dtype=np.float64) / size, 1.0 / size)


def cosine_warm_restart(step, base_lr, t0, eta_min=0.0):
    t_cur = step % t0
    return eta_min + 0.5 * (base_lr - eta_min) * (1.0 + math.cos(math.pi * t_cur / t0))


class Adam:
    def __init__(self, params, lr=5e-4, betas=(0.9, 0.999), eps=1e-8, t0=32):
        self.params = dict(params)
        self.lr, self.betas, self.eps, self.t0 = lr, betas, eps, t0
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def current_lr(self):
        return cosine_warm_restart(self.step_count, self.lr, self.t0)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        lr = self.current_lr()
        self.step_count += 1
        b1, b2 = self.betas
        t = self.step_count
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1**t)
            vhat = self.v[k] / (1 - b2**t)
            p.data = p.data - lr * mhat / (np.sqrt(vhat) + self.eps)
        return lr


adam_step = Adam.step


def save_checkpoint(params, path, meta=None):
    doc = {
        "format": "rcisep-params",
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "tensors": {k: {"shape": list(t.shape), "data": t.data.ravel().tolist()} for k, t in params.items()},
    }
    Path(path).write_text(json.dumps(doc))


def read_checkpoint(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a checkpoint ({exc})") from None
    if doc.get("format") != "rcisep-params" or doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint format/version")
    return doc


def load_checkpoint(params, path):
    """Copy stored tensors into `params`; every name and shape must match."""
    doc = read_checkpoint(path)
    stored = doc["tensors"]
    if set(stored) != set(params):
        missing = sorted(set(params) ^ set(stored))
        raise ShapeError(f"checkpoint parameter names differ: {missing[:5]}")
    for k, t in params.items():
        shape = tuple(stored[k]["shape"])
        if shape != t.shape:
            raise ShapeError(f"{k}: checkpoint shape {shape} != model shape {t.shape}")
        t.data = np.asarray(stored[k]["data"], dtype=np.float64).reshape(shape)
    return doc.get("meta", {})
