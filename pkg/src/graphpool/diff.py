"""Minimal reverse-mode differentiation over dense 2-D float64 tensors.

A :class:`Tape` records every primitive applied while it is active (one tape
per thread); :func:`backward` replays the records in reverse and accumulates
exact vector-Jacobian products into ``Tensor.grad``.  Forward evaluation with
no active tape records nothing, which is how inference and finite-difference
probes run.
"""

from __future__ import annotations

import threading

import numpy as np

from . import sparse
from .sparse import CsrMatrix

_TLS = threading.local()


def _active_tape():
    return getattr(_TLS, "tape", None)


class Tensor:
    """A (rows, cols) float64 array with an optional gradient of same shape."""

    __slots__ = ("values", "grad", "requires_grad", "tape")

    def __init__(self, values, requires_grad: bool = False):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"tensors are 2-D (rows, cols), got shape {v.shape}")
        self.values = v
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter:
    """Named trainable tensor, registered exactly once per model."""

    def __init__(self, name: str, values):
        if not np.all(np.isfinite(values)):
            raise ValueError(f"parameter {name!r} has non-finite values")
        self.name = name
        self.tensor = Tensor(values, requires_grad=True)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class Tape:
    """Ordered record of forward operations on one thread."""

    def __init__(self):
        self._entries: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _TLS.tape = self
        return self

    def __exit__(self, *exc):
        _TLS.tape = None
        return False

    def __len__(self) -> int:
        return len(self._entries)


def _record(out: Tensor, rule) -> Tensor:
    tape = _active_tape()
    if tape is not None:
        out.tape = tape
        tape._entries.append((out, rule))
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Populate gradients of everything the recorded loss depends on."""
    if loss.tape is None:
        raise RuntimeError("backward requires a loss recorded on an active tape")
    if loss.shape != (1, 1):
        raise ValueError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
    loss.grad = np.ones((1, 1))
    for out, rule in reversed(loss.tape._entries):
        if out.grad is None:
            continue
        rule(out.grad)


def constant(values) -> Tensor:
    t = Tensor(values)
    if not np.all(np.isfinite(t.values)):
        raise ValueError("constant tensors must be finite")
    return t


def _segments(segment_id, n_rows: int) -> np.ndarray:
    seg = np.asarray(segment_id, dtype=np.int64)
    if seg.shape != (n_rows,):
        raise ValueError("segment ids must align with tensor rows")
    if seg.size and (seg[0] < 0 or np.any(np.diff(seg) < 0)):
        raise ValueError("segment ids must be non-negative and non-decreasing")
    return seg


# ---------------------------------------------------------------------------
# dense primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.values @ b.values)

    def rule(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _record(out, rule)


def transpose(t: Tensor) -> Tensor:
    out = Tensor(t.values.T.copy())

    def rule(g):
        _accumulate(t, g.T)

    return _record(out, rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")
    out = Tensor(a.values + b.values)

    def rule(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _record(out, rule)


def add_bias(t: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x cols bias row to every row of t."""
    if bias.shape != (1, t.cols):
        raise ValueError(f"bias shape {bias.shape} does not match {t.shape}")
    out = Tensor(t.values + bias.values)

    def rule(g):
        _accumulate(t, g)
        _accumulate(bias, g.sum(axis=0, keepdims=True))

    return _record(out, rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} - {b.shape}")
    out = Tensor(a.values - b.values)

    def rule(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _record(out, rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} * {b.shape}")
    out = Tensor(a.values * b.values)

    def rule(g):
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return _record(out, rule)


def broadcast_col(t: Tensor, col: Tensor) -> Tensor:
    """Scale row i of t by the scalar col[i, 0]."""
    if col.shape != (t.rows, 1):
        raise ValueError(f"column shape {col.shape} does not match {t.shape}")
    out = Tensor(t.values * col.values)

    def rule(g):
        _accumulate(t, g * col.values)
        _accumulate(col, (g * t.values).sum(axis=1, keepdims=True))

    return _record(out, rule)


def relu(t: Tensor) -> Tensor:
    mask = t.values > 0
    out = Tensor(np.where(mask, t.values, 0.0))

    def rule(g):
        _accumulate(t, g * mask)

    return _record(out, rule)


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.values)
    out = Tensor(y)

    def rule(g):
        _accumulate(t, g * (1.0 - y * y))

    return _record(out, rule)


def row_softmax(t: Tensor) -> Tensor:
    """Softmax independently over the columns of each row."""
    z = t.values - t.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def rule(g):
        _accumulate(t, y * (g - (g * y).sum(axis=1, keepdims=True)))

    return _record(out, rule)


def sum_all(t: Tensor) -> Tensor:
    out = Tensor([[t.values.sum()]])

    def rule(g):
        _accumulate(t, np.full_like(t.values, g[0, 0]))

    return _record(out, rule)


def concat_cols(u: Tensor, v: Tensor) -> Tensor:
    if u.rows != v.rows:
        raise ValueError(f"row mismatch: {u.shape} || {v.shape}")
    out = Tensor(np.hstack([u.values, v.values]))
    width = u.cols

    def rule(g):
        _accumulate(u, g[:, :width])
        _accumulate(v, g[:, width:])

    return _record(out, rule)


def gather_rows(t: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(t.values[idx])

    def rule(g):
        buf = np.zeros_like(t.values)
        np.add.at(buf, idx, g)
        _accumulate(t, buf)

    return _record(out, rule)


def scatter_sum(t: Tensor, idx, n_rows: int) -> Tensor:
    """Sum row e of t into output row idx[e]."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != (t.rows,):
        raise ValueError("scatter index must align with tensor rows")
    vals = np.zeros((n_rows, t.cols))
    np.add.at(vals, idx, t.values)
    out = Tensor(vals)

    def rule(g):
        _accumulate(t, g[idx])

    return _record(out, rule)


# ---------------------------------------------------------------------------
# graph-shaped primitives


def spmm_const(a: CsrMatrix, x: Tensor) -> Tensor:
    """Sparse @ dense with the sparse operand held constant."""
    out = Tensor(sparse.spmm(a, x.values))

    def rule(g):
        _accumulate(x, sparse.spmm(sparse.transpose(a), g))

    return _record(out, rule)


def segment_softmax(t: Tensor, segment_id) -> Tensor:
    """Softmax over the rows of each segment of a column vector."""
    if t.cols != 1:
        raise ValueError("segment_softmax expects a column vector")
    seg = _segments(segment_id, t.rows)
    x = t.values[:, 0]
    _, starts, counts = np.unique(seg, return_index=True, return_counts=True)
    m = np.repeat(np.maximum.reduceat(x, starts), counts)
    e = np.exp(x - m)
    denom = np.repeat(np.add.reduceat(e, starts), counts)
    y = e / denom
    out = Tensor(y[:, None])

    def rule(g):
        gy = g[:, 0] * y
        inner = np.repeat(np.add.reduceat(gy, starts), counts)
        _accumulate(t, (gy - y * inner)[:, None])

    return _record(out, rule)


def _segment_bounds(seg: np.ndarray, n_segments: int) -> np.ndarray:
    counts = np.bincount(seg, minlength=n_segments)
    if np.any(counts == 0):
        missing = int(np.nonzero(counts == 0)[0][0])
        raise ValueError(f"segment {missing} has no rows")
    bounds = np.zeros(n_segments + 1, dtype=np.int64)
    np.cumsum(counts, out=bounds[1:])
    return bounds


def segment_mean(x: Tensor, segment_id, n_segments: int | None = None) -> Tensor:
    seg = _segments(segment_id, x.rows)
    n = int(seg[-1]) + 1 if n_segments is None else n_segments
    counts = np.bincount(seg, minlength=n).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("every segment needs at least one row")
    sums = np.zeros((n, x.cols))
    np.add.at(sums, seg, x.values)
    out = Tensor(sums / counts[:, None])

    def rule(g):
        _accumulate(x, g[seg] / counts[seg][:, None])

    return _record(out, rule)


def segment_max(x: Tensor, segment_id, n_segments: int | None = None) -> Tensor:
    seg = _segments(segment_id, x.rows)
    n = int(seg[-1]) + 1 if n_segments is None else n_segments
    bounds = _segment_bounds(seg, n)
    vals = np.empty((n, x.cols))
    argrows = np.empty((n, x.cols), dtype=np.int64)
    cols = np.arange(x.cols)
    for s in range(n):
        block = x.values[bounds[s] : bounds[s + 1]]
        am = block.argmax(axis=0)  # first max wins
        vals[s] = block[am, cols]
        argrows[s] = bounds[s] + am
    out = Tensor(vals)

    def rule(g):
        buf = np.zeros_like(x.values)
        np.add.at(buf, (argrows.ravel(), np.tile(cols, n)), g.ravel())
        _accumulate(x, buf)

    return _record(out, rule)


def assignment_reduce(s: Tensor, x: Tensor, segment_id, k: int) -> Tensor:
    """Per-segment S^T @ X for a block-diagonal soft assignment.

    Row g*k + c of the result is sum_i s[i, c] * x[i, :] over the rows i of
    segment g.
    """
    if s.rows != x.rows:
        raise ValueError("assignment and features must have equal rows")
    if s.cols != k:
        raise ValueError(f"assignment width {s.cols} != {k}")
    seg = _segments(segment_id, x.rows)
    n = int(seg[-1]) + 1 if seg.size else 0
    out3 = np.zeros((n, k, x.cols))
    np.add.at(out3, seg, s.values[:, :, None] * x.values[:, None, :])
    out = Tensor(out3.reshape(n * k, x.cols))

    def rule(g):
        g3 = g.reshape(n, k, x.cols)[seg]
        _accumulate(s, np.einsum("ncd,nd->nc", g3, x.values))
        _accumulate(x, np.einsum("nc,ncd->nd", s.values, g3))

    return _record(out, rule)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer class labels."""
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (logits.rows,):
        raise ValueError("labels must align with logit rows")
    if y.size and (y.min() < 0 or y.max() >= logits.cols):
        raise ValueError("label outside class range")
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.rows
    out = Tensor([[-logp[np.arange(n), y].mean()]])

    def rule(g):
        grad = np.exp(logp)
        grad[np.arange(n), y] -= 1.0
        _accumulate(logits, g[0, 0] * grad / n)

    return _record(out, rule)


# ---------------------------------------------------------------------------
# optimization and checkpointing


class Adam:
    """Adam with bias correction over a list of Parameters."""

    def __init__(self, params, lr=0.0005, betas=(0.9, 0.999), eps=1e-8):
        params = list(params)
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self._m = [np.zeros_like(p.tensor.values) for p in params]
        self._v = [np.zeros_like(p.tensor.values) for p in params]
        self._t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.grad = None

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self._t
        c2 = 1.0 - b2**self._t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.tensor.grad
            if g is None:
                g = np.zeros_like(p.tensor.values)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.tensor.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def snapshot(params) -> dict[str, np.ndarray]:
    return {p.name: p.tensor.values.copy() for p in params}


def restore(params, state: dict[str, np.ndarray]) -> None:
    for p in params:
        p.tensor.values = state[p.name].copy()


def save_parameters(params, path) -> None:
    """Write a checkpoint that round-trips bit-exactly."""
    np.savez(path, **{p.name: p.tensor.values for p in params})


def load_parameters(params, path) -> None:
    with np.load(path) as data:
        for p in params:
            if p.name not in data:
                raise KeyError(f"checkpoint is missing parameter {p.name!r}")
            arr = np.asarray(data[p.name], dtype=np.float64)
            if arr.shape != p.tensor.shape:
                raise ValueError(f"shape mismatch for {p.name!r}")
            p.tensor.values = arr.copy()
