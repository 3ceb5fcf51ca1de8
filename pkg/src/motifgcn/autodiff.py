"""A small reverse-mode differentiation tape over dense float64 matrices.

Only the handful of operations the graph models need are provided. Every
value is a 2-D array; graph operators enter as constants through
``const_spmv``. One tape records one forward pass and is discarded after
``backward``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from motifgcn.graph import ShapeMismatchError, SparseMatrix
from motifgcn.spectral import RescaledLaplacian


class EmptyMaskError(ValueError):
    pass


@dataclass(eq=False)
class Param:
    """A learnable matrix with its gradient and Adam moments."""

    name: str
    value: np.ndarray
    decay: bool = True
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    step: int = 0

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64, ndmin=2)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return int(self.value.size)


class Node:
    __slots__ = ("value", "grad", "parents", "backward_fn", "op", "param")

    def __init__(self, value, op, parents=(), backward_fn=None, param=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g


def _op_matrix(op):
    return op.matrix if isinstance(op, RescaledLaplacian) else op


def _apply(op, x, transpose=False):
    op = _op_matrix(op)
    if isinstance(op, SparseMatrix):
        m = op.csr.T if transpose else op.csr
        return np.asarray(m @ x)
    op = np.asarray(op)
    return (op.T if transpose else op) @ x


class Tape:
    """Records operations in order; ``backward`` replays them in reverse.

    ``training`` switches dropout on; ``rng`` draws the dropout masks.
    """

    def __init__(self, training: bool = True, rng: np.random.Generator | None = None):
        self.training = training
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.nodes: list[Node] = []
        self.params: list[Param] = []

    def _record(self, value, op, parents=(), backward_fn=None, param=None) -> Node:
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite value produced by {op}")
        node = Node(value, op, tuple(parents), backward_fn, param)
        self.nodes.append(node)
        return node

    def param(self, p: Param) -> Node:
        if p not in self.params:
            self.params.append(p)
        return self._record(p.value, "param", param=p)

    def const(self, x) -> Node:
        return self._record(np.array(x, dtype=np.float64, ndmin=2), "const")

    def const_spmv(self, op, x: Node) -> Node:
        m = _op_matrix(op)
        if m.shape[1] != x.shape[0]:
            raise ShapeMismatchError("const_spmv", m.shape, x.shape)

        def back(g):
            x._accumulate(_apply(op, g, transpose=True))

        return self._record(_apply(op, x.value), "const_spmv", (x,), back)

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatchError("matmul", a.shape, b.shape)

        def back(g):
            a._accumulate(g @ b.value.T)
            b._accumulate(a.value.T @ g)

        return self._record(a.value @ b.value, "matmul", (a, b), back)

    def add(self, a: Node, b: Node) -> Node:
        """Elementwise sum; ``b`` may also be a (1, cols) row broadcast over rows."""
        if a.shape != b.shape and not (b.shape[0] == 1 and b.shape[1] == a.shape[1]):
            raise ShapeMismatchError("add", a.shape, b.shape)
        broadcast = a.shape != b.shape

        def back(g):
            a._accumulate(g)
            b._accumulate(g.sum(axis=0, keepdims=True) if broadcast else g)

        return self._record(a.value + b.value, "add", (a, b), back)

    def scale(self, a: Node, c: float) -> Node:
        c = float(c)

        def back(g):
            a._accumulate(c * g)

        return self._record(c * a.value, "scale", (a,), back)

    def relu(self, a: Node) -> Node:
        mask = a.value > 0

        def back(g):
            a._accumulate(g * mask)

        return self._record(np.where(mask, a.value, 0.0), "relu", (a,), back)

    def dropout(self, a: Node, keep_p: float) -> Node:
        if not 0.0 < keep_p <= 1.0:
            raise ValueError(f"keep probability must be in (0, 1], got {keep_p}")
        if not self.training or keep_p == 1.0:
            return a
        mask = (self.rng.random(a.shape) < keep_p) / keep_p

        def back(g):
            a._accumulate(g * mask)

        return self._record(a.value * mask, "dropout", (a,), back)

    def softmax_rows(self, a: Node) -> Node:
        z = a.value - a.value.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)

        def back(g):
            a._accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

        return self._record(s, "softmax_rows", (a,), back)

    def softmax_xent(self, logits: Node, labels, mask) -> Node:
        """Mean cross-entropy of row-wise softmax over the rows selected by ``mask``."""
        labels = np.asarray(labels, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        rows = np.flatnonzero(mask)
        if rows.size == 0:
            raise EmptyMaskError("softmax_xent needs a non-empty mask")
        z = logits.value[rows]
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        y = labels[rows]
        loss = -logp[np.arange(rows.size), y].mean()

        def back(g):
            p = np.exp(logp)
            p[np.arange(rows.size), y] -= 1.0
            full = np.zeros_like(logits.value)
            full[rows] = p * (g[0, 0] / rows.size)
            logits._accumulate(full)

        return self._record(np.array([[loss]]), "softmax_xent", (logits,), back)

    def weighted_sum(self, xs: Sequence[Node], w: Node) -> Node:
        """``sum_k xs[k] * w[:, k]``: ``w`` is (1, K) for scalar weights or
        (cols, K) for one weight per column."""
        k = len(xs)
        cols = xs[0].shape[1]
        if w.shape[1] != k or w.shape[0] not in (1, cols):
            raise ShapeMismatchError("weighted_sum", w.shape, (cols, k))
        for x in xs[1:]:
            if x.shape != xs[0].shape:
                raise ShapeMismatchError("weighted_sum", xs[0].shape, x.shape)
        wv = w.value
        out = xs[0].value * wv[:, 0]
        tmp = np.empty_like(out)
        for i in range(1, k):
            np.multiply(xs[i].value, wv[:, i], out=tmp)
            out += tmp

        def back(g):
            gw = np.zeros_like(wv)
            for i, x in enumerate(xs):
                x._accumulate(g * wv[:, i])
                col = np.einsum("ij,ij->j", g, x.value)
                gw[:, i] = col.sum() if wv.shape[0] == 1 else col
            w._accumulate(gw)

        return self._record(out, "weighted_sum", (*xs, w), back)

    def repeat_rows(self, a: Node, r: int) -> Node:
        def back(g):
            a._accumulate(g.reshape(a.shape[0], r, a.shape[1]).sum(axis=1))

        return self._record(np.repeat(a.value, r, axis=0), "repeat_rows", (a,), back)

    def tile_cols(self, a: Node, r: int) -> Node:
        def back(g):
            a._accumulate(g.reshape(a.shape[0], r, a.shape[1]).sum(axis=1))

        return self._record(np.tile(a.value, (1, r)), "tile_cols", (a,), back)

    def blockwise_mix(self, g_node: Node, theta: Node) -> Node:
        """``out[:, l] = G[:, l-th block of q_in columns] @ theta[:, l]``."""
        q_in, q_out = theta.shape
        n = g_node.shape[0]
        if g_node.shape[1] != q_in * q_out:
            raise ShapeMismatchError("blockwise_mix", g_node.shape, theta.shape)
        g3 = g_node.value.reshape(n, q_out, q_in)

        def back(g):
            g_node._accumulate((g[:, :, None] * theta.value.T[None, :, :]).reshape(n, q_out * q_in))
            theta._accumulate(np.einsum("nlc,nl->cl", g3, g))

        return self._record(np.einsum("nlc,cl->nl", g3, theta.value), "blockwise_mix", (g_node, theta), back)

    def sum(self, a: Node) -> Node:
        def back(g):
            a._accumulate(np.full(a.shape, g[0, 0]))

        return self._record(np.array([[a.value.sum()]]), "sum", (a,), back)

    def backward(self, loss: Node, params: Iterable[Param] | None = None) -> None:
        """Fill ``Param.grad`` for every param on this tape (zero if unreachable)."""
        if loss.shape != (1, 1):
            raise ValueError(f"loss must be 1x1, got {loss.shape}")
        for p in self.params if params is None else params:
            p.grad = np.zeros_like(p.value)
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            if node.backward_fn is not None:
                node.backward_fn(node.grad)
            elif node.param is not None:
                node.param.grad = node.param.grad + node.grad


def adam_step(
    params: Iterable[Param],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decoupled: bool = False,
) -> None:
    """One Adam update with bias correction.

    Weight decay on flagged params is added to the gradient as ``gamma * value``
    by default, or subtracted from the value directly when ``decoupled``.
    """
    for p in params:
        g = p.grad
        if weight_decay and p.decay and not decoupled:
            g = g + weight_decay * p.value
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        if weight_decay and p.decay and decoupled:
            p.value = p.value - lr * weight_decay * p.value
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)


def numeric_grad(f: Callable[[], float], p: Param, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function with respect to ``p.value``."""
    out = np.zeros_like(p.value)
    base = p.value
    for idx in np.ndindex(base.shape):
        orig = base[idx]
        base[idx] = orig + h
        up = f()
        base[idx] = orig - h
        down = f()
        base[idx] = orig
        out[idx] = (up - down) / (2.0 * h)
    return out
