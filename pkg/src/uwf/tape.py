"""Minimal reverse-mode differentiation tape over real ndarrays.

Nodes record value, parents and a backward closure; `backward` runs the
closures once each in reverse topological order.  The op set is exactly
what the unrolled pipeline needs: (transposed) matrix products against
parameters or constants, bias columns, elementwise arithmetic, activation
masks (recorded as constants), column norms, scalar arithmetic, argmax
picks and a leading-singular-value op.

Values are float64 arrays shaped (), (B,), (dim,) or (dim, B); a trailing
batch axis is handled uniformly by the ops below.
"""

from __future__ import annotations

from typing import Iterable, List, Optional, Tuple

import numpy as np


class Node:
    __slots__ = ("value", "grad", "parents", "bwd")

    def __init__(self, value, parents: Tuple["Node", ...] = (), bwd=None):
        self.value = np.asarray(value, dtype=float)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.bwd = bwd

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


def const(x) -> Node:
    return Node(x)


def param(x) -> Node:
    """Alias of const; kept distinct so call sites read as intended."""
    return Node(x)


def _toposort(root: Node) -> List[Node]:
    order: List[Node] = []
    seen = set()
    stack: List[Tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into .grad over the whole graph."""
    if root.value.shape != ():
        raise ValueError("backward root must be a scalar node")
    order = _toposort(root)
    for n in order:
        n.grad = None
    root.grad = np.ones(())
    for node in reversed(order):
        if node.bwd is not None and node.grad is not None:
            node.bwd(node.grad)


# ---------------------------------------------------------------- products

def matmul(W: Node, X: Node) -> Node:
    """W @ X with gradients to both the weight and the input."""
    out = Node(W.value @ X.value, (W, X))

    def bwd(g):
        if X.value.ndim == 1:
            W._accum(np.outer(g, X.value))
        else:
            W._accum(g @ X.value.T)
        X._accum(W.value.T @ g)
    out.bwd = bwd
    return out


def matmul_t(W: Node, X: Node) -> Node:
    """W.T @ X (used by the decoder-Jacobian chain inside the update)."""
    out = Node(W.value.T @ X.value, (W, X))

    def bwd(g):
        if X.value.ndim == 1:
            W._accum(np.outer(X.value, g))
        else:
            W._accum(X.value @ g.T)
        X._accum(W.value @ g)
    out.bwd = bwd
    return out


def cmatmul(C: np.ndarray, X: Node) -> Node:
    """Constant-matrix product C @ X."""
    C = np.asarray(C, dtype=float)
    out = Node(C @ X.value, (X,))
    out.bwd = lambda g: X._accum(C.T @ g)
    return out


def add_bias(X: Node, b: Node) -> Node:
    val = X.value + (b.value if X.value.ndim == 1 else b.value[:, None])
    out = Node(val, (X, b))

    def bwd(g):
        X._accum(g)
        b._accum(g if X.value.ndim == 1 else g.sum(axis=1))
    out.bwd = bwd
    return out


# ------------------------------------------------------------- elementwise

def add(a: Node, b: Node) -> Node:
    out = Node(a.value + b.value, (a, b))

    def bwd(g):
        a._accum(g)
        b._accum(g)
    out.bwd = bwd
    return out


def sub(a: Node, b: Node) -> Node:
    out = Node(a.value - b.value, (a, b))

    def bwd(g):
        a._accum(g)
        b._accum(-g)
    out.bwd = bwd
    return out


def mul(a: Node, b: Node) -> Node:
    out = Node(a.value * b.value, (a, b))

    def bwd(g):
        a._accum(g * b.value)
        b._accum(g * a.value)
    out.bwd = bwd
    return out


def scale(a: Node, c: float) -> Node:
    out = Node(a.value * c, (a,))
    out.bwd = lambda g: a._accum(g * c)
    return out


def mask(X: Node, m: np.ndarray) -> Node:
    """Multiply by a constant 0/1 (or slope) mask recorded at forward time."""
    m = np.asarray(m, dtype=float)
    out = Node(X.value * m, (X,))
    out.bwd = lambda g: X._accum(g * m)
    return out


def scale_columns(X: Node, w: np.ndarray, gamma: Node) -> Node:
    """X * (gamma * w) with constant per-column weights w and scalar gamma.

    Carries the frozen step normalizers: w holds 1/||y0||^2 per sample.
    """
    w = np.asarray(w, dtype=float)
    out = Node(X.value * (float(gamma.value) * w), (X, gamma))

    def bwd(g):
        X._accum(g * (float(gamma.value) * w))
        gamma._accum(np.sum(g * X.value * w))
    out.bwd = bwd
    return out


# -------------------------------------------------------------- reductions

def col_sumsq(X: Node) -> Node:
    """Per-column squared norms: () <- (dim,), or (B,) <- (dim, B)."""
    axis = 0 if X.value.ndim == 2 else None
    out = Node(np.sum(X.value * X.value, axis=axis), (X,))
    out.bwd = lambda g: X._accum(2.0 * X.value * g)
    return out


def mean(r: Node) -> Node:
    out = Node(np.mean(r.value), (r,))
    out.bwd = lambda g: r._accum(np.full_like(r.value, float(g) / r.value.size))
    return out


def total(r: Node) -> Node:
    out = Node(np.sum(r.value), (r,))
    out.bwd = lambda g: r._accum(np.full_like(r.value, float(g)))
    return out


def add_scalar(r: Node, c: float) -> Node:
    out = Node(r.value + c, (r,))
    out.bwd = lambda g: r._accum(g)
    return out


def sqrt(r: Node) -> Node:
    val = np.sqrt(r.value)
    out = Node(val, (r,))
    out.bwd = lambda g: r._accum(g * 0.5 / val)
    return out


def divide(a: Node, b: Node) -> Node:
    out = Node(a.value / b.value, (a, b))

    def bwd(g):
        a._accum(g / b.value)
        b._accum(-g * a.value / (b.value * b.value))
    out.bwd = bwd
    return out


def pick_column(X: Node, j: int) -> Node:
    out = Node(X.value[:, j].copy(), (X,))

    def bwd(g):
        full = np.zeros_like(X.value)
        full[:, j] = g
        X._accum(full)
    out.bwd = bwd
    return out


def col_max(X: Node) -> Node:
    """Per-column maxima with subgradient on the argmax entries."""
    idx = np.argmax(X.value, axis=0)
    out = Node(X.value[idx, np.arange(X.value.shape[1])], (X,))

    def bwd(g):
        full = np.zeros_like(X.value)
        full[idx, np.arange(X.value.shape[1])] = g
        X._accum(full)
    out.bwd = bwd
    return out


def amax(nodes: Iterable[Node]) -> Node:
    """Pick the scalar node with the largest value (subgradient choice)."""
    nodes = list(nodes)
    best = max(nodes, key=lambda n: float(n.value))
    out = Node(best.value, (best,))
    out.bwd = lambda g: best._accum(g)
    return out


def sigma_op(W: Node, sigma: float, u: np.ndarray, v: np.ndarray) -> Node:
    """Leading singular value of a parameter matrix.

    sigma, u, v come from power iteration outside the tape (warm-started
    by the trainer); the gradient is the standard u v^T with the singular
    pair treated as constant.
    """
    out = Node(sigma, (W,))
    out.bwd = lambda g: W._accum(float(g) * np.outer(u, v))
    return out
