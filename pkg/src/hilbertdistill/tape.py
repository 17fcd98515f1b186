"""Minimal reverse-mode autodiff over numpy arrays.

Just enough machinery to train the desk-scale networks: a Var wraps an
ndarray, primitives record a backward closure, and ``backward`` walks the
graph in reverse topological order.  Convolutions dispatch through the
dual-backend kernels module.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class Var:
    """Node in the recorded operation graph."""

    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape


def backward(root: Var):
    """Accumulate gradients of a scalar root into every reachable Var."""
    if root.value.shape != ():
        raise ValueError("backward needs a scalar root")
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is not None:
                parent.grad = parent.grad + g


def add(a: Var, b: Var) -> Var:
    return Var(a.value + b.value, (a, b), lambda g: (g, g))


def mul(a: Var, b: Var) -> Var:
    return Var(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def scale(a: Var, c: float) -> Var:
    return Var(a.value * c, (a,), lambda g: (g * c,))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return Var(a.value * mask, (a,), lambda g: (g * mask,))


def conv(x: Var, w: Var, b: Var, impl: str | None = None) -> Var:
    """Same-padded stride-1 convolution, 2D or 3D by input rank."""
    y = kernels.conv_forward(x.value, w.value, b.value, impl)

    def bwd(g):
        return kernels.conv_backward(x.value, w.value, g, impl)

    return Var(y, (x, w, b), bwd)


def conv1x1(x: Var, w: Var) -> Var:
    """Channel-mixing 1x1 convolution: (B, Ci, *sp) -> (B, Co, *sp)."""
    y = np.einsum("oc,bc...->bo...", w.value, x.value)
    sum_axes = (0,) + tuple(range(2, x.value.ndim))

    def bwd(g):
        gx = np.einsum("oc,bo...->bc...", w.value, g)
        gw = np.tensordot(g, x.value, axes=(sum_axes, sum_axes))
        return gx, gw

    return Var(y, (x, w), bwd)


def avg_pool(x: Var, k: int = 2) -> Var:
    """Non-overlapping average pooling by factor k over the spatial axes."""
    sp = x.value.shape[2:]
    if any(e % k for e in sp):
        raise ValueError(f"spatial extents {sp} not divisible by pool factor {k}")
    shape = x.value.shape[:2]
    expanded = x.value
    for e in sp:
        shape = shape + (e // k, k)
    expanded = expanded.reshape(shape)
    axes = tuple(3 + 2 * a for a in range(len(sp)))
    y = expanded.mean(axis=axes)

    def bwd(g):
        gexp = np.expand_dims(g, axes)
        return (np.broadcast_to(gexp, shape).reshape(x.value.shape) / k ** len(sp),)

    return Var(y, (x,), bwd)


def global_avg_pool(x: Var) -> Var:
    """(B, C, *sp) -> (B, C) mean over the spatial axes."""
    sp_axes = tuple(range(2, x.value.ndim))
    count = int(np.prod(x.value.shape[2:]))
    y = x.value.mean(axis=sp_axes)

    def bwd(g):
        gexp = np.expand_dims(g, sp_axes)
        return (np.broadcast_to(gexp, x.value.shape) / count,)

    return Var(y, (x,), bwd)


def flatten(x: Var) -> Var:
    """(B, ...) -> (B, K)."""
    shape = x.value.shape
    y = x.value.reshape(shape[0], -1)
    return Var(y, (x,), lambda g: (g.reshape(shape),))


def linear(x: Var, w: Var, b: Var) -> Var:
    """(B, C) @ (C, O) + (O,)."""
    y = x.value @ w.value + b.value

    def bwd(g):
        return g @ w.value.T, x.value.T @ g, g.sum(axis=0)

    return Var(y, (x, w, b), bwd)


def softmax_cross_entropy(logits: Var, labels: np.ndarray) -> Var:
    """Mean cross entropy of softmax(logits) against integer labels."""
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    bsz = z.shape[0]
    nll = -np.log(probs[np.arange(bsz), labels] + 1e-300)
    value = nll.mean()

    def bwd(g):
        grad = probs.copy()
        grad[np.arange(bsz), labels] -= 1.0
        return (g * grad / bsz,)

    return Var(value, (logits,), bwd)


def class_score(logits: Var, cls: int) -> Var:
    """Sum of one class column; the backward seed for activation weights."""
    value = logits.value[:, cls].sum()

    def bwd(g):
        grad = np.zeros_like(logits.value)
        grad[:, cls] = g
        return (grad,)

    return Var(value, (logits,), bwd)


def external_penalty(x: Var, value: float, grad_x: np.ndarray) -> Var:
    """Scalar computed outside the tape with a precomputed gradient in x."""
    g0 = np.asarray(grad_x, dtype=float)
    return Var(np.asarray(value, dtype=float), (x,), lambda g: (g * g0,))


def grad_check(fn, inputs, eps: float = 1e-4, exclude=None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``fn(inputs) -> (value, grads)`` with one gradient per input array.
    ``exclude`` optionally maps input position -> boolean mask of coordinates
    to skip (points within eps of a non-differentiability).
    """
    inputs = [np.asarray(x, dtype=float) for x in inputs]
    _, grads = fn(inputs)
    worst = 0.0
    for pos, x in enumerate(inputs):
        skip = None if exclude is None else exclude.get(pos)
        analytic = np.asarray(grads[pos], dtype=float)
        numeric = np.zeros_like(analytic)
        flat = x.reshape(-1)
        for t in range(flat.size):
            if skip is not None and skip.reshape(-1)[t]:
                numeric.reshape(-1)[t] = analytic.reshape(-1)[t]
                continue
            keep = flat[t]
            flat[t] = keep + eps
            hi, _ = fn(inputs)
            flat[t] = keep - eps
            lo, _ = fn(inputs)
            flat[t] = keep
            numeric.reshape(-1)[t] = (hi - lo) / (2 * eps)
        if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
            raise ValueError("non-finite values during gradient check")
        denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
        worst = max(worst, float(np.abs(analytic - numeric).max(initial=0.0) / denom))
    return worst
