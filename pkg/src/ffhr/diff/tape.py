"""Reverse-mode differentiation over a small set of array primitives.

Every primitive below accepts plain numpy arrays or :class:`Var` objects.
When no argument is a ``Var`` the primitive is just the numpy computation,
so geometry code written against this module runs unchanged on raw arrays
and on recorded variables.
"""

from __future__ import annotations

import numpy as np

ARTANH_LIMIT = 1.0 - 1e-12
TANH_LIMIT = 40.0
MIN_NORM = 1e-15


class Tape:
    """Append-only record of operations, consumed by one :func:`backward`."""

    def __init__(self):
        self.nodes: list[Var] = []
        self.consumed = False

    def leaf(self, value, name=None) -> "Var":
        var = Var(np.array(value, dtype=np.float64), self, (), name=name)
        return var

    def _record(self, var: "Var") -> None:
        if self.consumed:
            raise RuntimeError("tape already consumed by a backward pass")
        var.index = len(self.nodes)
        self.nodes.append(var)

    def __len__(self):
        return len(self.nodes)


class Var:
    # numpy defers binary operators to Var's reflected methods
    __array_ufunc__ = None

    def __init__(self, value, tape, parents, name=None):
        self.value = value
        self.tape = tape
        # parents: tuple of (Var, vjp) where vjp maps output adjoint -> parent adjoint
        self.parents = parents
        self.name = name
        self.index = -1
        tape._record(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return swap_last(self)


def value(x):
    """The numpy value behind ``x`` (identity on arrays and scalars)."""
    return x.value if isinstance(x, Var) else x


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(out, args, vjps):
    """Wrap ``out`` in a Var if any of ``args`` is one; ``vjps`` align with args."""
    tape = _tape_of(*args)
    if tape is None:
        return out
    parents = tuple((a, f) for a, f in zip(args, vjps) if isinstance(a, Var))
    return Var(np.asarray(out, dtype=np.float64), tape, parents)


# -- elementwise arithmetic -------------------------------------------------


def add(a, b):
    av, bv = value(a), value(b)
    out = av + bv
    sa, sb = np.shape(av), np.shape(bv)
    return _make(out, (a, b), (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)))


def sub(a, b):
    av, bv = value(a), value(b)
    out = av - bv
    sa, sb = np.shape(av), np.shape(bv)
    return _make(out, (a, b), (lambda g: _unbroadcast(g, sa), lambda g: -_unbroadcast(g, sb)))


def mul(a, b):
    av, bv = value(a), value(b)
    out = av * bv
    sa, sb = np.shape(av), np.shape(bv)
    return _make(
        out,
        (a, b),
        (lambda g: _unbroadcast(g * bv, sa), lambda g: _unbroadcast(g * av, sb)),
    )


def div(a, b):
    av, bv = value(a), value(b)
    out = av / bv
    sa, sb = np.shape(av), np.shape(bv)
    return _make(
        out,
        (a, b),
        (
            lambda g: _unbroadcast(g / bv, sa),
            lambda g: _unbroadcast(-g * out / bv, sb),
        ),
    )


def neg(a):
    return _make(-value(a), (a,), (lambda g: -g,))


def square(a):
    av = value(a)
    return _make(av * av, (a,), (lambda g: 2.0 * g * av,))


def abs_(a):
    av = value(a)
    return _make(np.abs(av), (a,), (lambda g: g * np.sign(av),))


# -- transcendental ---------------------------------------------------------


def sqrt(a):
    out = np.sqrt(value(a))
    return _make(out, (a,), (lambda g: g * 0.5 / out,))


def exp(a):
    out = np.exp(value(a))
    return _make(out, (a,), (lambda g: g * out,))


def log(a):
    av = value(a)
    return _make(np.log(av), (a,), (lambda g: g / av,))


def cos(a):
    av = value(a)
    return _make(np.cos(av), (a,), (lambda g: -g * np.sin(av),))


def sin(a):
    av = value(a)
    return _make(np.sin(av), (a,), (lambda g: g * np.cos(av),))


def tanh(a):
    """tanh with its argument clamped to [-40, 40]."""
    out = np.tanh(np.clip(value(a), -TANH_LIMIT, TANH_LIMIT))
    return _make(out, (a,), (lambda g: g * (1.0 - out * out),))


def artanh(a):
    """artanh with its argument clamped to [-(1 - 1e-12), 1 - 1e-12].

    The derivative is taken at the clamped point, so gradients stay finite
    at the ball boundary.
    """
    z = np.clip(value(a), -ARTANH_LIMIT, ARTANH_LIMIT)
    return _make(np.arctanh(z), (a,), (lambda g: g / (1.0 - z * z),))


def leaky_relu(a, slope=0.01):
    """LeakyReLU; the subgradient at exactly 0 is ``slope``."""
    av = value(a)
    pos = av > 0
    scale = np.where(pos, 1.0, slope)
    return _make(av * scale, (a,), (lambda g: g * scale,))


def clamp_min(a, lo):
    """max(a, lo) with zero gradient wherever the clamp is active."""
    av = value(a)
    keep = av >= lo
    return _make(np.where(keep, av, lo), (a,), (lambda g: g * keep,))


# -- reductions and linear algebra ------------------------------------------


def sum_(a, axis=None, keepdims=False):
    av = value(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)
    shape = av.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _make(out, (a,), (vjp,))


def mean(a, axis=None, keepdims=False):
    n = np.size(value(a)) if axis is None else np.shape(value(a))[axis]
    return sum_(a, axis=axis, keepdims=keepdims) / float(n)


def dot(a, b, keepdims=True):
    """Inner product over the last axis."""
    return sum_(mul(a, b), axis=-1, keepdims=keepdims)


def sqnorm(a, keepdims=True):
    return sum_(square(a), axis=-1, keepdims=keepdims)


def norm(a, keepdims=True):
    """Euclidean norm over the last axis, clamped below at 1e-15."""
    return sqrt(clamp_min(sqnorm(a, keepdims=keepdims), MIN_NORM * MIN_NORM))


def matmul(a, b):
    av, bv = value(a), value(b)
    if np.ndim(av) < 2 or np.ndim(bv) < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out = av @ bv
    sa, sb = av.shape, bv.shape
    return _make(
        out,
        (a, b),
        (
            lambda g: _unbroadcast(g @ np.swapaxes(bv, -1, -2), sa),
            lambda g: _unbroadcast(np.swapaxes(av, -1, -2) @ g, sb),
        ),
    )


def swap_last(a):
    return _make(np.swapaxes(value(a), -1, -2), (a,), (lambda g: np.swapaxes(g, -1, -2),))


def reshape(a, shape):
    av = value(a)
    old = av.shape
    return _make(av.reshape(shape), (a,), (lambda g: g.reshape(old),))


def concat(parts, axis=-1):
    vals = [value(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def piece(i):
        return lambda g: np.split(g, bounds, axis=axis)[i]

    return _make(out, tuple(parts), tuple(piece(i) for i in range(len(parts))))


# -- indexing ----------------------------------------------------------------


def take(a, idx, axis=0):
    """Gather ``a`` along ``axis`` with integer indices (repeats allowed)."""
    av = value(a)
    idx = np.asarray(idx)
    out = np.take(av, idx, axis=axis)
    shape = av.shape

    def vjp(g):
        acc = np.zeros(shape)
        ax = axis % len(shape)
        moved = np.moveaxis(acc, ax, 0)
        gm = np.moveaxis(g, tuple(range(ax, ax + idx.ndim)), tuple(range(idx.ndim)))
        np.add.at(moved, idx, gm)
        return acc

    return _make(out, (a,), (vjp,))


def getitem(a, key):
    av = value(a)
    out = av[key]
    shape = av.shape

    def vjp(g):
        acc = np.zeros(shape)
        np.add.at(acc, key, g)
        return acc

    return _make(out, (a,), (vjp,))


def segment_sum(a, segments, num_segments):
    """Sum rows of ``a`` into ``num_segments`` buckets (scatter-add along axis 0)."""
    av = value(a)
    segments = np.asarray(segments)
    out = np.zeros((num_segments,) + av.shape[1:], dtype=np.result_type(av, np.float64))
    np.add.at(out, segments, av)
    return _make(out, (a,), (lambda g: g[segments],))


def where(mask, a, b):
    """Select with a constant boolean ``mask``; no gradient flows to the mask."""
    av, bv = value(a), value(b)
    out = np.where(mask, av, bv)
    sa, sb = np.shape(av), np.shape(bv)
    return _make(
        out,
        (a, b),
        (
            lambda g: _unbroadcast(np.where(mask, g, 0.0), sa),
            lambda g: _unbroadcast(np.where(mask, 0.0, g), sb),
        ),
    )


def stop_gradient(a):
    return value(a)


def logsumexp(a, axis=-1):
    """Max-shifted log-sum-exp; the shift is a constant."""
    shift = np.max(value(a), axis=axis, keepdims=True)
    s = sum_(exp(sub(a, shift)), axis=axis, keepdims=True)
    return sum_(add(log(s), shift), axis=axis)


# -- backward ----------------------------------------------------------------


def backward(tape: Tape, output: Var, leaves=None) -> dict:
    """Accumulate adjoints from the scalar ``output`` back to the leaves.

    Returns a mapping ``leaf -> gradient``.  Leaves that do not influence
    ``output`` receive zeros.  The tape is consumed.
    """
    if not isinstance(output, Var) or output.tape is not tape:
        raise ValueError("output is not recorded on this tape")
    if output.value.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.value.shape}")
    if tape.consumed:
        raise RuntimeError("tape already consumed by a backward pass")
    tape.consumed = True

    adjoint: dict[int, np.ndarray] = {output.index: np.ones_like(output.value)}
    for node in reversed(tape.nodes[: output.index + 1]):
        g = adjoint.pop(node.index, None)
        if g is None or not node.parents:
            if g is not None:
                adjoint[node.index] = g
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            prev = adjoint.get(parent.index)
            adjoint[parent.index] = contrib if prev is None else prev + contrib

    if leaves is None:
        leaves = [n for n in tape.nodes if not n.parents]
    grads = {}
    for leaf in leaves:
        g = adjoint.get(leaf.index)
        grads[leaf] = np.zeros_like(leaf.value) if g is None else g.reshape(leaf.value.shape)
    return grads
