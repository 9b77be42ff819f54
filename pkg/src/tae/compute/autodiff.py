"""Tape-based reverse-mode differentiation over numpy arrays.

Values are plain ``numpy.ndarray`` objects. A :class:`Var` wraps a value that
depends on watched parameters; every primitive below accepts either raw arrays
or Vars and returns a raw array when none of its inputs is a Var, so the same
model code serves both training (on a tape) and plain evaluation.

Typical use::

    value, grads = forward_backward(lambda p: (p["w"] ** 2).sum(), {"w": w})
"""
from __future__ import annotations

import numpy as np

from .. import kernels

__all__ = [
    "NonFiniteError",
    "Var",
    "Tape",
    "forward_backward",
    "value",
    "add", "sub", "mul", "div", "neg", "matmul", "power",
    "exp", "log", "abs", "sum", "mean", "clip", "leaky_relu",
    "logaddexp_const", "concat", "logsumexp", "log_softmax",
    "stop_gradient", "gauss_logpdf", "reshape",
]


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or inf while recording on a tape."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by operation '{op}'")
        self.op = op


class Var:
    __slots__ = ("value", "parents", "op", "__weakref__")
    __array_priority__ = 1000  # make ndarray <op> Var dispatch to Var

    def __init__(self, value, parents=(), op="leaf"):
        self.value = value
        self.parents = parents
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.value.shape})"

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

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return sum(self, axis)


class Tape:
    """Ordered record of the primitives evaluated while it is active.

    Tapes nest; the innermost active tape records. ``gradient`` never mutates
    the recorded nodes, so it can be called any number of times.
    """

    _stack: list["Tape"] = []

    def __init__(self, check_finite: bool = True):
        self.check_finite = check_finite
        self.nodes: list[Var] = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    def watch(self, array) -> Var:
        return Var(np.asarray(array, dtype=np.float64))

    def gradient(self, output: Var, wrt):
        """Gradients of scalar ``output`` w.r.t. ``wrt`` (a Var, a sequence or a
        mapping of Vars). Unreached inputs get zero gradients."""
        if not isinstance(output, Var):
            raise TypeError("output does not depend on any watched variable")
        if output.value.size != 1:
            raise ValueError(f"output must be a scalar, got shape {output.value.shape}")
        grads = {id(output): np.ones_like(output.value)}
        for node in reversed(self.nodes):
            g = grads.get(id(node))
            if g is None:
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                key = id(parent)
                grads[key] = grads[key] + contrib if key in grads else contrib
        handed_out = set()

        def pick(v):
            g = grads.get(id(v))
            if g is None:
                return np.zeros_like(v.value)
            g = np.asarray(g, dtype=np.float64).reshape(v.value.shape)
            # copy only when two results would otherwise share memory
            base = g if g.base is None else g.base
            if id(base) in handed_out or not g.flags.writeable or not g.flags.c_contiguous:
                g = g.copy()
            handed_out.add(id(base))
            return g
        if isinstance(wrt, Var):
            return pick(wrt)
        if isinstance(wrt, dict):
            return {k: pick(v) for k, v in wrt.items()}
        return [pick(v) for v in wrt]


def forward_backward(f, params: dict, *, has_aux: bool = False, check_finite: bool = True):
    """Evaluate scalar ``f(params)`` and its exact gradient for every entry.

    ``f`` receives a dict of Vars keyed like ``params``. Returns
    ``(value, grads)`` or ``(value, grads, aux)`` when ``f`` returns
    ``(scalar, aux)`` and ``has_aux`` is set.
    """
    with Tape(check_finite) as tape:
        leaves = {k: tape.watch(v) for k, v in params.items()}
        out = f(leaves)
        aux = None
        if has_aux:
            out, aux = out
        if not isinstance(out, Var):
            val = float(np.asarray(out))
            grads = {k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in params.items()}
        else:
            val = float(out.value.reshape(()))
            grads = tape.gradient(out, leaves)
    if has_aux:
        return val, grads, aux
    return val, grads


def value(x):
    """Raw array behind ``x`` (identity for arrays and scalars)."""
    return x.value if isinstance(x, Var) else x


def _raw(x):
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _make(val, op, parents):
    parents = tuple((p, f) for p, f in parents if isinstance(p, Var))
    if not parents:
        return val
    tape = Tape._stack[-1] if Tape._stack else None
    if tape is None:
        raise RuntimeError(f"operation '{op}' on a Var outside an active Tape")
    if tape.check_finite and not np.all(np.isfinite(val)):
        raise NonFiniteError(op)
    node = Var(val, parents, op)
    tape.nodes.append(node)
    return node


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise arithmetic

def add(a, b):
    av, bv = _raw(a), _raw(b)
    out = av + bv
    return _make(out, "add", [(a, lambda g: _unbroadcast(g, av.shape)),
                              (b, lambda g: _unbroadcast(g, bv.shape))])


def sub(a, b):
    av, bv = _raw(a), _raw(b)
    out = av - bv
    return _make(out, "sub", [(a, lambda g: _unbroadcast(g, av.shape)),
                              (b, lambda g: _unbroadcast(-g, bv.shape))])


def mul(a, b):
    av, bv = _raw(a), _raw(b)
    out = av * bv
    return _make(out, "mul", [(a, lambda g: _unbroadcast(g * bv, av.shape)),
                              (b, lambda g: _unbroadcast(g * av, bv.shape))])


def div(a, b):
    av, bv = _raw(a), _raw(b)
    out = av / bv
    return _make(out, "div", [(a, lambda g: _unbroadcast(g / bv, av.shape)),
                              (b, lambda g: _unbroadcast(-g * av / (bv * bv), bv.shape))])


def neg(a):
    return _make(-_raw(a), "neg", [(a, lambda g: -g)])


def power(a, p: float):
    av = _raw(a)
    out = av ** p
    return _make(out, "power", [(a, lambda g: g * p * av ** (p - 1))])


def matmul(a, b):
    av, bv = _raw(a), _raw(b)
    out = av @ bv
    if av.ndim == 1:
        ga = lambda g: bv @ g
        gb = lambda g: np.outer(av, g)
    else:
        ga = lambda g: g @ bv.T
        gb = lambda g: av.T @ g
    return _make(out, "matmul", [(a, ga), (b, gb)])


def exp(a):
    out = np.exp(_raw(a))
    return _make(out, "exp", [(a, lambda g: g * out)])


def log(a):
    av = _raw(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _make(out, "log", [(a, lambda g: g / av)])


def abs(a):  # noqa: A001 - mirrors numpy naming
    av = _raw(a)
    # subgradient 0 at the kink
    return _make(np.abs(av), "abs", [(a, lambda g: g * np.sign(av))])


def clip(a, lo, hi):
    av = _raw(a)
    out = np.clip(av, lo, hi)
    inside = (av >= lo) & (av <= hi)
    return _make(out, "clip", [(a, lambda g: g * inside)])


def leaky_relu(a, slope: float):
    av = np.ascontiguousarray(_raw(a))
    out = kernels.leaky_relu(av, slope)
    return _make(out, "leaky_relu", [(a, lambda g: kernels.leaky_relu_grad(np.ascontiguousarray(g), av, slope))])


def logaddexp_const(a, c: float):
    """log(exp(a) + exp(c)) for a constant scalar c."""
    av = _raw(a)
    out = np.logaddexp(av, c)
    return _make(out, "logaddexp", [(a, lambda g: g * np.exp(av - out))])


def stop_gradient(a):
    return _raw(a)


# reductions and shape

def sum(a, axis=None):  # noqa: A001
    av = _raw(a)
    out = np.asarray(av.sum(axis=axis))

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, av.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), av.shape).copy()
    return _make(out, "sum", [(a, vjp)])


def mean(a, axis=None):
    n = _raw(a).size if axis is None else _raw(a).shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def reshape(a, shape):
    av = _raw(a)
    return _make(av.reshape(shape), "reshape", [(a, lambda g: g.reshape(av.shape))])


def getitem(a, idx):
    av = _raw(a)

    def vjp(g):
        full = np.zeros_like(av)
        np.add.at(full, idx, g)
        return full
    return _make(av[idx], "getitem", [(a, vjp)])


def concat(parts, axis=-1):
    raws = [_raw(p) for p in parts]
    out = np.concatenate(raws, axis=axis)
    bounds = np.cumsum([r.shape[axis] for r in raws])[:-1]
    parents = []
    for i, p in enumerate(parts):
        parents.append((p, lambda g, i=i: np.split(g, bounds, axis=axis)[i]))
    return _make(out, "concat", parents)


def logsumexp(a, axis=0):
    """log-sum-exp over one axis of a 2-D array."""
    av = _raw(a)
    rows = av if axis == 1 else av.T
    rows = np.ascontiguousarray(rows)
    out = kernels.logsumexp_rows(rows)

    def vjp(g):
        w = np.exp(rows - out[:, None]) * g[:, None]
        return w if axis == 1 else w.T
    return _make(out, "logsumexp", [(a, vjp)])


def log_softmax(a):
    """Row-wise log-softmax of a 2-D array."""
    av = _raw(a)
    lse = kernels.logsumexp_rows(np.ascontiguousarray(av))
    out = av - lse[:, None]

    def vjp(g):
        return g - np.exp(out) * g.sum(axis=1, keepdims=True)
    return _make(out, "log_softmax", [(a, vjp)])


# fused Gaussian density

def gauss_logpdf(x, mean_, logvar, mask=None):
    """Row sums of diagonal-Gaussian log densities, masked entries skipped.

    Inputs broadcast to a common (n, d) or (d,) shape; the result has shape
    (n,) or () respectively.
    """
    xv, mv, lv = _raw(x), _raw(mean_), _raw(logvar)
    shape = np.broadcast_shapes(xv.shape, mv.shape, lv.shape)
    if mask is not None:
        shape = np.broadcast_shapes(shape, np.shape(mask))
    squeeze = len(shape) == 1
    shape2 = (1,) + shape if squeeze else shape

    def full(arr):
        return np.ascontiguousarray(np.broadcast_to(np.asarray(arr, dtype=np.float64), shape).reshape(shape2))
    xb, mb, lb = full(xv), full(mv), full(lv)
    mk = np.ones(shape2) if mask is None else full(mask)
    out = kernels.gauss_logpdf(xb, mb, lb, mk)
    cache = {}

    def grads(g):
        key = id(g)
        if key not in cache:
            gg = np.ascontiguousarray(np.reshape(g, (shape2[0],)))
            cache.clear()
            cache[key] = (g, kernels.gauss_logpdf_grad(gg, xb, mb, lb, mk))
        return cache[key][1]

    def pick(i, src_shape):
        def vjp(g):
            grad = grads(g)[i]
            if squeeze:
                grad = grad[0]
            return _unbroadcast(grad, src_shape)
        return vjp
    if squeeze:
        out = out.reshape(())
    return _make(out, "gauss_logpdf", [(x, pick(0, xv.shape)), (mean_, pick(1, mv.shape)),
                                       (logvar, pick(2, lv.shape))])
