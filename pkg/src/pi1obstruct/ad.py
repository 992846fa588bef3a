"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a value ``v`` and a stack of tangents ``d`` whose
leading axis enumerates seed directions, so ``d.shape == (m, *v.shape)``.
Values and tangents may themselves be duals, which is how second (and
higher) derivatives are obtained: seed once, then seed the result again.
Every dual carries a ``tag``; in a mixed operation the larger tag is the
outer perturbation and anything else is treated as a constant.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

_tag_counter = itertools.count(1)


class Dual:
    __slots__ = ("v", "d", "tag")
    __array_priority__ = 1000

    def __init__(self, v, d, tag: int):
        self.v = v
        self.d = d
        self.tag = tag

    @property
    def shape(self) -> tuple:
        return np.shape(value(self))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def ndirs(self) -> int:
        return self.d.shape[0]

    def __repr__(self) -> str:
        return f"Dual(tag={self.tag}, shape={self.shape}, ndirs={self.ndirs})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.v[idx], self.d[(slice(None),) + idx], self.tag)

    def __neg__(self):
        return Dual(-self.v, -self.d, self.tag)

    def __pos__(self):
        return self

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, negative(other))

    def __rsub__(self, other):
        return add(other, -self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return multiply(self, reciprocal(other))

    def __rtruediv__(self, other):
        return multiply(other, reciprocal(self))

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        if p == 2:
            return self * self
        return _unary(self, lambda x: x**p, lambda x: p * x ** (p - 1))


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def value(x):
    """Innermost numeric value of ``x``."""
    while isinstance(x, Dual):
        x = x.v
    return x


def negative(x):
    return -x


def max_tag(*xs) -> int:
    return max((x.tag for x in xs if isinstance(x, Dual)), default=0)


def broadcast_to(x, shape: tuple):
    shape = tuple(shape)
    if isinstance(x, Dual):
        return Dual(broadcast_to(x.v, shape), _broadcast_tangent(x.d, shape), x.tag)
    return np.broadcast_to(x, shape)


def _broadcast_tangent(d, shape: tuple):
    """Broadcast a tangent stack ``(m, *old)`` to ``(m, *shape)``."""
    extra = len(shape) - (len(np.shape(value(d))) - 1)
    if extra > 0:
        d = d[(slice(None),) + (None,) * extra]
    return broadcast_to(d, (np.shape(value(d))[0],) + tuple(shape))


def _split(x, tag: int):
    if isinstance(x, Dual) and x.tag == tag:
        return x.v, x.d
    return x, None


def _binary_setup(a, b):
    tag = max_tag(a, b)
    av, ad = _split(a, tag)
    bv, bd = _split(b, tag)
    shape = np.broadcast_shapes(np.shape(value(av)), np.shape(value(bv)))
    if ad is not None:
        ad = _broadcast_tangent(ad, shape)
    if bd is not None:
        bd = _broadcast_tangent(bd, shape)
    return tag, av, ad, bv, bd


def add(a, b):
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return a + b
    tag, av, ad, bv, bd = _binary_setup(a, b)
    if ad is None:
        d = bd
    elif bd is None:
        d = ad
    else:
        d = ad + bd
    return Dual(av + bv, d, tag)


def multiply(a, b):
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return a * b
    tag, av, ad, bv, bd = _binary_setup(a, b)
    if ad is None:
        d = av * bd
    elif bd is None:
        d = ad * bv
    else:
        d = ad * bv + av * bd
    return Dual(av * bv, d, tag)


def _unary(x: Dual, f: Callable, df: Callable) -> Dual:
    return Dual(f(x.v), df(x.v) * x.d, x.tag)


def reciprocal(x):
    if isinstance(x, Dual):
        return _unary(x, reciprocal, lambda v: -reciprocal(v * v))
    return 1.0 / x


def sin(x):
    if isinstance(x, Dual):
        return _unary(x, sin, cos)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return _unary(x, cos, lambda v: -sin(v))
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual):
        return _unary(x, exp, exp)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return _unary(x, log, reciprocal)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        return _unary(x, sqrt, lambda v: 0.5 * reciprocal(sqrt(v)))
    return np.sqrt(x)


def arccos(x):
    if isinstance(x, Dual):
        return _unary(x, arccos, lambda v: -reciprocal(sqrt(1.0 - v * v)))
    return np.arccos(x)


def arctan2(y, x):
    if not (isinstance(x, Dual) or isinstance(y, Dual)):
        return np.arctan2(y, x)
    r2 = x * x + y * y
    tag = max_tag(x, y)
    xv, xd = _split(x, tag)
    yv, yd = _split(y, tag)
    # d atan2 = (x dy - y dx) / r^2, evaluated on the outer layer
    rv, _ = _split(r2, tag)
    shape = np.broadcast_shapes(np.shape(value(xv)), np.shape(value(yv)))
    d = 0.0
    if yd is not None:
        d = _broadcast_tangent(yd, shape) * (xv / rv)
    if xd is not None:
        d = d - _broadcast_tangent(xd, shape) * (yv / rv)
    return Dual(arctan2(yv, xv), d, tag)


def stack(items: Sequence, axis: int = 0):
    """Stack scalars, arrays and duals into one array or dual.

    ``axis`` counts value axes (tangent axes are handled internally).
    """
    items = list(items)
    shape = np.broadcast_shapes(*(np.shape(value(it)) for it in items))
    tag = max_tag(*items)
    if tag == 0:
        return np.stack([np.broadcast_to(np.asarray(it, dtype=float), shape) for it in items], axis=axis)
    m = next(it.d.shape[0] for it in items if isinstance(it, Dual) and it.tag == tag)
    vs, ds = [], []
    for it in items:
        v, d = _split(it, tag)
        vs.append(v)
        ds.append(np.zeros((m,) + shape) if d is None else _broadcast_tangent(d, shape))
    ax = axis if axis >= 0 else axis + len(shape) + 1
    return Dual(stack(vs, ax), stack(ds, ax + 1), tag)


def seed(coords: Sequence) -> list:
    """Attach a fresh set of unit tangents, one direction per coordinate."""
    coords = list(coords)
    n = len(coords)
    tag = next(_tag_counter)
    out = []
    for i, c in enumerate(coords):
        shape = np.shape(value(c))
        d = np.zeros((n,) + shape)
        d[i] = 1.0
        out.append(Dual(c, d, tag))
    return out


def tangent(y, tag: int, n: int):
    """Tangent stack of ``y`` with respect to seed ``tag`` (zeros if constant)."""
    if isinstance(y, Dual) and y.tag == tag:
        return y.d
    return np.zeros((n,) + np.shape(value(y)))


def primal(y, tag: int):
    if isinstance(y, Dual) and y.tag == tag:
        return y.v
    return y


def jacobian(fn: Callable[[list], Sequence], coords: Sequence) -> tuple[list, list]:
    """Evaluate ``fn`` with seeded coordinates.

    Returns ``(values, rows)`` where ``rows[a]`` is the tangent stack of the
    ``a``-th output, shape ``(n, *batch)``; entry ``rows[a][i]`` is the
    derivative of output ``a`` with respect to coordinate ``i``.
    Works when ``coords`` already carry tangents (nested differentiation).
    """
    x = seed(coords)
    tag = x[0].tag
    n = len(x)
    out = fn(x)
    return [primal(y, tag) for y in out], [tangent(y, tag, n) for y in out]


def numeric(x) -> np.ndarray:
    if isinstance(x, Dual):
        raise TypeError("expected a numeric array, got a dual number")
    return np.asarray(x, dtype=float)


def hessian_parts(fn: Callable[[list], Sequence], coords: np.ndarray):
    """Value, gradient and Hessian of every output of ``fn`` at numeric points.

    ``coords`` has shape ``(B, n)``. Returns arrays of shape ``(B, K)``,
    ``(B, K, n)`` and ``(B, K, n, n)`` for ``K`` outputs.
    """
    pts = np.asarray(coords, dtype=float)
    n = pts.shape[-1]
    inner = seed([pts[..., i] for i in range(n)])
    outer = seed(inner)
    t_in, t_out = inner[0].tag, outer[0].tag
    vals, grads, hess = [], [], []
    for y in fn(outer):
        y0 = primal(y, t_out)
        dy = tangent(y, t_out, n)
        vals.append(value(y0))
        grads.append(np.moveaxis(np.asarray(value(dy)), 0, -1))
        h = tangent(dy, t_in, n)
        hess.append(np.moveaxis(np.moveaxis(np.asarray(h), 0, -1), 0, -1))
    batch = pts.shape[:-1]
    vals = np.stack([np.broadcast_to(v, batch) for v in vals], axis=-1)
    grads = np.stack([np.broadcast_to(g, batch + (n,)) for g in grads], axis=-2)
    hess = np.stack([np.broadcast_to(h, batch + (n, n)) for h in hess], axis=-3)
    return vals, grads, hess
