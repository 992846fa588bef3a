"""Single-chart manifolds, coordinate fields and exterior calculus.

Fields are evaluated on a list of coordinate objects (numpy arrays of a
common batch shape, or :class:`~pi1obstruct.ad.Dual` numbers carrying
tangents).  Numeric entry points accept point arrays of shape ``(B, n)``
or ``(n,)``.

A p-form stores only its strictly increasing components, in
``itertools.combinations`` order; any other index ordering is recovered by
the permutation sign.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ad

Coords = list
ComponentFn = Callable[[Coords], Sequence]


class ChartError(ValueError):
    """A point left the closure of the chart box."""


@dataclass(frozen=True)
class ChartDomain:
    bounds: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        if len(self.bounds) < 1:
            raise ValueError("chart dimension must be at least 1")
        if len(self.bounds) != len(self.periodic):
            raise ValueError("bounds and periodic flags differ in length")
        for lo, hi in self.bounds:
            if not hi > lo:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def all_periodic(self) -> bool:
        return all(self.periodic)

    def wrap(self, coords: Coords) -> Coords:
        """Reduce periodic coordinates into ``[lo, hi)``; tangents are untouched."""
        out = []
        for c, (lo, hi), per in zip(coords, self.bounds, self.periodic):
            if per:
                width = hi - lo
                shift = width * np.floor((ad.value(c) - lo) / width)
                c = c - shift
            out.append(c)
        return out

    def wrap_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.array(pts, dtype=float)
        for a, per in enumerate(self.periodic):
            if per:
                lo, hi = self.bounds[a]
                pts[..., a] = lo + np.mod(pts[..., a] - lo, hi - lo)
        return pts

    def check_inside(self, coords: Coords, tol: float = 1e-9) -> None:
        """Raise :class:`ChartError` if a non-periodic coordinate leaves the box."""
        bad = None
        for a, (c, (lo, hi), per) in enumerate(zip(coords, self.bounds, self.periodic)):
            if per:
                continue
            v = np.asarray(ad.value(c), dtype=float)
            mask = (v < lo - tol) | (v > hi + tol)
            if np.any(mask):
                bad = (a, v, mask)
                break
        if bad is not None:
            a, _, mask = bad
            first = int(np.flatnonzero(np.broadcast_to(mask, mask.shape).ravel())[0])
            point = [float(np.broadcast_to(ad.value(c), mask.shape).ravel()[first]) for c in coords]
            raise ChartError(f"point {point} leaves the chart closure along axis {a}")

    def sample(self, rng: np.random.Generator, count: int, margin: float = 0.0) -> np.ndarray:
        """Uniform points; non-periodic axes keep ``margin`` (relative) away from the walls."""
        lo, w = self.lower.copy(), self.widths.copy()
        for a, per in enumerate(self.periodic):
            if not per:
                lo[a] += margin * w[a]
                w[a] *= 1.0 - 2.0 * margin
        return lo + w * rng.random((count, self.dim))


@dataclass(frozen=True)
class ManifoldSpec:
    """A manifold covered, up to a null set, by one chart box."""

    name: str
    domain: ChartDomain
    orientation_sign: int = 1
    embedding: Callable[[Coords], Sequence] | None = None
    note: str = ""

    def __post_init__(self):
        if self.orientation_sign not in (1, -1):
            raise ValueError("orientation_sign must be +1 or -1")

    @property
    def dim(self) -> int:
        return self.domain.dim

    def reversed(self) -> "ManifoldSpec":
        return ManifoldSpec(self.name, self.domain, -self.orientation_sign, self.embedding, self.note)


def as_points(pts, dim: int) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


def coords_of(pts: np.ndarray) -> Coords:
    return [pts[..., i] for i in range(pts.shape[-1])]


def _stack_last(items: Sequence, batch: tuple) -> np.ndarray:
    arrs = [np.broadcast_to(ad.numeric(it), batch) for it in items]
    return np.stack(arrs, axis=-1) if arrs else np.zeros(batch + (0,))


def perm_sign(seq: Sequence[int]) -> int:
    """Parity of a sequence of distinct integers (0 if any repeat)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _index_sets(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.combinations(range(n), p))


# --------------------------------------------------------------------------- fields


class PForm:
    """Differential p-form on an n-dimensional chart."""

    def __init__(self, dim: int, degree: int, coeffs: ComponentFn, name: str = ""):
        if not 0 <= degree <= dim:
            raise ValueError("degree exceeds dimension")
        self.dim = dim
        self.degree = degree
        self._coeffs = coeffs
        self.name = name
        self.index_sets = _index_sets(dim, degree)
        self._position = {I: k for k, I in enumerate(self.index_sets)}

    def __repr__(self) -> str:
        return f"PForm(dim={self.dim}, degree={self.degree}, name={self.name!r})"

    def components(self, x: Coords) -> list:
        comps = list(self._coeffs(x))
        if len(comps) != len(self.index_sets):
            raise ValueError(
                f"{self!r} returned {len(comps)} components, expected {len(self.index_sets)}"
            )
        return comps

    def __call__(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        return _stack_last(self.components(coords_of(pts)), pts.shape[:-1])

    def position(self, idx: Sequence[int]) -> tuple[int, int]:
        """(sign, storage slot) of an arbitrary index tuple."""
        s = perm_sign(idx)
        if s == 0:
            return 0, -1
        return s, self._position[tuple(sorted(idx))]

    def component(self, pts, idx: Sequence[int]) -> np.ndarray:
        s, k = self.position(idx)
        vals = self(pts)
        if s == 0:
            return np.zeros(vals.shape[:-1])
        return s * vals[..., k]

    def full(self, pts) -> np.ndarray:
        vals = self(pts)
        out = np.zeros(vals.shape[:-1] + (self.dim,) * self.degree)
        for k, I in enumerate(self.index_sets):
            for perm in itertools.permutations(range(self.degree)):
                J = tuple(I[i] for i in perm)
                out[(Ellipsis,) + J] = perm_sign(perm) * vals[..., k]
        return out

    def top(self, pts) -> np.ndarray:
        """Single coefficient of a top-degree form, shape ``(B,)``."""
        if self.degree != self.dim:
            raise ValueError("not a top-degree form")
        return self(pts)[..., 0]

    def __add__(self, other: "PForm") -> "PForm":
        _same_kind(self, other)
        return PForm(
            self.dim, self.degree,
            lambda x: [a + b for a, b in zip(self.components(x), other.components(x))],
        )

    def __sub__(self, other: "PForm") -> "PForm":
        return self + (-1.0) * other

    def __neg__(self) -> "PForm":
        return (-1.0) * self

    def __mul__(self, c: float) -> "PForm":
        c = float(c)
        return PForm(self.dim, self.degree, lambda x: [c * a for a in self.components(x)])

    __rmul__ = __mul__

    def times(self, f: "PForm") -> "PForm":
        """Product with a function (0-form)."""
        if f.degree != 0:
            raise ValueError("times() expects a 0-form")
        return PForm(
            self.dim, self.degree,
            lambda x: [f.components(x)[0] * a for a in self.components(x)],
        )


def _same_kind(a: PForm, b: PForm) -> None:
    if a.dim != b.dim or a.degree != b.degree:
        raise ValueError("forms of different dimension or degree")


def scalar_field(dim: int, f: Callable[[Coords], object], name: str = "") -> PForm:
    return PForm(dim, 0, lambda x: [f(x)], name)


def one_form(dim: int, comps: ComponentFn, name: str = "") -> PForm:
    return PForm(dim, 1, comps, name)


def coordinate_form(dim: int, indices: Sequence[int]) -> PForm:
    """The constant form du^{i1} ^ ... ^ du^{ip}."""
    sign = perm_sign(indices)
    if sign == 0:
        return PForm(dim, len(indices), lambda x: [0.0] * math.comb(dim, len(indices)))
    target = tuple(sorted(indices))
    sets = _index_sets(dim, len(indices))
    return PForm(dim, len(indices), lambda x: [float(sign) if I == target else 0.0 for I in sets])


def volume_coordinate_form(dim: int, density: Callable[[Coords], object] | None = None) -> PForm:
    if density is None:
        return PForm(dim, dim, lambda x: [1.0])
    return PForm(dim, dim, lambda x: [density(x)])


class VectorField:
    def __init__(self, dim: int, comps: ComponentFn, name: str = ""):
        self.dim = dim
        self._comps = comps
        self.name = name

    def __repr__(self) -> str:
        return f"VectorField(dim={self.dim}, name={self.name!r})"

    def components(self, x: Coords) -> list:
        comps = list(self._comps(x))
        if len(comps) != self.dim:
            raise ValueError(f"{self!r} returned {len(comps)} components")
        return comps

    def __call__(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        return _stack_last(self.components(coords_of(pts)), pts.shape[:-1])

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.dim, lambda x: [a + b for a, b in zip(self.components(x), other.components(x))])

    def __mul__(self, c: float) -> "VectorField":
        c = float(c)
        return VectorField(self.dim, lambda x: [c * a for a in self.components(x)])

    __rmul__ = __mul__

    def apply(self, f: PForm) -> PForm:
        """Directional derivative X(f) of a function."""
        return interior_product(self, exterior_derivative(f))


def coordinate_vector(dim: int, axis: int, scale: float = 1.0) -> VectorField:
    return VectorField(dim, lambda x: [scale if i == axis else 0.0 for i in range(dim)])


class KernelField:
    """Section of T*M (x) Lambda^n T*M: one top-form coefficient per first index."""

    def __init__(self, dim: int, comps: ComponentFn, name: str = ""):
        self.dim = dim
        self._comps = comps
        self.name = name

    def __repr__(self) -> str:
        return f"KernelField(dim={self.dim}, name={self.name!r})"

    def components(self, x: Coords) -> list:
        comps = list(self._comps(x))
        if len(comps) != self.dim:
            raise ValueError(f"{self!r} returned {len(comps)} components")
        return comps

    def __call__(self, pts) -> np.ndarray:
        """Coefficients ``k[nu]`` of ``du^1 ^ ... ^ du^n``, shape ``(B, n)``."""
        pts = as_points(pts, self.dim)
        return _stack_last(self.components(coords_of(pts)), pts.shape[:-1])

    def component(self, pts, nu: int, lams: Sequence[int]) -> np.ndarray:
        if len(lams) != self.dim:
            raise ValueError("kernel components take one index plus n antisymmetric indices")
        return perm_sign(lams) * self(pts)[..., nu]

    def full(self, pts) -> np.ndarray:
        """Dense ``(B, n, n, ..., n)`` array with antisymmetry in the last n slots."""
        top = self(pts)
        return top.reshape(top.shape + (1,) * self.dim) * levi_civita(self.dim)

    def __mul__(self, c: float) -> "KernelField":
        c = float(c)
        return KernelField(self.dim, lambda x: [c * a for a in self.components(x)])

    __rmul__ = __mul__


def levi_civita(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        eps[perm] = perm_sign(perm)
    return eps


# --------------------------------------------------------------------------- maps


def det(M: Sequence[Sequence]):
    """Determinant of a small square matrix of scalars, arrays or duals."""
    n = len(M)
    if n == 0:
        return 1.0
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    if n == 3:
        return (
            M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
            - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
            + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0])
        )
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        term = M[0][j] * det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


@dataclass(frozen=True)
class SmoothMap:
    """A chart map ``x -> f(x)`` stored as a lift to the covering box."""

    dim: int
    fn: Callable[[Coords], Sequence]
    domain: ChartDomain | None = None
    name: str = ""
    check_bounds: bool = field(default=True, compare=False)

    def forward(self, x: Coords) -> Coords:
        y = list(self.fn(list(x)))
        if len(y) != self.dim:
            raise ValueError(f"map {self.name!r} returned {len(y)} coordinates")
        if self.domain is not None:
            if self.check_bounds:
                self.domain.check_inside(y)
            y = self.domain.wrap(y)
        return y

    def __call__(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        return _stack_last(self.forward(coords_of(pts)), pts.shape[:-1])

    def linearize(self, x: Coords) -> tuple[Coords, list[list]]:
        """Image and Jacobian entries ``J[a][i] = d f^a / d x^i`` (dual-capable)."""
        vals, rows = ad.jacobian(self.forward, x)
        return vals, [[rows[a][i] for i in range(self.dim)] for a in range(self.dim)]

    def jacobian(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        _, J = self.linearize(coords_of(pts))
        batch = pts.shape[:-1]
        return np.stack([_stack_last(row, batch) for row in J], axis=-2)

    def compose(self, inner: "SmoothMap") -> "SmoothMap":
        """``self o inner``."""
        return SmoothMap(self.dim, lambda x: self.forward(inner.forward(x)), self.domain,
                         f"{self.name}o{inner.name}", self.check_bounds)


def identity_map(dim: int, domain: ChartDomain | None = None) -> SmoothMap:
    return SmoothMap(dim, lambda x: list(x), domain, "id")


# --------------------------------------------------------------------------- exterior calculus


def wedge(a: PForm, b: PForm) -> PForm:
    n, p, q = a.dim, a.degree, b.degree
    if b.dim != n:
        raise ValueError("forms live on different dimensions")
    if p + q > n:
        raise ValueError("degree exceeds dimension")
    table = []
    for K in _index_sets(n, p + q):
        terms = []
        for I in itertools.combinations(K, p):
            J = tuple(k for k in K if k not in I)
            terms.append((perm_sign(I + J), a._position[I], b._position[J]))
        table.append(terms)

    def coeffs(x):
        ca, cb = a.components(x), b.components(x)
        out = []
        for terms in table:
            total = 0.0
            for s, i, j in terms:
                prod = ca[i] * cb[j]
                total = total + prod if s > 0 else total - prod
            out.append(total)
        return out

    return PForm(n, p + q, coeffs, f"({a.name}^{b.name})")


def wedge_power(a: PForm, k: int) -> PForm:
    """a ^ a ^ ... ^ a (k factors); k = 0 gives the constant function 1."""
    out = scalar_field(a.dim, lambda x: 1.0)
    for _ in range(k):
        out = wedge(out, a) if out.degree else a
    return out


def exterior_derivative(a: PForm) -> PForm:
    n, p = a.dim, a.degree
    if p >= n:
        raise ValueError("degree exceeds dimension")
    table = []
    for K in _index_sets(n, p + 1):
        table.append([(r, K[r], a._position[K[:r] + K[r + 1:]]) for r in range(p + 1)])

    def coeffs(x):
        _, rows = ad.jacobian(a.components, x)
        out = []
        for terms in table:
            total = 0.0
            for r, k, slot in terms:
                term = rows[slot][k]
                total = total + term if r % 2 == 0 else total - term
            out.append(total)
        return out

    return PForm(n, p + 1, coeffs, f"d{a.name}")


def interior_product(X: VectorField, a: PForm) -> PForm:
    n, p = a.dim, a.degree
    if p == 0:
        raise ValueError("interior product of a 0-form is undefined")
    table = []
    for I in _index_sets(n, p - 1):
        terms = []
        for j in range(n):
            if j in I:
                continue
            K = tuple(sorted(I + (j,)))
            terms.append((K.index(j), j, a._position[K]))
        table.append(terms)

    def coeffs(x):
        xs, ca = X.components(x), a.components(x)
        out = []
        for terms in table:
            total = 0.0
            for pos, j, slot in terms:
                prod = xs[j] * ca[slot]
                total = total + prod if pos % 2 == 0 else total - prod
            out.append(total)
        return out

    return PForm(n, p - 1, coeffs, f"i({a.name})")


def lie_derivative(X: VectorField, a: PForm) -> PForm:
    """Cartan's formula L_X = d i_X + i_X d."""
    if a.degree == 0:
        return interior_product(X, exterior_derivative(a))
    if a.degree == a.dim:
        return exterior_derivative(interior_product(X, a))
    return exterior_derivative(interior_product(X, a)) + interior_product(X, exterior_derivative(a))


def pullback(f: SmoothMap, a):
    """Pull a form or a kernel back along ``f``, one Jacobian factor per index."""
    n = f.dim
    if isinstance(a, KernelField):
        def kcoeffs(x):
            y, J = f.linearize(x)
            k = a.components(y)
            dj = det(J)
            out = []
            for j in range(n):
                total = 0.0
                for nu in range(n):
                    total = total + k[nu] * J[nu][j]
                out.append(total * dj)
            return out

        return KernelField(n, kcoeffs, f"pullback({a.name})")

    if not isinstance(a, PForm):
        raise TypeError("pullback expects a PForm or KernelField")
    p = a.degree
    sets = a.index_sets

    def coeffs(x):
        if p == 0:
            return a.components(f.forward(x))
        y, J = f.linearize(x)
        ca = a.components(y)
        out = []
        for I in sets:
            total = 0.0
            for slot, Jset in enumerate(sets):
                minor = det([[J[r][c] for c in I] for r in Jset])
                total = total + ca[slot] * minor
            out.append(total)
        return out

    return PForm(n, p, coeffs, f"pullback({a.name})")


def flow_pullback_fd(flow: Callable[[float], SmoothMap], a: PForm, pts, h: float = 1e-4) -> np.ndarray:
    """Central difference (phi_h^* a - phi_{-h}^* a) / 2h, a test oracle for L_X."""
    return (pullback(flow(h), a)(pts) - pullback(flow(-h), a)(pts)) / (2.0 * h)


def reeb_vector(eta: PForm, pts) -> np.ndarray:
    """Solve eta(xi) = 1, d eta(xi, .) = 0 pointwise, shape ``(B, n)``."""
    pts = as_points(pts, eta.dim)
    w = exterior_derivative(eta).full(pts)
    e = eta(pts)
    A = np.concatenate([np.swapaxes(w, -1, -2), e[..., None, :]], axis=-2)
    rhs = np.zeros(A.shape[:-1])
    rhs[..., -1] = 1.0
    out = np.empty(e.shape)
    for b in range(A.shape[0]):
        out[b] = np.linalg.lstsq(A[b], rhs[b], rcond=None)[0]
    return out
