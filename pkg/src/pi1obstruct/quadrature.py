"""Integration of top-degree forms over single-chart manifolds.

Grid rules: the periodic trapezoid (midpoint-shifted, so chart seams are
never sampled) on periodic axes, Gauss-Legendre on bounded axes.  Monte
Carlo draws uniform points in the chart box from a counter-based Philox
stream: batch ``b`` of a run with seed ``s`` always uses key ``s`` and a
counter block indexed by ``b``, so batches can be evaluated in any order
or on any number of threads and still combine to the same bits.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import ManifoldSpec, PForm

Density = Callable[[np.ndarray], np.ndarray]

MC_BATCH = 8192
GRID_CHUNK = 32768
THREADS_ENV = "PI1_OBSTRUCT_THREADS"


class QuadratureError(RuntimeError):
    pass


class Method(str, enum.Enum):
    PERIODIC_TRAPEZOID = "PeriodicTrapezoid"
    GAUSS_LEGENDRE = "GaussLegendre"
    MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class QuadratureSpec:
    method: Method
    nodes_per_axis: int | None = None
    sample_count: int | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.method is Method.MONTE_CARLO:
            if self.seed is None:
                raise ValueError("Monte Carlo quadrature needs an explicit seed")
            if not 0 <= int(self.seed) < 2**64:
                raise ValueError("seed must fit in 64 unsigned bits")
            if self.sample_count is None or self.sample_count < 1:
                raise ValueError("sample_count must be a positive integer")
        else:
            if self.nodes_per_axis is None or self.nodes_per_axis < 2:
                raise ValueError("nodes_per_axis must be an integer >= 2")

    @property
    def resolution(self) -> int:
        return self.sample_count if self.method is Method.MONTE_CARLO else self.nodes_per_axis

    def with_resolution(self, r: int) -> "QuadratureSpec":
        if self.method is Method.MONTE_CARLO:
            return QuadratureSpec(self.method, sample_count=r, seed=self.seed)
        return QuadratureSpec(self.method, nodes_per_axis=r)

    def as_dict(self) -> dict:
        d = {"method": self.method.value}
        if self.method is Method.MONTE_CARLO:
            d.update(sample_count=self.sample_count, seed=self.seed)
        else:
            d["nodes_per_axis"] = self.nodes_per_axis
        return d


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    nodes_used: int

    def __post_init__(self):
        if not (math.isfinite(self.error_estimate) and self.error_estimate >= 0):
            raise QuadratureError(f"invalid error estimate {self.error_estimate}")

    def as_dict(self) -> dict:
        return {"value": self.value, "error": self.error_estimate, "nodes": self.nodes_used}


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _map_ordered(fn: Callable, items: Sequence) -> list:
    """Apply ``fn`` to ``items`` on the configured threads; results keep item order."""
    threads = min(thread_count(), len(items))
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _evaluate(density: Density, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(density(pts), dtype=float).reshape(len(pts))
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise QuadratureError(f"non-finite integrand {vals[i]} at node {pts[i].tolist()}")
    return vals


def form_density(form: PForm) -> Density:
    if form.degree != form.dim:
        raise ValueError(f"expected a top-degree form, got degree {form.degree} on dimension {form.dim}")
    return lambda pts: form(pts)[..., 0]


# --------------------------------------------------------------------------- grids


def axis_rule(lo: float, hi: float, periodic: bool, count: int, method: Method) -> tuple[np.ndarray, np.ndarray]:
    w = hi - lo
    if periodic:
        nodes = lo + w * (np.arange(count) + 0.5) / count
        return nodes, np.full(count, w / count)
    if method is Method.PERIODIC_TRAPEZOID:
        raise QuadratureError("PeriodicTrapezoid needs every chart axis to be periodic")
    x, wt = np.polynomial.legendre.leggauss(count)
    return lo + 0.5 * w * (x + 1.0), 0.5 * w * wt


def _grid_sum(density: Density, m: ManifoldSpec, method: Method, count: int) -> float:
    dom = m.domain
    if method is Method.PERIODIC_TRAPEZOID and not dom.all_periodic:
        raise QuadratureError("PeriodicTrapezoid needs every chart axis to be periodic")
    rules = [axis_rule(lo, hi, per, count, method) for (lo, hi), per in zip(dom.bounds, dom.periodic)]
    n = dom.dim
    total = count**n
    starts = list(range(0, total, GRID_CHUNK))

    def chunk(start: int) -> float:
        flat = np.arange(start, min(start + GRID_CHUNK, total))
        idx = np.unravel_index(flat, (count,) * n)
        pts = np.stack([rules[a][0][idx[a]] for a in range(n)], axis=-1)
        wts = np.prod(np.stack([rules[a][1][idx[a]] for a in range(n)]), axis=0)
        return float(np.sum(_evaluate(density, pts) * wts))

    return math.fsum(_map_ordered(chunk, starts))


def _integrate_grid(density: Density, m: ManifoldSpec, spec: QuadratureSpec) -> IntegralResult:
    N = spec.nodes_per_axis
    fine = _grid_sum(density, m, spec.method, N)
    coarse = _grid_sum(density, m, spec.method, max(N // 2, 1))
    sign = m.orientation_sign
    return IntegralResult(sign * fine, abs(fine - coarse), N**m.dim)


# --------------------------------------------------------------------------- Monte Carlo


def mc_generator(seed: int, batch: int) -> np.random.Generator:
    """Independent stream for one batch: Philox key = seed, high counter word = batch index."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(batch)]))


def mc_points(m: ManifoldSpec, seed: int, batch: int, size: int) -> np.ndarray:
    u = mc_generator(seed, batch).random((size, m.dim))
    u = u + 2.0**-54  # open unit interval, chart walls are never hit
    return m.domain.lower + m.domain.widths * u


def _integrate_mc(density: Density, m: ManifoldSpec, spec: QuadratureSpec) -> IntegralResult:
    n_total = spec.sample_count
    batches = [(b, min(MC_BATCH, n_total - b * MC_BATCH)) for b in range(math.ceil(n_total / MC_BATCH))]

    def run(item):
        b, size = item
        f = _evaluate(density, mc_points(m, spec.seed, b, size))
        return float(np.sum(f)), float(np.sum(f * f))

    sums = _map_ordered(run, batches)
    s1 = math.fsum(s for s, _ in sums)
    s2 = math.fsum(q for _, q in sums)
    vol = m.domain.volume
    mean = s1 / n_total
    var = max(s2 / n_total - mean * mean, 0.0)
    if n_total > 1:
        var *= n_total / (n_total - 1)
    err = vol * math.sqrt(var / n_total)
    return IntegralResult(m.orientation_sign * vol * mean, err, n_total)


# --------------------------------------------------------------------------- entry points


def integrate_density(m: ManifoldSpec, density: Density, spec: QuadratureSpec) -> IntegralResult:
    """Integrate a chart density ``pts (B, n) -> (B,)`` times the orientation sign."""
    if spec.method is Method.MONTE_CARLO:
        return _integrate_mc(density, m, spec)
    return _integrate_grid(density, m, spec)


def integrate_top_form(m: ManifoldSpec, form: PForm, spec: QuadratureSpec) -> IntegralResult:
    if form.dim != m.dim:
        raise ValueError(f"form dimension {form.dim} does not match manifold dimension {m.dim}")
    return integrate_density(m, form_density(form), spec)


def convergence_sweep(m: ManifoldSpec, form: PForm, method: Method | str, levels: Sequence[int],
                      seed: int = 0) -> list[IntegralResult]:
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("a convergence sweep needs at least two levels")
    method = Method(method)
    out = []
    for r in sorted(levels):
        if method is Method.MONTE_CARLO:
            spec = QuadratureSpec(method, sample_count=r, seed=seed)
        else:
            spec = QuadratureSpec(method, nodes_per_axis=r)
        out.append(integrate_top_form(m, form, spec))
    return out
