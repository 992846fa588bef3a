"""Loops, circle actions and the finite-dimensional reductions of loop-space forms.

A kernel ``k`` (a section of T*M (x) top forms) defines an n-form on the
loop space by integrating along the loop:

    K(X_1..X_n)(gamma) = int_0^{2 pi} k_{nu [l_1..l_n]}(gamma) gamma'^nu X_1^{l_1}..X_n^{l_n} d theta.

Everything here works on numeric points; derivatives of actions and
homotopies come from dual numbers, so kernels that are only available
numerically (curvature kernels) are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ad
from .geometry import ChartDomain, Coords, KernelField, ManifoldSpec, SmoothMap, VectorField, as_points
from .quadrature import IntegralResult, QuadratureSpec, integrate_density

TWO_PI = 2.0 * math.pi
DEFAULT_LOOP_NODES = 64


def theta_nodes(N: int) -> np.ndarray:
    return TWO_PI * np.arange(N) / N


def periodic_difference(a: np.ndarray, b: np.ndarray, domain: ChartDomain | None) -> np.ndarray:
    """``a - b`` with periodic axes reduced to the shortest representative."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if domain is None:
        return d
    for ax, per in enumerate(domain.periodic):
        if per:
            w = domain.widths[ax]
            d[..., ax] -= w * np.round(d[..., ax] / w)
    return d


# --------------------------------------------------------------------------- loops


@dataclass(frozen=True)
class DiscreteLoop:
    samples: np.ndarray   # (N, n)
    velocity: np.ndarray  # (N, n)

    def __post_init__(self):
        s, v = np.asarray(self.samples, dtype=float), np.asarray(self.velocity, dtype=float)
        if s.ndim != 2 or s.shape != v.shape:
            raise ValueError("samples and velocity must both have shape (N, n)")
        if s.shape[0] < 16:
            raise ValueError("a discrete loop needs at least 16 nodes")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "velocity", v)

    @property
    def nodes(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def from_curve(cls, curve: Callable[[object], Sequence], dim: int, N: int = DEFAULT_LOOP_NODES,
                   domain: ChartDomain | None = None, tol: float = 1e-9) -> "DiscreteLoop":
        """Sample a closed curve ``theta -> coords``; velocities are exact (dual numbers)."""
        th = theta_nodes(N)
        vals, rows = ad.jacobian(lambda t: list(curve(t[0])), [th])
        samples = np.stack([np.broadcast_to(v, th.shape) for v in vals], axis=-1)
        velocity = np.stack([np.broadcast_to(r[0], th.shape) for r in rows], axis=-1)
        end = np.stack([np.broadcast_to(np.asarray(c, dtype=float), ()) for c in curve(np.float64(TWO_PI))])
        gap = periodic_difference(end, samples[0], domain)
        if np.max(np.abs(gap)) > tol:
            raise ValueError(f"curve does not close up: gap {gap.tolist()}")
        if samples.shape[1] != dim:
            raise ValueError(f"curve returned {samples.shape[1]} coordinates, expected {dim}")
        return cls(samples, velocity)

    @classmethod
    def constant(cls, point: Sequence[float], N: int = DEFAULT_LOOP_NODES) -> "DiscreteLoop":
        p = np.asarray(point, dtype=float)
        return cls(np.tile(p, (N, 1)), np.zeros((N, p.size)))


@dataclass(frozen=True)
class LoopTangentFrame:
    fields: np.ndarray  # (n, N, dim): fields[i, j] = X_i(theta_j)

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=float)
        if f.ndim != 3 or f.shape[0] != f.shape[2]:
            raise ValueError("a frame holds n fields of shape (N, n)")
        object.__setattr__(self, "fields", f)

    @classmethod
    def coordinate(cls, dim: int, N: int) -> "LoopTangentFrame":
        return cls(np.broadcast_to(np.eye(dim)[:, None, :], (dim, N, dim)).copy())


def eval_loop_form(kernel: KernelField, loop: DiscreteLoop, frame: LoopTangentFrame) -> float:
    """Trapezoid value of the loop-space n-form on the frame X_1..X_n."""
    n, N = loop.dim, loop.nodes
    if kernel.dim != n or frame.fields.shape != (n, N, n):
        raise ValueError("kernel, loop and frame dimensions disagree")
    k = kernel(loop.samples)                      # (N, n) top coefficients
    mats = np.moveaxis(frame.fields, 0, 1)        # (N, i, lambda)
    integrand = np.einsum("jn,jn->j", k, loop.velocity) * np.linalg.det(mats)
    return TWO_PI * float(np.mean(integrand))


# --------------------------------------------------------------------------- circle actions


def kernel_pullback_values(f: SmoothMap, kernel: KernelField, pts) -> np.ndarray:
    """Numeric ``(f^* k)`` top coefficients at ``pts``, shape ``(B, n)``."""
    pts = as_points(pts, f.dim)
    y = f(pts)
    J = f.jacobian(pts)
    return np.einsum("bn,bnj->bj", kernel(y), J) * np.linalg.det(J)[:, None]


@dataclass(frozen=True)
class CircleAction:
    """``a(theta, x)`` with period 2 pi in theta; ``fn`` must accept dual numbers."""

    dim: int
    fn: Callable[[object, Coords], Sequence]
    domain: ChartDomain | None = None
    name: str = ""
    scale: float = field(default=1.0, compare=False)

    def point_map(self, theta: float) -> SmoothMap:
        th = float(theta)
        return SmoothMap(self.dim, lambda x: self.fn(th, x), self.domain, f"{self.name}({th:.3g})")

    def __call__(self, theta, pts) -> np.ndarray:
        return self.point_map(theta)(pts)

    @property
    def generator(self) -> VectorField:
        """xi = d/d theta a(theta, x) at theta = 0."""

        def comps(x):
            zero = np.zeros(np.shape(ad.value(x[0])))
            _, rows = ad.jacobian(lambda t: list(self.fn(t[0], list(x))), [zero])
            return [r[0] for r in rows]

        return VectorField(self.dim, comps, f"gen({self.name})")

    def check_action_law(self, pts, thetas: Sequence[tuple[float, float]]) -> float:
        """Max deviation from a(0, x) = x and a(s + t, x) = a(s, a(t, x))."""
        pts = as_points(pts, self.dim)
        worst = float(np.max(np.abs(periodic_difference(self(0.0, pts), pts, self.domain))))
        for s, t in thetas:
            lhs = self(s + t, pts)
            rhs = self(s, self(t, pts))
            worst = max(worst, float(np.max(np.abs(periodic_difference(lhs, rhs, self.domain)))))
        return worst


def iterate_action(a: CircleAction, n: int) -> CircleAction:
    """``a_n(theta, x) = a(n theta, x)``."""
    if int(n) != n or n < 1:
        raise ValueError("iterate needs a positive integer")
    n = int(n)
    if n == 1:
        return a
    return CircleAction(a.dim, lambda t, x: a.fn(n * t, x), a.domain, f"{a.name}^{n}", a.scale * n)


def _family_jets(fn: Callable[[object, Coords], Sequence], dim: int, pts: np.ndarray, thetas: np.ndarray):
    """Image, theta-velocity and spatial Jacobian of ``theta -> fn(theta, x)`` on a (B, N) grid."""
    B, N = len(pts), len(thetas)
    th = np.broadcast_to(thetas[None, :], (B, N))
    xs = [np.broadcast_to(pts[:, None, i], (B, N)) for i in range(dim)]
    vals, rows = ad.jacobian(lambda z: list(fn(z[0], z[1:])), [th] + xs)
    y = np.stack([np.broadcast_to(v, (B, N)) for v in vals], axis=-1)
    vel = np.stack([np.broadcast_to(r[0], (B, N)) for r in rows], axis=-1)
    J = np.stack([np.stack([np.broadcast_to(r[1 + i], (B, N)) for i in range(dim)], axis=-1)
                  for r in rows], axis=-2)
    return y, vel, J


def family_pullback_density(fn: Callable[[object, Coords], Sequence], kernel: KernelField, pts,
                            N: int = DEFAULT_LOOP_NODES, domain: ChartDomain | None = None) -> np.ndarray:
    """Top coefficient of the loop form pulled back along x -> fn(., x).

    Integrates ``k_nu(fn(theta, x)) d_theta fn^nu det(d_x fn)`` over theta.
    """
    pts = as_points(pts, kernel.dim)
    n = kernel.dim
    y, vel, J = _family_jets(fn, n, pts, theta_nodes(N))
    if domain is not None:
        domain.check_inside([y[..., i] for i in range(n)])
        y = domain.wrap_points(y)
    k = kernel(y.reshape(-1, n)).reshape(y.shape)
    integrand = np.sum(k * vel, axis=-1) * np.linalg.det(J)
    return TWO_PI * np.mean(integrand, axis=-1)


def action_pullback_density(a: CircleAction, kernel: KernelField, pts, N: int = DEFAULT_LOOP_NODES) -> np.ndarray:
    return family_pullback_density(a.fn, kernel, pts, N, a.domain)


# --------------------------------------------------------------------------- homotopies


@dataclass(frozen=True)
class HomotopyOfLoops:
    """``F(s, theta, x)``, 2 pi periodic in theta; each F(s, theta, .) a diffeomorphism."""

    dim: int
    fn: Callable[[object, object, Coords], Sequence]
    domain: ChartDomain | None = None
    name: str = ""

    def at(self, s: float) -> Callable[[object, Coords], Sequence]:
        return lambda t, x: self.fn(s, t, x)

    def point_map(self, s: float, theta: float) -> SmoothMap:
        return SmoothMap(self.dim, lambda x: self.fn(float(s), float(theta), x), self.domain, self.name)

    def check_periodic(self, pts, s_values: Sequence[float], thetas: Sequence[float]) -> float:
        pts = as_points(pts, self.dim)
        worst = 0.0
        for s in s_values:
            for t in thetas:
                a = self.point_map(s, t)(pts)
                b = self.point_map(s, t + TWO_PI)(pts)
                worst = max(worst, float(np.max(np.abs(periodic_difference(a, b, self.domain)))))
        return worst


def constant_homotopy(a: CircleAction) -> HomotopyOfLoops:
    return HomotopyOfLoops(a.dim, lambda s, t, x: a.fn(t, x), a.domain, f"const({a.name})")


def reparametrization_homotopy(a: CircleAction, eps: float) -> HomotopyOfLoops:
    """``F(s, theta, x) = a(theta + s eps sin theta, x)``; a loop of maps in the same group for every s."""
    if not abs(eps) < 1.0:
        raise ValueError("|eps| must be below 1 so the reparametrization stays monotone")
    return HomotopyOfLoops(a.dim, lambda s, t, x: a.fn(t + s * eps * ad.sin(t), x), a.domain,
                           f"reparam({a.name}, {eps})")


def loop_form_exterior_derivative(kernel: KernelField, F: HomotopyOfLoops, s: float, pts,
                                  N: int = DEFAULT_LOOP_NODES, cond_limit: float = 1e12) -> np.ndarray:
    """Closed-form theta integral of the pulled-back exterior derivative at (s, x).

    With ``d_s F = alpha^i d_i F`` solved pointwise, the integrand is
    ``k_nu(F) (d_theta alpha^i) d_i F^nu det(d_x F)``.  Returns shape ``(B,)``.
    """
    pts = as_points(pts, kernel.dim)
    n = kernel.dim
    B = len(pts)
    th = theta_nodes(N)
    z = np.empty((B, N, n + 2))
    z[..., 0] = s
    z[..., 1] = th[None, :]
    z[..., 2:] = pts[:, None, :]
    flat = z.reshape(-1, n + 2)
    vals, grads, hess = ad.hessian_parts(lambda c: list(F.fn(c[0], c[1], c[2:])), flat)
    y = vals
    b = grads[:, :, 0]                 # d_s F
    J = grads[:, :, 2:]                # d_x F
    db = hess[:, :, 1, 0]              # d_theta d_s F
    dJ = hess[:, :, 1, 2:]             # d_theta d_x F
    cond = np.linalg.cond(J)
    if np.any(~(cond < cond_limit)):
        i = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise np.linalg.LinAlgError(f"homotopy is not a local diffeomorphism near {flat[i].tolist()}")
    alpha = np.linalg.solve(J, b[..., None])[..., 0]
    dalpha = np.linalg.solve(J, (db - np.einsum("bai,bi->ba", dJ, alpha))[..., None])[..., 0]
    if F.domain is not None:
        y = F.domain.wrap_points(y)
    k = kernel(y)
    integrand = np.einsum("bn,bni,bi->b", k, J, dalpha) * np.linalg.det(J)
    return TWO_PI * integrand.reshape(B, N).mean(axis=-1)


@dataclass(frozen=True)
class HomotopyCheck:
    start: IntegralResult
    end: IntegralResult
    difference: float
    invariance_residual: float
    warnings: tuple[str, ...] = ()


def homotopy_invariance_check(kernel: KernelField, F: HomotopyOfLoops, m: ManifoldSpec, q: QuadratureSpec,
                              N: int = DEFAULT_LOOP_NODES, residual_pts=None,
                              residual_tol: float = 1e-6) -> HomotopyCheck:
    """Integrate the endpoint densities over ``m`` and report their difference."""
    if residual_pts is None:
        residual_pts = m.domain.sample(np.random.default_rng(0), 32, margin=0.05)
    residual = 0.0
    ref = kernel(residual_pts)
    for s in (0.0, 0.5, 1.0):
        for t in theta_nodes(8):
            pulled = kernel_pullback_values(F.point_map(s, t), kernel, residual_pts)
            residual = max(residual, float(np.max(np.abs(pulled - ref))))
    warnings = ()
    if residual > residual_tol:
        warnings = (f"kernel is not invariant along the homotopy (residual {residual:.3e})",)
    ends = [integrate_density(m, lambda p, s=s: family_pullback_density(F.at(s), kernel, p, N, F.domain), q)
            for s in (0.0, 1.0)]
    return HomotopyCheck(ends[0], ends[1], abs(ends[0].value - ends[1].value), residual, warnings)
