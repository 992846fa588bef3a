"""Numerical certification of an infinite-order loop of transformations.

Three conditions are checked for a circle action ``a`` and kernel ``k``:

(i)   every ``a(theta, .)`` lies in the transformation group (membership
      residual below ``tol_membership``);
(ii)  ``a(theta, .)^* k = C k`` for one nonzero constant ``C`` (invariance
      residual below ``tol_invariance``);
(iii) the obstruction ``2 pi C int_M k . xi`` is nonzero, meaning more than
      five error estimates away from zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import KernelField, ManifoldSpec, PForm, SmoothMap, as_points
from .curvature import MetricField
from .kernels import KernelKind, kernel_contract
from .loopspace import (
    CircleAction,
    HomotopyOfLoops,
    action_pullback_density,
    family_pullback_density,
    homotopy_invariance_check,
    kernel_pullback_values,
)
from .quadrature import IntegralResult, Method, QuadratureSpec, integrate_density, integrate_top_form

TWO_PI = 2.0 * math.pi
SIGMA_RULE = 5.0
ZERO_KERNEL_TOL = 1e-9

CERTIFIED = "CERTIFIED"
INCONCLUSIVE = "INCONCLUSIVE"


class MembershipKind(str, enum.Enum):
    ISOMETRY = "Isometry"
    CONFORMAL = "Conformal"
    STRICT_CONTACT = "StrictContact"
    FORM_PAIR = "FormPair"
    PSH = "Psh"


_REQUIRED = {
    MembershipKind.ISOMETRY: ("metric",),
    MembershipKind.CONFORMAL: ("metric",),
    MembershipKind.STRICT_CONTACT: ("eta",),
    MembershipKind.FORM_PAIR: ("eta", "mu"),
    MembershipKind.PSH: ("eta", "phi"),
}


class ZeroKernelError(ValueError):
    pass


@dataclass(frozen=True)
class MembershipPredicate:
    """Defining equations of a transformation group, evaluated on a map at points.

    ``phi`` maps points ``(B, n)`` to ``(B, n, n)`` with ``phi[b, a, c]`` the
    a-component of phi applied to the c-th coordinate vector.
    """

    kind: MembershipKind
    metric: MetricField | None = None
    eta: PForm | None = None
    mu: PForm | None = None
    phi: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MembershipKind(self.kind))
        missing = [name for name in _REQUIRED[self.kind] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind.value} predicate inputs missing: {', '.join(missing)}")
        if self.mu is not None and self.mu.degree != self.mu.dim:
            raise ValueError("mu must be a top-degree form")

    def residual(self, f: SmoothMap, pts) -> tuple[np.ndarray, np.ndarray | None]:
        """Per-point residual ``(B,)`` and, for Conformal, the fitted factor ``(B,)``."""
        pts = as_points(pts, f.dim)
        y = f(pts)
        J = f.jacobian(pts)
        kind = self.kind
        if kind in (MembershipKind.ISOMETRY, MembershipKind.CONFORMAL):
            g0 = self.metric(pts)
            pulled = np.swapaxes(J, -1, -2) @ self.metric(y) @ J
            if kind is MembershipKind.ISOMETRY:
                return _maxabs(pulled - g0), None
            factor = np.einsum("bij,bij->b", pulled, g0) / np.einsum("bij,bij->b", g0, g0)
            return _maxabs(pulled - factor[:, None, None] * g0), factor
        res = _maxabs(np.einsum("ba,bai->bi", self.eta(y), J) - self.eta(pts))
        if kind is MembershipKind.FORM_PAIR:
            mu_res = np.abs(np.linalg.det(J) * self.mu(y)[:, 0] - self.mu(pts)[:, 0])
            res = np.maximum(res, mu_res)
        elif kind is MembershipKind.PSH:
            frame = _kernel_frame(self.eta(pts))                  # (B, n, n-1)
            lhs = J @ self.phi(pts) @ frame
            rhs = self.phi(y) @ J @ frame
            res = np.maximum(res, _maxabs(lhs - rhs))
        return res, None


def _maxabs(a: np.ndarray) -> np.ndarray:
    return np.max(np.abs(a.reshape(a.shape[0], -1)), axis=-1)


def _kernel_frame(eta: np.ndarray) -> np.ndarray:
    """Orthonormal (Euclidean) basis of ker eta at each point, shape (B, n, n-1)."""
    _, _, vt = np.linalg.svd(eta[:, None, :])
    return np.swapaxes(vt[:, 1:, :], -1, -2)


# --------------------------------------------------------------------------- cases


def expectation_met(expected: str, verdict: str) -> bool:
    """``CERTIFIED``, ``INCONCLUSIVE``, ``NOT_CERTIFIED`` or ``FAILED(x)`` (x among the failed conditions)."""
    if expected == "NOT_CERTIFIED":
        return verdict != CERTIFIED
    if expected.startswith("FAILED(") and verdict.startswith("FAILED("):
        want = expected[7:-1].split(",")
        got = verdict[7:-1].split(",")
        return all(w in got for w in want)
    return expected == verdict


@dataclass(frozen=True)
class Tolerances:
    membership: float = 1e-6
    invariance: float = 1e-6


@dataclass
class CertificationCase:
    case_id: str
    manifold: ManifoldSpec
    action: CircleAction
    kernel: KernelField
    kernel_kind: KernelKind
    membership: MembershipPredicate
    quadrature: QuadratureSpec
    tolerances: Tolerances = field(default_factory=Tolerances)
    topic: str = ""
    expected: str = CERTIFIED
    loop: HomotopyOfLoops | None = None
    sample_points: int = 48
    sample_thetas: int = 16
    crosscheck_resolution: int | None = None
    loop_nodes: int = 64
    description: str = ""

    def __post_init__(self):
        n = self.manifold.dim
        for what, d in (("action", self.action.dim), ("kernel", self.kernel.dim)):
            if d != n:
                raise ValueError(f"{what} dimension {d} does not match manifold dimension {n}")
        if self.loop is not None and self.loop.dim != n:
            raise ValueError("loop dimension does not match the manifold")

    def loop_map(self, theta: float) -> SmoothMap:
        """The group element at parameter theta along the certified loop."""
        if self.loop is not None:
            return self.loop.point_map(1.0, theta)
        return self.action.point_map(theta)

    def sample(self, count: int | None = None, salt: int = 0) -> np.ndarray:
        rng = np.random.default_rng([salt, len(self.case_id), *map(ord, self.case_id)])
        return self.manifold.domain.sample(rng, count or self.sample_points, margin=0.02)

    def thetas(self, count: int | None = None) -> np.ndarray:
        count = count or self.sample_thetas
        return TWO_PI * (np.arange(count) + 0.37) / count


# --------------------------------------------------------------------------- checks


@dataclass(frozen=True)
class MembershipStats:
    max_residual: float
    mean_residual: float
    theta_samples: int
    point_samples: int
    conformal_factor_range: tuple[float, float] | None = None

    def as_dict(self) -> dict:
        d = {
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "theta_samples": self.theta_samples,
            "point_samples": self.point_samples,
        }
        if self.conformal_factor_range is not None:
            d["conformal_factor_range"] = list(self.conformal_factor_range)
        return d


def check_membership(case: CertificationCase, pts=None, thetas=None) -> MembershipStats:
    pts = case.sample() if pts is None else as_points(pts, case.manifold.dim)
    thetas = case.thetas() if thetas is None else np.asarray(thetas, dtype=float)
    res, factors = [], []
    for t in thetas:
        r, f = case.membership.residual(case.loop_map(t), pts)
        res.append(r)
        if f is not None:
            factors.append(f)
    res = np.concatenate(res)
    frange = None
    if factors:
        fa = np.concatenate(factors)
        frange = (float(fa.min()), float(fa.max()))
    return MembershipStats(float(res.max()), float(res.mean()), len(thetas), len(pts), frange)


@dataclass(frozen=True)
class InvarianceResult:
    C: float
    max_residual: float
    zero_kernel: bool = False

    def as_dict(self) -> dict:
        return {"C": self.C, "max_residual": self.max_residual, "zero_kernel": self.zero_kernel}


def check_invariance(kernel: KernelField, maps, pts, thetas, zero_tol: float = ZERO_KERNEL_TOL) -> InvarianceResult:
    """Least-squares ``C`` in ``a(theta)^* k = C k`` and the max-norm residual.

    ``maps`` is a :class:`CircleAction` or any ``theta -> SmoothMap``.
    """
    if isinstance(maps, CircleAction):
        maps = maps.point_map
    pts = as_points(pts, kernel.dim)
    ref = kernel(pts)
    pulled = np.stack([kernel_pullback_values(maps(t), kernel, pts) for t in thetas])
    if np.max(np.abs(ref)) < zero_tol and np.max(np.abs(pulled)) < zero_tol:
        raise ZeroKernelError("invariance ill-posed on zero kernel")
    refs = np.broadcast_to(ref, pulled.shape)
    C = float(np.sum(pulled * refs) / np.sum(refs * refs))
    return InvarianceResult(C, float(np.max(np.abs(pulled - C * refs))))


@dataclass(frozen=True)
class Obstruction:
    result: IntegralResult
    chart_integral: IntegralResult
    crosscheck: dict

    def as_dict(self) -> dict:
        d = self.result.as_dict()
        d["chart_integral"] = self.chart_integral.value
        d["chart_integral_error"] = self.chart_integral.error_estimate
        d["crosscheck"] = self.crosscheck
        return d


def _reduced(spec: QuadratureSpec, resolution: int | None) -> QuadratureSpec:
    if resolution is None:
        resolution = max(spec.resolution // 4, 8) if spec.method is not Method.MONTE_CARLO else min(spec.resolution, 2048)
    return spec.with_resolution(min(resolution, spec.resolution))


def obstruction_integral(case: CertificationCase, C: float = 1.0) -> Obstruction:
    """``2 pi C int_M k . xi`` (or the loop density directly for non-action loops), cross-checked."""
    xi = case.action.generator
    contracted = kernel_contract(case.kernel, xi)
    chart = integrate_top_form(case.manifold, contracted, case.quadrature)
    q_small = _reduced(case.quadrature, case.crosscheck_resolution)
    if case.loop is not None:
        loop_fn = case.loop.at(1.0)

        def loop_density(p):
            return family_pullback_density(loop_fn, case.kernel, p, case.loop_nodes, case.loop.domain)

        main = integrate_density(case.manifold, loop_density, case.quadrature)
        other = integrate_top_form(case.manifold, contracted, q_small)
        ref_small = integrate_density(case.manifold, loop_density, q_small)
        other_value = TWO_PI * C * other.value
        other_err = TWO_PI * abs(C) * other.error_estimate
        label = "2 pi C int k.xi"
    else:
        main = IntegralResult(TWO_PI * C * chart.value, TWO_PI * abs(C) * chart.error_estimate, chart.nodes_used)
        ref_small_chart = integrate_top_form(case.manifold, contracted, q_small)
        ref_small = IntegralResult(TWO_PI * C * ref_small_chart.value, TWO_PI * abs(C) * ref_small_chart.error_estimate,
                                   ref_small_chart.nodes_used)
        dens = integrate_density(
            case.manifold, lambda p: action_pullback_density(case.action, case.kernel, p, case.loop_nodes), q_small)
        other_value, other_err = dens.value, dens.error_estimate
        label = "int action pullback density"
    diff = abs(ref_small.value - other_value)
    combined = ref_small.error_estimate + other_err
    cross = {
        "method": label,
        "resolution": q_small.resolution,
        "difference": diff,
        "combined_error": combined,
        "agrees": bool(diff <= combined + 1e-9 * max(1.0, abs(ref_small.value))),
    }
    return Obstruction(main, chart, cross)


@dataclass(frozen=True)
class CertificationReport:
    case_id: str
    topic: str
    membership: MembershipStats
    invariance: InvarianceResult
    obstruction: Obstruction
    verdict: str
    expected: str
    tolerances: Tolerances
    extra: dict = field(default_factory=dict)

    @property
    def failed_conditions(self) -> tuple[str, ...]:
        if self.verdict.startswith("FAILED("):
            return tuple(self.verdict[7:-1].split(","))
        return ()

    @property
    def meets_expectation(self) -> bool:
        return expectation_met(self.expected, self.verdict)

    def as_dict(self) -> dict:
        d = {
            "case": self.case_id,
            "topic": self.topic,
            "membership": self.membership.as_dict(),
            "invariance": self.invariance.as_dict(),
            "obstruction": self.obstruction.as_dict(),
            "verdict": self.verdict,
            "expected": self.expected,
            "meets_expectation": self.meets_expectation,
            "tolerances": {"membership": self.tolerances.membership, "invariance": self.tolerances.invariance},
        }
        d.update(self.extra)
        return d


def decide(membership_residual: float, invariance: InvarianceResult, obstruction: IntegralResult,
           tol: Tolerances) -> str:
    failed = []
    if not membership_residual < tol.membership:
        failed.append("i")
    if invariance.zero_kernel:
        failed.append("iii")
    elif not invariance.max_residual < tol.invariance or invariance.C == 0.0:
        failed.append("ii")
    if failed:
        return "FAILED(" + ",".join(failed) + ")"
    if abs(obstruction.value) > SIGMA_RULE * obstruction.error_estimate:
        return CERTIFIED
    return INCONCLUSIVE


def certify(case: CertificationCase) -> CertificationReport:
    membership = check_membership(case)
    inv_pts = case.sample(salt=1)
    try:
        invariance = check_invariance(case.kernel, case.loop_map, inv_pts, case.thetas())
    except ZeroKernelError:
        pulled = max(float(np.max(np.abs(kernel_pullback_values(case.loop_map(t), case.kernel, inv_pts))))
                     for t in case.thetas())
        invariance = InvarianceResult(1.0, pulled, zero_kernel=True)
    obstruction = obstruction_integral(case, invariance.C)
    verdict = decide(membership.max_residual, invariance, obstruction.result, case.tolerances)
    extra = {}
    if case.loop is not None:
        hc = homotopy_invariance_check(case.kernel, case.loop, case.manifold, _reduced(case.quadrature, None),
                                       case.loop_nodes, case.sample(16, salt=2), case.tolerances.invariance)
        extra["homotopy"] = {
            "start": hc.start.as_dict(),
            "end": hc.end.as_dict(),
            "difference": hc.difference,
            "invariance_residual": hc.invariance_residual,
            "warnings": list(hc.warnings),
        }
    return CertificationReport(case.case_id, case.topic, membership, invariance, obstruction, verdict,
                               case.expected, case.tolerances, extra)
