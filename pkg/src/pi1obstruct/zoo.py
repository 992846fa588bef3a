"""Built-in certification cases: flat tori and round or squashed odd spheres.

Sphere charts use toric (Hopf) coordinates.  On S^3 the chart is
(psi, t, phi) with z1 = cos t e^{i psi}, z2 = sin t e^{i phi}; on S^5 it is
(phi1, t1, phi2, t2, phi3) with

    z1 = cos t1 e^{i phi1},  z2 = sin t1 cos t2 e^{i phi2},  z3 = sin t1 sin t2 e^{i phi3},

angles in (0, 2 pi), polar angles in (0, pi / 2).  The Hopf action adds
theta to every angle; the contact form is sum_k |z_k|^2 d phi_k so that
eta(xi) = 1 on the Hopf generator xi.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ad
from .certify import (
    CERTIFIED,
    CertificationCase,
    MembershipKind,
    MembershipPredicate,
    Tolerances,
)
from .curvature import CurvaturePack, MetricField, _kulkarni_delta, deformed_metric
from .geometry import (
    ChartDomain,
    ManifoldSpec,
    PForm,
    VectorField,
    as_points,
    coordinate_form,
    exterior_derivative,
    one_form,
)
from .kernels import (
    KernelKind,
    conformal_kernel,
    contact_kernel,
    product_kernel,
    psh_kernel,
    wcs_kernel,
)
from .loopspace import CircleAction, reparametrization_homotopy
from .quadrature import Method, QuadratureSpec

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

GRID_NODES = 64
MC_SAMPLES = 1_000_000
CURVATURE_MC_SAMPLES = 200_000
DEFAULT_SEED = 0
MC_TOLERANCE = 1e-4


# --------------------------------------------------------------------------- tori


def torus(dim: int) -> ManifoldSpec:
    return ManifoldSpec(f"T{dim}", ChartDomain(((0.0, TWO_PI),) * dim, (True,) * dim))


def rotation_action(dim: int, axis: int = 0, speed: int = 1) -> CircleAction:
    """Rotation of the ``axis`` circle factor, ``speed`` turns per period."""
    dom = torus(dim).domain

    def fn(t, x):
        out = list(x)
        out[axis] = x[axis] + speed * t
        return out

    name = f"rot{axis + 1}" if speed == 1 else f"rot{axis + 1}x{speed}"
    return CircleAction(dim, fn, dom, name, float(speed))


def torus3_eta(broken: float = 0.0) -> PForm:
    """cos(u2) du1 + sin(2 u2) du3, optionally plus ``broken * sin(u1)`` in the du1 slot."""

    def comps(x):
        e1 = ad.cos(x[1])
        if broken:
            e1 = e1 + broken * ad.sin(x[0])
        return [e1, 0.0, ad.sin(2.0 * x[1])]

    return one_form(3, comps, "eta_T3" if not broken else "eta_T3_broken")


# --------------------------------------------------------------------------- spheres


def sphere_domain(m: int) -> ChartDomain:
    if m == 3:
        return ChartDomain(((0.0, TWO_PI), (0.0, HALF_PI), (0.0, TWO_PI)), (True, False, True))
    if m == 5:
        return ChartDomain(((0.0, TWO_PI), (0.0, HALF_PI), (0.0, TWO_PI), (0.0, HALF_PI), (0.0, TWO_PI)),
                           (True, False, True, False, True))
    raise ValueError(f"sphere dimension must be 3 or 5, got {m}")


def angle_axes(m: int) -> tuple[int, ...]:
    return (0, 2) if m == 3 else (0, 2, 4)


def sphere_moduli(m: int, x) -> list:
    """|z_k| in chart coordinates."""
    if m == 3:
        return [ad.cos(x[1]), ad.sin(x[1])]
    s1 = ad.sin(x[1])
    return [ad.cos(x[1]), s1 * ad.cos(x[3]), s1 * ad.sin(x[3])]


def sphere_embedding(m: int) -> Callable:
    """Chart -> R^{m+1} as (Re z1, Im z1, Re z2, Im z2, ...)."""

    def embed(x):
        out = []
        for r, ax in zip(sphere_moduli(m, x), angle_axes(m)):
            out += [r * ad.cos(x[ax]), r * ad.sin(x[ax])]
        return out

    return embed


def sphere(m: int) -> ManifoldSpec:
    return ManifoldSpec(f"S{m}", sphere_domain(m), 1, sphere_embedding(m))


def round_metric(m: int) -> MetricField:
    """Induced metric of the unit sphere in the toric chart (diagonal)."""

    def comps(x):
        g = [[0.0] * m for _ in range(m)]
        r = sphere_moduli(m, x)
        for rk, ax in zip(r, angle_axes(m)):
            g[ax][ax] = rk * rk
        g[1][1] = 1.0
        if m == 5:
            s1 = ad.sin(x[1])
            g[3][3] = s1 * s1
        return g

    return MetricField(m, comps, f"round S{m}")


def hopf_contact_form(m: int) -> PForm:
    def comps(x):
        out = [0.0] * m
        for rk, ax in zip(sphere_moduli(m, x), angle_axes(m)):
            out[ax] = rk * rk
        return out

    return one_form(m, comps, "eta")


def hopf_action(m: int) -> CircleAction:
    axes = angle_axes(m)

    def fn(t, x):
        return [x[i] + t if i in axes else x[i] for i in range(m)]

    return CircleAction(m, fn, sphere_domain(m), "hopf")


def hopf_generator(m: int) -> VectorField:
    axes = angle_axes(m)
    return VectorField(m, lambda x: [1.0 if i in axes else 0.0 for i in range(m)], "xi")


def _ambient_complex_structure(size: int) -> np.ndarray:
    J = np.zeros((size, size))
    for k in range(0, size, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    return J


@dataclass(frozen=True)
class SasakianStructure:
    """Standard structure on a unit odd sphere: phi is the ambient J projected to the sphere."""

    dim: int
    metric: MetricField
    eta: PForm
    xi: VectorField
    embedding: Callable

    def embedding_jacobian(self, pts) -> tuple[np.ndarray, np.ndarray]:
        pts = as_points(pts, self.dim)
        vals, rows = ad.jacobian(self.embedding, [pts[:, i] for i in range(self.dim)])
        p = np.stack([np.broadcast_to(v, pts.shape[:1]) for v in vals], axis=-1)
        dE = np.stack([np.stack([np.broadcast_to(r[i], pts.shape[:1]) for i in range(self.dim)], axis=-1)
                       for r in rows], axis=-2)
        return p, dE

    def phi(self, pts) -> np.ndarray:
        """``(B, n, n)``: column c is phi applied to the c-th coordinate vector."""
        p, dE = self.embedding_jacobian(pts)
        Jamb = _ambient_complex_structure(p.shape[-1])
        w = Jamb @ dE
        w = w - p[:, :, None] * np.einsum("ba,bac->bc", p, w)[:, None, :]
        # dE has full column rank, so the normal equations give the chart components
        gram = np.swapaxes(dE, -1, -2) @ dE
        return np.linalg.solve(gram, np.swapaxes(dE, -1, -2) @ w)

    def check(self, pts) -> dict:
        """Residuals of eta(xi) = 1, d eta(xi, .) = 0 and phi^2 = -Id + eta (x) xi."""
        pts = as_points(pts, self.dim)
        e = self.eta(pts)
        x = self.xi(pts)
        de = exterior_derivative(self.eta).full(pts)
        ph = self.phi(pts)
        target = -np.eye(self.dim) + np.einsum("ba,bc->bac", x, e)
        return {
            "eta_xi": float(np.max(np.abs(np.einsum("ba,ba->b", e, x) - 1.0))),
            "deta_xi": float(np.max(np.abs(np.einsum("ba,bac->bc", x, de)))),
            "phi_squared": float(np.max(np.abs(ph @ ph - target))),
        }


def sasakian_structure(m: int) -> SasakianStructure:
    return SasakianStructure(m, round_metric(m), hopf_contact_form(m), hopf_generator(m), sphere_embedding(m))


def weyl_structure_basis(sasaki: SasakianStructure, pts) -> np.ndarray:
    """Four tensors ``[..., k, j, i, h]`` spanning the squashed-sphere Weyl ansatz.

    phi_ki phi_j^h - phi_k^h phi_ji + 2 phi_kj phi_i^h,
    g_ki delta_j^h - g_ji delta_k^h,
    eta_k eta_i delta_j^h - eta_j eta_i delta_k^h,
    g_ki eta_j xi^h - g_ji eta_k xi^h,
    all with the round metric ``g``.  Returns shape ``(B, 4, n, n, n, n)``.
    """
    pts = as_points(pts, sasaki.dim)
    n = sasaki.dim
    g = sasaki.metric(pts)
    P = sasaki.phi(pts)                      # P[a, c] = phi^a_c
    low = np.einsum("bam,bmc->bac", g, P)    # phi_{ac} = g_{am} phi^m_c
    up = np.swapaxes(P, -1, -2)              # up[j, h] = phi_j^h = phi^h_j
    e = sasaki.eta(pts)
    x = sasaki.xi(pts)
    b1 = (np.einsum("bki,bjh->bkjih", low, up) - np.einsum("bkh,bji->bkjih", up, low)
          + 2.0 * np.einsum("bkj,bih->bkjih", low, up))
    b2 = _kulkarni_delta(g, n)
    b3 = _kulkarni_delta(np.einsum("bk,bi->bki", e, e), n)
    t = np.einsum("bki,bj,bh->bkjih", g, e, x)
    b4 = t - np.swapaxes(t, -4, -3)
    return np.stack([b1, b2, b3, b4], axis=1)


def weyl_structure_fit(pack: CurvaturePack, sasaki: SasakianStructure, pts) -> tuple[np.ndarray, np.ndarray]:
    """Per-point least-squares coefficients on :func:`weyl_structure_basis` and relative residual."""
    basis = weyl_structure_basis(sasaki, pts).reshape(len(pack.weyl), 4, -1)
    target = pack.weyl.reshape(len(pack.weyl), -1)
    coeffs = np.stack([np.linalg.lstsq(basis[b].T, target[b], rcond=None)[0] for b in range(len(target))])
    resid = np.linalg.norm(np.einsum("ba,bac->bc", coeffs, basis) - target, axis=-1)
    return coeffs, resid / np.maximum(np.linalg.norm(target, axis=-1), 1e-300)


def ricci_structure_fit(pack: CurvaturePack, sasaki: SasakianStructure, pts) -> tuple[np.ndarray, np.ndarray]:
    """Per-point least-squares ``Ric = c1 g + c2 eta (x) eta`` (round ``g``); coefficients ``(B, 2)`` and relative residual."""
    pts = as_points(pts, sasaki.dim)
    g = sasaki.metric(pts)
    e = sasaki.eta(pts)
    basis = np.stack([g, np.einsum("bi,bj->bij", e, e)], axis=1).reshape(len(pts), 2, -1)
    target = pack.ricci.reshape(len(pts), -1)
    coeffs = np.stack([np.linalg.lstsq(basis[b].T, target[b], rcond=None)[0] for b in range(len(pts))])
    resid = np.linalg.norm(np.einsum("ba,bac->bc", coeffs, basis) - target, axis=-1)
    return coeffs, resid / np.maximum(np.linalg.norm(target, axis=-1), 1e-300)


# --------------------------------------------------------------------------- case builders


def _grid(nodes: int | None) -> QuadratureSpec:
    return QuadratureSpec(Method.PERIODIC_TRAPEZOID, nodes_per_axis=nodes or GRID_NODES)


def _mc(samples: int | None, seed: int | None, default: int = MC_SAMPLES) -> QuadratureSpec:
    return QuadratureSpec(Method.MONTE_CARLO, sample_count=samples or default,
                          seed=DEFAULT_SEED if seed is None else seed)


def torus2_case(eta1: Callable | None = None, eta2: Callable | None = None, case_id: str = "t2",
                nodes: int | None = None, **_) -> CertificationCase:
    """Product kernel eta (x) du1^du2 on T^2 with eta = eta1(u2) du1 + eta2(u2) du2."""
    eta1 = eta1 or (lambda u: 2.0 + ad.cos(u))
    eta2 = eta2 or (lambda u: 0.5 * ad.sin(u))
    probe = np.linspace(0.0, TWO_PI, 257)
    if np.any(~(np.asarray(eta1(probe), dtype=float) > 0)):
        raise ValueError("eta1 must be positive on the circle")
    eta = one_form(2, lambda x: [eta1(x[1]), eta2(x[1])], "eta_T2")
    mu = coordinate_form(2, (0, 1))
    return CertificationCase(
        case_id, torus(2), rotation_action(2), product_kernel(eta, mu), KernelKind.PRODUCT,
        MembershipPredicate(MembershipKind.FORM_PAIR, eta=eta, mu=mu), _grid(nodes),
        topic="torus / form pair", description="rotation of T^2 preserving eta and du1^du2",
    )


def torus3_case(variant: str = "base", nodes: int | None = None, **_) -> CertificationCase:
    """Contact-type kernel eta (x) eta^d eta on T^3 under rotation in u1."""
    broken = 0.3 if variant == "broken" else 0.0
    eta = torus3_eta(broken)
    kernel = contact_kernel(eta, 1)
    member = MembershipPredicate(MembershipKind.STRICT_CONTACT, eta=eta)
    kw = dict(topic="torus / strict contact")
    if variant == "base":
        return CertificationCase("t3", torus(3), rotation_action(3), kernel, KernelKind.CONTACT, member,
                                 _grid(nodes), description="rotation in u1", **kw)
    if variant == "broken":
        return CertificationCase("t3-broken", torus(3), rotation_action(3), kernel, KernelKind.CONTACT, member,
                                 _grid(nodes), expected="FAILED(ii)",
                                 description="negative control: eta depends on u1", **kw)
    if variant == "rescaled":
        return CertificationCase("t3-rescaled-C", torus(3), rotation_action(3, speed=2), kernel,
                                 KernelKind.CONTACT, member, _grid(nodes),
                                 description="flow rescaled to period N = 4 pi", **kw)
    if variant == "reparam":
        rot = rotation_action(3)
        return CertificationCase("t3-reparam-homotopy", torus(3), rot, kernel, KernelKind.CONTACT, member,
                                 _grid(nodes or 32), loop=reparametrization_homotopy(rot, 0.3),
                                 description="loop theta -> rot(theta + 0.3 sin theta)", **kw)
    raise ValueError(f"unknown T^3 variant {variant!r}")


def sphere_case(m: int, rho: float, kernel: KernelKind | str, samples: int | None = None,
                seed: int | None = None, case_id: str | None = None, **_) -> CertificationCase:
    kind = KernelKind(kernel)
    if kind in (KernelKind.WCS, KernelKind.CONFORMAL) and m != 5:
        raise ValueError(f"{kind.value} kernel needs S^5, got S^{m}")
    if kind is KernelKind.PRODUCT:
        raise ValueError("product kernels are a torus construction")
    sasaki = sasakian_structure(m)
    eta = sasaki.eta
    g = deformed_metric(sasaki.metric, eta, rho)
    action = hopf_action(m)
    rho_tag = f"{rho:g}"
    tol = Tolerances(MC_TOLERANCE, MC_TOLERANCE)
    extra = {}
    if kind is KernelKind.CONTACT:
        kern = contact_kernel(eta, (m - 1) // 2)
        member = MembershipPredicate(MembershipKind.STRICT_CONTACT, eta=eta)
        topic, default = "sphere / strict contact", MC_SAMPLES
        cid = f"s{m}-contact"
    elif kind is KernelKind.PSH:
        kern = psh_kernel(eta, g)
        member = MembershipPredicate(MembershipKind.PSH, eta=eta, phi=sasaki.phi)
        topic, default = "sphere / pseudo-Hermitian", MC_SAMPLES
        cid = f"s{m}-psh"
    else:
        kern = wcs_kernel(g) if kind is KernelKind.WCS else conformal_kernel(g)
        pred = MembershipKind.ISOMETRY if kind is KernelKind.WCS else MembershipKind.CONFORMAL
        member = MembershipPredicate(pred, metric=g)
        topic = "sphere / isometry" if kind is KernelKind.WCS else "sphere / conformal"
        default = CURVATURE_MC_SAMPLES
        cid = f"s{m}-{'wcs' if kind is KernelKind.WCS else 'conf'}-rho{rho_tag}"
        extra = dict(sample_points=24, sample_thetas=8, crosscheck_resolution=256)
        if rho == 0:
            extra["expected"] = "NOT_CERTIFIED"
    if rho and kind in (KernelKind.CONTACT, KernelKind.PSH):
        cid += f"-rho{rho_tag}"
    return CertificationCase(
        case_id or cid, sphere(m), action, kern, kind, member, _mc(samples, seed, default), tol,
        topic=topic, description=f"Hopf rotation on S^{m}, metric round + {rho_tag}^2 eta.eta", **extra,
    )


# --------------------------------------------------------------------------- registry


@dataclass(frozen=True)
class CaseInfo:
    case_id: str
    manifold: str
    kernel: str
    action: str
    topic: str
    expected: str
    build: Callable[..., CertificationCase]


def _sphere_entry(cid: str, m: int, rho: float, kind: KernelKind, action: str = "Hopf rotation") -> CaseInfo:
    metric = "round" if rho == 0 else f"squashed rho={rho:g}"
    expected = "NOT_CERTIFIED" if rho == 0 and kind in (KernelKind.WCS, KernelKind.CONFORMAL) else CERTIFIED
    topic = {KernelKind.CONTACT: "sphere / strict contact", KernelKind.PSH: "sphere / pseudo-Hermitian",
             KernelKind.WCS: "sphere / isometry", KernelKind.CONFORMAL: "sphere / conformal"}[kind]
    return CaseInfo(cid, f"S{m} ({metric})", kind.value, action, topic, expected,
                    lambda **kw: sphere_case(m, rho, kind, **kw))


CASES: dict[str, CaseInfo] = {
    info.case_id: info
    for info in [
        CaseInfo("t2", "T2", "product", "rotation u1", "torus / form pair", CERTIFIED,
                 lambda **kw: torus2_case(**kw)),
        CaseInfo("t3", "T3", "contact", "rotation u1", "torus / strict contact", CERTIFIED,
                 lambda **kw: torus3_case("base", **kw)),
        CaseInfo("t3-rescaled-C", "T3", "contact", "rotation u1, period 4 pi", "torus / strict contact",
                 CERTIFIED, lambda **kw: torus3_case("rescaled", **kw)),
        CaseInfo("t3-reparam-homotopy", "T3", "contact", "reparametrized rotation loop",
                 "torus / strict contact", CERTIFIED, lambda **kw: torus3_case("reparam", **kw)),
        CaseInfo("t3-broken", "T3", "contact", "rotation u1", "torus / strict contact", "FAILED(ii)",
                 lambda **kw: torus3_case("broken", **kw)),
        _sphere_entry("s3-contact", 3, 0.0, KernelKind.CONTACT),
        _sphere_entry("s3-psh", 3, 0.0, KernelKind.PSH),
        _sphere_entry("s5-contact", 5, 0.0, KernelKind.CONTACT),
        *[_sphere_entry(f"s5-wcs-rho{r:g}", 5, r, KernelKind.WCS) for r in (0.0, 0.5, 1.0)],
        *[_sphere_entry(f"s5-conf-rho{r:g}", 5, r, KernelKind.CONFORMAL) for r in (0.0, 0.5, 1.0)],
    ]
}

_RHO_ID = re.compile(r"^s5-(wcs|conf)-rho([0-9]+(?:\.[0-9]+)?)$")


def case_info(case_id: str) -> CaseInfo:
    """Registered case, or an ``s5-{wcs,conf}-rho<R>`` case for any R >= 0."""
    if case_id in CASES:
        return CASES[case_id]
    m = _RHO_ID.match(case_id)
    if m:
        kind = KernelKind.WCS if m.group(1) == "wcs" else KernelKind.CONFORMAL
        rho = float(m.group(2))
        return _sphere_entry(case_id, 5, rho, kind)
    raise KeyError(f"unknown case id {case_id!r}")


def build_case(case_id: str, nodes: int | None = None, samples: int | None = None, seed: int | None = None,
               tolerances: Tolerances | None = None) -> CertificationCase:
    info = case_info(case_id)
    case = info.build(nodes=nodes, samples=samples, seed=seed)
    case.case_id = case_id
    case.expected = info.expected
    if tolerances is not None:
        case.tolerances = tolerances
    return case
