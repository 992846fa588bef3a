"""Self-check suites run by ``pi1-obstruct verify``.

Each check returns ``Check(name, passed, detail)``; suites are plain lists
of zero-argument callables so they can be reused from the test-suite.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ad
from .curvature import conformal_rescale, curvature_at, deformed_metric, flat_metric, metric_jets, weyl_traces
from .geometry import (
    KernelField,
    coordinate_form,
    exterior_derivative,
    scalar_field,
    wedge,
    wedge_power,
)
from .kernels import conformal_kernel, contact_kernel, kernel_contract, ladder_top, ladder_top_bruteforce, wcs_kernel
from .loopspace import (
    DiscreteLoop,
    LoopTangentFrame,
    action_pullback_density,
    eval_loop_form,
    homotopy_invariance_check,
    iterate_action,
    kernel_pullback_values,
    loop_form_exterior_derivative,
    reparametrization_homotopy,
)
from .quadrature import THREADS_ENV, Method, QuadratureSpec, convergence_sweep, integrate_density, integrate_top_form
from . import zoo

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _rng(salt: int) -> np.random.Generator:
    return np.random.default_rng(20240 + salt)


def _sphere_points(m: int, count: int, salt: int = 0) -> np.ndarray:
    return zoo.sphere_domain(m).sample(_rng(salt), count, margin=0.02)


def _squashed(rho: float = 1.0):
    s = zoo.sasakian_structure(5)
    return s, deformed_metric(s.metric, s.eta, rho)


def _bound(name: str, value: float, tol: float) -> Check:
    return Check(name, bool(value < tol), f"{value:.3e} < {tol:g}")


# --------------------------------------------------------------------------- curvature


def constant_curvature_residual(m: int, count: int = 100) -> float:
    pts = _sphere_points(m, count, salt=m)
    pack = curvature_at(zoo.round_metric(m), pts)
    g = pack.g
    expected = np.einsum("bki,jh->bkjih", g, np.eye(m))
    expected = expected - np.swapaxes(expected, 1, 2)
    return float(np.max(np.abs(pack.riemann - expected)))


def _check_s3_identity() -> Check:
    return _bound("round-S3 matches constant-curvature identity", constant_curvature_residual(3), 1e-6)


def _check_s5_identity() -> Check:
    return _bound("round-S5 matches constant-curvature identity", constant_curvature_residual(5), 1e-6)


def _check_scalar() -> Check:
    pack = curvature_at(zoo.round_metric(5), _sphere_points(5, 100, 1))
    return _bound("scalar curvature of unit S5 is 20", float(np.max(np.abs(pack.scalar - 20.0))), 1e-6)


def _check_bianchi() -> Check:
    _, g = _squashed(1.0)
    pack = curvature_at(g, _sphere_points(5, 20, 2))
    R = pack.riemann
    bianchi = R + np.einsum("bjikh->bkjih", R) + np.einsum("bikjh->bkjih", R)
    low = pack.riemann_lowered()
    pair = low - np.einsum("bihkj->bkjih", low)
    worst = max(float(np.max(np.abs(bianchi))), float(np.max(np.abs(pair))))
    return _bound("first Bianchi and pair symmetry on squashed S5", worst, 1e-6)


def _check_weyl_round() -> Check:
    pack = curvature_at(zoo.round_metric(5), _sphere_points(5, 50, 3))
    return _bound("Weyl vanishes on round S5", float(np.max(np.abs(pack.weyl))), 1e-6)


def _check_weyl_traces() -> Check:
    _, g = _squashed(1.0)
    pack = curvature_at(g, _sphere_points(5, 50, 4))
    worst = max(float(np.max(np.abs(t))) for t in weyl_traces(pack))
    return _bound("Weyl trace-free on squashed S5", worst, 1e-6)


def weyl_conformal_residual(count: int = 30) -> float:
    _, g = _squashed(1.0)
    pts = _sphere_points(5, count, 5)
    f = scalar_field(5, lambda x: ad.exp(0.3 * ad.sin(x[0]) + 0.2 * ad.cos(x[1] + x[3]) + 0.1 * ad.sin(x[2] - x[4])))
    a = curvature_at(g, pts).weyl
    b = curvature_at(conformal_rescale(g, f, pts), pts).weyl
    return float(np.max(np.abs(a - b)))


def _check_weyl_conformal() -> Check:
    return _bound("Weyl conformally invariant", weyl_conformal_residual(), 1e-5)


def _check_ricci_fit() -> Check:
    s, g = _squashed(1.0)
    pts = _sphere_points(5, 50, 6)
    coeffs, resid = zoo.ricci_structure_fit(curvature_at(g, pts), s, pts)
    c = coeffs.mean(axis=0)
    ok = resid.max() < 1e-5 and np.all(coeffs.std(axis=0) <= 1e-3 * np.abs(c))
    return Check("Ricci of squashed S5 fits g and eta.eta", bool(ok),
                 f"c1={c[0]:.6g} c2={c[1]:.6g} residual {resid.max():.2e}")


def _check_weyl_fit() -> Check:
    s, g = _squashed(1.0)
    pts = _sphere_points(5, 50, 7)
    coeffs, resid = zoo.weyl_structure_fit(curvature_at(g, pts), s, pts)
    c = coeffs.mean(axis=0)
    cv = float(np.max(coeffs.std(axis=0) / np.maximum(np.abs(c), 1e-300)))
    ok = resid.max() < 1e-4 and cv < 1e-3
    return Check("Weyl of squashed S5 fits the Sasakian ansatz", bool(ok),
                 "coefficients " + " ".join(f"{v:.6g}" for v in c) + f", residual {resid.max():.2e}, cv {cv:.1e}")


def jets_fd_residual(h: float = 1e-4) -> float:
    _, g = _squashed(1.0)
    x = _sphere_points(5, 1, 8)[0]
    jet = metric_jets(g, x[None])
    worst = 0.0
    for k in range(5):
        e = np.zeros(5)
        e[k] = h
        fd = (g(x + e) - 2.0 * g(x) + g(x - e)) / h**2
        worst = max(worst, float(np.max(np.abs(fd - jet.ddg[0, :, :, k, k]))))
        fd1 = (g(x + e) - g(x - e)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd1 - jet.dg[0, :, :, k]))))
    return worst


def _check_jets() -> Check:
    return _bound("metric jets match central differences", jets_fd_residual(), 1e-5)


# --------------------------------------------------------------------------- kernels


def _check_ladder_oracle() -> Check:
    _, g = _squashed(1.0)
    pts = _sphere_points(5, 20, 9)
    pack = curvature_at(g, pts)
    worst = float(np.max(np.abs(ladder_top(pack.riemann) - ladder_top_bruteforce(pack.riemann))))
    return _bound("ladder contraction equals 120-permutation sum", worst, 1e-9)


def _check_contact_t3() -> Check:
    eta = zoo.torus3_eta()
    k = contact_kernel(eta, 1)
    pts = _rng(10).random((100, 3)) * TWO_PI
    u = pts[:, 1]
    closed = np.cos(u) * (2 * np.cos(u) * np.cos(2 * u) + np.sin(2 * u) * np.sin(u))
    return _bound("contact kernel on T3 matches closed form", float(np.max(np.abs(k(pts)[:, 0] - closed))), 1e-12)


def _check_antisymmetry() -> Check:
    k = contact_kernel(zoo.hopf_contact_form(5), 2)
    pts = _sphere_points(5, 5, 11)
    full = k.full(pts)
    worst = 0.0
    for perm, sign in (((1, 0, 2, 3, 4), -1), ((4, 1, 2, 3, 0), -1), ((1, 2, 0, 3, 4), 1)):
        axes = (0, 1) + tuple(2 + p for p in perm)
        worst = max(worst, float(np.max(np.abs(np.transpose(full, axes) - sign * full))))
    return Check("kernel storage antisymmetric", worst == 0.0, f"max deviation {worst:.1e}")


def _invariance(kernel: KernelField, count: int = 100) -> float:
    a = zoo.hopf_action(5)
    pts = _sphere_points(5, count, 12)
    ref = kernel(pts)
    return max(float(np.max(np.abs(kernel_pullback_values(a.point_map(t), kernel, pts) - ref)))
               for t in (0.7, 2.9))


def _check_wcs_invariance() -> Check:
    return _bound("Hopf pullback invariance of WCS kernel", _invariance(wcs_kernel(_squashed(1.0)[1])), 1e-6)


def _check_conf_invariance() -> Check:
    return _bound("Hopf pullback invariance of conformal kernel", _invariance(conformal_kernel(_squashed(1.0)[1])), 1e-6)


def _check_contact_invariance() -> Check:
    s = zoo.sasakian_structure(5)
    return _bound("contact kernel invariant under strict contactomorphisms",
                  _invariance(contact_kernel(s.eta, 2)), 1e-8)


def contraction_ratio(kernel: KernelField, count: int = 200, salt: int = 13) -> np.ndarray:
    s = zoo.sasakian_structure(5)
    pts = _sphere_points(5, count, salt)
    c = kernel_contract(kernel, s.xi)(pts)[:, 0]
    w = wedge(s.eta, wedge_power(exterior_derivative(s.eta), 2))(pts)[:, 0]
    return c / w


def _check_wcs_ratio() -> Check:
    r = contraction_ratio(wcs_kernel(_squashed(1.0)[1]))
    cv = float(np.std(r) / abs(np.mean(r)))
    return Check("WCS contraction proportional to eta^(d eta)^2", bool(cv < 1e-3),
                 f"ratio {np.mean(r):.6g}, cv {cv:.1e}")


def _check_flat_kernel() -> Check:
    g = flat_metric(5)
    pts = _rng(14).random((4, 5))
    return _bound("flat metric gives zero WCS kernel", float(np.max(np.abs(wcs_kernel(g)(pts)))), 1e-12)


# --------------------------------------------------------------------------- loopspace


def _t3_loop(point=(0.0, 0.7, 0.0), N: int = 64) -> DiscreteLoop:
    p = np.asarray(point, dtype=float)
    return DiscreteLoop.from_curve(lambda t: [p[0] + t, p[1] + 0.0 * t, p[2] + 0.0 * t], 3, N, zoo.torus(3).domain)


def _check_loop_antisymmetry() -> Check:
    k = contact_kernel(zoo.torus3_eta(), 1)
    loop = _t3_loop()
    X = _rng(15).normal(size=(3, loop.nodes, 3))
    a = eval_loop_form(k, loop, LoopTangentFrame(X))
    b = eval_loop_form(k, loop, LoopTangentFrame(X[[1, 0, 2]]))
    same = eval_loop_form(k, loop, LoopTangentFrame(X[[0, 0, 2]]))
    worst = max(abs(a + b), abs(same))
    return _bound("loop form antisymmetric in the frame", worst, 1e-12)


def _check_reeb_orbit() -> Check:
    eta = zoo.torus3_eta()
    k = contact_kernel(eta, 1)
    loop = _t3_loop()
    val = eval_loop_form(k, loop, LoopTangentFrame.coordinate(3, loop.nodes))
    ref = TWO_PI * kernel_contract(k, zoo.rotation_action(3).generator)(np.array([[0.0, 0.7, 0.0]]))[0, 0]
    return _bound("Reeb orbit on T3 reduces to 2 pi k.xi", abs(val - ref), 1e-8)


def reduction_residuals(count: int = 100) -> dict[str, float]:
    out = {}
    for cid in ("t2", "t3", "t3-rescaled-C", "s3-contact", "s3-psh", "s5-contact", "s5-wcs-rho1", "s5-conf-rho1"):
        case = zoo.build_case(cid)
        pts = case.sample(count, salt=3)
        dens = action_pullback_density(case.action, case.kernel, pts)
        ref = TWO_PI * kernel_contract(case.kernel, case.action.generator)(pts)[:, 0]
        out[cid] = float(np.max(np.abs(dens - ref)) / max(1.0, float(np.max(np.abs(ref)))))
    return out


def _check_reduction() -> Check:
    res = reduction_residuals()
    worst = max(res.values())
    return Check("action density equals 2 pi k.xi on every invariant case", bool(worst < 1e-7),
                 ", ".join(f"{k} {v:.1e}" for k, v in res.items()))


def iterate_ratios(ns=(2, 3, 5), nodes: int = 32) -> dict[int, float]:
    from .certify import obstruction_integral

    base = zoo.build_case("t3", nodes=nodes)
    ref = obstruction_integral(base).result.value
    out = {}
    for n in ns:
        case = zoo.build_case("t3", nodes=nodes)
        case.action = iterate_action(case.action, n)
        out[n] = obstruction_integral(case).result.value / (n * ref) - 1.0
    return out


def _check_iterates() -> Check:
    r = iterate_ratios()
    worst = max(abs(v) for v in r.values())
    return Check("iterate scaling n=2,3,5 (including n=3)", bool(worst < 1e-8),
                 ", ".join(f"n={n}: {v:.1e}" for n, v in r.items()))


def _check_semigroup() -> Check:
    a = zoo.rotation_action(3)
    pts = _rng(16).random((20, 3)) * TWO_PI
    six = iterate_action(iterate_action(a, 2), 3)
    direct = iterate_action(a, 6)
    worst = max(float(np.max(np.abs(six(t, pts) - direct(t, pts)))) for t in (0.3, 1.1, 4.0))
    return _bound("iterates compose: (a^2)^3 = a^6", worst, 1e-12)


def _check_exterior_derivative() -> Check:
    worst = 0.0
    for cid in ("t3", "s3-contact", "s5-contact"):
        case = zoo.build_case(cid)
        F = reparametrization_homotopy(case.action, 0.3)
        pts = case.sample(10, salt=4)
        for s in (0.0, 0.4, 1.0):
            worst = max(worst, float(np.max(np.abs(loop_form_exterior_derivative(case.kernel, F, s, pts)))))
    return _bound("exterior derivative vanishes along reparametrizations", worst, 1e-7)


def _check_homotopy() -> Check:
    case = zoo.build_case("t3")
    F = reparametrization_homotopy(case.action, 0.3)
    hc = homotopy_invariance_check(case.kernel, F, case.manifold, QuadratureSpec(Method.PERIODIC_TRAPEZOID,
                                                                                 nodes_per_axis=16))
    return _bound("homotopy endpoint integrals agree", hc.difference, 1e-6)


# --------------------------------------------------------------------------- quadrature


def _check_t2_area() -> Check:
    r = integrate_top_form(zoo.torus(2), coordinate_form(2, (0, 1)),
                           QuadratureSpec(Method.PERIODIC_TRAPEZOID, nodes_per_axis=8))
    return _bound("area of T2 is 4 pi^2", abs(r.value - 4 * math.pi**2), 1e-12)


def _check_spectral() -> Check:
    w = kernel_contract(contact_kernel(zoo.torus3_eta(), 1), zoo.rotation_action(3).generator)
    res = convergence_sweep(zoo.torus(3), w, Method.PERIODIC_TRAPEZOID, [16, 32, 64])
    diffs = [abs(b.value - a.value) for a, b in zip(res, res[1:])]
    return Check("T3 trapezoid differences below 1e-10", bool(diffs[-1] < 1e-10),
                 " ".join(f"{d:.1e}" for d in diffs))


def _check_mc_determinism() -> Check:
    w = kernel_contract(contact_kernel(zoo.torus3_eta(), 1), zoo.rotation_action(3).generator)
    spec = QuadratureSpec(Method.MONTE_CARLO, sample_count=50_000, seed=42)
    old = os.environ.get(THREADS_ENV)
    try:
        os.environ[THREADS_ENV] = "1"
        a = integrate_top_form(zoo.torus(3), w, spec)
        os.environ[THREADS_ENV] = "4"
        b = integrate_top_form(zoo.torus(3), w, spec)
    finally:
        if old is None:
            os.environ.pop(THREADS_ENV, None)
        else:
            os.environ[THREADS_ENV] = old
    return Check("MC determinism across thread counts", a == b, f"{a.value!r} vs {b.value!r}")


def calibration_hits(count: int = 20, samples: int = 20_000) -> int:
    """Smooth T3 integrands with known integrals; count |value - truth| < 4 error."""
    rng = _rng(17)
    T3 = zoo.torus(3)
    hits = 0
    for i in range(count):
        a, b = rng.normal(size=2)
        k1, k2, k3 = rng.integers(1, 4, size=3)
        c = 1.0 + rng.random()

        def dens(p, a=a, b=b, k1=k1, k2=k2, k3=k3, c=c):
            return c + a * np.cos(k1 * p[:, 0]) * np.sin(k2 * p[:, 1]) ** 2 + b * np.cos(k3 * p[:, 2])

        truth = c * TWO_PI**3  # the oscillating terms integrate to zero
        r = integrate_density(T3, dens, QuadratureSpec(Method.MONTE_CARLO, sample_count=samples, seed=1000 + i))
        hits += abs(r.value - truth) < 4.0 * r.error_estimate
    return hits


def _check_calibration() -> Check:
    hits = calibration_hits()
    return Check("MC error calibration on 20 integrands", hits >= 19, f"{hits}/20 within 4 sigma")


def _check_orientation() -> Check:
    w = kernel_contract(contact_kernel(zoo.torus3_eta(), 1), zoo.rotation_action(3).generator)
    spec = QuadratureSpec(Method.PERIODIC_TRAPEZOID, nodes_per_axis=16)
    a = integrate_top_form(zoo.torus(3), w, spec)
    b = integrate_top_form(zoo.torus(3).reversed(), w, spec)
    return Check("orientation reversal negates the value", a.value == -b.value, f"{a.value!r} vs {b.value!r}")


def _check_s3_volume() -> Check:
    s = zoo.sasakian_structure(3)
    form = wedge(s.eta, exterior_derivative(s.eta))
    r = integrate_top_form(zoo.sphere(3), form, QuadratureSpec(Method.MONTE_CARLO, sample_count=200_000, seed=7))
    dev = abs(r.value - 4 * math.pi**2)
    return Check("S3 eta^d eta integrates to 4 pi^2", bool(dev < 4 * r.error_estimate),
                 f"{r.value:.6g} +- {r.error_estimate:.2g}")


SUITES: dict[str, list[Callable[[], Check]]] = {
    "curvature": [_check_s3_identity, _check_s5_identity, _check_scalar, _check_bianchi, _check_weyl_round,
                  _check_weyl_traces, _check_weyl_conformal, _check_ricci_fit, _check_weyl_fit, _check_jets],
    "kernels": [_check_ladder_oracle, _check_contact_t3, _check_antisymmetry, _check_wcs_invariance,
                _check_conf_invariance, _check_contact_invariance, _check_wcs_ratio, _check_flat_kernel],
    "loopspace": [_check_loop_antisymmetry, _check_reeb_orbit, _check_reduction, _check_iterates,
                  _check_semigroup, _check_exterior_derivative, _check_homotopy],
    "quadrature": [_check_t2_area, _check_spectral, _check_mc_determinism, _check_calibration, _check_orientation,
                   _check_s3_volume],
}


def run_suite(name: str) -> list[Check]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    out = []
    for fn in SUITES[name]:
        try:
            out.append(fn())
        except Exception as exc:  # a crashing check is a failing check
            out.append(Check(fn.__name__.lstrip("_").replace("_", " "), False, f"{type(exc).__name__}: {exc}"))
    return out
