"""Acceptance gate: one test per numbered criterion, each printing a PASS/FAIL line."""
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import integrate

from pi1obstruct import verify, zoo
from pi1obstruct.certify import CERTIFIED, certify
from pi1obstruct.curvature import curvature_at, deformed_metric, weyl_traces
from pi1obstruct.kernels import conformal_kernel, kernel_contract, volume_form
from pi1obstruct.loopspace import (action_pullback_density, homotopy_invariance_check,
                                   loop_form_exterior_derivative, reparametrization_homotopy)
from pi1obstruct.quadrature import THREADS_ENV, Method, QuadratureSpec, integrate_top_form

TWO_PI = 2.0 * math.pi


@pytest.mark.criterion(1, "T3 chart integral = 2 pi^3")
def test_c01_t3_obstruction(criterion, monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "1")
    start = time.perf_counter()
    report = certify(zoo.build_case("t3", nodes=64))
    wall = time.perf_counter() - start
    target = 2.0 * math.pi**3
    value = report.obstruction.chart_integral.value
    rel = abs(value - target) / target
    criterion.check(rel < 1e-8, f"chart integral {value:.12g} vs 2 pi^3 = {target:.12g}, rel {rel:.2e}")
    criterion.check(report.verdict == CERTIFIED, f"verdict {report.verdict}")
    criterion.check(wall < 10.0, f"wall time {wall:.2f} s")
    criterion.finish()


@pytest.mark.criterion(2, "T2 family chart integral = 8 pi^2")
def test_c02_t2_family(criterion):
    report = certify(zoo.build_case("t2", nodes=64))
    # 1-D oracle: contracting with the rotation generator leaves eta1(u2) du1^du2
    inner, _ = integrate.quad(lambda u: 2.0 + math.cos(u), 0.0, TWO_PI, epsabs=1e-13, epsrel=1e-13)
    oracle = TWO_PI * inner
    value = report.obstruction.chart_integral.value
    criterion.check(abs(oracle - 8 * math.pi**2) < 1e-10, f"quadrature oracle {oracle:.12g}")
    criterion.check(abs(value - oracle) < 1e-8, f"chart integral {value:.12g}, diff {abs(value - oracle):.1e}")
    criterion.check(report.verdict == CERTIFIED, f"verdict {report.verdict}")
    criterion.finish()


@pytest.mark.criterion(3, "round-sphere constant-curvature identity and scalar 20")
def test_c03_round_sphere(criterion):
    for m in (3, 5):
        r = verify.constant_curvature_residual(m, 100)
        criterion.check(r < 1e-6, f"S{m} identity residual {r:.2e} at 100 points")
    pts = zoo.sphere_domain(5).sample(np.random.default_rng(3), 100, margin=0.02)
    scalar = curvature_at(zoo.round_metric(5), pts).scalar
    dev = float(np.max(np.abs(scalar - 20.0)))
    criterion.check(dev < 1e-6, f"scalar curvature of unit S5 = 20 within {dev:.2e}")
    criterion.finish()


@pytest.mark.criterion(4, "Weyl vanishing, conformal invariance, trace-free")
def test_c04_weyl(criterion):
    pts = zoo.sphere_domain(5).sample(np.random.default_rng(4), 50, margin=0.02)
    w = float(np.max(np.abs(curvature_at(zoo.round_metric(5), pts).weyl)))
    criterion.check(w < 1e-6, f"Weyl(round S5) max {w:.2e}")
    c = verify.weyl_conformal_residual()
    criterion.check(c < 1e-5, f"Weyl (1,3) conformal residual {c:.2e}")
    s = zoo.sasakian_structure(5)
    pack = curvature_at(deformed_metric(s.metric, s.eta, 1.0), pts)
    t = max(float(np.max(np.abs(x))) for x in weyl_traces(pack))
    criterion.check(t < 1e-6, f"Weyl traces on g_rho=1 max {t:.2e}")
    criterion.finish()


@pytest.mark.criterion(5, "conformal dichotomy at rho = 0 and rho = 1")
def test_c05_conformal_dichotomy(criterion):
    start = time.perf_counter()
    r0 = certify(zoo.build_case("s5-conf-rho0", samples=1_000_000))
    ob0 = r0.obstruction.result
    zero0 = r0.invariance.zero_kernel or abs(ob0.value) <= zoo.MC_TOLERANCE
    criterion.check(zero0 or abs(ob0.value) <= 5 * ob0.error_estimate,
                    f"rho=0 obstruction {ob0.value:.3e} +- {ob0.error_estimate:.2e} (verdict {r0.verdict})")
    r1 = certify(zoo.build_case("s5-conf-rho1", samples=1_000_000))
    ob1 = r1.obstruction.result
    significant = abs(ob1.value) > 5 * ob1.error_estimate and not r1.invariance.zero_kernel
    criterion.check(significant, f"rho=1 obstruction {ob1.value:.3e} +- {ob1.error_estimate:.2e}, "
                                 f"zero kernel {r1.invariance.zero_kernel} (verdict {r1.verdict})")
    s = zoo.sasakian_structure(5)
    ratio = verify.contraction_ratio(conformal_kernel(deformed_metric(s.metric, s.eta, 1.0)), 200)
    with np.errstate(invalid="ignore", divide="ignore"):
        cv = float(np.std(ratio) / abs(np.mean(ratio)))
    criterion.check(bool(cv < 1e-3), f"ratio mean {np.mean(ratio):.3e}, cv {cv:.3g} over 200 points")
    wall = time.perf_counter() - start
    criterion.check(wall < 300.0, f"wall time {wall:.1f} s")
    criterion.finish()


REDUCTION_CASES = ("t2", "t3", "t3-rescaled-C", "s3-contact", "s3-psh", "s5-contact", "s5-wcs-rho0.5",
                   "s5-wcs-rho1")


@pytest.mark.criterion(6, "action pullback density = 2 pi k.xi")
def test_c06_reduction(criterion):
    for cid in REDUCTION_CASES:
        case = zoo.build_case(cid)
        pts = case.sample(100, salt=6)
        dens = action_pullback_density(case.action, case.kernel, pts)
        ref = TWO_PI * kernel_contract(case.kernel, case.action.generator)(pts)[:, 0]
        err = float(np.max(np.abs(dens - ref)))
        criterion.check(err < 1e-7, f"{cid}: max |diff| {err:.1e} (max |ref| {np.max(np.abs(ref)):.3g})")
    criterion.finish()


@pytest.mark.criterion(7, "iterate scaling n = 2, 3, 5 on t3")
def test_c07_iterates(criterion):
    for n, rel in verify.iterate_ratios((2, 3, 5), nodes=64).items():
        criterion.check(abs(rel) < 1e-8, f"n={n}: relative error {rel:.1e}")
    criterion.finish()


@pytest.mark.criterion(8, "loop-form exterior derivative vanishes; endpoints agree")
def test_c08_homotopy(criterion):
    for cid in ("t2", "t3", "s3-contact", "s3-psh", "s5-contact"):
        case = zoo.build_case(cid)
        F = reparametrization_homotopy(case.action, 0.3)
        pts = case.sample(10, salt=8)
        worst = max(float(np.max(np.abs(loop_form_exterior_derivative(case.kernel, F, s, pts))))
                    for s in (0.0, 0.25, 0.5, 1.0))
        criterion.check(worst < 1e-7, f"{cid}: max |d omega| {worst:.1e}")
    case = zoo.build_case("t3-reparam-homotopy")
    hc = homotopy_invariance_check(case.kernel, case.loop, case.manifold,
                                   QuadratureSpec(Method.PERIODIC_TRAPEZOID, nodes_per_axis=32))
    criterion.check(hc.difference < 1e-6, f"endpoint integrals {hc.start.value:.12g} / {hc.end.value:.12g}, "
                                          f"diff {hc.difference:.1e}")
    criterion.finish()


@pytest.mark.criterion(9, "s3-psh obstruction = 2 pi vol(S3) = 4 pi^3")
def test_c09_psh(criterion):
    vol = integrate_top_form(zoo.sphere(3), volume_form(zoo.round_metric(3)),
                             QuadratureSpec(Method.GAUSS_LEGENDRE, nodes_per_axis=32))
    criterion.check(abs(vol.value - 2 * math.pi**2) < 1e-9, f"vol(S3) = {vol.value:.12g} vs 2 pi^2")
    report = certify(zoo.build_case("s3-psh"))
    ob = report.obstruction.result
    target = 4 * math.pi**3
    criterion.check(abs(ob.value - target) <= 3 * ob.error_estimate,
                    f"obstruction {ob.value:.6g} +- {ob.error_estimate:.2g} vs 4 pi^3 = {target:.6g}")
    criterion.check(report.verdict == CERTIFIED, f"verdict {report.verdict}")
    criterion.finish()


def _run_all(tmp_path, threads: int) -> bytes:
    out = tmp_path / f"report-{threads}.json"
    env = dict(os.environ, **{THREADS_ENV: str(threads)})
    proc = subprocess.run([sys.executable, "-m", "pi1obstruct", "certify", "--case", "all", "--seed", "42",
                           "--out", str(out)], env=env, capture_output=True, text=True)
    assert proc.returncode in (0, 1), proc.stderr
    return out.read_bytes()


@pytest.mark.criterion(10, "byte-identical reports across thread counts")
def test_c10_determinism(criterion, tmp_path):
    a = _run_all(tmp_path, 1)
    b = _run_all(tmp_path, 3)
    criterion.check(a == b, f"reports of {len(a)} and {len(b)} bytes identical: {a == b}")
    criterion.finish()


@pytest.mark.criterion(11, "negative control: u1-dependent eta on T3")
def test_c11_negative_control(criterion):
    report = certify(zoo.build_case("t3-broken"))
    criterion.check(report.verdict != CERTIFIED, f"verdict {report.verdict}")
    criterion.check("ii" in report.failed_conditions,
                    f"invariance residual {report.invariance.max_residual:.3e} flags condition ii")
    criterion.finish()
