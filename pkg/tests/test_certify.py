import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pi1obstruct import ad, zoo
from pi1obstruct.certify import (CERTIFIED, INCONCLUSIVE, CertificationCase, InvarianceResult, MembershipKind,
                                 MembershipPredicate, Tolerances, ZeroKernelError, certify, check_invariance,
                                 check_membership, decide, expectation_met, obstruction_integral)
from pi1obstruct.curvature import deformed_metric, flat_metric
from pi1obstruct.geometry import SmoothMap
from pi1obstruct.kernels import KernelKind, conformal_kernel, contact_kernel
from pi1obstruct.quadrature import IntegralResult, Method, QuadratureSpec

TWO_PI = 2.0 * math.pi


def _s5_pts(n=8, seed=0):
    return zoo.sphere_domain(5).sample(np.random.default_rng(seed), n, margin=0.05)


def test_hopf_rotation_is_isometry_of_squashed_metric():
    s = zoo.sasakian_structure(5)
    pred = MembershipPredicate(MembershipKind.ISOMETRY, metric=deformed_metric(s.metric, s.eta, 1.0))
    res, factor = pred.residual(zoo.hopf_action(5).point_map(1.3), _s5_pts())
    assert np.max(res) < 1e-12 and factor is None


def test_random_diffeomorphism_is_not_an_isometry():
    s = zoo.sasakian_structure(5)
    pred = MembershipPredicate(MembershipKind.ISOMETRY, metric=s.metric)
    c = np.random.default_rng(4).normal(size=3) * 0.2
    f = SmoothMap(5, lambda x: [x[0] + c[0] * ad.sin(x[2]), x[1], x[2] + c[1] * ad.sin(x[4] + x[0]), x[3],
                                x[4] + c[2] * ad.cos(x[0])], zoo.sphere_domain(5), check_bounds=False)
    res, _ = pred.residual(f, _s5_pts())
    assert np.max(res) > 1e-2


def test_dilation_is_conformal_with_fitted_factor():
    pred = MembershipPredicate(MembershipKind.CONFORMAL, metric=flat_metric(5))
    res, factor = pred.residual(SmoothMap(5, lambda x: [2.0 * xi for xi in x]), np.random.default_rng(0).random((4, 5)))
    assert np.max(res) < 1e-14 and np.allclose(factor, 4.0)
    shear = SmoothMap(5, lambda x: [x[0] + x[1], x[1], x[2], x[3], x[4]])
    res, _ = pred.residual(shear, np.random.default_rng(0).random((4, 5)))
    assert np.max(res) > 0.1


def test_strict_contact_psh_and_form_pair():
    s = zoo.sasakian_structure(3)
    pts = zoo.sphere_domain(3).sample(np.random.default_rng(1), 8, margin=0.05)
    rot = zoo.hopf_action(3).point_map(0.8)
    for pred in (MembershipPredicate("StrictContact", eta=s.eta), MembershipPredicate("Psh", eta=s.eta, phi=s.phi)):
        assert np.max(pred.residual(rot, pts)[0]) < 1e-12
    # a theta-dependent twist of the first angle adds a d theta component to eta
    twist = SmoothMap(3, lambda x: [x[0] + ad.sin(2.0 * x[1]), x[1], x[2]], zoo.sphere_domain(3))
    assert np.max(MembershipPredicate("StrictContact", eta=s.eta).residual(twist, pts)[0]) > 0.1
    case = zoo.build_case("t2")
    assert check_membership(case).max_residual < 1e-12
    stretch = SmoothMap(2, lambda x: [x[0] + 0.3 * ad.sin(x[0]), x[1]])
    assert np.max(case.membership.residual(stretch, case.sample())[0]) > 0.1


def test_predicate_inputs_missing():
    with pytest.raises(ValueError, match="Psh predicate inputs missing: phi"):
        MembershipPredicate(MembershipKind.PSH, eta=zoo.hopf_contact_form(3))
    with pytest.raises(ValueError, match="FormPair predicate inputs missing: eta, mu"):
        MembershipPredicate(MembershipKind.FORM_PAIR)
    with pytest.raises(ValueError, match="top-degree"):
        MembershipPredicate(MembershipKind.FORM_PAIR, eta=zoo.torus3_eta(), mu=zoo.torus3_eta())
    with pytest.raises(ValueError):
        MembershipPredicate("Symplectic", eta=zoo.torus3_eta())


def test_zero_kernel_invariance_is_ill_posed():
    k = conformal_kernel(zoo.round_metric(5))
    with pytest.raises(ZeroKernelError, match="ill-posed on zero kernel"):
        check_invariance(k, zoo.hopf_action(5), _s5_pts(3), [0.5])


def test_invariance_detects_broken_kernel():
    good = check_invariance(contact_kernel(zoo.torus3_eta(), 1), zoo.rotation_action(3),
                            np.random.default_rng(0).random((10, 3)) * 6, [0.5, 2.0])
    bad = check_invariance(contact_kernel(zoo.torus3_eta(0.3), 1), zoo.rotation_action(3),
                           np.random.default_rng(0).random((10, 3)) * 6, [0.5, 2.0])
    assert good.C == pytest.approx(1.0, abs=1e-14) and good.max_residual < 1e-13
    assert bad.max_residual > 0.1


residuals = st.floats(0.0, 1e-3, allow_nan=False)
values = st.floats(-1e3, 1e3, allow_nan=False)
errors = st.floats(0.0, 10.0, allow_nan=False)


@given(residuals, residuals, residuals, values, errors)
def test_verdict_monotone_in_residuals(r_small, extra, inv, value, err):
    tol = Tolerances(1e-4, 1e-4)
    ob = IntegralResult(value, err, 1)
    lo = decide(r_small, InvarianceResult(1.0, inv), ob, tol)
    hi = decide(r_small + extra, InvarianceResult(1.0, inv + extra), ob, tol)
    if hi == CERTIFIED:
        assert lo == CERTIFIED
    if lo.startswith("FAILED"):
        assert hi.startswith("FAILED")


@given(values, errors, errors)
def test_verdict_monotone_in_error(value, err, extra):
    tol = Tolerances()
    good = InvarianceResult(1.0, 0.0)
    a = decide(0.0, good, IntegralResult(value, err, 1), tol)
    b = decide(0.0, good, IntegralResult(value, err + extra, 1), tol)
    assert a in (CERTIFIED, INCONCLUSIVE) and b in (CERTIFIED, INCONCLUSIVE)
    if b == CERTIFIED:
        assert a == CERTIFIED


def test_verdict_condition_lists():
    tol = Tolerances()
    ob = IntegralResult(5.0, 0.1, 1)
    assert decide(1.0, InvarianceResult(1.0, 1.0), ob, tol) == "FAILED(i,ii)"
    assert decide(0.0, InvarianceResult(1.0, 0.0, zero_kernel=True), ob, tol) == "FAILED(iii)"
    assert decide(0.0, InvarianceResult(0.0, 0.0), ob, tol) == "FAILED(ii)"
    assert decide(0.0, InvarianceResult(1.0, 0.0), IntegralResult(0.4, 0.1, 1), tol) == INCONCLUSIVE
    assert decide(0.0, InvarianceResult(1.0, 0.0), IntegralResult(0.6, 0.1, 1), tol) == CERTIFIED


def test_expectation_matching():
    assert expectation_met("NOT_CERTIFIED", "FAILED(iii)")
    assert expectation_met("NOT_CERTIFIED", INCONCLUSIVE)
    assert not expectation_met("NOT_CERTIFIED", CERTIFIED)
    assert expectation_met("FAILED(ii)", "FAILED(i,ii)")
    assert not expectation_met("FAILED(ii)", "FAILED(i)")
    assert expectation_met(CERTIFIED, CERTIFIED) and not expectation_met(CERTIFIED, INCONCLUSIVE)


def test_t3_rescaled_flow_doubles_obstruction():
    base = certify(zoo.build_case("t3", nodes=16))
    fast = certify(zoo.build_case("t3-rescaled-C", nodes=16))
    assert fast.invariance.C == pytest.approx(1.0, abs=1e-12)
    assert fast.obstruction.result.value == pytest.approx(2 * base.obstruction.result.value, rel=1e-12)
    assert base.obstruction.result.value == pytest.approx(12 * math.pi**4, rel=1e-12)


def test_obstruction_scales_with_c():
    case = zoo.build_case("t3", nodes=16)
    one = obstruction_integral(case, 1.0)
    three = obstruction_integral(case, 3.0)
    assert three.result.value == pytest.approx(3 * one.result.value, rel=1e-14)
    assert one.crosscheck["agrees"]


def test_reparametrized_loop_report_has_homotopy_block():
    r = certify(zoo.build_case("t3-reparam-homotopy", nodes=16))
    assert r.verdict == CERTIFIED
    d = r.as_dict()
    assert d["homotopy"]["difference"] < 1e-9 and d["homotopy"]["warnings"] == []
    assert d["obstruction"]["crosscheck"]["agrees"]


def test_report_fields():
    r = certify(zoo.build_case("t3-broken", nodes=16))
    d = r.as_dict()
    assert d["verdict"] == "FAILED(i,ii)" and d["meets_expectation"]
    assert set(d) >= {"case", "topic", "membership", "invariance", "obstruction", "verdict", "expected",
                      "tolerances"}
    assert r.failed_conditions == ("i", "ii")


def test_case_validation():
    case = zoo.build_case("t2")
    with pytest.raises(ValueError, match="kernel dimension 3 does not match manifold dimension 2"):
        CertificationCase("bad", case.manifold, case.action, contact_kernel(zoo.torus3_eta(), 1), KernelKind.CONTACT,
                          case.membership, QuadratureSpec(Method.GAUSS_LEGENDRE, nodes_per_axis=4))
    assert np.array_equal(case.sample(5, salt=1), zoo.build_case("t2").sample(5, salt=1))
    th = case.thetas(4)
    assert np.allclose(th, TWO_PI * (np.arange(4) + 0.37) / 4)
