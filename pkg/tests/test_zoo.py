import math

import numpy as np
import pytest

from pi1obstruct import ad, zoo
from pi1obstruct.certify import CERTIFIED
from pi1obstruct.geometry import reeb_vector

TWO_PI = 2.0 * math.pi


@pytest.mark.parametrize("m", [3, 5])
def test_sasakian_identities(m):
    s = zoo.sasakian_structure(m)
    pts = zoo.sphere_domain(m).sample(np.random.default_rng(m), 20, margin=0.05)
    res = s.check(pts)
    assert max(res.values()) < 1e-12
    assert np.allclose(reeb_vector(s.eta, pts), zoo.hopf_generator(m)(pts), atol=1e-12)
    # phi is g-skew: g(phi X, Y) = -g(X, phi Y)
    g, P = s.metric(pts), s.phi(pts)
    low = g @ P
    assert np.allclose(low, -np.swapaxes(low, -1, -2), atol=1e-12)


@pytest.mark.parametrize("m", [3, 5])
def test_embedding_lands_on_unit_sphere_and_metric_is_induced(m):
    s = zoo.sasakian_structure(m)
    pts = zoo.sphere_domain(m).sample(np.random.default_rng(0), 10, margin=0.05)
    p, dE = s.embedding_jacobian(pts)
    assert np.allclose(np.sum(p * p, axis=-1), 1.0)
    assert np.allclose(np.swapaxes(dE, -1, -2) @ dE, s.metric(pts), atol=1e-13)


def test_sphere_domain_errors():
    with pytest.raises(ValueError, match="must be 3 or 5"):
        zoo.sphere_domain(7)


@pytest.mark.parametrize("eta1, want", [
    (lambda u: 2.0 + ad.cos(u), 8 * math.pi**2),
    (lambda u: 1.0 + 0.0 * u, 4 * math.pi**2),
    (lambda u: 2.0 + ad.sin(u), 8 * math.pi**2),
])
def test_torus2_family(eta1, want):
    from pi1obstruct.certify import certify
    r = certify(zoo.torus2_case(eta1=eta1, nodes=32))
    assert r.verdict == CERTIFIED
    assert r.obstruction.chart_integral.value == pytest.approx(want, rel=1e-12)


def test_torus2_rejects_nonpositive_eta1():
    with pytest.raises(ValueError, match="positive"):
        zoo.torus2_case(eta1=lambda u: ad.cos(u))


def test_registry_and_parsing():
    assert len(zoo.CASES) == 14
    assert zoo.CASES["s5-conf-rho0"].expected == "NOT_CERTIFIED"
    assert zoo.CASES["t3-broken"].expected == "FAILED(ii)"
    info = zoo.case_info("s5-wcs-rho0.25")
    assert info.case_id == "s5-wcs-rho0.25" and info.expected == CERTIFIED
    with pytest.raises(KeyError, match="unknown case id"):
        zoo.case_info("s7-contact")
    case = zoo.build_case("s5-wcs-rho0.25", samples=1000, seed=3)
    assert case.quadrature.sample_count == 1000 and case.quadrature.seed == 3
    with pytest.raises(ValueError, match="unknown T\\^3 variant"):
        zoo.torus3_case("twisted")
    with pytest.raises(ValueError, match="needs S\\^5"):
        zoo.sphere_case(3, 1.0, "wcs")
    with pytest.raises(ValueError, match="torus construction"):
        zoo.sphere_case(3, 0.0, "product")


def test_every_case_builds_with_consistent_dimensions():
    for cid, info in zoo.CASES.items():
        case = zoo.build_case(cid)
        assert case.case_id == cid and case.expected == info.expected
        assert case.manifold.dim == case.kernel.dim == case.action.dim


def test_sphere_contact_small_sample_certifies():
    from pi1obstruct.certify import certify
    r = certify(zoo.build_case("s3-contact", samples=200_000, seed=1))
    assert r.verdict == CERTIFIED
    assert abs(r.obstruction.result.value - 8 * math.pi**3) < 5 * r.obstruction.result.error_estimate
