import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pi1obstruct import ad, zoo
from pi1obstruct.curvature import MetricField, deformed_metric, flat_metric
from pi1obstruct.geometry import coordinate_form, coordinate_vector, one_form, wedge, wedge_power, exterior_derivative
from pi1obstruct.kernels import (conformal_kernel, contact_kernel, kernel_contract, ladder_top,
                                 ladder_top_bruteforce, product_kernel, psh_kernel, volume_form, wcs_kernel)
from pi1obstruct.loopspace import kernel_pullback_values
from pi1obstruct.verify import contraction_ratio


def _antisym_tensor(seed):
    T = np.random.default_rng(seed).normal(size=(2, 5, 5, 5, 5))
    return T - np.swapaxes(T, 1, 2)


@given(st.integers(0, 2**32 - 1))
def test_ladder_matches_bruteforce(seed):
    T = _antisym_tensor(seed)
    assert np.allclose(ladder_top(T), ladder_top_bruteforce(T), atol=1e-9)


def test_contact_kernel_on_t3_closed_form():
    k = contact_kernel(zoo.torus3_eta(), 1)
    pts = np.random.default_rng(0).random((20, 3)) * 2 * np.pi
    c = kernel_contract(k, coordinate_vector(3, 0))(pts)[:, 0]
    assert np.allclose(c, 2 * np.cos(pts[:, 1]) ** 4, atol=1e-13)


def test_kernel_antisymmetry_in_top_slots():
    k = contact_kernel(zoo.hopf_contact_form(3), 1)
    pts = zoo.sphere_domain(3).sample(np.random.default_rng(1), 4, margin=0.05)
    full = k.full(pts)
    assert np.allclose(full, -np.swapaxes(full, 2, 3))
    assert np.allclose(k.component(pts, 1, (2, 0, 1)), k(pts)[:, 1])
    assert np.allclose(k.component(pts, 1, (1, 0, 2)), -k(pts)[:, 1])


def test_contact_kernel_is_eta_times_contact_volume():
    s = zoo.sasakian_structure(5)
    pts = zoo.sphere_domain(5).sample(np.random.default_rng(2), 6, margin=0.05)
    vol = wedge(s.eta, wedge_power(exterior_derivative(s.eta), 2)).top(pts)
    assert np.allclose(contact_kernel(s.eta, 2)(pts), s.eta(pts) * vol[:, None])
    # eta ^ (d eta)^2 is 8 times the round volume form on S5
    assert np.allclose(vol, 8 * volume_form(s.metric).top(pts))


def test_psh_kernel_contracts_to_volume():
    s = zoo.sasakian_structure(3)
    pts = zoo.sphere_domain(3).sample(np.random.default_rng(3), 6, margin=0.05)
    c = kernel_contract(psh_kernel(s.eta, s.metric, pts), s.xi)(pts)[:, 0]
    assert np.allclose(c, volume_form(s.metric).top(pts))


@pytest.mark.parametrize("rho, ratio", [(0.5, -2.34375), (1.0, -96.0)])
def test_wcs_contraction_ratio_frozen(rho, ratio):
    s = zoo.sasakian_structure(5)
    r = contraction_ratio(wcs_kernel(deformed_metric(s.metric, s.eta, rho)), count=20)
    assert np.allclose(r, ratio, rtol=1e-9)


def test_wcs_vanishes_on_round_sphere():
    r = contraction_ratio(wcs_kernel(zoo.round_metric(5)), count=10)
    assert np.max(np.abs(r)) < 1e-9


def _random_metric(seed):
    c = np.random.default_rng(seed).normal(size=(5, 5, 3)) * 0.2

    def comps(x):
        rows = [[0.0] * 5 for _ in range(5)]
        for i in range(5):
            for j in range(i, 5):
                v = c[i, j, 0] * ad.sin(x[(i + j) % 5] + c[i, j, 1]) + c[i, j, 2] * x[j] * x[i]
                if i == j:
                    v = 2.0 + v
                rows[i][j] = v
                rows[j][i] = v
        return rows

    return MetricField(5, comps, "random")


def test_conformal_ladder_vanishes_for_generic_metric():
    # the Weyl ladder contraction is identically zero in dimension five
    g = _random_metric(11)
    pts = np.random.default_rng(4).uniform(-0.5, 0.5, size=(6, 5))
    g.check_spd(pts)
    assert np.max(np.abs(conformal_kernel(g)(pts))) < 1e-9
    assert np.max(np.abs(wcs_kernel(g)(pts))) > 1e-5


def test_curvature_kernels_invariant_under_hopf_isometry():
    s = zoo.sasakian_structure(5)
    k = wcs_kernel(deformed_metric(s.metric, s.eta, 1.0))
    pts = zoo.sphere_domain(5).sample(np.random.default_rng(5), 6, margin=0.05)
    a = zoo.hopf_action(5)
    for t in (0.4, 2.9):
        assert np.allclose(kernel_pullback_values(a.point_map(t), k, pts), k(pts), rtol=1e-10, atol=1e-9)


def test_flat_metric_kernel_zero():
    assert np.max(np.abs(wcs_kernel(flat_metric(5))(np.zeros((2, 5))))) == 0.0


def test_kernel_construction_errors():
    eta3 = zoo.torus3_eta()
    with pytest.raises(ValueError, match="needs dimension 5"):
        contact_kernel(eta3, 2)
    with pytest.raises(ValueError, match="one-form"):
        contact_kernel(exterior_derivative(eta3), 1)
    with pytest.raises(ValueError, match="top-degree"):
        product_kernel(eta3, eta3)
    with pytest.raises(ValueError, match="same manifold"):
        product_kernel(one_form(2, lambda x: [1.0, 0.0]), coordinate_form(3, (0, 1, 2)))
    with pytest.raises(ValueError, match="only k=1"):
        wcs_kernel(zoo.round_metric(3))
    with pytest.raises(ValueError, match="dimensions differ"):
        kernel_contract(contact_kernel(eta3, 1), coordinate_vector(2, 0))
