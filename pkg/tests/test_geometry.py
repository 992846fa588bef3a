import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pi1obstruct import ad
from pi1obstruct.geometry import (ChartDomain, ChartError, KernelField, ManifoldSpec, PForm, SmoothMap, VectorField,
                                  coordinate_form, exterior_derivative, flow_pullback_fd, interior_product,
                                  levi_civita, lie_derivative, one_form, perm_sign, pullback, reeb_vector,
                                  scalar_field, wedge, wedge_power)
from pi1obstruct import zoo

TWO_PI = 2.0 * math.pi
seeds = st.integers(0, 2**32 - 1)


def _pts(seed, n=3, count=6):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(count, n))


def _random_form(seed: int, dim: int = 3, degree: int = 1) -> PForm:
    c = np.random.default_rng(seed).normal(size=(8, dim))
    from itertools import combinations
    nsets = len(list(combinations(range(dim), degree)))

    def comps(x):
        out = []
        for k in range(nsets):
            r = c[k % 8]
            out.append(ad.sin(r[0] * x[0] + r[1] * x[1]) * ad.cos(r[2] * x[dim - 1]) + r[k % dim] * x[k % dim] ** 2)
        return out

    return PForm(dim, degree, comps)


@given(seeds, st.integers(0, 1))
def test_d_squared_vanishes(seed, degree):
    a = _random_form(seed, 3, degree)
    dd = exterior_derivative(exterior_derivative(a))
    assert np.max(np.abs(dd(_pts(seed)))) < 1e-12


@given(seeds)
def test_wedge_graded_commutativity(seed):
    a, b = _random_form(seed, 3, 1), _random_form(seed + 1, 3, 2)
    p = _pts(seed)
    assert np.allclose(wedge(a, b)(p), wedge(b, a)(p), atol=1e-12)
    assert np.max(np.abs(wedge(a, a)(p))) < 1e-12


@given(seeds)
def test_leibniz_rule(seed):
    a, b = _random_form(seed, 3, 1), _random_form(seed + 7, 3, 1)
    lhs = exterior_derivative(wedge(a, b))
    rhs = wedge(exterior_derivative(a), b) - wedge(a, exterior_derivative(b))
    p = _pts(seed)
    assert np.allclose(lhs(p), rhs(p), atol=1e-11)


def _rotation_flow(t: float) -> SmoothMap:
    c, s = math.cos(t), math.sin(t)
    return SmoothMap(3, lambda x: [c * x[0] - s * x[1], s * x[0] + c * x[1], x[2] + 0.5 * t])


def test_cartan_formula_matches_flow_finite_difference():
    X = VectorField(3, lambda x: [-x[1], x[0], 0.5 + 0.0 * x[2]])
    for seed in range(3):
        a = _random_form(seed, 3, 1)
        p = _pts(seed)
        fd = flow_pullback_fd(_rotation_flow, a, p, h=1e-4)
        assert np.allclose(lie_derivative(X, a)(p), fd, atol=1e-6)


def test_pullback_is_functorial_and_commutes_with_d():
    f = SmoothMap(3, lambda x: [x[0] + 0.3 * ad.sin(x[1]), x[1] * 1.2, x[2] + x[0] * x[1]])
    g = SmoothMap(3, lambda x: [ad.exp(0.2 * x[2]) + x[0], x[1] - x[2], 2 * x[2]])
    a = _random_form(5, 3, 1)
    p = _pts(5)
    assert np.allclose(pullback(g.compose(f), a)(p), pullback(f, pullback(g, a))(p), atol=1e-12)
    assert np.allclose(exterior_derivative(pullback(f, a))(p), pullback(f, exterior_derivative(a))(p), atol=1e-11)


def test_kernel_pullback_transforms_both_slots():
    k = KernelField(2, lambda x: [1.0 + 0.0 * x[0], x[0]])
    f = SmoothMap(2, lambda x: [2 * x[0], 3 * x[1] + x[0]])
    p = np.array([[0.5, 0.2]])
    # J = [[2, 0], [1, 3]], det 6, k(y) = [1, 1]
    assert np.allclose(pullback(f, k)(p), [[(2 + 1) * 6, 3 * 6]])


def test_interior_product_and_full_antisymmetry():
    a = _random_form(3, 3, 2)
    p = _pts(3)
    full = a.full(p)
    assert np.allclose(full, -np.swapaxes(full, -1, -2))
    X = VectorField(3, lambda x: [1.0 + 0.0 * x[0], 2.0, -1.0])
    expected = np.einsum("i,bij->bj", [1.0, 2.0, -1.0], full)
    assert np.allclose(interior_product(X, a)(p), expected)
    assert np.max(np.abs(interior_product(X, interior_product(X, a))(p))) < 1e-12


def test_levi_civita_and_perm_sign():
    eps = levi_civita(3)
    assert eps[0, 1, 2] == 1 and eps[1, 0, 2] == -1 and eps[0, 0, 2] == 0
    assert perm_sign((2, 0, 1)) == 1 and perm_sign((1, 1, 0)) == 0


def test_wedge_power_of_standard_contact_form():
    eta = one_form(3, lambda x: [0.0 * x[0], -x[0], 1.0])
    form = wedge(eta, wedge_power(exterior_derivative(eta), 1))
    assert np.allclose(form.top(_pts(0)), -1.0)
    assert np.allclose(reeb_vector(eta, _pts(0)), [[0.0, 0.0, 1.0]] * 6)


def test_reeb_vector_of_hopf_form_is_the_rotation_generator():
    s = zoo.sasakian_structure(3)
    p = zoo.sphere_domain(3).sample(np.random.default_rng(0), 10, margin=0.05)
    assert np.allclose(reeb_vector(s.eta, p), zoo.hopf_generator(3)(p), atol=1e-12)


def test_chart_domain_validation_and_wrapping():
    with pytest.raises(ValueError, match="empty interval"):
        ChartDomain(((0.0, 0.0),), (True,))
    with pytest.raises(ValueError, match="differ in length"):
        ChartDomain(((0.0, 1.0),), (True, False))
    d = ChartDomain(((0.0, TWO_PI), (0.0, 1.0)), (True, False))
    assert np.allclose(d.wrap_points(np.array([[7.0, 0.5]])), [[7.0 - TWO_PI, 0.5]])
    with pytest.raises(ChartError, match="leaves the chart"):
        d.check_inside([np.array([1.0]), np.array([1.5])])
    with pytest.raises(ValueError, match="orientation_sign"):
        ManifoldSpec("bad", d, orientation_sign=2)


def test_form_component_count_checked():
    bad = PForm(3, 1, lambda x: [x[0], x[1]])
    with pytest.raises(ValueError, match="expected 3"):
        bad(_pts(0))
    with pytest.raises(ValueError, match="degree exceeds"):
        PForm(2, 3, lambda x: [])
    with pytest.raises(TypeError, match="PForm or KernelField"):
        pullback(SmoothMap(1, lambda x: x), object())


def test_scalar_and_coordinate_forms():
    f = scalar_field(2, lambda x: x[0] * x[1])
    df = exterior_derivative(f)
    assert np.allclose(df(np.array([[2.0, 3.0]])), [[3.0, 2.0]])
    assert np.allclose(coordinate_form(3, (0, 2))(_pts(1)), [[0.0, 1.0, 0.0]] * 6)
