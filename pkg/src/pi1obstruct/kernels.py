"""Kernel tensors in T*M (x) Lambda^n T*M and their contraction with vector fields."""

from __future__ import annotations

import enum
import itertools

import numpy as np

from . import ad
from .curvature import MetricField, curvature_pack, metric_jets
from .geometry import (
    KernelField,
    PForm,
    VectorField,
    as_points,
    det,
    exterior_derivative,
    perm_sign,
    wedge,
    wedge_power,
)


class KernelKind(enum.Enum):
    CONTACT = "contact"
    PRODUCT = "product"
    PSH = "psh"
    WCS = "wcs"
    CONFORMAL = "conformal"


def contact_kernel(eta: PForm, k: int) -> KernelField:
    """eta (x) (eta ^ (d eta)^k) on a (2k+1)-manifold."""
    n = eta.dim
    if eta.degree != 1:
        raise ValueError("contact kernel needs a one-form")
    if n != 2 * k + 1:
        raise ValueError(f"contact kernel with k={k} needs dimension {2 * k + 1}, got {n}")
    top = wedge(eta, wedge_power(exterior_derivative(eta), k)) if k else eta

    def comps(x):
        e = eta.components(x)
        w = top.components(x)[0]
        return [e_nu * w for e_nu in e]

    return KernelField(n, comps, "contact")


def product_kernel(eta: PForm, mu: PForm) -> KernelField:
    if mu.degree != mu.dim:
        raise ValueError("mu must be a top-degree form")
    if eta.degree != 1 or eta.dim != mu.dim:
        raise ValueError("eta must be a one-form on the same manifold")

    def comps(x):
        m = mu.components(x)[0]
        return [e_nu * m for e_nu in eta.components(x)]

    return KernelField(mu.dim, comps, "product")


def volume_form(g: MetricField) -> PForm:
    """sqrt(det g) du^1 ^ ... ^ du^n."""
    return PForm(g.dim, g.dim, lambda x: [ad.sqrt(det(g.components(x)))], f"dvol({g.name})")


def psh_kernel(eta: PForm, g: MetricField, check_pts=None) -> KernelField:
    """eta (x) dvol_g."""
    if check_pts is not None:
        g.check_spd(check_pts)
    k = product_kernel(eta, volume_form(g))
    k.name = "psh"
    return k


def kernel_contract(kernel: KernelField, xi: VectorField) -> PForm:
    """Top form (k . xi)_{[1..n]} = k_{j[1..n]} xi^j."""
    if kernel.dim != xi.dim:
        raise ValueError("kernel and vector field dimensions differ")

    def comps(x):
        k, v = kernel.components(x), xi.components(x)
        total = 0.0
        for kj, vj in zip(k, v):
            total = total + kj * vj
        return [total]

    return PForm(kernel.dim, kernel.dim, comps, f"{kernel.name}.{xi.name}")


# --------------------------------------------------------------------------- curvature ladders

# (a, {b,c}, {d,e}) splits of (0..4); the antisymmetrized sum over S_5 equals
# four times the sum over these splits because of the pair antisymmetries.
_SPLITS = []
for _a in range(5):
    _rest = [i for i in range(5) if i != _a]
    for _bc in itertools.combinations(_rest, 2):
        _de = tuple(i for i in _rest if i not in _bc)
        _SPLITS.append((perm_sign((_a,) + _bc + _de), _a, _bc, _de))


def ladder_top(T: np.ndarray) -> np.ndarray:
    """Top coefficients of sum_sigma sgn(sigma) T_{s1 l1 nu}^{l0} T_{s2 s3 l2}^{l1} T_{s4 s5 l0}^{l2}.

    ``T`` is a (1,3) tensor laid out ``[..., k, j, i, h]`` that is
    antisymmetric in ``k, j``.  Returns shape ``(..., 5)`` indexed by nu.
    """
    out = np.zeros(T.shape[:-4] + (5,))
    for sign, a, (b, c), (d, e) in _SPLITS:
        m1 = T[..., b, c, :, :]  # [l2, l1]
        m2 = T[..., d, e, :, :]  # [l0, l2]
        inner = np.matmul(m2, m1)  # [l0, l1]
        out += sign * np.einsum("...xny,...yx->...n", T[..., a, :, :, :], inner)
    return 4.0 * out


def ladder_top_bruteforce(T: np.ndarray) -> np.ndarray:
    """Same contraction summed over all 120 permutations, no shortcuts."""
    out = np.zeros(T.shape[:-4] + (5,))
    for perm in itertools.permutations(range(5)):
        s = perm_sign(perm)
        a, b, c, d, e = perm
        out += s * np.einsum(
            "...xny,...zx,...yz->...n",
            T[..., a, :, :, :], T[..., b, c, :, :], T[..., d, e, :, :],
        )
    return out


def _curvature_kernel(g: MetricField, which: str) -> KernelField:
    if g.dim != 5:
        raise ValueError("general k contraction chain ambiguous; only k=1 implemented")

    def comps(x):
        pts = np.stack(np.broadcast_arrays(*[ad.numeric(c) for c in x]), axis=-1)
        batch = pts.shape[:-1]
        flat = as_points(pts.reshape(-1, 5), 5)
        pack = curvature_pack(metric_jets(g, flat))
        T = pack.weyl if which == "weyl" else pack.riemann
        top = ladder_top(T).reshape(batch + (5,))
        return [top[..., nu] for nu in range(5)]

    return KernelField(5, comps, "conformal" if which == "weyl" else "wcs")


def wcs_kernel(g: MetricField) -> KernelField:
    """Riemann ladder kernel on a 5-manifold."""
    return _curvature_kernel(g, "riemann")


def conformal_kernel(g: MetricField) -> KernelField:
    """Weyl ladder kernel on a 5-manifold."""
    return _curvature_kernel(g, "weyl")
