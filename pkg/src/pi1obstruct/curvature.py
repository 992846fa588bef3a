"""Levi-Civita curvature from metric 2-jets.

Index conventions
-----------------
``riemann[..., k, j, i, h]`` is R_{kji}^h with the sign fixed so that the
unit round sphere gives ``g_ki delta_j^h - g_ji delta_k^h``; in terms of
the curvature operator this is the h-component of R(d_j, d_k) d_i.
``ricci[..., j, i]`` is the trace over the second lower slot,
R_{jki}^k, which is positive on the round sphere (n - 1) g.
``weyl`` follows the same layout as ``riemann``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import ad
from .geometry import Coords, PForm, as_points, coords_of


class MetricError(ValueError):
    pass


class MetricField:
    """Symmetric positive-definite ``g_ij`` in chart coordinates."""

    def __init__(self, dim: int, comps: Callable[[Coords], Sequence[Sequence]], name: str = ""):
        self.dim = dim
        self._comps = comps
        self.name = name

    def __repr__(self) -> str:
        return f"MetricField(dim={self.dim}, name={self.name!r})"

    def components(self, x: Coords) -> list[list]:
        rows = [list(r) for r in self._comps(x)]
        if len(rows) != self.dim or any(len(r) != self.dim for r in rows):
            raise ValueError(f"{self!r} must return a {self.dim}x{self.dim} table")
        return rows

    def _flat(self, x: Coords) -> list:
        rows = self.components(x)
        return [rows[i][j] for i in range(self.dim) for j in range(self.dim)]

    def __call__(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        batch = pts.shape[:-1]
        rows = self.components(coords_of(pts))
        g = np.empty(batch + (self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                g[..., i, j] = np.broadcast_to(ad.numeric(rows[i][j]), batch)
        return g

    def check_spd(self, pts) -> np.ndarray:
        """Smallest eigenvalue per point; raises if any is not positive."""
        g = self(pts)
        if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12, rtol=0):
            raise MetricError("metric is not symmetric")
        lam = np.linalg.eigvalsh(g)[..., 0]
        if np.any(~(lam > 0)):
            raise MetricError(f"metric is not positive definite (min eigenvalue {lam.min():.3e})")
        return lam


def flat_metric(dim: int) -> MetricField:
    return MetricField(dim, lambda x: [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)], "flat")


def deformed_metric(g: MetricField, eta: PForm, rho: float) -> MetricField:
    """``g + rho^2 eta (x) eta``."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    r2 = float(rho) ** 2

    def comps(x):
        rows = g.components(x)
        if r2 == 0.0:
            return rows
        e = eta.components(x)
        return [[rows[i][j] + r2 * e[i] * e[j] for j in range(g.dim)] for i in range(g.dim)]

    return MetricField(g.dim, comps, f"{g.name}+{rho}^2 eta.eta")


def conformal_rescale(g: MetricField, f: PForm, check_pts=None) -> MetricField:
    """Pointwise ``f g`` for a positive function ``f``."""
    if f.degree != 0:
        raise ValueError("conformal factor must be a function")
    if check_pts is not None:
        vals = f(check_pts)[..., 0]
        if np.any(~(vals > 0)):
            raise ValueError("conformal factor must be positive on sampled points")

    def comps(x):
        c = f.components(x)[0]
        return [[c * gij for gij in row] for row in g.components(x)]

    return MetricField(g.dim, comps, f"f*{g.name}")


@dataclass(frozen=True)
class Jet2Metric:
    g: np.ndarray    # (B, n, n)
    dg: np.ndarray   # (B, n, n, n): d_k g_ij at [..., i, j, k]
    ddg: np.ndarray  # (B, n, n, n, n): d_l d_k g_ij at [..., i, j, k, l]
    points: np.ndarray

    @property
    def dim(self) -> int:
        return self.g.shape[-1]


def metric_jets(g: MetricField, pts, check: bool = True) -> Jet2Metric:
    pts = as_points(pts, g.dim)
    n = g.dim
    vals, grads, hess = ad.hessian_parts(g._flat, pts)
    batch = pts.shape[:-1]
    G = vals.reshape(batch + (n, n))
    G = 0.5 * (G + np.swapaxes(G, -1, -2))
    dG = grads.reshape(batch + (n, n, n))
    ddG = hess.reshape(batch + (n, n, n, n))
    ddG = 0.5 * (ddG + np.swapaxes(ddG, -1, -2))
    if check:
        lam = np.linalg.eigvalsh(G)[..., 0]
        if np.any(~(lam > 0)):
            raise MetricError(f"metric is not positive definite (min eigenvalue {lam.min():.3e})")
    return Jet2Metric(G, dG, ddG, pts)


@dataclass(frozen=True)
class CurvaturePack:
    g: np.ndarray
    ginv: np.ndarray
    christoffel: np.ndarray  # [..., k, i, j] = Gamma^k_ij
    riemann: np.ndarray      # [..., k, j, i, h] = R_kji^h
    ricci: np.ndarray        # [..., j, i]
    scalar: np.ndarray       # [...]
    weyl: np.ndarray | None

    @property
    def dim(self) -> int:
        return self.g.shape[-1]

    def riemann_lowered(self) -> np.ndarray:
        """R_kjih = R_kji^m g_mh."""
        return np.einsum("...kjim,...mh->...kjih", self.riemann, self.g)


def curvature_pack(jet: Jet2Metric) -> CurvaturePack:
    g, dg, ddg = jet.g, jet.dg, jet.ddg
    n = jet.dim
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise MetricError("singular metric") from exc
    batch = g.shape[:-2]
    # first-kind symbols [ij, l] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    first = 0.5 * (
        np.einsum("...jli->...ijl", dg) + np.einsum("...ilj->...ijl", dg) - dg
    )
    # Gamma^k_ij = g^kl [ij, l]; batched matmuls keep this on BLAS
    gamma = np.swapaxes(first.reshape(batch + (n * n, n)) @ ginv, -1, -2).reshape(batch + (n, n, n))
    # d_m of first-kind symbols
    dfirst = 0.5 * (
        np.einsum("...jlim->...ijlm", ddg) + np.einsum("...iljm->...ijlm", ddg) - ddg
    )
    # d_m g^kl = -g^ka (d_m g_ab) g^bl, stored as [m, k, l]
    dginv = -(ginv[..., None, :, :] @ np.moveaxis(dg, -1, -3) @ ginv[..., None, :, :])
    # d_m Gamma^k_ij, stored as [k, i, j, m]
    t1 = first.reshape(batch + (n * n, n)) @ np.moveaxis(dginv, -3, -1).reshape(batch + (n, n * n))
    t1 = np.moveaxis(t1.reshape(batch + (n, n, n, n)), -2, -4)
    t2 = ginv @ np.moveaxis(dfirst, -2, -4).reshape(batch + (n, n ** 3))
    dgamma = t1 + t2.reshape(batch + (n, n, n, n))
    # R_kji^h = d_j Gamma^h_ki - d_k Gamma^h_ji + Gamma^h_jm Gamma^m_ki - Gamma^h_km Gamma^m_ji
    term = np.einsum("...hkij->...kjih", dgamma)
    quad = (gamma.reshape(batch + (n * n, n)) @ gamma.reshape(batch + (n, n * n))).reshape(batch + (n,) * 4)
    quad = np.einsum("...hjki->...kjih", quad)
    riemann = term - np.swapaxes(term, -4, -3) + quad - np.swapaxes(quad, -4, -3)
    ricci = np.einsum("...jkik->...ji", riemann)
    scalar = np.einsum("...ji,...ji->...", ginv, ricci)
    pack = CurvaturePack(g, ginv, gamma, riemann, ricci, scalar, None)
    if n >= 4:
        pack = CurvaturePack(g, ginv, gamma, riemann, ricci, scalar, weyl(pack, n))
    return pack


def _kulkarni_delta(a: np.ndarray, n: int) -> np.ndarray:
    """a_ki delta_j^h - a_ji delta_k^h laid out as [..., k, j, i, h]."""
    delta = np.eye(n)
    t = a[..., :, None, :, None] * delta[:, None, :]
    return t - np.swapaxes(t, -4, -3)


def weyl(pack: CurvaturePack, n: int) -> np.ndarray:
    """Trace-free part of the (1,3) curvature.

    C = R - (Ric_ki d_j^h - Ric_ji d_k^h + g_ki Ric_j^h - g_ji Ric_k^h)/(n-2)
          + scal (g_ki d_j^h - g_ji d_k^h) / ((n-1)(n-2)),
    with block signs fixed by requiring C = 0 for constant curvature.
    """
    if n < 4:
        raise ValueError("Weyl identically zero below dimension 4 is out of scope")
    g, ricci, scalar = pack.g, pack.ricci, pack.scalar
    ric_up = np.einsum("...jm,...mh->...jh", ricci, pack.ginv)
    t = g[..., :, None, :, None] * ric_up[..., None, :, None, :]
    mixed = _kulkarni_delta(ricci, n) + t - np.swapaxes(t, -4, -3)
    pure = _kulkarni_delta(g, n)
    return (
        pack.riemann
        - mixed / (n - 2)
        + scalar[..., None, None, None, None] * pure / ((n - 1) * (n - 2))
    )


def curvature_at(g: MetricField, pts) -> CurvaturePack:
    return curvature_pack(metric_jets(g, pts))


def weyl_traces(pack: CurvaturePack) -> list[np.ndarray]:
    """Every single trace of the Weyl tensor (indices lowered with g)."""
    C = pack.weyl
    low = np.einsum("...kjim,...mh->...kjih", C, pack.g)
    gi = pack.ginv
    return [
        np.einsum("...kjih,...kj->...ih", low, gi),
        np.einsum("...kjih,...ki->...jh", low, gi),
        np.einsum("...kjih,...kh->...ji", low, gi),
        np.einsum("...kjih,...ji->...kh", low, gi),
        np.einsum("...kjih,...jh->...ki", low, gi),
        np.einsum("...kjih,...ih->...kj", low, gi),
    ]
