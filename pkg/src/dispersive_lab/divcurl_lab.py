"""Flux systems in conservation form and the div-curl pairing.

A :class:`FluxPair` holds two systems

    ∂_t f11 + ∂_x f12 = g1,        ∂_t f21 - ∂_x f22 = g2,

sampled on a uniform time grid.  The pairing ∫∫ f11 f22 + f12 f21 is what the
div-curl inequality controls by the L¹ sizes of f11, f21 and the sources.

Periodic antiderivatives: ``∫_{-∞}^x`` has no meaning on the torus, so it is
replaced by the spectral antiderivative of a mean-free integrand, shifted to
vanish at the left endpoint x = -L/2.  The integrands met here are mean-free
because ℋ is skew-adjoint; a nonzero mean raises :class:`NonZeroMeanIntegrand`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .bilinear_lab import bilinear_norm
from .errors import NonZeroMeanIntegrand
from .flows import DispersionModel, observed_orders, propagate_array
from .lp_besov import SpacetimeField, TimeGrid, lp_norm_array, spacetime_norm
from .wellposed import cubic_array
from .spectral_core import (
    Grid,
    RealField,
    abs_power_symbol,
    apply_symbol,
    block_symbol,
    dealiased_product,
    derivative_symbol,
    spatial_derivative,
    translate,
)

EPS = 1e-300
#: integrand means above this (relative to the mean of |integrand|) are rejected
MEAN_TOL = 1e-10


def _d(grid: Grid, v: np.ndarray, order: int = 1) -> np.ndarray:
    return apply_symbol(grid, v, derivative_symbol(grid, order))


def _D(grid: Grid, v: np.ndarray) -> np.ndarray:
    return apply_symbol(grid, v, abs_power_symbol(grid, 1.0))


def _mul(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return dealiased_product(grid, a, b, pad=2)


@dataclass(frozen=True, eq=False)
class FluxPair:
    f11: SpacetimeField
    f12: SpacetimeField
    f21: SpacetimeField
    f22: SpacetimeField
    g1: SpacetimeField
    g2: SpacetimeField

    @property
    def grid(self) -> Grid:
        return self.f11.grid

    @property
    def time_grid(self) -> TimeGrid:
        return self.f11.time_grid

    def rows(self):
        """(density, flux, source, flux sign) for the two systems."""
        return ((self.f11, self.f12, self.g1, 1.0), (self.f21, self.f22, self.g2, -1.0))

    def residuals(self) -> dict:
        """Centered-in-time conservation residuals on interior nodes.

        Each row reports the absolute L²_{t,x} residual and its size relative
        to ‖∂_x flux‖ on the same nodes.
        """
        tg = self.time_grid
        h = tg.step
        out = {}
        for name, (rho, flux, src, sgn) in zip(("row1", "row2"), self.rows()):
            dt = (rho.values[2:] - rho.values[:-2]) / (2 * h)
            dxf = _d(self.grid, flux.values[1:-1])
            r = dt + sgn * dxf - src.values[1:-1]
            nr = np.sqrt(np.sum(r * r) * h * self.grid.dx)
            ns = np.sqrt(np.sum(dxf * dxf) * h * self.grid.dx)
            out[name] = {"absolute": float(nr), "relative": float(nr / max(ns, EPS))}
        return out

    def swapped(self) -> "FluxPair":
        """Exchange the rows (f21, -f22) <-> (f11, -f12), which negates the pairing."""
        neg = lambda f: f * -1.0  # noqa: E731
        return FluxPair(self.f21, neg(self.f22), self.f11, neg(self.f12), self.g2, self.g1)


def _zeros_like(f: SpacetimeField) -> SpacetimeField:
    return SpacetimeField.zeros(f.grid, f.time_grid)


def _st(grid, tg, v) -> SpacetimeField:
    return SpacetimeField(grid, tg, v)


def _airy_rows(grid: Grid, um: np.ndarray, ul: np.ndarray):
    def energy_flux(u):
        return _mul(grid, u, _d(grid, u, 2)) - 0.5 * _mul(grid, _d(grid, u), _d(grid, u))

    return 0.5 * _mul(grid, um, um), energy_flux(um), 0.5 * _mul(grid, ul, ul), -energy_flux(ul)


def airy_flux_pair(phi_mu: RealField, phi_lam: RealField, T: float, steps: int) -> FluxPair:
    """f11 = u_μ²/2, f12 = u_μ ∂²u_μ - (∂u_μ)²/2, f21 = u_λ²/2, f22 = -(u_λ ∂²u_λ - (∂u_λ)²/2)."""
    grid, tg = phi_mu.grid, TimeGrid(T, steps)
    airy = DispersionModel.airy()
    um = propagate_array(grid, phi_mu.values, tg.nodes, airy)
    ul = propagate_array(grid, phi_lam.values, tg.nodes, airy)
    f11, f12, f21, f22 = (_st(grid, tg, v) for v in _airy_rows(grid, um, ul))
    z = _zeros_like(f11)
    return FluxPair(f11, f12, f21, f22, z, z)


def periodic_antiderivative(grid: Grid, g: np.ndarray, tol: float = MEAN_TOL) -> np.ndarray:
    """Zero-mean spectral antiderivative of g, shifted to vanish at x = -L/2.

    Works along the last axis.  Raises :class:`NonZeroMeanIntegrand` when the
    mean of g exceeds ``tol`` relative to the mean of |g| (floored at 1).
    """
    g = np.asarray(g, dtype=float)
    mean = g.mean(axis=-1)
    scale = np.maximum(np.abs(g).mean(axis=-1), 1.0)
    worst = float(np.max(np.abs(mean) / scale))
    if worst > tol:
        raise NonZeroMeanIntegrand(f"integrand mean {worst:.3e} exceeds {tol:.1e}")
    xi = grid.wavenumbers
    inv = np.zeros(grid.n_points, dtype=complex)
    nz = xi != 0
    inv[nz] = 1.0 / (1j * xi[nz])
    inv[grid.nyquist_index] = 0.0
    G = np.fft.ifft(np.fft.fft(g, axis=-1) * inv, axis=-1).real
    return G - G[..., :1]


def hilbert_integrand(grid: Grid, u: np.ndarray) -> np.ndarray:
    """∂_x u · D_x u, mean-free by skew-adjointness of ℋ."""
    return _mul(grid, _d(grid, u), _D(grid, u))


def bo_flux_pair(phi_mu: RealField, phi_lam: RealField, T: float, steps: int) -> FluxPair:
    """System (u_λ D u_λ, (Du_λ)²/2 - u_λ∂²u_λ + (∂u_λ)²/2) and (u_μ²/2, -(u_μ Du_μ - q)).

    q is the periodic antiderivative of ∂_x u_μ · D_x u_μ.
    """
    grid, tg = phi_mu.grid, TimeGrid(T, steps)
    bo = DispersionModel.bo()
    um = propagate_array(grid, phi_mu.values, tg.nodes, bo)
    ul = propagate_array(grid, phi_lam.values, tg.nodes, bo)
    Dl, dl = _D(grid, ul), _d(grid, ul)
    f11 = _mul(grid, ul, Dl)
    f12 = 0.5 * _mul(grid, Dl, Dl) - _mul(grid, ul, _d(grid, ul, 2)) + 0.5 * _mul(grid, dl, dl)
    f21 = 0.5 * _mul(grid, um, um)
    q = periodic_antiderivative(grid, hilbert_integrand(grid, um))
    f22 = -(_mul(grid, um, _D(grid, um)) - q)
    f11s = _st(grid, tg, f11)
    z = _zeros_like(f11s)
    return FluxPair(f11s, _st(grid, tg, f12), _st(grid, tg, f21), _st(grid, tg, f22), z, z)


def integrand_mean(grid: Grid, phi: RealField) -> float:
    """|mean(∂_x φ · D_x φ)|, which vanishes for real φ."""
    return float(abs(np.mean(hilbert_integrand(grid, phi.values))))


def qa_profile(u_mu: RealField, a: float) -> RealField:
    """q_a(x) = ∫^x ∂_y u^a D_y u^a dy for the translate u^a(x) = u(x - a)."""
    ua = translate(u_mu, a)
    g = hilbert_integrand(u_mu.grid, ua.values)
    return RealField(u_mu.grid, periodic_antiderivative(u_mu.grid, g), u_mu.time_tag)


def forced_flux_pair(
    picard_iterates,
    mu: float,
    lam: float,
    k: Optional[int] = None,
    coefficient: Optional[float] = None,
) -> FluxPair:
    """Energy systems for u_μ^{(k)}, u_λ^{(k)} with the Picard sources.

    ∂_t(u_σ²/2) + ∂_x(u_σ∂²u_σ - (∂u_σ)²/2) = -u_σ P_σ N(u^{(k-1)}),   σ ∈ {μ, λ},

    where N(v) = c ∂_x(v³).  ``picard_iterates`` is a PicardTrace or a list of
    SpacetimeField iterates; ``coefficient`` defaults to the trace's sign.
    """
    iterates = getattr(picard_iterates, "iterates", picard_iterates)
    if coefficient is None:
        coefficient = getattr(picard_iterates, "coefficient", 1.0)
    k = len(iterates) - 1 if k is None else k
    if k < 1:
        raise ValueError("the forced system needs an iterate k >= 1 and its predecessor")
    uk, prev = iterates[k], iterates[k - 1]
    grid, tg = uk.grid, uk.time_grid
    um = apply_symbol(grid, uk.values, block_symbol(grid, mu))
    ul = apply_symbol(grid, uk.values, block_symbol(grid, lam))
    nl = cubic_array(grid, prev.values, coefficient)
    src_m = -_mul(grid, um, apply_symbol(grid, nl, block_symbol(grid, mu)))
    src_l = -_mul(grid, ul, apply_symbol(grid, nl, block_symbol(grid, lam)))
    f11, f12, f21, f22 = (_st(grid, tg, v) for v in _airy_rows(grid, um, ul))
    return FluxPair(f11, f12, f21, f22, _st(grid, tg, src_m), _st(grid, tg, src_l))


def holder_check(picard_iterates, mu: float, k: Optional[int] = None, coefficient=None) -> dict:
    """‖u_μ^{(k)} P_μ N(u^{(k-1)})‖_{L¹_{t,x}} ≤ ‖u_μ^{(k)}‖_{L^8_tL^4_x} ‖P_μ N‖_{L^{8/7}_tL^{4/3}_x}."""
    iterates = getattr(picard_iterates, "iterates", picard_iterates)
    if coefficient is None:
        coefficient = getattr(picard_iterates, "coefficient", 1.0)
    k = len(iterates) - 1 if k is None else k
    uk, prev = iterates[k], iterates[k - 1]
    grid, tg = uk.grid, uk.time_grid
    um = apply_symbol(grid, uk.values, block_symbol(grid, mu))
    pn = apply_symbol(grid, cubic_array(grid, prev.values, coefficient), block_symbol(grid, mu))
    lhs = spacetime_norm(_st(grid, tg, um * pn), 1, 1)
    rhs = spacetime_norm(_st(grid, tg, um), 8, 4) * spacetime_norm(_st(grid, tg, pn), 8 / 7, 4 / 3)
    return {"lhs": lhs, "rhs": rhs, "gap": rhs - lhs}


# ---------------------------------------------------------------------------
# pairing, identity, inequality


def divcurl_pairing(pair: FluxPair) -> float:
    """∫_0^T ∫ f11 f22 + f12 f21 dx dt with the pair's time quadrature."""
    v = pair.f11.values * pair.f22.values + pair.f12.values * pair.f21.values
    per_frame = np.sum(v, axis=-1) * pair.grid.dx
    return float(np.sum(pair.time_grid.weights * per_frame))


def bilinear_identity_check(
    phi_mu: RealField,
    phi_lam: RealField,
    T: float,
    steps: int,
    reference_method: str = "exact",
) -> dict:
    """Pairing of the Airy pair against (3/4)(‖u_μ∂u_λ‖² - ‖u_λ∂u_μ‖²).

    The pairing is a trapezoid sum over frames.  The reference is computed
    independently by the bilinear norm: with ``"exact"`` the time integral is
    closed form, so the gap measures the quadrature error of the pairing;
    with ``"frames"`` both sides share the frames and the gap is pure rounding.
    """
    pairing = divcurl_pairing(airy_flux_pair(phi_mu, phi_lam, T, steps))
    airy = DispersionModel.airy()
    a = bilinear_norm(phi_mu, spatial_derivative(phi_lam), airy, T, steps, reference_method)
    b = bilinear_norm(phi_lam, spatial_derivative(phi_mu), airy, T, steps, reference_method)
    reference = 0.75 * (a * a - b * b)
    gap = abs(pairing - reference) / max(abs(reference), EPS)
    return {"pairing": pairing, "reference": reference, "relative_gap": gap}


def identity_refinement(phi_mu, phi_lam, T: float, steps: Sequence[int]) -> dict:
    rows = [bilinear_identity_check(phi_mu, phi_lam, T, n) for n in steps]
    gaps = [r["relative_gap"] for r in rows]
    hs = [T / n for n in steps]
    return {"steps": list(steps), "gaps": gaps, "orders": observed_orders(hs, gaps).tolist()}


def _l1_profile(f: SpacetimeField) -> np.ndarray:
    return lp_norm_array(f.values, f.grid.dx, 1)


def divcurl_inequality_check(pair: FluxPair) -> dict:
    """lhs = pairing; rhs = Π_rows (‖ρ(0)‖_{L¹} + ‖ρ‖_{L^∞_tL¹_x} + ‖g‖_{L¹_{t,x}})."""
    lhs = divcurl_pairing(pair)
    factors = []
    for rho, _, src, _ in pair.rows():
        prof = _l1_profile(rho)
        factors.append(float(prof[0] + prof.max() + spacetime_norm(src, 1, 1)))
    rhs = factors[0] * factors[1]
    return {
        "lhs": lhs,
        "rhs": rhs,
        "row_factors": factors,
        "empirical_constant": abs(lhs) / rhs if rhs > 0 else 0.0,
    }


def flux_order_study(build: Callable[[int], FluxPair], steps: Sequence[int]) -> dict:
    """Residuals and observed temporal orders as the number of time steps grows."""
    res = {"row1": [], "row2": []}
    for n in steps:
        r = build(n).residuals()
        for row in res:
            res[row].append(r[row]["absolute"])
    hs = [1.0 / n for n in steps]
    out = {"steps": list(steps)}
    for row, vals in res.items():
        out[row] = vals
        ok = all(v > 0 for v in vals)
        out[f"{row}_orders"] = observed_orders(hs, vals).tolist() if ok else []
    return out
