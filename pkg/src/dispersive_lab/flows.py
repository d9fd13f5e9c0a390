"""Linear dispersive propagators and the Duhamel integral.

Each family is a linear equation ``u_t + L u = 0`` whose Fourier side is
``û_t = i ω(ξ) û``; the propagator is therefore ``e^{i t ω(ξ)}``.

=======  ======================  =======================  ==================
family   L                       symbol of L              ω(ξ)
=======  ======================  =======================  ==================
airy     ∂_x³                    (iξ)³ = -iξ³             ξ³
bo       ℋ ∂_x²                  (-i sgn ξ)(-ξ²) = iξ|ξ|  -ξ|ξ|
gbo(α)   D_x^{1+α} ∂_x           iξ|ξ|^{1+α}              -ξ|ξ|^{1+α}
=======  ======================  =======================  ==================

The table is not trusted blindly: :func:`flow_residual` applies L through the
physical operators of :mod:`spectral_core` and compares with a centered time
difference of the propagated field.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .lp_besov import SpacetimeField, TimeGrid, lp_norm_array
from .spectral_core import (
    Grid,
    RealField,
    apply_symbol,
    abs_power_symbol,
    derivative_symbol,
    hilbert_symbol,
)

FAMILIES = ("airy", "bo", "gbo")


@dataclass(frozen=True)
class DispersionModel:
    """Choice of linear flow; ``alpha`` is used by the gbo family only."""

    family: str
    alpha: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "gbo":
            if not 0 <= self.alpha <= 1:
                raise ValueError(f"gbo needs alpha in [0, 1], got {self.alpha}")
        else:
            object.__setattr__(self, "alpha", 1.0 if self.family == "airy" else 0.0)
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def airy(cls) -> "DispersionModel":
        return cls("airy")

    @classmethod
    def bo(cls) -> "DispersionModel":
        return cls("bo")

    @classmethod
    def gbo(cls, alpha: float) -> "DispersionModel":
        return cls("gbo", alpha)

    @property
    def label(self) -> str:
        return f"gbo({self.alpha:g})" if self.family == "gbo" else self.family

    @property
    def bilinear_exponent(self) -> float:
        """Expected decay e in ‖u_μ u_λ‖ ≲ λ^{-e}: 1 (airy), (1+α)/2 (bo, gbo)."""
        return 1.0 if self.family == "airy" else (1 + self.alpha) / 2

    def omega(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if self.family == "airy":
            return xi ** 3
        a = np.abs(xi)
        if self.family == "bo":
            return -xi * a
        return -xi * a ** (1 + self.alpha)

    def propagator_symbol(self, t, xi) -> np.ndarray:
        return np.exp(1j * np.multiply.outer(np.asarray(t, dtype=float), self.omega(xi)))

    def grid_omega(self, grid: Grid) -> np.ndarray:
        """ω on the grid, set to zero at Nyquist.

        ω is odd and the Nyquist mode is its own mirror, so the only
        real-preserving unimodular choice there is the trivial phase.
        """
        w = self.omega(grid.wavenumbers)
        w[grid.nyquist_index] = 0.0
        return w

    def grid_propagator(self, grid: Grid, t) -> np.ndarray:
        return np.exp(1j * np.multiply.outer(np.asarray(t, dtype=float), self.grid_omega(grid)))

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "gbo":
            d["alpha"] = self.alpha
        return d


def apply_linear_operator(model: DispersionModel, grid: Grid, values: np.ndarray) -> np.ndarray:
    """L u built by composing ∂_x, ℋ and D_x^s, independent of ``model.omega``."""
    if model.family == "airy":
        return apply_symbol(grid, values, derivative_symbol(grid, 3))
    if model.family == "bo":
        uxx = apply_symbol(grid, values, derivative_symbol(grid, 2))
        return apply_symbol(grid, uxx, hilbert_symbol(grid))
    ux = apply_symbol(grid, values, derivative_symbol(grid, 1))
    return apply_symbol(grid, ux, abs_power_symbol(grid, 1 + model.alpha))


# ---------------------------------------------------------------------------
# propagation


def propagate_array(grid: Grid, values: np.ndarray, t, model: DispersionModel) -> np.ndarray:
    """U(t) applied to real samples; a vector of times returns stacked frames."""
    c = np.fft.fft(values, axis=-1)
    return np.fft.ifft(c * model.grid_propagator(grid, t), axis=-1).real


def linear_propagate(phi: RealField, t: float, model: DispersionModel) -> RealField:
    return RealField(phi.grid, propagate_array(phi.grid, phi.values, t, model), float(t))


def flow_trajectory(phi: RealField, model: DispersionModel, time_grid: TimeGrid) -> SpacetimeField:
    """frames[k] = U(t_k) φ."""
    vals = propagate_array(phi.grid, phi.values, time_grid.nodes, model)
    return SpacetimeField(phi.grid, time_grid, vals)


Source = Union[Callable[[float], Union[RealField, np.ndarray]], SpacetimeField, np.ndarray]


def _source_values(F, tau: float, k: Optional[int] = None) -> np.ndarray:
    if isinstance(F, SpacetimeField):
        return F.values[k]
    if isinstance(F, np.ndarray):
        return F[k]
    out = F(tau)
    return out.values if isinstance(out, RealField) else np.asarray(out, dtype=float)


def duhamel(
    phi: RealField,
    F: Callable[[float], Union[RealField, np.ndarray]],
    t: float,
    model: DispersionModel,
    quadrature: TimeGrid,
) -> RealField:
    """u(t) = U(t)φ - ∫_0^t U(t-τ) F(τ) dτ by the given quadrature.

    The quadrature rule is mapped affinely onto [0, t], so any TimeGrid can be
    reused for every t.  The integral is accumulated in the interaction
    picture, ``∫ e^{-iτω} F̂(τ) dτ``, then propagated once.
    """
    grid = phi.grid
    if t == 0:
        return RealField(grid, np.array(phi.values), 0.0)
    scale = t / quadrature.horizon
    omega = model.grid_omega(grid)
    acc = np.fft.fft(phi.values).astype(complex)
    for tau, w in zip(quadrature.nodes * scale, quadrature.weights * scale):
        f = _source_values(F, float(tau))
        acc -= w * np.exp(-1j * tau * omega) * np.fft.fft(f)
    vals = np.fft.ifft(acc * np.exp(1j * t * omega)).real
    return RealField(grid, vals, float(t))


def duhamel_trajectory(
    phi: RealField, F: Source, model: DispersionModel, time_grid: TimeGrid
) -> SpacetimeField:
    """u(t_k) = U(t_k)φ - ∫_0^{t_k} U(t_k-τ)F(τ)dτ at every uniform node.

    The τ-integral is the composite trapezoid on nodes 0..k, exactly what
    :func:`duhamel` computes with a k-step trapezoid rule, but accumulated as a
    running sum so the whole trajectory costs O(n_nodes) transforms.
    ``F`` may be a callable, a SpacetimeField, or an array of frames.
    """
    if not time_grid.uniform:
        raise ValueError("duhamel_trajectory needs uniform (trapezoid) nodes")
    grid = phi.grid
    omega = model.grid_omega(grid)
    nodes, h = time_grid.nodes, time_grid.step
    phi_hat = np.fft.fft(phi.values)
    frames = np.empty((len(nodes), grid.n_points))
    frames[0] = phi.values
    acc = np.zeros(grid.n_points, dtype=complex)
    g_prev = np.fft.fft(_source_values(F, float(nodes[0]), 0))
    for k in range(1, len(nodes)):
        tk = float(nodes[k])
        g_k = np.exp(-1j * tk * omega) * np.fft.fft(_source_values(F, tk, k))
        acc += 0.5 * h * (g_prev + g_k)
        g_prev = g_k
        frames[k] = np.fft.ifft(np.exp(1j * tk * omega) * (phi_hat - acc)).real
    return SpacetimeField(grid, time_grid, frames)


# ---------------------------------------------------------------------------
# residual oracle


def flow_residual(phi: RealField, model: DispersionModel, t: float, h: float) -> float:
    """‖(u(t+h) - u(t-h))/2h + L u(t)‖_{L²} relative to ‖L u(t)‖_{L²}."""
    grid = phi.grid
    u = propagate_array(grid, phi.values, np.array([t - h, t, t + h]), model)
    Lu = apply_linear_operator(model, grid, u[1])
    r = (u[2] - u[0]) / (2 * h) + Lu
    ref = lp_norm_array(Lu, grid.dx, 2)
    return float(lp_norm_array(r, grid.dx, 2) / max(ref, 1e-300))


def observed_orders(steps, errors) -> np.ndarray:
    """Successive log-ratio orders log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(steps[:-1] / steps[1:])


def residual_order_study(
    phi: RealField, model: DispersionModel, t: float = 0.1, h0: float = 1e-2, levels: int = 4
) -> dict:
    hs = [h0 / 2 ** j for j in range(levels)]
    res = [flow_residual(phi, model, t, h) for h in hs]
    return {"steps": hs, "residuals": res, "orders": observed_orders(hs, res).tolist()}
