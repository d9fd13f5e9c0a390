"""Lebesgue, mixed spacetime, Sobolev and Besov norms, plus S(T) and N(T).

Spatial norms are grid quadratures (``Σ |f|^p dx``); time integrals use the
weights of a :class:`TimeGrid`.  Besov norms are the inhomogeneous two-term
expression

    ‖f‖_{B^s_{p,q}} = ‖S_1 f‖_{L^p} + ( Σ_{λ >= 1} (λ^s ‖P_λ f‖_{L^p})^q )^{1/q},

truncated at the largest λ the grid resolves; that truncation is reported as
``lam_max`` alongside every :class:`NormResult`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .spectral_core import (
    S1_BLOCK,
    Grid,
    RealField,
    block_table,
    spectrum,
)

INF = float("inf")


@dataclass(frozen=True)
class TimeGrid:
    """Quadrature on [0, T].

    ``rule="trapezoid"`` uses ``n_steps + 1`` uniform nodes including both
    endpoints; ``rule="gauss"`` uses ``n_steps`` Gauss-Legendre nodes.
    """

    horizon: float
    n_steps: int
    rule: str = "trapezoid"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be >= 1")
        if self.rule not in ("trapezoid", "gauss"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @cached_property
    def _rule(self) -> tuple[np.ndarray, np.ndarray]:
        T, n = self.horizon, self.n_steps
        if self.rule == "trapezoid":
            t = np.linspace(0.0, T, n + 1)
            w = np.full(n + 1, T / n)
            w[0] = w[-1] = 0.5 * T / n
        else:
            z, wz = np.polynomial.legendre.leggauss(n)
            t, w = 0.5 * T * (z + 1), 0.5 * T * wz
        t.setflags(write=False)
        w.setflags(write=False)
        return t, w

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        return self._rule[1]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def uniform(self) -> bool:
        return self.rule == "trapezoid"

    @property
    def step(self) -> float:
        if not self.uniform:
            raise ValueError("Gauss-Legendre nodes have no uniform step")
        return self.horizon / self.n_steps

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor, self.rule)

    def meta(self) -> dict:
        return {"horizon": self.horizon, "n_steps": self.n_steps, "rule": self.rule}


@dataclass(frozen=True, eq=False)
class SpacetimeField:
    """Frames u(t_k, x_j) stored as a read-only array of shape (n_nodes, n_points)."""

    grid: Grid
    time_grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.time_grid.n_nodes, self.grid.n_points)
        if v.shape != expected:
            raise ValueError(f"expected frames of shape {expected}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory contains non-finite values")
        if v.flags.writeable or not v.flags.c_contiguous:
            v = np.ascontiguousarray(v).copy()
            v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_frames(cls, frames: Sequence[RealField], time_grid: TimeGrid) -> "SpacetimeField":
        grids = {f.grid for f in frames}
        if len(grids) != 1:
            raise ValueError("all frames must share one grid")
        return cls(frames[0].grid, time_grid, np.stack([f.values for f in frames]))

    @classmethod
    def zeros(cls, grid: Grid, time_grid: TimeGrid) -> "SpacetimeField":
        return cls(grid, time_grid, np.zeros((time_grid.n_nodes, grid.n_points)))

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    def frame(self, k: int) -> RealField:
        return RealField(self.grid, self.values[k], float(self.time_grid.nodes[k]))

    @property
    def frames(self) -> list[RealField]:
        return [self.frame(k) for k in range(self.n_frames)]

    def with_values(self, values) -> "SpacetimeField":
        return SpacetimeField(self.grid, self.time_grid, values)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(float(c) * self.values)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# array kernels


def lp_norm_array(values: np.ndarray, dx: float, p: float) -> np.ndarray:
    """Grid L^p norm along the last axis."""
    a = np.abs(values)
    if p == INF:
        return a.max(axis=-1)
    if p == 2:
        return np.sqrt(np.sum(a * a, axis=-1) * dx)
    return (np.sum(a ** p, axis=-1) * dx) ** (1.0 / p)


def time_lq(profile: np.ndarray, time_grid: TimeGrid, q: float) -> float:
    """Outer L^q_t of a per-node profile."""
    profile = np.asarray(profile, dtype=float)
    if q == INF:
        return float(profile.max()) if profile.size else 0.0
    return float(np.sum(time_grid.weights * profile ** q) ** (1.0 / q))


def _lq_sequence(terms: np.ndarray, q: float) -> np.ndarray:
    if q == INF:
        return terms.max(axis=-1)
    return np.sum(terms ** q, axis=-1) ** (1.0 / q)


def besov_profile(
    grid: Grid, values: np.ndarray, s: float, p: float, q: float
) -> tuple[np.ndarray, float]:
    """B^s_{p,q} norm of each row of ``values`` and the truncation λ_max.

    One forward FFT per row; each resolved block is synthesized from the
    shared spectrum.
    """
    _check_exponent(p, "p")
    _check_exponent(q, "q")
    lams, table = block_table(grid)
    coeffs = np.fft.fft(values, axis=-1)
    low = None
    dyadic = []
    for lam, sym in zip(lams, table):
        block = np.fft.ifft(coeffs * sym, axis=-1).real
        nrm = lp_norm_array(block, grid.dx, p)
        if lam == S1_BLOCK:
            low = nrm
        else:
            dyadic.append(lam ** s * nrm)
    if dyadic:
        high = _lq_sequence(np.stack(dyadic, axis=-1), q)
    else:
        high = np.zeros_like(low)
    lam_max = max(lams[1:]) if len(lams) > 1 else 0.0
    return low + high, float(lam_max)


def _check_exponent(p, name):
    if not (p == INF or p >= 1):
        raise ValueError(f"{name} must lie in [1, inf], got {p}")


# ---------------------------------------------------------------------------
# field-level norms


def lebesgue_norm(f: RealField, p: float) -> float:
    _check_exponent(p, "p")
    return float(lp_norm_array(f.values, f.grid.dx, p))


def spacetime_norm(u: SpacetimeField, q: float, p: float) -> float:
    """‖u‖_{L^q_t L^p_x} with the inner norm per frame and time quadrature outside."""
    _check_exponent(p, "p")
    _check_exponent(q, "q")
    return time_lq(lp_norm_array(u.values, u.grid.dx, p), u.time_grid, q)


def sobolev_array(grid: Grid, values: np.ndarray, s: float) -> np.ndarray:
    c = spectrum(grid, values)
    w = (1.0 + grid.wavenumbers ** 2) ** s
    return np.sqrt(np.sum(w * np.abs(c) ** 2, axis=-1) / grid.length)


def sobolev_norm(f: RealField, s: float) -> float:
    """(1/L Σ (1+ξ²)^s |û(ξ)|²)^{1/2}; equals the L² norm at s = 0."""
    return float(sobolev_array(f.grid, f.values, s))


def besov_norm(f: RealField, s: float, p: float, q: float) -> float:
    value, _ = besov_profile(f.grid, f.values, s, p, q)
    return float(value)


# ---------------------------------------------------------------------------
# S(T) and N(T)


@dataclass(frozen=True)
class ExponentSet:
    """Regularity indices attached to the dispersion exponent α.

    s = 1/2 - α/4 for the energy part, r = 1/2 - α/8 for the L^8_t B^r_{4,2}
    Strichartz part and r* = 1/2 - 3α/8 for the dual L^{8/7}_t B^{r*}_{4/3,2}.
    α = 1 gives (1/4, 3/8, 1/8); α = 0 gives (1/2, 1/2, 1/2).
    """

    alpha: float

    @property
    def s(self) -> float:
        return 0.5 - self.alpha / 4

    @property
    def r(self) -> float:
        return 0.5 - self.alpha / 8

    @property
    def r_star(self) -> float:
        return 0.5 - 3 * self.alpha / 8

    @classmethod
    def for_variant(cls, variant) -> "ExponentSet":
        if isinstance(variant, ExponentSet):
            return variant
        if isinstance(variant, str):
            key = variant.lower()
            if key == "mkdv":
                return cls(1.0)
            if key == "mbo":
                return cls(0.0)
            raise ValueError(f"unknown variant {variant!r}; use 'mkdv', 'mbo' or a number")
        alpha = float(variant)
        if not 0 <= alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        return cls(alpha)


def st_parts(u: SpacetimeField, variant="mkdv") -> tuple[float, float, float]:
    """(L^∞_t H^s part, L^8_t B^r_{4,2} part, λ_max)."""
    ex = ExponentSet.for_variant(variant)
    energy = time_lq(sobolev_array(u.grid, u.values, ex.s), u.time_grid, INF)
    prof, lam_max = besov_profile(u.grid, u.values, ex.r, 4, 2)
    return energy, time_lq(prof, u.time_grid, 8), lam_max


def st_norm(u: SpacetimeField, variant="mkdv") -> float:
    """‖u‖_{S(T)} = ‖u‖_{L^∞_t H^s} + ‖u‖_{L^8_t B^r_{4,2}}."""
    energy, strichartz, _ = st_parts(u, variant)
    return energy + strichartz


def nt_norm(F: SpacetimeField, variant="mkdv") -> float:
    """‖F‖_{N(T)} = ‖F‖_{L^{8/7}_t B^{r*}_{4/3,2}}."""
    ex = ExponentSet.for_variant(variant)
    prof, _ = besov_profile(F.grid, F.values, ex.r_star, 4.0 / 3.0, 2)
    return time_lq(prof, F.time_grid, 8.0 / 7.0)


# ---------------------------------------------------------------------------
# declarative interface


NORM_KINDS = ("lebesgue_p", "spacetime_qp", "sobolev_s", "besov_spq", "S_T", "N_T")


@dataclass(frozen=True)
class NormSpec:
    kind: str
    s: Optional[float] = None
    p: Optional[float] = None
    q: Optional[float] = None
    variant: object = "mkdv"

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        need = {
            "lebesgue_p": ("p",),
            "spacetime_qp": ("p", "q"),
            "sobolev_s": ("s",),
            "besov_spq": ("s", "p", "q"),
        }.get(self.kind, ())
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"{self.kind} needs parameter {name}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if v is not None:
                _check_exponent(v, name)

    def params(self) -> dict:
        out = {k: getattr(self, k) for k in ("s", "p", "q") if getattr(self, k) is not None}
        if self.kind in ("S_T", "N_T"):
            out["alpha"] = ExponentSet.for_variant(self.variant).alpha
        return out

    def evaluate(self, obj) -> "NormResult":
        grid = obj.grid
        lam_max = grid.max_resolved_dyadic()
        if self.kind == "lebesgue_p":
            value = lebesgue_norm(obj, self.p)
        elif self.kind == "spacetime_qp":
            value = spacetime_norm(obj, self.q, self.p)
        elif self.kind == "sobolev_s":
            value = sobolev_norm(obj, self.s)
        elif self.kind == "besov_spq":
            value = besov_norm(obj, self.s, self.p, self.q)
        elif self.kind == "S_T":
            value = st_norm(obj, self.variant)
        else:
            value = nt_norm(obj, self.variant)
        meta = grid.meta()
        if isinstance(obj, SpacetimeField):
            meta["time_grid"] = obj.time_grid.meta()
        return NormResult(self.kind, self.params(), value, lam_max, meta)


def _json_number(v):
    return "inf" if v == INF else v


@dataclass(frozen=True)
class NormResult:
    norm_kind: str
    params: dict
    value: float
    lam_max: float
    grid_meta: dict

    def to_dict(self) -> dict:
        return {
            "norm_kind": self.norm_kind,
            "params": {k: _json_number(v) for k, v in self.params.items()},
            "value": self.value,
            "lam_max": self.lam_max,
            "grid_meta": self.grid_meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
