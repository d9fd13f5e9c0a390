"""Picard iteration for cubic dispersive equations, with diagnostics and oracles.

The equations are

    u_t + L u + c ∂_x(u³) = 0,     u(0) = φ,

with L from a :class:`~dispersive_lab.flows.DispersionModel` and c = ±1
(``nonlinearity_sign``; +1 is the defocusing sign, expanding to +3u²u_x).  The
iteration is

    u^{(0)} = U(t)φ,   u^{(j)}(t) = U(t)φ - ∫_0^t U(t-τ) c ∂_x((u^{(j-1)})³)(τ) dτ,

with the τ-integral taken by the trapezoid rule on the shared time nodes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IterationDiverged, NoContractionFound, StepUnstable
from .flows import DispersionModel, duhamel, duhamel_trajectory, flow_trajectory, observed_orders
from .lp_besov import (
    ExponentSet,
    SpacetimeField,
    TimeGrid,
    lp_norm_array,
    nt_norm,
    sobolev_array,
    sobolev_norm,
    st_norm,
)
from .spectral_core import (
    Grid,
    RealField,
    apply_symbol,
    block_symbol,
    dealiased_product,
    derivative_symbol,
    dyadic_range,
    upsample,
)

DIVERGENCE_GUARD = 10.0
#: difference norms below this fraction of ‖u‖_S are treated as converged to rounding
ROUNDOFF_FLOOR = 1e-13


def cubic_array(grid: Grid, values: np.ndarray, coefficient: float = 1.0) -> np.ndarray:
    """coefficient·∂_x(u³) with the cube formed on a 3x zero-padded grid."""
    if coefficient == 0:
        return np.zeros_like(np.asarray(values, dtype=float))
    cube = dealiased_product(grid, values, values, values, pad=3)
    return coefficient * apply_symbol(grid, cube, derivative_symbol(grid, 1))


@dataclass(frozen=True)
class CubicNonlinearity:
    sign: float = 1.0

    def __call__(self, u: RealField) -> RealField:
        return RealField(u.grid, cubic_array(u.grid, u.values, self.sign), u.time_tag)

    def on_trajectory(self, u: SpacetimeField) -> SpacetimeField:
        return u.with_values(cubic_array(u.grid, u.values, self.sign))


def cubic_nonlinearity(u: RealField, sign: float = 1.0) -> RealField:
    return CubicNonlinearity(sign)(u)


# ---------------------------------------------------------------------------
# Picard iteration


@dataclass(frozen=True, eq=False)
class PicardConfig:
    model: DispersionModel
    phi: RealField
    T: float
    n_steps: int = 64
    max_iterations: int = 6
    nonlinearity_sign: float = 1.0
    duhamel_mode: str = "cumulative"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.max_iterations < 2:
            raise ValueError("max_iterations must be >= 2")
        if self.nonlinearity_sign not in (1, -1, 1.0, -1.0):
            raise ValueError("nonlinearity_sign must be +1 or -1")
        if self.duhamel_mode not in ("cumulative", "per_node"):
            raise ValueError("duhamel_mode must be 'cumulative' or 'per_node'")

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.n_steps)

    @property
    def exponents(self) -> ExponentSet:
        return ExponentSet(self.model.alpha)

    def with_horizon(self, T: float, max_iterations: Optional[int] = None) -> "PicardConfig":
        return PicardConfig(
            self.model, self.phi, T, self.n_steps,
            self.max_iterations if max_iterations is None else max_iterations,
            self.nonlinearity_sign, self.duhamel_mode,
        )

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "T": self.T,
            "n_steps": self.n_steps,
            "max_iterations": self.max_iterations,
            "nonlinearity_sign": self.nonlinearity_sign,
            "grid": self.grid.meta(),
            "duhamel_mode": self.duhamel_mode,
        }


@dataclass(eq=False)
class PicardTrace:
    config: PicardConfig
    iterates: list = field(default_factory=list)
    s_norms: list = field(default_factory=list)
    n_norms: list = field(default_factory=list)
    difference_norms: list = field(default_factory=list)
    difference_ratios: list = field(default_factory=list)
    diverged: bool = False

    @property
    def coefficient(self) -> float:
        return float(self.config.nonlinearity_sign)

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    def finite_ratios(self) -> list:
        return [r for r in self.difference_ratios if r is not None]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "iterations": self.iterations,
            "s_norms": self.s_norms,
            "n_norms": self.n_norms,
            "difference_norms": self.difference_norms,
            "difference_ratios": self.difference_ratios,
            "diverged": self.diverged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _duhamel_per_node(phi: RealField, source: SpacetimeField, model, tg: TimeGrid) -> SpacetimeField:
    frames = [phi.values]
    for k in range(1, tg.n_nodes):
        sub = TimeGrid(tg.nodes[k], k)
        frames.append(duhamel(phi, lambda tau: source.values[round(tau / tg.step)], tg.nodes[k],
                              model, sub).values)
    return SpacetimeField(phi.grid, tg, np.stack(frames))


def picard_map(cfg: PicardConfig, u: SpacetimeField) -> SpacetimeField:
    """Φ(u) = U(t)φ - ∫_0^t U(t-τ) c∂_x(u³)(τ) dτ on the configuration's nodes."""
    source = CubicNonlinearity(cfg.nonlinearity_sign).on_trajectory(u)
    if cfg.duhamel_mode == "per_node":
        return _duhamel_per_node(cfg.phi, source, cfg.model, cfg.time_grid)
    return duhamel_trajectory(cfg.phi, source, cfg.model, cfg.time_grid)


def picard_iterate(cfg: PicardConfig) -> PicardTrace:
    """Run u^{(0)}, ..., u^{(J)} and record S(T)/N(T) norms and difference ratios.

    A ratio ‖u^{(j+2)} - u^{(j+1)}‖_S / ‖u^{(j+1)} - u^{(j)}‖_S whose
    denominator has fallen to rounding level is recorded as ``None``.  A ratio
    above the divergence guard raises :class:`IterationDiverged` with the
    partial trace attached.
    """
    variant = cfg.exponents
    trace = PicardTrace(cfg)
    u = flow_trajectory(cfg.phi, cfg.model, cfg.time_grid)
    nonlin = CubicNonlinearity(cfg.nonlinearity_sign)

    def record(u):
        trace.iterates.append(u)
        trace.s_norms.append(st_norm(u, variant))
        trace.n_norms.append(nt_norm(nonlin.on_trajectory(u), variant))

    record(u)
    for _ in range(cfg.max_iterations):
        new = picard_map(cfg, u)
        d = st_norm(new - u, variant)
        trace.difference_norms.append(d)
        record(new)
        u = new
        if len(trace.difference_norms) >= 2:
            prev = trace.difference_norms[-2]
            floor = ROUNDOFF_FLOOR * max(trace.s_norms[-1], 1e-300)
            ratio = None if prev <= floor or d <= floor else d / prev
            trace.difference_ratios.append(ratio)
            if ratio is not None and ratio > DIVERGENCE_GUARD:
                trace.diverged = True
                raise IterationDiverged(
                    f"difference ratio {ratio:.3g} exceeds {DIVERGENCE_GUARD:g}", trace
                )
    return trace


def _block_pairs(grid: Grid) -> list:
    lam_max = grid.max_resolved_dyadic()
    lams = dyadic_range(1.0, lam_max) if lam_max >= 1 else []
    return [(m, v) for m in lams for v in lams if v >= 4 * m]


def iterate_bilinear_ratios(trace: PicardTrace, pairs=None, min_fraction: float = 1e-8) -> list:
    """R_j(μ,λ) = ‖P_μu^{(j)} P_λu^{(j)}‖_{L²_{t,x}} · λ^e / (‖P_μφ‖ ‖P_λφ‖) for every j.

    e is the family's bilinear decay exponent, so R_j is O(1) when the
    bilinear estimate holds uniformly along the iteration.

    Pairs whose data blocks carry less than ``min_fraction`` of ‖φ‖ are skipped.
    """
    cfg = trace.config
    grid, tg = cfg.grid, cfg.time_grid
    phi = cfg.phi.values
    total = lp_norm_array(phi, grid.dx, 2)
    pairs = _block_pairs(grid) if pairs is None else pairs
    e = cfg.model.bilinear_exponent
    sym = {}
    for m, v in pairs:
        for lam in (m, v):
            sym.setdefault(lam, block_symbol(grid, lam))
    norms0 = {lam: float(lp_norm_array(apply_symbol(grid, phi, s), grid.dx, 2)) for lam, s in sym.items()}
    keep = [
        (m, v) for m, v in pairs
        if total > 0 and norms0[m] > min_fraction * total and norms0[v] > min_fraction * total
    ]
    rows = []
    for j, u in enumerate(trace.iterates):
        blocks = {lam: apply_symbol(grid, u.values, s) for lam, s in sym.items()}
        row = {}
        for m, v in keep:
            prod = upsample(grid, blocks[m], 2) * upsample(grid, blocks[v], 2)
            prof = np.sum(prod * prod, axis=-1) * grid.dx / 2
            val = float(np.sqrt(np.sum(tg.weights * prof)))
            row[f"{m:g},{v:g}"] = val * v ** e / (norms0[m] * norms0[v])
        rows.append(row)
    return rows


def contraction_report(trace: PicardTrace, phi: Optional[RealField] = None, bilinear: bool = True) -> dict:
    """Normalized S/N norms, difference ratios, fixed-point residual and iterate bilinear ratios.

    Quantities whose normalizer vanishes (zero data) are reported as ``None``.
    """
    cfg = trace.config
    phi = cfg.phi if phi is None else phi
    hs = sobolev_norm(phi, cfg.exponents.s)

    def norm(v):
        return None if hs == 0 else v / hs

    finite = trace.finite_ratios()
    report = {
        "phi_hs": hs,
        "s_norm_ratios": [norm(v) for v in trace.s_norms],
        "n_norm_ratios": [norm(v) for v in trace.n_norms],
        "difference_norms": list(trace.difference_norms),
        "difference_ratios": list(trace.difference_ratios),
        "max_difference_ratio": max(finite) if finite else None,
    }
    if trace.iterates and hs > 0:
        last = trace.iterates[-1]
        fixed = st_norm(picard_map(cfg, last) - last, cfg.exponents)
        report["fixed_point_residual"] = fixed
        report["fixed_point_bound"] = 0.5 * trace.difference_norms[-1] if trace.difference_norms else None
    else:
        report["fixed_point_residual"] = None
        report["fixed_point_bound"] = None
    if bilinear:
        rows = iterate_bilinear_ratios(trace) if hs > 0 else []
        report["bilinear_ratios"] = rows
        if rows and rows[0]:
            maxima = [max(r.values()) for r in rows]
            report["bilinear_max_per_iterate"] = maxima
        else:
            report["bilinear_max_per_iterate"] = []
    return report


def contraction_search(
    model: DispersionModel,
    phi: RealField,
    T0: float,
    n_steps: int = 64,
    iterations: int = 6,
    max_halvings: int = 20,
    nonlinearity_sign: float = 1.0,
) -> tuple[float, Optional[PicardTrace], list]:
    """Halve T from T0 until all difference ratios are ≤ 1/2; returns (T, trace, history)."""
    if not np.any(phi.values):
        return float(T0), None, []
    history = []
    T = float(T0)
    for _ in range(max_halvings + 1):
        cfg = PicardConfig(model, phi, T, n_steps, iterations, nonlinearity_sign)
        try:
            trace = picard_iterate(cfg)
            ratios = trace.finite_ratios()
            ok = all(r <= 0.5 for r in ratios)
            history.append({"T": T, "max_ratio": max(ratios) if ratios else None, "accepted": ok})
            if ok:
                return T, trace, history
        except IterationDiverged as exc:
            history.append({"T": T, "max_ratio": None, "accepted": False, "diverged": str(exc)})
        T *= 0.5
    raise NoContractionFound(f"no contraction after {max_halvings} halvings of T0 = {T0:g}")


def find_contraction_horizon(model: DispersionModel, phi: RealField, T0: float, **kw) -> float:
    """Largest T0/2^k (k ≤ 20) whose J = 6 Picard run contracts with ratios ≤ 1/2."""
    return contraction_search(model, phi, T0, **kw)[0]


# ---------------------------------------------------------------------------
# reference integrator


def reference_solve(
    model: DispersionModel,
    phi: RealField,
    T: float,
    steps: int,
    coefficient: float = 1.0,
    substeps: int = 1,
) -> SpacetimeField:
    """Integrating-factor RK4 for u_t + Lu + coefficient·∂_x(u³) = 0.

    The linear part is solved exactly in the interaction picture
    v̂ = e^{-itω} û; RK4 then advances v̂' = -e^{-itω} FFT(N(u)).  Frames are
    stored every ``substeps`` RK steps on the uniform grid of ``steps``
    intervals.
    """
    grid = phi.grid
    tg = TimeGrid(T, steps)
    omega = model.grid_omega(grid)
    h = T / (steps * substeps)

    def rhs(t, v):
        u = np.fft.ifft(np.exp(1j * t * omega) * v).real
        return -np.exp(-1j * t * omega) * np.fft.fft(cubic_array(grid, u, coefficient))

    v = np.fft.fft(phi.values).astype(complex)
    frames = np.empty((tg.n_nodes, grid.n_points))
    frames[0] = phi.values
    prev_norm = lp_norm_array(phi.values, grid.dx, 2)
    t = 0.0
    for k in range(1, tg.n_nodes):
        for _ in range(substeps):
            k1 = rhs(t, v)
            k2 = rhs(t + h / 2, v + h / 2 * k1)
            k3 = rhs(t + h / 2, v + h / 2 * k2)
            k4 = rhs(t + h, v + h * k3)
            v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        t = float(tg.nodes[k])
        u = np.fft.ifft(np.exp(1j * t * omega) * v).real
        nrm = lp_norm_array(u, grid.dx, 2)
        if not np.isfinite(nrm) or (prev_norm > 0 and nrm > 10 * prev_norm):
            raise StepUnstable(f"L2 norm jumped from {prev_norm:.3e} to {nrm:.3e} at t = {t:.4g}")
        frames[k] = u
        prev_norm = nrm
    return SpacetimeField(grid, tg, frames)


def l2_drift(u: SpacetimeField) -> float:
    """max_t |‖u(t)‖_{L²} - ‖u(0)‖_{L²}| / ‖u(0)‖_{L²}."""
    n = lp_norm_array(u.values, u.grid.dx, 2)
    return float(np.max(np.abs(n - n[0])) / max(n[0], 1e-300))


def picard_vs_oracle(cfg: PicardConfig, substeps: int = 4, trace: Optional[PicardTrace] = None) -> float:
    """max over frames of ‖u^{(J)}(t_k) - u_ref(t_k)‖_{L²}."""
    trace = picard_iterate(cfg) if trace is None else trace
    ref = reference_solve(cfg.model, cfg.phi, cfg.T, cfg.n_steps, cfg.nonlinearity_sign, substeps)
    diff = trace.iterates[-1].values - ref.values
    return float(np.max(lp_norm_array(diff, cfg.grid.dx, 2)))


def continuity_modulus(u: SpacetimeField, s: float) -> float:
    """max_k ‖u(t_{k+1}) - u(t_k)‖_{H^s}, a sampled C_t H^s modulus."""
    if u.n_frames < 2:
        return 0.0
    return float(np.max(sobolev_array(u.grid, np.diff(u.values, axis=0), s)))


def lipschitz_ratio(cfg: PicardConfig, phi2: RealField) -> float:
    """‖u₁ - u₂‖_{S(T)} / ‖φ₁ - φ₂‖_{H^s} from the last Picard iterates."""
    t1 = picard_iterate(cfg)
    cfg2 = PicardConfig(cfg.model, phi2, cfg.T, cfg.n_steps, cfg.max_iterations,
                        cfg.nonlinearity_sign, cfg.duhamel_mode)
    t2 = picard_iterate(cfg2)
    num = st_norm(t1.iterates[-1] - t2.iterates[-1], cfg.exponents)
    den = sobolev_norm(cfg.phi - phi2, cfg.exponents.s)
    return num / den if den > 0 else 0.0


# ---------------------------------------------------------------------------
# Miura map


@dataclass(frozen=True)
class MiuraSpec:
    """v = alpha_m ∂_x u + beta_m u² for u_t + u_xxx + b u²u_x = 0, target v_t + v_xxx + c ∂_x(v²) = 0.

    Substituting the mKdV equation into (∂_t + ∂_x³)v + c∂_x(v²) leaves

        2(alpha_m² c + 3 beta_m) u_x u_xx
        + alpha_m (2 beta_m c - b) ∂_x(u² u_x)
        + 2 beta_m (2 beta_m c - b) u³ u_x,

    which vanishes identically iff c = -3 beta_m/alpha_m² and
    b = -6 beta_m²/alpha_m² (see :meth:`compatible`).  The literal choice
    alpha_m = beta_m = 1, b = 3, c = 3/2 leaves a nonzero remainder.
    """

    alpha_m: float = 1.0
    beta_m: float = 1.0
    b: float = 3.0
    c: float = 1.5

    @classmethod
    def literal(cls) -> "MiuraSpec":
        return cls(1.0, 1.0, 3.0, 1.5)

    @classmethod
    def compatible(cls, alpha_m: float = 1.0, beta_m: float = 2 ** -0.5) -> "MiuraSpec":
        return cls(alpha_m, beta_m, -6 * beta_m ** 2 / alpha_m ** 2, -3 * beta_m / alpha_m ** 2)

    @property
    def cubic_coefficient(self) -> float:
        """Coefficient of ∂_x(u³) in the mKdV equation: b/3."""
        return self.b / 3.0

    def to_dict(self) -> dict:
        return {"alpha_m": self.alpha_m, "beta_m": self.beta_m, "b": self.b, "c": self.c}


def miura_map(u: SpacetimeField, spec: MiuraSpec) -> np.ndarray:
    grid = u.grid
    ux = apply_symbol(grid, u.values, derivative_symbol(grid, 1))
    return spec.alpha_m * ux + spec.beta_m * dealiased_product(grid, u.values, u.values, pad=2)


def miura_residual(u_trajectory: SpacetimeField, spec: MiuraSpec) -> float:
    """‖∂_t v + ∂_x³ v + c ∂_x(v²)‖_{L²_{t,x}} on interior nodes, v the Miura image."""
    grid, tg = u_trajectory.grid, u_trajectory.time_grid
    if u_trajectory.n_frames < 3:
        raise ValueError("need at least three frames for a centered time derivative")
    v = miura_map(u_trajectory, spec)
    h = tg.step
    vt = (v[2:] - v[:-2]) / (2 * h)
    vi = v[1:-1]
    r = vt + apply_symbol(grid, vi, derivative_symbol(grid, 3))
    r = r + spec.c * apply_symbol(grid, dealiased_product(grid, vi, vi, pad=2), derivative_symbol(grid, 1))
    return float(np.sqrt(np.sum(r * r) * h * grid.dx))


def miura_study(phi: RealField, spec: MiuraSpec, T: float, steps_list, substeps: int = 4) -> dict:
    """Residual of the Miura image of reference mKdV solutions under time refinement."""
    airy = DispersionModel.airy()
    res = []
    for n in steps_list:
        u = reference_solve(airy, phi, T, n, spec.cubic_coefficient, substeps)
        res.append(miura_residual(u, spec))
    hs = [T / n for n in steps_list]
    orders = observed_orders(hs, res).tolist() if all(r > 0 for r in res) else []
    return {"spec": spec.to_dict(), "steps": list(steps_list), "residuals": res, "orders": orders}
