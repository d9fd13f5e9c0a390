"""Bilinear L²_{t,x} estimates for products of free waves at separated frequencies.

For a low-frequency datum φ_μ and a high-frequency datum φ_λ (λ >= 4μ) the
quantity under study is

    R(μ, λ) = ‖U(t)φ_μ · U(t)φ_λ‖_{L²([0,T] × torus)} / (‖φ_μ‖_{L²} ‖φ_λ‖_{L²}),

whose expected decay is λ^{-1} for the Airy flow and λ^{-(1+α)/2} for the
gbo(α) family (α = 0 is Benjamin-Ono).

Two evaluation methods are offered.  ``"frames"`` samples the product on a
time grid (2x zero-padded in space, so each slice is exact) and integrates with
the grid's quadrature.  ``"exact"`` integrates time in closed form from the
Fourier coefficients: grouping index pairs (i, j) by output mode m = i + j,

    ∫_0^T ‖·‖²_{L²_x} dt = (1/L) Σ_m Σ_{p,q ∈ m} c_p c̄_q E(Ω_p - Ω_q),
    E(d) = ∫_0^T e^{i d t} dt,

with c_p = â_i b̂_j / L and Ω_p = ω_i + ω_j.  At high frequency the frame
method under-resolves the oscillation in t and the closed form is the
reference.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .flows import DispersionModel, flow_trajectory, propagate_array
from .lp_besov import ExponentSet, TimeGrid, lp_norm_array, sobolev_norm, st_norm
from .spectral_core import (
    PLATEAU,
    Grid,
    RealField,
    check_resolved,
    fractional_derivative,
    is_dyadic,
    spatial_derivative,
    spectrum,
    synthesize,
    translate,
    upsample,
)

METHODS = ("frames", "exact")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _plateau_modes(grid: Grid, lam: float) -> np.ndarray:
    if not (lam >= 1 and is_dyadic(lam)):
        raise ValueError(f"λ must be a dyadic number >= 1, got {lam}")
    check_resolved(grid, lam)
    xi = grid.wavenumbers
    idx = np.flatnonzero((xi >= PLATEAU[0] * lam) & (xi <= PLATEAU[1] * lam))
    if idx.size == 0:
        raise ValueError(
            f"no grid wavenumbers in [{PLATEAU[0] * lam:g}, {PLATEAU[1] * lam:g}]; increase L"
        )
    return idx


def _from_positive_modes(grid: Grid, idx: np.ndarray, coeffs: np.ndarray) -> RealField:
    spec = np.zeros(grid.n_points, dtype=complex)
    spec[idx] = coeffs
    spec[(-idx) % grid.n_points] = np.conj(coeffs)
    vals = synthesize(grid, spec)
    vals /= lp_norm_array(vals, grid.dx, 2)
    return RealField(grid, vals)


def random_dyadic_data(lam: float, seed, grid: Grid) -> RealField:
    """Unit-L² real field with unit-modulus random phases on the φ ≡ 1 part of the λ-annulus."""
    idx = _plateau_modes(grid, lam)
    phases = _rng(seed).uniform(0.0, 2 * np.pi, idx.size)
    return _from_positive_modes(grid, idx, np.exp(1j * phases))


def random_dyadic_packet(
    lam: float,
    seed,
    grid: Grid,
    center: float = 0.0,
    peak: float = 1.45,
    width: float = 0.12,
) -> RealField:
    """Unit-L² wave packet localized near x = center with frequency ≈ peak·λ.

    The spectral envelope is a Gaussian of relative width ``width``, cut to
    the φ ≡ 1 part of the annulus; only the carrier phase is random.
    """
    idx = _plateau_modes(grid, lam)
    xi = grid.wavenumbers[idx]
    amp = np.exp(-(((xi - peak * lam) / (width * lam)) ** 2))
    phase = _rng(seed).uniform(0.0, 2 * np.pi)
    return _from_positive_modes(grid, idx, amp * np.exp(1j * (phase - xi * center)))


# ---------------------------------------------------------------------------
# bilinear norm


def _bilinear_frames(a: RealField, b: RealField, model, time_grid: TimeGrid, chunk=64) -> float:
    grid = a.grid
    nodes = time_grid.nodes
    profile = np.empty(len(nodes))
    for start in range(0, len(nodes), chunk):
        t = nodes[start:start + chunk]
        ua = upsample(grid, propagate_array(grid, a.values, t, model), 2)
        ub = upsample(grid, propagate_array(grid, b.values, t, model), 2)
        profile[start:start + chunk] = np.sum((ua * ub) ** 2, axis=-1) * (grid.dx / 2)
    return float(np.sqrt(max(np.sum(time_grid.weights * profile), 0.0)))


def _support(grid: Grid, f: RealField, rel_tol: float = 1e-14):
    c = spectrum(grid, f.values)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0:
        return np.array([], dtype=int), np.array([], dtype=complex)
    keep = np.abs(c) > rel_tol * scale
    keep[grid.nyquist_index] = False
    idx = np.flatnonzero(keep)
    return idx, c[idx]


def time_integral_kernel(d: np.ndarray, T: float) -> np.ndarray:
    """E(d) = ∫_0^T e^{idt} dt = T e^{idT/2} sinc(dT/2π)."""
    return T * np.exp(0.5j * d * T) * np.sinc(d * T / (2 * np.pi))


def _bilinear_exact(a: RealField, b: RealField, model, T: float) -> float:
    grid = a.grid
    ia, ca = _support(grid, a)
    ib, cb = _support(grid, b)
    if ia.size == 0 or ib.size == 0:
        return 0.0
    omega = model.grid_omega(grid)
    k = grid.modes
    m = (k[ia][:, None] + k[ib][None, :]).ravel()
    c = (np.outer(ca, cb) / grid.length).ravel()
    w = (omega[ia][:, None] + omega[ib][None, :]).ravel()
    order = np.argsort(m, kind="stable")
    m, c, w = m[order], c[order], w[order]
    cuts = np.flatnonzero(np.diff(m)) + 1
    total = 0.0
    for cg, wg in zip(np.split(c, cuts), np.split(w, cuts)):
        if cg.size == 1:
            total += T * abs(cg[0]) ** 2
            continue
        E = time_integral_kernel(wg[:, None] - wg[None, :], T)
        total += float(np.real(cg @ E @ np.conj(cg)))
    return float(np.sqrt(max(total, 0.0) / grid.length))


def bilinear_norm(
    phi_mu: RealField,
    phi_lam: RealField,
    model: DispersionModel,
    T: float,
    time_steps: int = 128,
    method: str = "frames",
    rule: str = "trapezoid",
) -> float:
    """‖U(t)φ_μ · U(t)φ_λ‖_{L²_{t,x}} over [0, T]."""
    if phi_mu.grid != phi_lam.grid:
        raise ValueError("data live on different grids")
    if method == "frames":
        return _bilinear_frames(phi_mu, phi_lam, model, TimeGrid(T, time_steps, rule))
    if method == "exact":
        return _bilinear_exact(phi_mu, phi_lam, model, T)
    raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def product_trajectory(phi_a: RealField, phi_b: RealField, model, time_grid: TimeGrid) -> np.ndarray:
    """U(t)φ_a · U(t)φ_b on the 2x refined grid, frames stacked along axis 0."""
    grid = phi_a.grid
    ua = upsample(grid, propagate_array(grid, phi_a.values, time_grid.nodes, model), 2)
    ub = upsample(grid, propagate_array(grid, phi_b.values, time_grid.nodes, model), 2)
    return ua * ub


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepConfig:
    model: DispersionModel
    mu_list: tuple
    lambda_list: tuple
    horizon: float = 0.5
    time_steps: int = 128
    samples_per_pair: int = 8
    seed: int = 0
    normalization: bool = True
    grid: Grid = field(default_factory=lambda: Grid(4096, 2 * np.pi))
    method: str = "frames"
    data: str = "dyadic"

    def __post_init__(self):
        object.__setattr__(self, "mu_list", tuple(float(m) for m in self.mu_list))
        object.__setattr__(self, "lambda_list", tuple(float(v) for v in self.lambda_list))
        if not self.mu_list or not self.lambda_list:
            raise ValueError("mu_list and lambda_list must be non-empty")
        for lam in self.mu_list + self.lambda_list:
            if not (lam >= 1 and is_dyadic(lam)):
                raise ValueError(f"{lam} is not a dyadic number >= 1")
            check_resolved(self.grid, lam)
        if min(self.lambda_list) < 4 * max(self.mu_list):
            raise ValueError("every pair must satisfy λ >= 4μ")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.data not in ("dyadic", "packet"):
            raise ValueError("data must be 'dyadic' or 'packet'")
        if self.samples_per_pair < 1 or self.time_steps < 1 or not self.horizon > 0:
            raise ValueError("samples_per_pair, time_steps and horizon must be positive")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "mu_list": list(self.mu_list),
            "lambda_list": list(self.lambda_list),
            "horizon": self.horizon,
            "time_steps": self.time_steps,
            "samples_per_pair": self.samples_per_pair,
            "seed": self.seed,
            "normalization": self.normalization,
            "grid": self.grid.meta(),
            "method": self.method,
            "data": self.data,
        }


@dataclass(frozen=True)
class FitResult:
    """Least-squares line through (log₂ λ, log₂ max-ratio)."""

    slope: float
    intercept: float
    residual: float
    pair_count: int
    slope_stderr: float = 0.0
    slope_ci95: tuple = (0.0, 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slope_ci95"] = list(self.slope_ci95)
        return d


def fit_decay(lams: Sequence[float], ratios: Sequence[float]) -> FitResult:
    lams = np.asarray(lams, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if lams.size < 3:
        raise ValueError("a slope needs at least three λ values")
    if not np.all(np.isfinite(ratios) & (ratios > 0)):
        raise ValueError("ratios must be finite and positive")
    xs, ys = np.log2(lams), np.log2(ratios)
    fit = stats.linregress(xs, ys)
    dev = ys - (fit.intercept + fit.slope * xs)
    resid = float(np.max(np.abs(dev)) * np.log10(2.0))
    half = float(stats.t.ppf(0.975, xs.size - 2) * fit.stderr) if xs.size > 2 else float("inf")
    return FitResult(
        float(fit.slope), float(fit.intercept), resid, int(xs.size),
        float(fit.stderr), (float(fit.slope) - half, float(fit.slope) + half),
    )


@dataclass
class SweepReport:
    config: SweepConfig
    records: list
    fit: FitResult

    def max_ratios(self) -> dict:
        out = {}
        for r in self.records:
            out[r["lam"]] = max(out.get(r["lam"], 0.0), r["ratio"])
        return dict(sorted(out.items()))

    def observed_constant(self) -> float:
        """max over records of R·λ^e, e the family exponent."""
        e = self.config.model.bilinear_exponent
        return max(r["ratio"] * r["lam"] ** e for r in self.records)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "records": self.records,
            "max_ratios": [[lam, r] for lam, r in self.max_ratios().items()],
            "fit": self.fit.to_dict(),
            "observed_constant": self.observed_constant(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "lambda", "sample", "ratio"])
            for r in self.records:
                w.writerow([r["mu"], r["lam"], r["sample"], repr(r["ratio"])])


def _sweep_datum(cfg: SweepConfig, lam: float, stream) -> RealField:
    if cfg.data == "packet":
        return random_dyadic_packet(lam, stream, cfg.grid)
    return random_dyadic_data(lam, stream, cfg.grid)


def _sweep_point(cfg: SweepConfig, i_mu: int, i_lam: int, sample: int) -> dict:
    mu, lam = cfg.mu_list[i_mu], cfg.lambda_list[i_lam]
    base = [cfg.seed, i_mu, i_lam, sample]
    a = _sweep_datum(cfg, mu, np.random.SeedSequence(base + [0]))
    b = _sweep_datum(cfg, lam, np.random.SeedSequence(base + [1]))
    if not cfg.normalization:
        # deterministic non-unit amplitudes exercise the ratio's homogeneity
        a = a * (1.0 + sample)
        b = b * (2.0 + i_lam)
    val = bilinear_norm(a, b, cfg.model, cfg.horizon, cfg.time_steps, cfg.method)
    na = float(lp_norm_array(a.values, cfg.grid.dx, 2))
    nb = float(lp_norm_array(b.values, cfg.grid.dx, 2))
    return {
        "mu": mu, "lam": lam, "sample": sample,
        "bilinear_norm": val, "norm_mu": na, "norm_lam": nb, "ratio": val / (na * nb),
    }


def sweep_and_fit(cfg: SweepConfig, threads: int = 1) -> SweepReport:
    """Evaluate every (μ, λ, sample) point and fit the decay of the per-λ maximum.

    Each point draws from its own SeedSequence([seed, iμ, iλ, sample, role]),
    and results are stored in task order, so the report does not depend on
    ``threads``.
    """
    tasks = [
        (i, j, s)
        for j in range(len(cfg.lambda_list))
        for i in range(len(cfg.mu_list))
        for s in range(cfg.samples_per_pair)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda t: _sweep_point(cfg, *t), tasks))
    else:
        records = [_sweep_point(cfg, *t) for t in tasks]
    for r in records:
        if not (np.isfinite(r["ratio"]) and r["ratio"] > 0):
            raise ValueError(f"non-positive ratio at μ={r['mu']}, λ={r['lam']}")
    best = {}
    for r in records:
        best[r["lam"]] = max(best.get(r["lam"], 0.0), r["ratio"])
    lams = sorted(best)
    fit = fit_decay(lams, [best[v] for v in lams]) if len(lams) >= 3 else None
    return SweepReport(cfg, records, fit)


# ---------------------------------------------------------------------------
# translation lemma, derivative transfer, Strichartz


def dominant_dyadic(f: RealField) -> float:
    """Dyadic λ >= 1 whose annulus carries the spectral peak of f."""
    c = np.abs(spectrum(f.grid, f.values))
    xi = abs(f.grid.wavenumbers[int(np.argmax(c))])
    lam = 1.0
    while PLATEAU[1] * lam < xi:
        lam *= 2
    return lam


def translation_sup_estimate(
    phi_mu: RealField,
    phi_lam: RealField,
    model: DispersionModel,
    T: float,
    n_shifts: int = 64,
    lam: Optional[float] = None,
    time_steps: int = 128,
    method: str = "frames",
    span: Optional[float] = None,
) -> dict:
    """Compare ‖u_μ u_λ‖ with λ^{-1} sup_y ‖u_μ D_x u_λ^y‖ over sampled shifts.

    Translation commutes with the free flow, so the shifted factor is
    U(t)(D_x φ_λ^y).  Shifts are uniform on [0, span), span defaulting to the
    period L: the y-dependence of the norm is band-limited at the scale of the
    low frequency, not the high one.
    """
    if n_shifts < 8:
        raise ValueError("n_shifts must be >= 8")
    lam = dominant_dyadic(phi_lam) if lam is None else float(lam)
    span = phi_lam.grid.length if span is None else float(span)
    lhs = bilinear_norm(phi_mu, phi_lam, model, T, time_steps, method)
    d_lam = fractional_derivative(phi_lam, 1.0)
    shifts = span * np.arange(n_shifts) / n_shifts
    vals = [bilinear_norm(phi_mu, translate(d_lam, y), model, T, time_steps, method) for y in shifts]
    rhs = max(vals) / lam
    return {
        "lhs": lhs,
        "rhs_sup": rhs,
        "ratio": lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else float("inf")),
        "lam": lam,
        "shifts": shifts.tolist(),
        "shift_values": vals,
    }


def derivative_transfer_check(
    phi_mu: RealField,
    phi_lam: RealField,
    model: Optional[DispersionModel] = None,
    T: float = 0.5,
    time_steps: int = 128,
    method: str = "frames",
) -> dict:
    """‖u_μ ∂_x u_λ‖² - ‖u_λ ∂_x u_μ‖² against ‖φ_μ‖²‖φ_λ‖²."""
    model = DispersionModel.airy() if model is None else model
    if model.family != "airy":
        raise ValueError("the derivative transfer is stated for the Airy flow")
    a = bilinear_norm(phi_mu, spatial_derivative(phi_lam), model, T, time_steps, method)
    b = bilinear_norm(phi_lam, spatial_derivative(phi_mu), model, T, time_steps, method)
    dx = phi_mu.grid.dx
    rhs = float(lp_norm_array(phi_mu.values, dx, 2) ** 2 * lp_norm_array(phi_lam.values, dx, 2) ** 2)
    lhs = a * a - b * b
    return {
        "lhs_difference": lhs,
        "rhs_bound": rhs,
        "ratio": lhs / rhs if rhs > 0 else 0.0,
    }


def strichartz_ratio(
    phi: RealField,
    model: DispersionModel,
    variant="mkdv",
    time_grid: Optional[TimeGrid] = None,
) -> float:
    """‖U(t)φ‖_{S(T)} / ‖φ‖_{H^s}, s = 1/4 (mkdv) or 1/2 (mbo)."""
    time_grid = TimeGrid(0.5, 128) if time_grid is None else time_grid
    s = ExponentSet.for_variant(variant).s
    denom = sobolev_norm(phi, s)
    if denom == 0:
        raise ZeroDivisionError("strichartz_ratio of the zero datum")
    return st_norm(flow_trajectory(phi, model, time_grid), variant) / denom
