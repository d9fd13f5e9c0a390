"""Periodic pseudo-spectral substrate.

The line is replaced by the torus [-L/2, L/2) sampled at ``n_points`` equispaced
nodes.  The Fourier transform follows the continuum convention

    u_hat(xi) = int exp(-i x xi) u(x) dx,

discretized as ``dx * sum_j exp(-i x_j xi_k) u_j`` on the wavenumbers
``xi_k = 2 pi k / L``.  The inverse is ``u_j = (1/L) sum_k exp(i x_j xi_k) u_hat_k``,
so Parseval reads ``sum |u_j|^2 dx = (1/L) sum |u_hat_k|^2``.

Array helpers (``spectrum``, ``synthesize``, ``apply_symbol``, ...) work along the
last axis so that whole trajectories of shape ``(n_frames, n_points)`` are
filtered in one call.  The ``RealField`` level functions wrap them.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import (
    NegativeOrderOnMean,
    NonSymmetricSpectrum,
    SymbolSingularity,
    UnresolvedBand,
)

#: ψ equals 1 on |ξ| <= PSI_INNER and vanishes on |ξ| >= PSI_OUTER.
PSI_INNER = 8.0 / 9.0
PSI_OUTER = 9.0 / 8.0
#: Support of the annulus bump φ(ξ) = ψ(ξ/2) - ψ(ξ).
ANNULUS = (8.0 / 9.0, 9.0 / 4.0)
#: Sub-annulus on which φ is identically one.
PLATEAU = (9.0 / 8.0, 16.0 / 9.0)
#: Dyadic sentinel selecting the low-frequency block S_1.
S1_BLOCK = 0.5


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L/2, L/2)."""

    n_points: int
    length: float = 128 * np.pi

    def __post_init__(self):
        n = int(self.n_points)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two, got {self.n_points}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @property
    def nyquist(self) -> float:
        return np.pi / self.dx

    @property
    def mode_spacing(self) -> float:
        return 2 * np.pi / self.length

    @cached_property
    def x(self) -> np.ndarray:
        x = -0.5 * self.length + self.dx * np.arange(self.n_points)
        x.setflags(write=False)
        return x

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers k in DFT ordering."""
        k = np.fft.fftfreq(self.n_points, 1.0 / self.n_points).round().astype(int)
        k.setflags(write=False)
        return k

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        xi = self.mode_spacing * self.modes
        xi.setflags(write=False)
        return xi

    @cached_property
    def nyquist_index(self) -> int:
        return self.n_points // 2

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i L xi_k / 2) = (-1)^k accounts for the grid starting at -L/2
        p = np.where(self.modes % 2 == 0, 1.0, -1.0)
        p.setflags(write=False)
        return p

    def max_resolved_dyadic(self) -> float:
        """Largest dyadic λ >= 1 whose annulus fits below Nyquist (0 if none)."""
        lam = 1.0
        if ANNULUS[1] * lam > self.nyquist:
            return 0.0
        while ANNULUS[1] * 2 * lam <= self.nyquist:
            lam *= 2
        return lam

    def meta(self) -> dict:
        return {"n_points": self.n_points, "length": self.length}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples of a function on a grid, optionally tagged with a time."""

    grid: Grid
    values: np.ndarray
    time_tag: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable, time_tag=None) -> "RealField":
        return cls(grid, func(np.asarray(grid.x)), time_tag)

    @classmethod
    def zeros(cls, grid: Grid) -> "RealField":
        return cls(grid, np.zeros(grid.n_points))

    def with_values(self, values, time_tag=None) -> "RealField":
        return RealField(self.grid, values, self.time_tag if time_tag is None else time_tag)

    def __add__(self, other):
        _check_same_grid(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(float(c) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def to_csv(self, path) -> None:
        """Write the flat ``x,value`` debugging layout."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for xj, vj in zip(self.grid.x, self.values):
                w.writerow([repr(float(xj)), repr(float(vj))])

    @classmethod
    def from_csv(cls, path, length: float) -> "RealField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(Grid(len(data), length), data[:, 1])

    def to_binary(self, path) -> None:
        """Write little-endian float64 pairs (x, value), row-major."""
        np.column_stack([self.grid.x, self.values]).astype("<f8").tofile(path)

    @classmethod
    def from_binary(cls, path, length: float) -> "RealField":
        data = np.fromfile(path, dtype="<f8").reshape(-1, 2)
        return cls(Grid(len(data), length), data[:, 1])


@dataclass(frozen=True, eq=False)
class SpectralField:
    """DFT coefficients of a field, in the continuum normalization."""

    grid: Grid
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coefficients", _readonly(c))

    def asymmetry(self) -> float:
        """Max |c(-ξ) - conj c(ξ)| relative to max |c|."""
        c = self.coefficients
        scale = max(np.max(np.abs(c)), 1e-300)
        return float(np.max(np.abs(c[_mirror(self.grid)] - np.conj(c))) / scale)

    def is_conjugate_symmetric(self, tol: float = 1e-10) -> bool:
        return self.asymmetry() <= tol


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def _mirror(grid: Grid) -> np.ndarray:
    return (-np.arange(grid.n_points)) % grid.n_points


# ---------------------------------------------------------------------------
# array-level helpers (last axis is space)


def spectrum(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Continuum-normalized DFT along the last axis."""
    return grid.dx * grid._phase * np.fft.fft(values, axis=-1)


def synthesize(grid: Grid, coefficients: np.ndarray) -> np.ndarray:
    """Inverse of :func:`spectrum`; returns the real part."""
    return np.fft.ifft(coefficients * grid._phase, axis=-1).real / grid.dx


def real_symbol(grid: Grid, symbol: np.ndarray) -> np.ndarray:
    """Make a symbol real-preserving by taking the real part at Nyquist.

    The Nyquist mode is its own mirror image, so any symbol acting on real data
    must be real there.  Odd symbols (∂_x, ℋ) are therefore zeroed at Nyquist.
    """
    s = np.array(symbol, dtype=complex, copy=True)
    s[..., grid.nyquist_index] = s[..., grid.nyquist_index].real
    return s


def apply_symbol(grid: Grid, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Apply a (real-preserving) multiplier to real samples along the last axis."""
    return np.fft.ifft(np.fft.fft(values, axis=-1) * real_symbol(grid, symbol), axis=-1).real


def derivative_symbol(grid: Grid, order: int = 1) -> np.ndarray:
    return (1j * grid.wavenumbers) ** order


def abs_power_symbol(grid: Grid, s: float) -> np.ndarray:
    """|ξ|^s with the convention |0|^s = 0 for s != 0."""
    xi = np.abs(grid.wavenumbers)
    if s == 0:
        return np.ones_like(xi)
    out = np.zeros_like(xi)
    nz = xi > 0
    out[nz] = xi[nz] ** s
    return out


def hilbert_symbol(grid: Grid) -> np.ndarray:
    return -1j * np.sign(grid.wavenumbers)


def translation_symbol(grid: Grid, y: float) -> np.ndarray:
    return np.exp(-1j * y * grid.wavenumbers)


def _pad_spectrum(c: np.ndarray, n: int, m: int) -> np.ndarray:
    """Zero-pad raw FFT coefficients from length n to m (n even), splitting Nyquist."""
    out = np.zeros(c.shape[:-1] + (m,), dtype=complex)
    h = n // 2
    out[..., :h] = c[..., :h]
    out[..., m - h + 1:] = c[..., h + 1:]
    out[..., h] = 0.5 * c[..., h]
    out[..., m - h] = 0.5 * c[..., h]
    return out * (m / n)


def _truncate_spectrum(c: np.ndarray, n: int, m: int) -> np.ndarray:
    out = np.zeros(c.shape[:-1] + (n,), dtype=complex)
    h = n // 2
    out[..., :h] = c[..., :h]
    out[..., h + 1:] = c[..., m - h + 1:]
    out[..., h] = c[..., h] + c[..., m - h]
    return out * (n / m)


def upsample(grid: Grid, values: np.ndarray, factor: int) -> np.ndarray:
    """Band-limited interpolation onto a grid ``factor`` times finer."""
    n = grid.n_points
    m = factor * n
    return np.fft.ifft(_pad_spectrum(np.fft.fft(values, axis=-1), n, m), axis=-1).real


def downsample(grid: Grid, fine_values: np.ndarray, factor: int) -> np.ndarray:
    """Spectral truncation from the ``factor``-fine grid back onto ``grid``."""
    n = grid.n_points
    m = factor * n
    return np.fft.ifft(_truncate_spectrum(np.fft.fft(fine_values, axis=-1), n, m), axis=-1).real


def dealiased_product(grid: Grid, *factors: np.ndarray, pad: int = 2) -> np.ndarray:
    """Pointwise product computed on a ``pad``-fold refined grid, then truncated.

    With ``pad >= len(factors)`` the product of band-limited factors is formed
    without aliasing; the truncation is the Galerkin projection onto the grid.
    """
    prod = upsample(grid, factors[0], pad)
    for f in factors[1:]:
        prod = prod * upsample(grid, f, pad)
    return downsample(grid, prod, pad)


# ---------------------------------------------------------------------------
# transforms and multipliers on fields


def forward_transform(f: RealField) -> SpectralField:
    return SpectralField(f.grid, spectrum(f.grid, f.values))


def inverse_transform(F: SpectralField, tol: float = 1e-10, time_tag=None) -> RealField:
    """Real field represented by ``F``.

    Raises :class:`NonSymmetricSpectrum` if the coefficients are not conjugate
    symmetric within ``tol`` (relative to the largest coefficient).
    """
    asym = F.asymmetry()
    if asym > tol:
        raise NonSymmetricSpectrum(f"coefficient asymmetry {asym:.3e} exceeds {tol:.1e}")
    return RealField(F.grid, synthesize(F.grid, F.coefficients), time_tag)


def apply_multiplier(F: SpectralField, m: Callable[[np.ndarray], np.ndarray]) -> SpectralField:
    vals = np.broadcast_to(np.asarray(m(F.grid.wavenumbers), dtype=complex), (F.grid.n_points,))
    if not np.all(np.isfinite(vals)):
        bad = F.grid.wavenumbers[~np.isfinite(vals)]
        raise SymbolSingularity(f"symbol is not finite at xi = {bad[:5]}")
    return SpectralField(F.grid, F.coefficients * vals)


def _filter(f: RealField, symbol: np.ndarray) -> RealField:
    return RealField(f.grid, apply_symbol(f.grid, f.values, symbol), f.time_tag)


def fractional_derivative(f: RealField, s: float) -> RealField:
    """D_x^s, the multiplier |ξ|^s (the mean mode is sent to zero for s != 0)."""
    if s < 0:
        mean = np.mean(f.values)
        if abs(mean) > 1e-12 * max(1.0, np.max(np.abs(f.values))):
            raise NegativeOrderOnMean(f"D^{s} needs a zero-mean field, mean = {mean:.3e}")
    return _filter(f, abs_power_symbol(f.grid, s))


def spatial_derivative(f: RealField, order: int = 1) -> RealField:
    return _filter(f, derivative_symbol(f.grid, order))


def hilbert_transform(f: RealField) -> RealField:
    return _filter(f, hilbert_symbol(f.grid))


def translate(f: RealField, y: float) -> RealField:
    """u^y(x) = u(x - y), exact for band-limited data."""
    return _filter(f, translation_symbol(f.grid, y))


# ---------------------------------------------------------------------------
# Littlewood-Paley machinery


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    g0 = np.zeros_like(t)
    g1 = np.zeros_like(t)
    pos = t > 0
    g0[pos] = np.exp(-1.0 / t[pos])
    neg = t < 1
    g1[neg] = np.exp(-1.0 / (1.0 - t[neg]))
    return g0 / (g0 + g1)


def psi_profile(r) -> np.ndarray:
    """Radial low-pass bump: 1 on |r| <= 8/9, 0 on |r| >= 9/8."""
    r = np.abs(np.asarray(r, dtype=float))
    return _smooth_step((PSI_OUTER - r) / (PSI_OUTER - PSI_INNER))


def phi_profile(r) -> np.ndarray:
    """Annulus bump φ(ξ) = ψ(ξ/2) - ψ(ξ), supported in 8/9 <= |ξ| <= 9/4."""
    r = np.asarray(r, dtype=float)
    return psi_profile(r / 2) - psi_profile(r)


@dataclass(frozen=True, eq=False)
class BumpPair:
    """ψ and φ sampled on the |ξ| values of a grid."""

    grid: Grid
    psi: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    annulus: tuple = ANNULUS
    psi_support: tuple = (PSI_INNER, PSI_OUTER)

    def block(self, lam: float) -> np.ndarray:
        """φ(ξ/λ) on the grid wavenumbers."""
        return phi_profile(self.grid.wavenumbers / lam)

    def low(self, lam: float) -> np.ndarray:
        """ψ(ξ/λ) on the grid wavenumbers (the symbol of S_λ)."""
        return psi_profile(self.grid.wavenumbers / lam)

    def partition_sum(self, lam_max: float | None = None) -> np.ndarray:
        """ψ(ξ) + Σ_{1 <= λ <= lam_max} φ(ξ/λ) on the grid."""
        lam_max = self.grid.max_resolved_dyadic() if lam_max is None else lam_max
        total = self.psi.copy()
        lam = 1.0
        while lam <= lam_max:
            total += self.block(lam)
            lam *= 2
        return total

    def partition_mask(self, lam_max: float | None = None) -> np.ndarray:
        """Wavenumbers on which the truncated partition sum must equal one.

        Beyond 16/9·lam_max the first omitted block 2·lam_max takes over.
        """
        lam_max = self.grid.max_resolved_dyadic() if lam_max is None else lam_max
        return np.abs(self.grid.wavenumbers) <= PLATEAU[1] * max(lam_max, 0.5)


def build_bumps(grid: Grid) -> BumpPair:
    r = np.abs(grid.wavenumbers)
    return BumpPair(grid, _readonly(psi_profile(r)), _readonly(phi_profile(r)))


def is_dyadic(lam: float) -> bool:
    if lam <= 0:
        return False
    j = np.log2(lam)
    return abs(j - round(j)) < 1e-12


def dyadic_range(lam_min: float, lam_max: float) -> list[float]:
    out, lam = [], float(lam_min)
    while lam <= lam_max:
        out.append(lam)
        lam *= 2
    return out


def check_resolved(grid: Grid, lam: float, outer: float = ANNULUS[1]) -> None:
    if outer * lam > grid.nyquist * (1 + 1e-12):
        raise UnresolvedBand(
            f"band up to {outer * lam:.4g} exceeds Nyquist {grid.nyquist:.4g} (λ = {lam:g})"
        )


def block_symbol(grid: Grid, lam: float) -> np.ndarray:
    """Symbol of the inhomogeneous block Δ_λ."""
    if lam >= 1:
        if not is_dyadic(lam):
            raise ValueError(f"λ = {lam} is not a dyadic number")
        check_resolved(grid, lam)
        return phi_profile(grid.wavenumbers / lam)
    if lam == S1_BLOCK:
        check_resolved(grid, 1.0, PSI_OUTER)
        return psi_profile(grid.wavenumbers)
    return np.zeros(grid.n_points)


def project(f: RealField, lam: float) -> RealField:
    """P_λ f = u_λ, the multiplier φ(ξ/λ)."""
    if not (lam >= 1 and is_dyadic(lam)):
        raise ValueError(f"P_λ needs a dyadic λ >= 1, got {lam}")
    return _filter(f, block_symbol(f.grid, lam))


def low_pass(f: RealField, lam: float) -> RealField:
    """S_λ f; for λ >= 1 the telescoped symbol is ψ(ξ/λ)."""
    if not (lam >= 1 and is_dyadic(lam)):
        raise ValueError(f"S_λ needs a dyadic λ >= 1, got {lam}")
    check_resolved(f.grid, lam, PSI_OUTER)
    return _filter(f, psi_profile(f.grid.wavenumbers / lam))


def dyadic_block(f: RealField, lam: float) -> RealField:
    """Δ_λ f: P_λ f for λ >= 1, S_1 f for λ = 1/2, zero below."""
    return _filter(f, block_symbol(f.grid, lam))


def resolved_blocks(grid: Grid) -> list[float]:
    """All λ for which Δ_λ is resolved: the S_1 sentinel then 1, 2, 4, ..."""
    lam_max = grid.max_resolved_dyadic()
    return [S1_BLOCK] + (dyadic_range(1.0, lam_max) if lam_max >= 1 else [])


@lru_cache(maxsize=32)
def block_table(grid: Grid) -> tuple[tuple[float, ...], np.ndarray]:
    """All resolved Δ_λ symbols stacked as rows, with their λ labels."""
    lams = tuple(resolved_blocks(grid))
    table = np.stack([block_symbol(grid, lam) for lam in lams])
    table.setflags(write=False)
    return lams, table
