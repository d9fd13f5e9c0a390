import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.bilinear_lab import random_dyadic_data
from dispersive_lab.lp_besov import (
    INF,
    ExponentSet,
    NormSpec,
    SpacetimeField,
    TimeGrid,
    besov_norm,
    lebesgue_norm,
    nt_norm,
    sobolev_norm,
    spacetime_norm,
    st_norm,
)
from dispersive_lab.spectral_core import Grid, RealField, dyadic_block, fractional_derivative, project

G = Grid(2048, 16 * np.pi)


def random_field(grid, seed, kmax=None):
    """Band-limited random field with |ξ| ≤ kmax (default: below the partition cap)."""
    rng = np.random.default_rng(seed)
    c = np.fft.rfft(rng.normal(size=grid.n_points))
    xi = np.abs(np.fft.rfftfreq(grid.n_points, grid.dx) * 2 * np.pi)
    kmax = 16 / 9 * grid.max_resolved_dyadic() * 0.99 if kmax is None else kmax
    c[xi > kmax] = 0
    return RealField(grid, np.fft.irfft(c, grid.n_points))


def static(f, T=0.7, n=8):
    tg = TimeGrid(T, n)
    return SpacetimeField(f.grid, tg, np.tile(f.values, (tg.n_nodes, 1)))


# Lebesgue


def test_constant_l2_norm():
    assert np.isclose(lebesgue_norm(RealField(G, np.ones(G.n_points)), 2), np.sqrt(G.length))


@pytest.mark.parametrize("p", [1, 1.5, 3, 4, INF])
def test_lebesgue_matches_brute_force(p):
    f = random_field(G, 1)
    if p == INF:
        ref = max(abs(v) for v in f.values)
    else:
        ref = sum(abs(v) ** p * G.dx for v in f.values) ** (1 / p)
    assert np.isclose(lebesgue_norm(f, p), ref, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_cauchy_schwarz(seed):
    f = random_field(G, seed)
    assert lebesgue_norm(f, 1) <= np.sqrt(G.length) * lebesgue_norm(f, 2) * (1 + 1e-12)


def test_bad_exponent():
    with pytest.raises(ValueError):
        lebesgue_norm(random_field(G, 0), 0.5)


# spacetime


@pytest.mark.parametrize("q,p", [(1, 2), (2, 2), (8, 4), (8 / 7, 4 / 3)])
def test_static_spacetime(q, p):
    f = random_field(G, 2)
    u = static(f)
    assert np.isclose(spacetime_norm(u, q, p), 0.7 ** (1 / q) * lebesgue_norm(f, p), rtol=1e-12)


def test_spacetime_l2_flattened_and_brute_force():
    rng = np.random.default_rng(3)
    tg = TimeGrid(0.5, 6)
    vals = rng.normal(size=(tg.n_nodes, G.n_points))
    u = SpacetimeField(G, tg, vals)
    w = tg.weights[:, None]
    assert np.isclose(spacetime_norm(u, 2, 2), np.sqrt(np.sum(w * vals ** 2) * G.dx), rtol=1e-12)
    q, p = 3.0, 5.0
    ref = sum(
        tg.weights[k] * sum(abs(vals[k, j]) ** p * G.dx for j in range(G.n_points)) ** (q / p)
        for k in range(tg.n_nodes)
    ) ** (1 / q)
    assert np.isclose(spacetime_norm(u, q, p), ref, rtol=1e-12)


def test_gauss_rule_exact_for_polynomials():
    tg = TimeGrid(2.0, 5, "gauss")
    assert np.isclose(np.sum(tg.weights * tg.nodes ** 9), 2.0 ** 10 / 10, rtol=1e-13)
    tr = TimeGrid(2.0, 4)
    assert tr.n_nodes == 5 and np.isclose(tr.weights.sum(), 2.0)
    with pytest.raises(ValueError):
        tg.step


# Sobolev


def test_sobolev_basics():
    f = random_field(G, 4)
    assert np.isclose(sobolev_norm(f, 0), lebesgue_norm(f, 2), rtol=1e-12)
    k0 = 3.0
    mode = RealField.from_function(G, lambda x: np.cos(k0 * x))
    assert np.isclose(sobolev_norm(mode, 0.75), (1 + k0 ** 2) ** 0.375 * lebesgue_norm(mode, 2), rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.25, 0.5]))
def test_sobolev_besov_comparable(seed, s):
    f = random_field(G, seed)
    ratio = sobolev_norm(f, s) / besov_norm(f, s, 2, 2)
    assert 1 / 3 <= ratio <= 3


# Besov


def test_low_frequency_field_is_its_lp_norm():
    f = RealField.from_function(G, lambda x: np.cos(0.5 * x) + 0.3 * np.sin(0.75 * x))
    for p in (4 / 3, 2, 4):
        assert np.isclose(besov_norm(f, 0.7, p, 2), lebesgue_norm(f, p), rtol=1e-12)


@pytest.mark.parametrize("lam", [4, 16, 32])
def test_single_dyadic_piece(lam):
    plateau = random_dyadic_data(lam, 5, G)
    for p in (2, 4):
        assert np.isclose(besov_norm(plateau, 0.3, p, 2), lam ** 0.3 * lebesgue_norm(plateau, p), rtol=1e-12)
    band = project(random_field(G, 6), lam)
    ratio = besov_norm(band, 0.3, 4, 2) / (lam ** 0.3 * lebesgue_norm(band, 4))
    assert 0.5 <= ratio <= 2.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_besov_inclusions(seed):
    f = random_field(G, seed)
    # s1 <= s2 at fixed (p, q), then q1 <= q2 at fixed (s, p)
    for p in (2, 4):
        assert besov_norm(f, 0.1, p, 2) <= besov_norm(f, 0.4, p, 2) * (1 + 1e-12)
        assert besov_norm(f, 0.3, p, 4) <= besov_norm(f, 0.3, p, 2) * (1 + 1e-12)
        assert besov_norm(f, 0.3, p, INF) <= besov_norm(f, 0.3, p, 1) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1 / 8, 1 / 4, 3 / 8, 1.0]), st.sampled_from([2, 4, 8, 16, 32]))
def test_bernstein_l2(seed, s, lam):
    u = dyadic_block(random_field(G, seed), lam)
    ratio = lebesgue_norm(fractional_derivative(u, s), 2) / (lam ** s * lebesgue_norm(u, 2))
    assert (8 / 9) ** s * (1 - 1e-12) <= ratio <= (9 / 4) ** s * (1 + 1e-12)


# S(T), N(T)


def test_exponent_sets():
    e = ExponentSet.for_variant("mkdv")
    assert (e.s, e.r, e.r_star) == (0.25, 0.375, 0.125)
    e = ExponentSet.for_variant("mbo")
    assert (e.s, e.r, e.r_star) == (0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        ExponentSet.for_variant(2.0)


def test_zero_trajectory_norms():
    u = static(RealField.zeros(G))
    assert st_norm(u) == 0.0 and nt_norm(u) == 0.0


def test_static_dyadic_piece_closed_form():
    lam, T = 8, 0.6
    phi = random_dyadic_data(lam, 7, G)
    u = static(phi, T, 10)
    e = ExponentSet(1.0)
    expected = sobolev_norm(phi, e.s) + T ** (1 / 8) * lam ** e.r * lebesgue_norm(phi, 4)
    assert np.isclose(st_norm(u, "mkdv"), expected, rtol=1e-12)
    expected_n = T ** (7 / 8) * lam ** e.r_star * lebesgue_norm(phi, 4 / 3)
    assert np.isclose(nt_norm(u, "mkdv"), expected_n, rtol=1e-12)


def test_norm_spec_declarative():
    f = random_field(G, 8)
    r = NormSpec("besov_spq", s=0.25, p=4, q=INF).evaluate(f)
    assert r.value == besov_norm(f, 0.25, 4, INF)
    d = json.loads(r.to_json())
    assert d["params"]["q"] == "inf" and d["norm_kind"] == "besov_spq"
    assert d["lam_max"] == G.max_resolved_dyadic()
    u = static(f)
    assert NormSpec("S_T", variant="mbo").evaluate(u).params == {"alpha": 0.0}
    with pytest.raises(ValueError):
        NormSpec("sobolev_s")
    with pytest.raises(ValueError):
        NormSpec("hardy")
