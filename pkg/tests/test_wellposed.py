import json

import numpy as np
import pytest
import sympy as sp

from dispersive_lab.bilinear_lab import bilinear_norm, random_dyadic_data
from dispersive_lab.errors import IterationDiverged, StepUnstable
from dispersive_lab.flows import DispersionModel, linear_propagate
from dispersive_lab.lp_besov import lp_norm_array, sobolev_norm
from dispersive_lab.spectral_core import Grid, RealField, project
from dispersive_lab.wellposed import (
    CubicNonlinearity,
    MiuraSpec,
    PicardConfig,
    contraction_report,
    contraction_search,
    continuity_modulus,
    cubic_array,
    find_contraction_horizon,
    iterate_bilinear_ratios,
    l2_drift,
    lipschitz_ratio,
    miura_residual,
    miura_study,
    picard_iterate,
    picard_vs_oracle,
    reference_solve,
)

G = Grid(256, 16 * np.pi)
AIRY, BO = DispersionModel.airy(), DispersionModel.bo()


def datum(seed=0, lams=(1, 4), grid=G, amp=1.0):
    phi = sum((random_dyadic_data(lam, seed + i, grid) for i, lam in enumerate(lams)), RealField.zeros(grid))
    return phi * (amp / sobolev_norm(phi, 0.25))


# cubic term


def test_cubic_zero_and_mean_free():
    assert np.all(cubic_array(G, np.zeros(G.n_points)) == 0)
    out = cubic_array(G, datum().values)
    assert abs(out.mean()) < 1e-15 * np.max(np.abs(out))


def test_cubic_matches_symbolic_oracle():
    x = sp.symbols("x")
    g = Grid(64, 2 * np.pi)
    rng = np.random.default_rng(0)
    u = sum(sp.Float(rng.normal()) * sp.cos(k * x + sp.Float(rng.uniform(0, 6))) for k in range(1, 9))
    exact = sp.lambdify(x, -2 * sp.diff(u ** 3, x), "numpy")(g.x)
    vals = sp.lambdify(x, u, "numpy")(g.x)
    # all cube modes (|k| ≤ 24) lie below Nyquist 32, so dealiasing must reproduce it exactly
    assert np.max(np.abs(cubic_array(g, vals, -2.0) - exact)) < 1e-11 * np.max(np.abs(exact))
    f = RealField(g, vals)
    assert np.array_equal(CubicNonlinearity(-2.0)(f).values, cubic_array(g, vals, -2.0))


# Picard


def test_zero_data_trace():
    cfg = PicardConfig(AIRY, RealField.zeros(G), 0.1, 16, 4)
    tr = picard_iterate(cfg)
    assert all(np.all(u.values == 0) for u in tr.iterates)
    assert all(r is None for r in tr.difference_ratios)
    rep = contraction_report(tr)
    assert rep["phi_hs"] == 0 and rep["s_norm_ratios"][0] is None and rep["max_difference_ratio"] is None
    assert picard_vs_oracle(cfg, 1, tr) == 0.0
    assert contraction_search(AIRY, RealField.zeros(G), 0.3)[0] == 0.3


@pytest.mark.parametrize("model", [AIRY, BO], ids=["airy", "bo"])
def test_small_data_contracts(model):
    cfg = PicardConfig(model, datum(1, amp=0.5), 0.1, 64, 6)
    tr = picard_iterate(cfg)
    assert tr.finite_ratios() and max(tr.finite_ratios()) <= 0.5
    d = tr.difference_norms
    assert all(b < a for a, b in zip(d, d[1:]) if b > 1e-13)
    rep = contraction_report(tr)
    assert rep["fixed_point_residual"] <= d[-1]
    json.loads(tr.to_json())


def test_first_iterate_envelope():
    phi = datum(2)
    cfg = PicardConfig(AIRY, phi, 0.05, 32, 2)
    tr = picard_iterate(cfg)
    u0, u1 = tr.iterates[0], tr.iterates[1]
    nl = CubicNonlinearity(1.0).on_trajectory(u0)
    envelope = 0.05 * np.max(lp_norm_array(nl.values, G.dx, 2))
    assert np.max(lp_norm_array((u1 - u0).values, G.dx, 2)) <= envelope * (1 + 1e-12)


def test_cumulative_equals_per_node():
    phi = datum(3)
    a = picard_iterate(PicardConfig(BO, phi, 0.05, 12, 3))
    b = picard_iterate(PicardConfig(BO, phi, 0.05, 12, 3, duhamel_mode="per_node"))
    for ua, ub in zip(a.iterates, b.iterates):
        assert np.max(np.abs(ua.values - ub.values)) < 1e-12


def test_divergence_guard():
    with pytest.raises(IterationDiverged) as exc:
        picard_iterate(PicardConfig(AIRY, datum(4, amp=40.0), 0.5, 32, 6))
    assert exc.value.trace is not None and exc.value.trace.diverged


def test_config_validation():
    with pytest.raises(ValueError):
        PicardConfig(AIRY, datum(), 0.0)
    with pytest.raises(ValueError):
        PicardConfig(AIRY, datum(), 0.1, nonlinearity_sign=2)


def test_free_flow_row_matches_bilinear_lab():
    phi = datum(5)
    tr = picard_iterate(PicardConfig(AIRY, phi, 0.05, 32, 2))
    row = iterate_bilinear_ratios(tr, pairs=[(1, 4)])[0]
    a, b = project(phi, 1), project(phi, 4)
    n = bilinear_norm(a, b, AIRY, 0.05, 32, "frames")
    ref = n * 4 / (lp_norm_array(a.values, G.dx, 2) * lp_norm_array(b.values, G.dx, 2))
    assert abs(row["1,4"] - ref) < 1e-12 * ref


def test_horizon_monotone_in_data_size():
    Ts = [find_contraction_horizon(AIRY, datum(6, amp=a), 0.5, n_steps=64, iterations=4) for a in (1, 2, 4, 8)]
    assert all(b <= a for a, b in zip(Ts, Ts[1:]))
    assert Ts[-1] < Ts[0]


# reference solver


def test_reference_without_nonlinearity_is_free_flow():
    phi = datum(7)
    u = reference_solve(BO, phi, 0.2, 8, coefficient=0.0)
    assert np.max(np.abs(u.values[-1] - linear_propagate(phi, 0.2, BO).values)) < 1e-10


def test_reference_fourth_order_and_conservation():
    phi = datum(8, amp=2.0)
    T = 0.1
    # asymptotic only once h times the largest resonant phase rate drops below one
    sols = [reference_solve(AIRY, phi, T, n).values[-1] for n in (64, 128, 256, 1024)]
    errs = [np.sqrt(np.sum((s - sols[-1]) ** 2) * G.dx) for s in sols[:-1]]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert min(orders) > 3.5
    assert l2_drift(reference_solve(AIRY, phi, T, 256, substeps=4)) < 1e-8


def test_reference_unstable_step():
    with pytest.raises(StepUnstable):
        reference_solve(AIRY, datum(9, amp=30.0), 1.0, 2)


def test_oracle_distance_is_second_order_in_step():
    # iterates converge to the trapezoid fixed point, whose distance to the ODE solution is O(h²)
    phi = datum(10)
    coarse = picard_vs_oracle(PicardConfig(AIRY, phi, 0.1, 128, 6))
    fine = picard_vs_oracle(PicardConfig(AIRY, phi, 0.1, 512, 6), substeps=2)
    assert np.log(coarse / fine) / np.log(4) > 1.8


def test_continuity_and_lipschitz():
    phi = datum(11)
    cfg = PicardConfig(AIRY, phi, 0.05, 32, 4)
    tr = picard_iterate(cfg)
    fine = picard_iterate(PicardConfig(AIRY, phi, 0.05, 64, 4))
    assert continuity_modulus(fine.iterates[-1], 0.25) < continuity_modulus(tr.iterates[-1], 0.25)
    r = lipschitz_ratio(cfg, phi * 1.01)
    assert 0 < r < 10


# Miura


def test_miura_expansion_symbolic():
    x, t = sp.symbols("x t")
    a, bm, b, c = sp.symbols("alpha_m beta_m b c")
    u = sp.Function("u")(x, t)
    v = a * sp.diff(u, x) + bm * u ** 2
    res = sp.diff(v, t) + sp.diff(v, x, 3) + c * sp.diff(v ** 2, x)
    res = res.subs(sp.Derivative(u, t), -sp.diff(u, x, 3) - b * u ** 2 * sp.diff(u, x)).doit()
    res = res.subs(sp.Derivative(u, t), -sp.diff(u, x, 3) - b * u ** 2 * sp.diff(u, x)).doit()
    ux, uxx = sp.diff(u, x), sp.diff(u, x, 2)
    claimed = (2 * (a ** 2 * c + 3 * bm) * ux * uxx + a * (2 * bm * c - b) * sp.diff(u ** 2 * ux, x)
               + 2 * bm * (2 * bm * c - b) * u ** 3 * ux)
    assert sp.simplify(sp.expand(res - claimed)) == 0
    comp = MiuraSpec.compatible(1.5, 0.4)
    subs = {a: comp.alpha_m, bm: comp.beta_m, b: comp.b, c: comp.c}
    assert sp.simplify(claimed.subs(subs)) == 0
    lit = MiuraSpec.literal()
    assert sp.simplify(claimed.subs({a: lit.alpha_m, bm: lit.beta_m, b: lit.b, c: lit.c})) != 0


def test_miura_zero_and_orders():
    z = reference_solve(AIRY, RealField.zeros(G), 0.05, 8)
    assert miura_residual(z, MiuraSpec.compatible()) == 0.0
    phi = datum(12)
    comp = miura_study(phi, MiuraSpec.compatible(), 0.05, [32, 64, 128])
    assert min(comp["orders"]) > 1.8
    lit = miura_study(phi, MiuraSpec.literal(), 0.05, [32, 64, 128])
    assert lit["residuals"][-1] > 10 * comp["residuals"][-1]
    assert max(abs(o) for o in lit["orders"]) < 0.5
