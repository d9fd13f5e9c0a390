"""End-to-end acceptance battery C1-C11 at the stated tolerances.

Each test records its verdict through ``conftest.record`` so the session
summary prints one PASS/FAIL line per criterion, then asserts it.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from dispersive_lab import experiments as ex
from dispersive_lab.bilinear_lab import SweepConfig
from dispersive_lab.cli import run
from dispersive_lab.flows import DispersionModel
from dispersive_lab.spectral_core import Grid

from conftest import record

pytestmark = pytest.mark.acceptance

ROOT = Path(__file__).resolve().parents[1]
SWEEP_GRID = Grid(4096, 2 * np.pi)
LAMBDAS = [32, 64, 128, 256, 512]


def sweep_cfg(model):
    return SweepConfig(model, [2], LAMBDAS, horizon=0.5, time_steps=128, samples_per_pair=8,
                       seed=0, grid=SWEEP_GRID, method="exact")


def verdict(key, title, result, extra=()):
    lines = [c.line() for c in result.checks] + list(extra)
    record(key, title, result.passed, lines)
    if not result.passed:
        pytest.fail("; ".join(c.line() for c in result.checks if c.passed is False), pytrace=False)


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def test_c1_bilinear_airy():
    res, dt = timed(ex.run_bilinear_sweep, sweep_cfg(DispersionModel.airy()), band=(-1.2, -0.8))
    verdict("C1", "bilinear exponent, Airy", res, [f"runtime {dt:.1f} s (target < 180 s)"])


def test_c2_bilinear_bo():
    res, _ = timed(ex.run_bilinear_sweep, sweep_cfg(DispersionModel.bo()), band=(-0.7, -0.3))
    verdict("C2", "bilinear exponent, BO", res)


def test_c3_bilinear_gbo_family():
    res = ex.run_gbo_family(sweep_cfg(DispersionModel.gbo(0.5)), alphas=(0.0, 0.5, 1.0),
                            band_alpha=0.5, band=(-0.95, -0.55), match_tol=1e-10)
    verdict("C3", "bilinear exponent, gBO family", res)


def test_c4_c5_identity_and_fluxes():
    res = ex.run_divcurl(Grid(2048, 16 * np.pi), mu=1.0, lam=4.0, T=0.01, steps=256,
                         flux_T=0.05, flux_steps=(32, 64, 128), min_order=1.8)
    c4 = ex.ExperimentResult([c for c in res.checks if c.name.startswith("bilinear_identity")])
    c5 = ex.ExperimentResult([c for c in res.checks if c.name.startswith("flux_") or c.name == "bo_integrand_mean"])
    other = [c.line() for c in res.checks if c not in c4.checks and c not in c5.checks]
    record("C4", "bilinear identity gap and order", c4.passed, [c.line() for c in c4.checks])
    record("C5", "flux conservation orders", c5.passed, [c.line() for c in c5.checks] + other)
    assert c4.passed and c5.passed


def test_c6_littlewood_paley():
    res = ex.run_lp_check(Grid(4096, 128 * np.pi), seed=0, samples=100, s_list=(1 / 8, 1 / 4, 3 / 8, 1))
    verdict("C6", "Littlewood-Paley suite", res)


def test_c7_conservation():
    res = ex.run_conservation(Grid(256, 16 * np.pi), T=0.25, steps=512, lams=(1, 4), seed=0, substeps=4)
    verdict("C7", "L2 conservation", res)


def test_c8_strichartz():
    res = ex.ExperimentResult()
    for variant in ("mkdv", "mbo"):
        res.extend(ex.run_strichartz(variant, (256, 512, 1024), 16 * np.pi, T=0.5, base_steps=64,
                                     seeds=100, lams=(1, 2, 4), seed=0, stability=0.2))
    verdict("C8", "Strichartz boundedness", res)


def test_c9_picard():
    res = ex.ExperimentResult()
    t0 = time.perf_counter()
    for model in (DispersionModel.airy(), DispersionModel.bo()):
        res.extend(ex.run_picard(model, Grid(256, 16 * np.pi), T0=0.25, steps=512, iterations=8,
                                 oracle_tol=1e-5))
    dt = time.perf_counter() - t0
    verdict("C9", "Picard contraction", res, [f"runtime {dt:.1f} s (target < 300 s)"])


def test_c10_miura():
    res = ex.run_miura(Grid(256, 16 * np.pi), T=0.05, steps=(32, 64, 128), min_order=1.8)
    verdict("C10", "Miura compatibility", res)


@pytest.mark.parametrize("name", ["bilinear-bo", "strichartz-mbo"])
def test_c11_determinism(tmp_path, name):
    cfg = ROOT / "configs" / f"{name}.toml"
    dirs = [tmp_path / f"t{n}" for n in (1, 4)]
    for d, n in zip(dirs, (1, 4)):
        run(cfg, out=str(d), threads=n, echo=False)
    files = sorted(p.name for p in dirs[0].iterdir() if p.name != "timings.json")
    same = [f for f in files if (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()]
    prev = test_c11_determinism.__dict__.setdefault("seen", {})
    prev[name] = (same == files, f"{name}: {len(same)}/{len(files)} files identical at 1 vs 4 threads")
    record("C11", "thread-count determinism", all(ok for ok, _ in prev.values()), [m for _, m in prev.values()])
    assert same == files
