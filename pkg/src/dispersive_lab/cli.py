"""Configuration-driven experiment runner.

Usage::

    dispersive-lab <command> --config <path.toml> [--out DIR] [--seed N] [--threads N]

Commands: lp-check, bilinear-sweep, strichartz, divcurl, picard, miura.
Exit codes: 0 when every check passes, 1 when any check fails or an experiment
raises, 2 when the configuration is invalid (nothing is written in that case).

The thread count may also come from ``DISPERSIVE_LAB_THREADS``; it never
changes the numbers, only the schedule.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from . import experiments as ex
from .bilinear_lab import SweepConfig
from .errors import ConfigError, LabError
from .flows import DispersionModel
from .spectral_core import Grid

COMMANDS = ("lp-check", "bilinear-sweep", "strichartz", "divcurl", "picard", "miura")

_NUM = (int, float)
_INT = (int,)
_STR = (str,)
_BOOL = (bool,)
_LIST = (list,)

# section -> key -> accepted types
SCHEMA: dict[str, dict[str, tuple]] = {
    "": {"command": _STR, "seed": _INT},
    "grid": {"n_points": _INT, "length": _NUM, "length_pi": _NUM},
    "model": {"family": _STR, "alpha": _NUM},
    "time": {"horizon": _NUM, "steps": _INT},
    "output": {"dir": _STR},
    "lp": {"samples": _INT, "s_list": _LIST},
    "sweep": {
        "mu": _LIST, "lambda": _LIST, "samples": _INT, "method": _STR, "data": _STR,
        "slope_band": _LIST, "alpha_ladder": _LIST, "ladder_band": _LIST, "match_tol": _NUM,
    },
    "strichartz": {
        "variant": _STR, "n_points_list": _LIST, "base_steps": _INT, "seeds": _INT,
        "lams": _LIST, "stability": _NUM,
    },
    "divcurl": {
        "mu": _NUM, "lam": _NUM, "steps": _INT, "flux_horizon": _NUM, "flux_steps": _LIST,
        "battery": _INT, "min_order": _NUM,
    },
    "picard": {
        "T0": _NUM, "steps": _INT, "search_iterations": _INT, "iterations": _INT, "lams": _LIST,
        "seeds": _LIST, "oracle_tol": _NUM, "substeps": _INT, "sign": _NUM, "families": _LIST,
        "conservation": _BOOL,
    },
    "miura": {"steps": _LIST, "lams": _LIST, "alpha_m": _NUM, "beta_m": _NUM, "min_order": _NUM},
}

COMMAND_SECTIONS = {
    "lp-check": {"grid", "output", "lp"},
    "bilinear-sweep": {"grid", "model", "time", "output", "sweep"},
    "strichartz": {"grid", "time", "output", "strichartz"},
    "divcurl": {"grid", "time", "output", "divcurl"},
    "picard": {"grid", "output", "picard"},
    "miura": {"grid", "time", "output", "miura"},
}

# desk-scale defaults; the generic grid is N = 4096, L = 128π
DEFAULT_GRID = {"n_points": 4096, "length": 128 * math.pi}
COMMAND_GRID = {
    "bilinear-sweep": {"n_points": 4096, "length": 2 * math.pi},
    "strichartz": {"n_points": 256, "length": 16 * math.pi},
    "divcurl": {"n_points": 2048, "length": 16 * math.pi},
    "picard": {"n_points": 256, "length": 16 * math.pi},
    "miura": {"n_points": 256, "length": 16 * math.pi},
}
COMMAND_TIME = {
    "bilinear-sweep": {"horizon": 0.5, "steps": 128},
    "strichartz": {"horizon": 0.5, "steps": 64},
    "divcurl": {"horizon": 0.01, "steps": 256},
    "miura": {"horizon": 0.05, "steps": 128},
}


# ---------------------------------------------------------------------------
# configuration


def _typecheck(section: str, key: str, value, types: tuple) -> None:
    if types == _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif types == _INT:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, types)
    if not ok:
        where = f"[{section}] {key}" if section else key
        raise ConfigError(f"{where} must be {'/'.join(t.__name__ for t in types)}, got {value!r}")


def _number_list(section, key, value, min_len=0, length=None):
    if not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"[{section}] {key} must be a list of numbers")
    if len(value) < min_len or (length is not None and len(value) != length):
        raise ConfigError(f"[{section}] {key} has the wrong length")
    return [float(v) for v in value]


def load_config(path, command: Optional[str] = None, seed: Optional[int] = None) -> dict:
    """Parse, validate and complete a TOML experiment configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    return validate_config(raw, command, seed)


def validate_config(raw: dict, command: Optional[str] = None, seed: Optional[int] = None) -> dict:
    cfg_command = raw.get("command")
    if command is None:
        command = cfg_command
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    if cfg_command is not None and cfg_command != command:
        raise ConfigError(f"config is for {cfg_command!r} but {command!r} was requested")
    allowed = COMMAND_SECTIONS[command]
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in allowed:
                raise ConfigError(f"section [{key}] is not valid for {command}")
            for k, v in value.items():
                if k not in SCHEMA[key]:
                    raise ConfigError(f"unknown key {k!r} in [{key}]")
                _typecheck(key, k, v, SCHEMA[key][k])
        else:
            if key not in SCHEMA[""]:
                raise ConfigError(f"unknown top-level key {key!r}")
            _typecheck("", key, value, SCHEMA[""][key])

    out: dict[str, Any] = {"command": command}
    out["seed"] = int(raw.get("seed", 0) if seed is None else seed)
    if not 0 <= out["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    g = dict(COMMAND_GRID.get(command, DEFAULT_GRID))
    graw = raw.get("grid", {})
    if "length" in graw and "length_pi" in graw:
        raise ConfigError("[grid] give either length or length_pi, not both")
    if "n_points" in graw:
        g["n_points"] = graw["n_points"]
    if "length" in graw:
        g["length"] = float(graw["length"])
    if "length_pi" in graw:
        g["length"] = float(graw["length_pi"]) * math.pi
    try:
        Grid(g["n_points"], g["length"])
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None
    out["grid"] = g

    if "time" in allowed:
        t = dict(COMMAND_TIME.get(command, {"horizon": 0.5, "steps": 128}))
        t.update(raw.get("time", {}))
        if not t["horizon"] > 0 or t["steps"] < 1:
            raise ConfigError("[time] horizon and steps must be positive")
        out["time"] = {"horizon": float(t["horizon"]), "steps": int(t["steps"])}
    out["output"] = {"dir": raw.get("output", {}).get("dir", "out")}

    section = {
        "lp-check": _lp_section,
        "bilinear-sweep": _sweep_section,
        "strichartz": _strichartz_section,
        "divcurl": _divcurl_section,
        "picard": _picard_section,
        "miura": _miura_section,
    }[command]
    out.update(section(raw))
    return out


def _lp_section(raw):
    s = raw.get("lp", {})
    samples = s.get("samples", 100)
    if samples < 1:
        raise ConfigError("[lp] samples must be positive")
    s_list = _number_list("lp", "s_list", s.get("s_list", [0.125, 0.25, 0.375, 1.0]), 1)
    return {"lp": {"samples": samples, "s_list": s_list}}


def _model_section(raw):
    m = raw.get("model", {})
    fam = m.get("family", "airy")
    try:
        model = DispersionModel(fam, m.get("alpha", 0.0))
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None
    return model.to_dict()


def _sweep_section(raw):
    s = raw.get("sweep", {})
    out = {
        "mu": _number_list("sweep", "mu", s.get("mu", [2]), 1),
        "lambda": _number_list("sweep", "lambda", s.get("lambda", [32, 64, 128, 256, 512]), 1),
        "samples": s.get("samples", 8),
        "method": s.get("method", "exact"),
        "data": s.get("data", "dyadic"),
    }
    if "slope_band" in s:
        out["slope_band"] = _number_list("sweep", "slope_band", s["slope_band"], length=2)
    if "alpha_ladder" in s:
        out["alpha_ladder"] = _number_list("sweep", "alpha_ladder", s["alpha_ladder"], 2)
        out["ladder_band"] = _number_list("sweep", "ladder_band", s.get("ladder_band", [-0.95, -0.55]),
                                          length=2)
        out["match_tol"] = float(s.get("match_tol", 1e-10))
    return {"model": _model_section(raw), "sweep": out}


def _strichartz_section(raw):
    s = raw.get("strichartz", {})
    variant = s.get("variant", "mkdv")
    if variant not in ("mkdv", "mbo"):
        raise ConfigError("[strichartz] variant must be 'mkdv' or 'mbo'")
    ns = s.get("n_points_list", [256, 512, 1024])
    if not all(isinstance(n, int) and not isinstance(n, bool) for n in ns):
        raise ConfigError("[strichartz] n_points_list must hold integers")
    return {"strichartz": {
        "variant": variant,
        "n_points_list": ns,
        "base_steps": s.get("base_steps", 64),
        "seeds": s.get("seeds", 100),
        "lams": _number_list("strichartz", "lams", s.get("lams", [1, 2, 4]), 1),
        "stability": float(s.get("stability", 0.2)),
    }}


def _divcurl_section(raw):
    s = raw.get("divcurl", {})
    return {"divcurl": {
        "mu": float(s.get("mu", 1.0)),
        "lam": float(s.get("lam", 4.0)),
        "flux_horizon": float(s.get("flux_horizon", 0.05)),
        "flux_steps": [int(v) for v in _number_list("divcurl", "flux_steps", s.get("flux_steps", [32, 64, 128]), 3)],
        "battery": s.get("battery", 4),
        "min_order": float(s.get("min_order", 1.8)),
    }}


def _picard_section(raw):
    s = raw.get("picard", {})
    fams = s.get("families", ["airy", "bo"])
    for f in fams:
        if f not in ("airy", "bo"):
            raise ConfigError("[picard] families may contain 'airy' and 'bo'")
    sign = s.get("sign", 1)
    if sign not in (1, -1):
        raise ConfigError("[picard] sign must be +1 or -1")
    return {"picard": {
        "T0": float(s.get("T0", 0.25)),
        "steps": s.get("steps", 512),
        "search_iterations": s.get("search_iterations", 6),
        "iterations": s.get("iterations", 8),
        "lams": _number_list("picard", "lams", s.get("lams", [1, 4]), 1),
        "seeds": [int(v) for v in _number_list("picard", "seeds", s.get("seeds", [0, 1, 2]), 1)],
        "oracle_tol": float(s.get("oracle_tol", 1e-5)),
        "substeps": s.get("substeps", 4),
        "sign": float(sign),
        "families": list(fams),
        "conservation": s.get("conservation", True),
    }}


def _miura_section(raw):
    s = raw.get("miura", {})
    alpha_m = float(s.get("alpha_m", 1.0))
    if alpha_m == 0:
        raise ConfigError("[miura] alpha_m must be nonzero")
    return {"miura": {
        "steps": [int(v) for v in _number_list("miura", "steps", s.get("steps", [32, 64, 128]), 3)],
        "lams": _number_list("miura", "lams", s.get("lams", [1, 4]), 1),
        "alpha_m": alpha_m,
        "beta_m": float(s.get("beta_m", 2 ** -0.5)),
        "min_order": float(s.get("min_order", 1.8)),
    }}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# dispatch


def _grid(cfg) -> Grid:
    return Grid(cfg["grid"]["n_points"], cfg["grid"]["length"])


def _model(d) -> DispersionModel:
    return DispersionModel(d["family"], d.get("alpha", 0.0))


def execute(cfg: dict, threads: int = 1) -> ex.ExperimentResult:
    cmd = cfg["command"]
    grid = _grid(cfg)
    seed = cfg["seed"]
    if cmd == "lp-check":
        p = cfg["lp"]
        return ex.run_lp_check(grid, seed, p["samples"], p["s_list"], threads)
    if cmd == "bilinear-sweep":
        s, t = cfg["sweep"], cfg["time"]
        sweep = SweepConfig(
            _model(cfg["model"]), s["mu"], s["lambda"], t["horizon"], t["steps"], s["samples"],
            seed, grid=grid, method=s["method"], data=s["data"],
        )
        if "alpha_ladder" in s:
            return ex.run_gbo_family(sweep, s["alpha_ladder"], 0.5, s["ladder_band"], s["match_tol"], threads)
        return ex.run_bilinear_sweep(sweep, s.get("slope_band"), threads)
    if cmd == "strichartz":
        s, t = cfg["strichartz"], cfg["time"]
        return ex.run_strichartz(s["variant"], s["n_points_list"], grid.length, t["horizon"], s["base_steps"],
                                 s["seeds"], s["lams"], seed, s["stability"], threads)
    if cmd == "divcurl":
        s, t = cfg["divcurl"], cfg["time"]
        return ex.run_divcurl(grid, s["mu"], s["lam"], t["horizon"], t["steps"], s["flux_horizon"],
                              s["flux_steps"], seed, s["battery"], s["min_order"], threads)
    if cmd == "picard":
        s = cfg["picard"]
        res = ex.ExperimentResult()
        parts = [(fam, ex.run_picard(
            DispersionModel(fam), grid, s["T0"], s["steps"], s["search_iterations"], s["iterations"],
            s["lams"], [seed + k for k in s["seeds"]], s["oracle_tol"], s["substeps"], s["sign"],
        )) for fam in s["families"]]
        if s["conservation"]:
            parts.append(("conservation",
                          ex.run_conservation(grid, s["T0"], s["steps"], s["lams"], seed, s["substeps"])))
        for name, part in parts:
            res.checks.extend(part.checks)
            res.results[name] = part.results
            res.plot_data.update(part.plot_data)
        return res
    s, t = cfg["miura"], cfg["time"]
    return ex.run_miura(grid, t["horizon"], s["steps"], s["lams"], seed, s["alpha_m"], s["beta_m"],
                        s["min_order"])


def _default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def build_report(cfg: dict, result: ex.ExperimentResult, error: Optional[str] = None) -> dict:
    checks = [c.to_dict() for c in result.checks]
    if error is not None:
        checks.append({"name": "experiment_error", "value": error, "threshold": None,
                       "comparison": "raised", "passed": False})
    return {
        "tool": "dispersive-lab",
        "version": __version__,
        "command": cfg["command"],
        "config": cfg,
        "config_hash": config_hash(cfg),
        "passed": error is None and result.passed,
        "checks": checks,
        "results": ex._jsonable(result.results),
        "plot_data": ex._jsonable(result.plot_data),
    }


def _csv_value(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def emit_plot_data(report: dict, out_dir) -> list[Path]:
    """Write one CSV per table in ``report['plot_data']``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, tab in sorted(report.get("plot_data", {}).items()):
        path = out_dir / f"{name}.csv"
        rows = tab.get("rows", [])
        if name == "sweep_fit":
            rows = sorted(rows, key=lambda r: r[0])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(tab["columns"])
            for r in rows:
                w.writerow([_csv_value(v) for v in r])
        paths.append(path)
    return paths


def write_report(report: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")
    return path


def run(config_path, command: Optional[str] = None, out: Optional[str] = None,
        seed: Optional[int] = None, threads: Optional[int] = None, echo: bool = True) -> int:
    """Validate, execute, write ``report.json``/CSVs/``timings.json``; returns the exit code."""
    try:
        cfg = load_config(config_path, command, seed)
        if threads is None:
            env = os.environ.get("DISPERSIVE_LAB_THREADS")
            try:
                threads = int(env) if env else 1
            except ValueError:
                raise ConfigError(f"DISPERSIVE_LAB_THREADS={env!r} is not an integer") from None
        if threads < 1:
            raise ConfigError("thread count must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(out if out is not None else cfg["output"]["dir"])
    t0 = time.perf_counter()
    error = None
    try:
        result = execute(cfg, threads)
    except (LabError, ValueError, ArithmeticError) as exc:
        result, error = ex.ExperimentResult(), f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0
    report = build_report(cfg, result, error)
    write_report(report, out_dir)
    emit_plot_data(report, out_dir)
    with open(out_dir / "timings.json", "w") as fh:
        json.dump({"command": cfg["command"], "threads": threads, "wall_seconds": elapsed}, fh, indent=2)
    if echo:
        for c in result.checks:
            print(c.line())
        if error:
            print(f"FAIL experiment_error: {error}")
        print(f"{'PASS' if report['passed'] else 'FAIL'} {cfg['command']} ({elapsed:.1f} s) -> {out_dir}")
    return 0 if report["passed"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dispersive-lab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="TOML experiment configuration")
    parser.add_argument("--out", help="output directory (overrides [output] dir)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--threads", type=int, help="worker threads (default 1)")
    args = parser.parse_args(argv)
    return run(args.config, args.command, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
