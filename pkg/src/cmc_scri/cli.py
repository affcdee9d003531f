"""Command-line pipeline: config parsing, orchestration, artifact emission.

Subcommands: foliation-check (slab positivity plus small-s expansion rates),
barriers (pair selection and the obstruction ladder), solve (full
continuation run with diagnostics), asymptotics (re-fit an existing run's
CSV), report (merge several run reports).

Config is JSON with an integer "schema" field; --override key=value patches
it with dot paths after loading.  Exit codes: 0 all checks pass, 1 a
scientific check fails or a solver/selection error is raised, 2 the config
or command line is unusable.  All artifacts are deterministic: CSV cells go
through one %.17g formatter, JSON keys are sorted, and nothing run-varying
(timings, hostnames, paths) is written.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .barriers import higher_order_obstruction, select_barriers
from .errors import CmcScriError, ConfigError, InsufficientWindowError
from .foliation import (
    CosCut,
    FoliationParams,
    Legendre2Cut,
    TabulatedCut,
    ZeroCut,
    foliation_geometry,
    slab_failures,
)
from .io_utils import dump_json, read_csv, write_csv
from .solver import SolverConfig, solve_cmc_graph
from .sphere import SphereFunction

SCHEMA_VERSION = 1

SOLVER_DEFAULTS = {
    "n_theta": 64,
    "n_s": 256,
    "n_stages": 4,
    "newton_tol": 1e-10,
    "max_newton": 50,
    "guard_factor": 1e-3,
    "armijo": 1e-4,
    "min_step": 2.0**-20,
    "boundary_offset": 0.0,
    "certificate_tol": 1e-6,
}

CONFIG_DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "m": 1.0,
    "h0": 1.0,
    "cut": {"type": "zero"},
    "s0": None,
    "tau_window": None,
    "s_max": None,
    "solver": SOLVER_DEFAULTS,
    "out": "runs/latest",
}

CUT_TYPES = ("zero", "cos-theta", "legendre2", "tabulated")


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings stay strings
    return key.strip(), value


def _apply_override(config: dict, key: str, value):
    parts = key.split(".")
    node = config
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"override path {key!r}: no table {part!r}")
        node = node[part]
    leaf = parts[-1]
    known = leaf in node or (len(parts) == 2 and parts[0] == "cut")
    if not known:
        raise ConfigError(f"override path {key!r}: unknown key {leaf!r}")
    node[leaf] = value


def load_config(path: str | None, overrides) -> dict:
    """Defaults, optionally overlaid by a JSON file, then by --override."""
    config = json.loads(json.dumps(CONFIG_DEFAULTS))
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}")
        if not isinstance(user, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        if "schema" not in user:
            raise ConfigError("config missing required 'schema' field")
        for key, value in user.items():
            if key not in CONFIG_DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "solver":
                if not isinstance(value, dict):
                    raise ConfigError("'solver' must be a table")
                for skey, sval in value.items():
                    if skey not in SOLVER_DEFAULTS:
                        raise ConfigError(f"unknown solver key {skey!r}")
                    config["solver"][skey] = sval
            elif key == "cut":
                config["cut"] = value
            else:
                config[key] = value
    for item in overrides or ():
        _apply_override(config, *_parse_override(item))
    validate_config(config)
    return config


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate_config(config: dict):
    _require(config.get("schema") == SCHEMA_VERSION,
             f"unsupported schema {config.get('schema')!r}; "
             f"this build reads schema {SCHEMA_VERSION}")
    _require(isinstance(config["m"], (int, float)) and config["m"] > 0,
             "mass m must be positive")
    _require(isinstance(config["h0"], (int, float)) and config["h0"] > 0,
             "h0 must be positive")
    cut = config["cut"]
    _require(isinstance(cut, dict) and cut.get("type") in CUT_TYPES,
             f"cut.type must be one of {CUT_TYPES}")
    if cut["type"] in ("cos-theta", "legendre2"):
        amp = cut.get("amplitude")
        _require(isinstance(amp, (int, float)) and np.isfinite(amp),
                 f"cut.amplitude required for {cut['type']}")
    if cut["type"] == "tabulated":
        _require(isinstance(cut.get("path"), str), "cut.path required")
    for key in ("s0", "s_max"):
        v = config[key]
        _require(v is None or (isinstance(v, (int, float)) and v > 0),
                 f"{key} must be positive when given")
    tw = config["tau_window"]
    if tw is not None:
        _require(isinstance(tw, (list, tuple)) and len(tw) == 2
                 and 0 < tw[0] < tw[1], "tau_window must be [t1, t2], 0 < t1 < t2")
    sc = config["solver"]
    _require(isinstance(sc["n_theta"], int) and sc["n_theta"] >= 4,
             "solver.n_theta must be an integer >= 4")
    _require(isinstance(sc["n_s"], int) and sc["n_s"] >= 8,
             "solver.n_s must be an integer >= 8")
    _require(isinstance(sc["n_stages"], int) and sc["n_stages"] >= 1,
             "solver.n_stages must be an integer >= 1")
    _require(isinstance(sc["max_newton"], int) and sc["max_newton"] >= 1,
             "solver.max_newton must be an integer >= 1")
    for key in ("newton_tol", "guard_factor", "armijo", "min_step",
                "certificate_tol"):
        _require(isinstance(sc[key], (int, float)) and sc[key] > 0,
                 f"solver.{key} must be positive")
    _require(isinstance(sc["boundary_offset"], (int, float))
             and np.isfinite(sc["boundary_offset"]),
             "solver.boundary_offset must be finite")
    _require(isinstance(config["out"], str) and config["out"],
             "out must be a nonempty path")


def build_cut(spec: dict, base: Path):
    kind = spec["type"]
    if kind == "zero":
        return ZeroCut()
    if kind == "cos-theta":
        return CosCut(float(spec["amplitude"]))
    if kind == "legendre2":
        return Legendre2Cut(float(spec["amplitude"]))
    path = base / spec["path"]
    try:
        _, rows = read_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"tabulated cut file not found: {path}")
    values = np.array([row[-1] for row in rows])
    n = values.size
    if n < 4:
        raise ConfigError("tabulated cut needs at least 4 rows")
    grid = (np.arange(n) + 0.5) * np.pi / n
    thetas = np.array([row[0] for row in rows])
    if not np.allclose(thetas, grid, atol=1e-9):
        raise ConfigError(
            "tabulated cut theta column must be the cell-centered grid "
            f"(i + 1/2) pi / {n}"
        )
    return TabulatedCut(SphereFunction(values))


def build_params(config: dict, base: Path) -> FoliationParams:
    cut = build_cut(config["cut"], base)
    tw = config["tau_window"]
    return FoliationParams.from_theorem_data(
        m=float(config["m"]),
        cut=cut,
        h0=float(config["h0"]),
        n_theta=config["solver"]["n_theta"],
        s0=config["s0"],
        tau_window=tuple(tw) if tw is not None else None,
    )


def build_solver_config(config: dict) -> SolverConfig:
    sc = config["solver"]
    return SolverConfig(**{k: sc[k] for k in SOLVER_DEFAULTS})


def _out_dir(args, config) -> Path:
    out = Path(args.out if args.out is not None else config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_claims(rows):
    for row in rows:
        status = "PASS" if row["pass"] else "FAIL"
        value = row["value"]
        shown = "n/a" if value is None else f"{value:.6g}"
        print(f"  [{status}] {row['claim']}: {shown} "
              f"({row['direction']} {row['threshold']:.6g})")


# -- foliation-check ---------------------------------------------------------

EXPANSION_S = np.geomspace(1e-4, 1e-2, 9)
SLOPE_FLOOR = 0.9
VACUOUS_SUP = 1e-13


def _expansion_rows(params: FoliationParams, tau: float) -> list:
    """Decay rates of alpha - 1, H - 1/tau, K - I/tau toward s = 0."""
    th = params.theta_grid()
    geo = foliation_geometry(params, th[:, None], EXPANSION_S[None, :], tau)
    eye = np.eye(3)
    quantities = {
        "alpha-1": np.abs(geo.alpha - 1.0),
        "H-1/tau": np.abs(geo.H - 1.0 / tau),
        "K-I/tau": np.max(np.abs(geo.K - eye / tau), axis=(-2, -1)),
    }
    rows = []
    for name, err in quantities.items():
        sup = np.max(err, axis=0)
        top = float(np.max(sup))
        if top < VACUOUS_SUP:
            slope, ok = None, True
        else:
            slope = float(np.polyfit(np.log(EXPANSION_S), np.log(sup), 1)[0])
            ok = slope >= SLOPE_FLOOR
        rows.append({
            "claim": f"expansion-{name}",
            "tau": tau,
            "value": slope,
            "threshold": SLOPE_FLOOR,
            "direction": ">=",
            "sup": top,
            "pass": bool(ok),
        })
    return rows


def cmd_foliation_check(args) -> int:
    config = load_config(args.config, args.override)
    base = Path(args.config).parent if args.config else Path.cwd()
    out = _out_dir(args, config)
    params = build_params(config, base)
    failures = slab_failures(params)
    t1, t2 = params.tau_window
    rows = []
    for q in (0.25, 0.5, 0.75):
        rows.extend(_expansion_rows(params, t1 + q * (t2 - t1)))
    slab_ok = not failures
    all_ok = slab_ok and all(r["pass"] for r in rows)
    report = {
        "schema": SCHEMA_VERSION,
        "config": config,
        "s0": params.s0,
        "slab": {"ok": slab_ok, "failures": failures[:40]},
        "expansions": rows,
        "all_pass": bool(all_ok),
    }
    dump_json(out / "foliation_check.json", report)
    print(f"slab s0 = {params.s0:g}: "
          f"{'ok' if slab_ok else f'{len(failures)} violations'}")
    if failures:
        print("  worst locations (theta, s, tau, L, P_tau):")
        for row in failures[:8]:
            print("   ", {k: f"{v:.6g}" for k, v in row.items()})
    _print_claims(rows)
    print(f"report: {out / 'foliation_check.json'}")
    return 0 if all_ok else 1


# -- barriers ----------------------------------------------------------------

OBSTRUCTION_ORDERS = (2, 3, 4)


def _obstruction_rows(params: FoliationParams, h0: float) -> list:
    rows = []
    for k in OBSTRUCTION_ORDERS:
        est = higher_order_obstruction(params, h0, k)
        expected = (3 - k) * _factorial(k + 1) / 3 * h0 ** (k + 1)
        tol = 0.5 * h0 ** (k + 1) if k == 3 else 0.1 * abs(expected)
        err = abs(est.value - expected)
        rows.append({
            "claim": f"obstruction-order-{k}",
            "value": est.value,
            "expected": expected,
            "threshold": tol,
            "direction": "<=",
            "spread": est.spread,
            "pass": bool(err <= tol),
        })
    return rows


def _factorial(n: int) -> int:
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


def cmd_barriers(args) -> int:
    config = load_config(args.config, args.override)
    base = Path(args.config).parent if args.config else Path.cwd()
    out = _out_dir(args, config)
    params = build_params(config, base)
    h0 = float(config["h0"])
    pair = select_barriers(params, h0, config["s_max"] or params.s0)
    rows = _obstruction_rows(params, h0)
    report = {
        "schema": SCHEMA_VERSION,
        "config": config,
        "pair": {
            "beta_lower": pair.beta_lower,
            "beta_upper": pair.beta_upper,
            "s_max": pair.s_max,
            "margin_lower": pair.margin_lower,
            "margin_upper": pair.margin_upper,
            "halvings": pair.halvings,
        },
        "obstructions": rows,
        "all_pass": bool(all(r["pass"] for r in rows)),
    }
    dump_json(out / "barriers.json", report)
    print(f"barriers: beta in [{pair.beta_lower:g}, {pair.beta_upper:g}] "
          f"on (0, {pair.s_max:g}], margins "
          f"({pair.margin_lower:.3e}, {pair.margin_upper:.3e})")
    _print_claims(rows)
    print(f"report: {out / 'barriers.json'}")
    return 0 if report["all_pass"] else 1


# -- solve -------------------------------------------------------------------

def _manifest(config, result) -> dict:
    cert = result.certificate
    return {
        "schema": SCHEMA_VERSION,
        "config": config,
        "s0": result.params.s0,
        "s_max": result.s_max,
        "barriers": {
            "beta_lower": result.barriers.beta_lower,
            "beta_upper": result.barriers.beta_upper,
            "s_max": result.barriers.s_max,
            "margin_lower": result.barriers.margin_lower,
            "margin_upper": result.barriers.margin_upper,
            "halvings": result.barriers.halvings,
        },
        "stages": [
            {
                "s_min": st.grid.s_min,
                "s_max": st.grid.s_max,
                "n_s": st.grid.n_s,
                "n_theta": st.grid.n_theta,
                "newton_iterations": st.newton_iterations,
                "final_residual": st.final_residual,
                "min_L": st.min_L,
                "guard_activations": st.guard_activations,
                "residual_history": list(st.residual_history),
            }
            for st in result.stages
        ],
        "sandwich_margins": [list(m) for m in result.sandwich_margins()],
        "certificate": None if cert is None else {
            "window": list(cert.window),
            "gaps": list(cert.gaps),
            "final_gap": cert.final_gap,
            "gaps_decreasing": cert.gaps_decreasing,
            "barrier_width": cert.barrier_width,
            "passed": cert.passed,
        },
    }


def cmd_solve(args) -> int:
    config = load_config(args.config, args.override)
    base = Path(args.config).parent if args.config else Path.cwd()
    out = _out_dir(args, config)
    params = build_params(config, base)
    h0 = float(config["h0"])
    solver_config = build_solver_config(config)
    result = solve_cmc_graph(params, h0, s_max=config["s_max"],
                             config=solver_config)
    fit = None
    if result.final.grid.s_min <= result.s_max / 8 * (1 + 1e-12):
        fit = diagnostics.fit_asymptotics(result)
    lips = diagnostics.lipschitz_check(result)
    tilt = diagnostics.tilt_boundedness(result)
    claims = diagnostics.claims_report(result, fit, lips, tilt)

    write_csv(out / "solution.csv", *diagnostics.solution_rows(result))
    if fit is not None:
        write_csv(out / "fit_residuals.csv",
                  *diagnostics.fit_residual_rows(fit))
    write_csv(out / "tilt_profile.csv", *diagnostics.tilt_profile_rows(tilt))
    write_csv(out / "lipschitz_levels.csv",
              ["s", "sup_dq_dtheta", "sup_dq_ds"],
              zip(lips.level_s, lips.level_dtheta, lips.level_ds))
    dump_json(out / "report.json", {
        "schema": SCHEMA_VERSION,
        "claims": claims,
        "fit": None if fit is None else {
            "c0_mean": float(np.mean(fit.c0)),
            "c1_mean": float(np.mean(fit.c1)),
            "c2_mean": float(np.mean(fit.c2)),
            "normalized_errors": list(fit.normalized_errors),
            "slope": fit.slope,
        },
        "all_pass": bool(all(row["pass"] for row in claims)),
    })
    dump_json(out / "manifest.json", _manifest(config, result))
    (out / "plot_report.py").write_text(diagnostics.plot_script())

    for st in result.stages:
        print(f"stage [{st.grid.s_min:.6g}, {st.grid.s_max:.6g}]: "
              f"{st.newton_iterations} Newton steps, residual "
              f"{st.final_residual:.3e}, min L {st.min_L:.3e}")
    _print_claims(claims)
    print(f"artifacts in {out}")
    ok = all(row["pass"] for row in claims)
    return 0 if ok else 1


# -- asymptotics (re-fit existing artifacts) ---------------------------------

def cmd_asymptotics(args) -> int:
    run_dir = Path(args.out if args.out is not None else ".")
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json under {run_dir}; "
                          "point --out at a previous solve run")
    manifest = json.loads(manifest_path.read_text())
    config = manifest["config"]
    validate_config(config)
    params = build_params(config, run_dir)
    h0 = float(config["h0"])
    _, rows = read_csv(run_dir / "solution.csv")
    arr = np.asarray(rows)
    s_levels = np.unique(arr[:, 1])
    theta = np.unique(arr[:, 0])
    Q = arr[:, 2].reshape(s_levels.size, theta.size)
    stage = manifest["stages"][-1]
    lo, hi = 2 * stage["s_min"], manifest["s_max"] / 4
    # the CSV already dropped the boundary rows; drop 2 more per side so the
    # window matches the solver-side fit node for node
    keep = (s_levels >= lo) & (s_levels <= hi)
    keep[:2] = keep[-2:] = False
    if np.count_nonzero(keep) < 8:
        raise InsufficientWindowError(
            f"window [{lo:g}, {hi:g}] keeps {int(np.count_nonzero(keep))} "
            "levels of the stored solution; need at least 8"
        )
    fit = diagnostics.fit_grid(s_levels[keep], theta, Q[keep, :], params, h0)
    rows_out = []
    for name, err in zip(("c0", "c1", "c2"), fit.normalized_errors):
        rows_out.append({
            "claim": f"asymptotic-{name}-normalized-error",
            "value": err, "threshold": 1.0, "direction": "<=",
            "pass": bool(err <= 1.0),
        })
    rows_out.append({
        "claim": "remainder-slope", "value": fit.slope,
        "threshold": diagnostics.SLOPE_THRESHOLD, "direction": ">=",
        "pass": bool(fit.slope_pass),
    })
    dump_json(run_dir / "asymptotics.json", {
        "schema": SCHEMA_VERSION,
        "claims": rows_out,
        "c0_mean": float(np.mean(fit.c0)),
        "c1_mean": float(np.mean(fit.c1)),
        "c2_mean": float(np.mean(fit.c2)),
        "all_pass": bool(all(r["pass"] for r in rows_out)),
    })
    _print_claims(rows_out)
    return 0 if all(r["pass"] for r in rows_out) else 1


# -- report (merge runs) -----------------------------------------------------

def cmd_report(args) -> int:
    merged = {"schema": SCHEMA_VERSION, "runs": {}, "all_pass": True}
    for run in args.runs:
        run_dir = Path(run)
        collected = []
        for name in ("report.json", "foliation_check.json", "barriers.json",
                     "asymptotics.json"):
            path = run_dir / name
            if not path.exists():
                continue
            doc = json.loads(path.read_text())
            for row in doc.get("claims", []) + doc.get("expansions", []) \
                    + doc.get("obstructions", []):
                collected.append(row)
            if name == "foliation_check.json" and not doc["slab"]["ok"]:
                collected.append({
                    "claim": "slab-positivity", "value": 0.0,
                    "threshold": 1.0, "direction": ">=", "pass": False,
                })
        if not collected:
            raise ConfigError(f"no reports found under {run_dir}")
        ok = all(row["pass"] for row in collected)
        merged["runs"][run_dir.name] = {"claims": collected, "all_pass": ok}
        merged["all_pass"] = merged["all_pass"] and ok
    out = Path(args.out if args.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "merged.json", merged)
    for name, block in merged["runs"].items():
        status = "PASS" if block["all_pass"] else "FAIL"
        print(f"[{status}] {name}: {len(block['claims'])} claims")
    return 0 if merged["all_pass"] else 1


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmc-scri",
        description="Constant-mean-curvature graphs near null infinity: "
                    "foliation checks, barrier selection, continuation "
                    "solves, and report tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dot-path config override, repeatable")

    p = sub.add_parser("foliation-check",
                       help="validate the slab and the small-s expansions")
    common(p)
    p.set_defaults(func=cmd_foliation_check)

    p = sub.add_parser("barriers",
                       help="select a barrier pair and probe the "
                            "obstruction ladder")
    common(p)
    p.set_defaults(func=cmd_barriers)

    p = sub.add_parser("solve", help="run the continuation solve")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("asymptotics",
                       help="re-fit the expansion from stored artifacts")
    p.add_argument("--out", help="run directory holding manifest.json")
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("report", help="merge run reports")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--out", help="where to write merged.json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except CmcScriError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
