"""Command-line driver: ``dynlagrange {validate|grid|verify|simulate} --config FILE``.

Exit codes: 0 success, 2 warnings only, 1 failure, 64 unusable input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import quadrature
from .config import ConfigError, load_config
from .duality import DualField
from .errors import (ConsistencyError, DomainError, EnvelopeError, MarketError,
                     QuadratureAccuracyError, RangeError, UtilityError)
from .portfolio import budget_martingale, euler_replication_check, homogeneity_error, simulate_batch
from .svg import line_plot
from .utility import build_envelope, validate_assumptions

EXIT_OK, EXIT_FAIL, EXIT_WARN, EXIT_USAGE = 0, 1, 2, 64
WORKERS_ENV = "DYNLAGRANGE_WORKERS"
HOMOGENEITY_TOL = 1e-8
BUDGET_Z = 3.0
_RUN_ERRORS = (DomainError, MarketError, UtilityError, EnvelopeError, RangeError,
               ConsistencyError, QuadratureAccuracyError, ValueError)


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % v


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _field(cfg, workers):
    return DualField.from_parts(cfg.build_market(), cfg.build_utility(), workers=workers)


# ------------------------------------------------------------------ commands
def cmd_validate(cfg, out: Path, workers: int) -> int:
    report = {"market": {"status": "pass", "detail": ""}, "utility": None}
    code = EXIT_OK
    try:
        cfg.build_market()
    except MarketError as exc:
        report["market"] = {"status": "fail", "detail": str(exc)}
        code = EXIT_FAIL
    try:
        u = cfg.build_utility()
        ar = validate_assumptions(u, build_envelope(u))
        report["utility"] = ar.to_dict()
        if ar.status == "fail":
            code = EXIT_FAIL
        elif ar.status == "warn" and code == EXIT_OK:
            code = EXIT_WARN
    except (UtilityError, EnvelopeError) as exc:
        report["utility"] = {"status": "fail", "detail": str(exc)}
        code = EXIT_FAIL
    report["exit_code"] = code
    print(f"market: {report['market']['status']} {report['market']['detail']}".rstrip())
    util = report["utility"]
    print(f"utility: {util['status']}")
    for chk in util.get("checks", []):
        print(f"  [{chk['status']}] {chk['name']}: {chk['detail']}")
    if "detail" in util:
        print(f"  {util['detail']}")
    write_json(out / "validate_report.json", report)
    return code


def cmd_grid(cfg, out: Path, workers: int) -> int:
    f = _field(cfg, workers)
    ts, xs = cfg.t_values, cfg.x_values
    bad_t = [t for t in ts if not 0 <= t < f.market.T]
    bad_x = [x for x in xs if not (math.isfinite(x) and x > f.domain.L_hat)]
    if bad_t or bad_x:
        if bad_t:
            print(f"grid t outside [0, T={f.market.T}): {bad_t}", file=sys.stderr)
        if bad_x:
            print(f"grid x outside the admissible wealth (L_hat={f.domain.L_hat}, inf): {bad_x}",
                  file=sys.stderr)
        return EXIT_FAIL

    def slice_(t):
        return f.value_u_batch(t, xs)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            slices = list(pool.map(slice_, ts))
    else:
        slices = [slice_(t) for t in ts]
    u_rows = [(t, x, u) for t, (us, _) in zip(ts, slices) for x, u in zip(xs, us)]
    l_rows = [(t, x, y) for t, (_, ys) in zip(ts, slices) for x, y in zip(xs, ys)]
    if "csv" in cfg.formats:
        write_csv(out / "u_surface.csv", ["t", "x", "value"], u_rows)
        write_csv(out / "lambda_surface.csv", ["t", "x", "value"], l_rows)
    if "svg" in cfg.formats:
        (out / "u_surface.svg").write_text(line_plot(
            [(f"t={t:g}", xs, us) for t, (us, _) in zip(ts, slices)],
            title="value function u(t, x)", xlabel="x", ylabel="u"))
        (out / "lambda_surface.svg").write_text(line_plot(
            [(f"t={t:g}", xs, ys) for t, (_, ys) in zip(ts, slices)],
            title="Lagrange multiplier lambda(t, x)", xlabel="x", ylabel="lambda"))
    print(f"wrote {len(u_rows)} grid points ({len(ts)} t-slices x {len(xs)} x-points) to {out}")
    return EXIT_OK


def cmd_verify(cfg, out: Path, workers: int) -> int:
    f = _field(cfg, workers)
    report = f.verify_identities(cfg.t_values, cfg.x_values)
    rows = report.csv_rows()
    write_csv(out / "verify_report.csv", rows[0], rows[1:])
    write_json(out / "verify_report.json", report.to_dict())
    for name, err in report.max_errors.items():
        flag = "pass" if report.passed[name] else "FAIL"
        print(f"[{flag}] {name}: max rel err {err:.3e} (tol {report.tolerances[name]:.0e})")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_simulate(cfg, out: Path, workers: int) -> int:
    f = _field(cfg, workers)
    s = cfg.simulate
    x0 = float(s["x0"])
    if not x0 > f.domain.L_hat:
        print(f"x0={x0} is not admissible: initial wealth must exceed L_hat={f.domain.L_hat}",
              file=sys.stderr)
        return EXIT_FAIL
    batch = simulate_batch(f, x0, s["n_paths"], s["n_steps"], s["seed"], workers=workers)
    d = f.market.d
    header = ["path_id", "t", "xi", "wealth", "lambda"] + [f"pi_{i + 1}" for i in range(d)]
    rows = []
    for p in range(batch.n_paths):
        for k, t in enumerate(batch.times):
            rows.append([p, t, batch.xi[p, k], batch.wealth[p, k], batch.lambda_root[p, k],
                         *batch.portfolio[p, k]])
    write_csv(out / "paths.csv", header, rows)

    T = f.market.T
    if "monitor_times" in s:
        monitor = s["monitor_times"]
    else:
        monitor = [t for t in (T / 2, T) if np.any(np.isclose(batch.times, t, rtol=1e-9, atol=1e-12))]
    budget = budget_martingale(batch, monitor)
    h_err = homogeneity_error(batch)
    summary = {
        "x0": x0, "lambda0": batch.lambda0, "seed": s["seed"],
        "n_paths": batch.n_paths, "n_steps": s["n_steps"],
        "flagged_paths": int(batch.flagged.sum()),
        "homogeneity_max_error": h_err,
        "budget_martingale": [{"t": b.t, "mean": b.mean, "std_error": b.std_error, "z": b.z}
                              for b in budget],
    }
    euler_paths = min(s.get("euler_paths", 20), batch.n_paths)
    steps = s.get("euler_steps", [100, 200, 400, 800])
    if euler_paths > 0 and steps:
        fine = math.lcm(*steps)
        eb = simulate_batch(f, x0, euler_paths, fine, s["seed"], check_homogeneity=False,
                            with_policy=False, workers=workers)
        summary["euler"] = euler_replication_check(f, eb, steps).to_dict()
    write_json(out / "summary.json", summary)

    warn = (batch.flagged.any() or not (h_err <= HOMOGENEITY_TOL)
            or any(not abs(b.z) <= BUDGET_Z for b in budget)
            or ("euler" in summary and not summary["euler"]["decreasing"]))
    print(f"lambda0={batch.lambda0:.12g}  homogeneity max rel err={h_err:.3e}  "
          f"flagged={summary['flagged_paths']}")
    for b in budget:
        print(f"budget t={b.t:g}: mean={b.mean:.10g} se={b.std_error:.3e} z={b.z:.3f}")
    if "euler" in summary:
        e = summary["euler"]
        print("euler " + "  ".join(f"{n}:{v:.3e}" for n, v in zip(e["steps"], e["max_error"])))
    return EXIT_WARN if warn else EXIT_OK


COMMANDS = {"validate": cmd_validate, "grid": cmd_grid, "verify": cmd_verify,
            "simulate": cmd_simulate}


def _workers(arg, cfg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return cfg.workers


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynlagrange",
                                 description="Dynamic Lagrange multiplier toolkit for "
                                             "non-concave portfolio problems.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--workers", type=int, help=f"worker threads (overrides ${WORKERS_ENV})")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    saved_tol = quadrature.get_rel_tol()
    try:
        cfg = load_config(args.config, args.command)
        workers = _workers(args.workers, cfg)
        out = Path(args.out or cfg.output.get("directory", "."))
        out.mkdir(parents=True, exist_ok=True)
        if "rel_tol" in cfg.quadrature:
            quadrature.set_rel_tol(cfg.quadrature["rel_tol"])
        return COMMANDS[args.command](cfg, out, workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RUN_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        quadrature.set_rel_tol(saved_tol)
