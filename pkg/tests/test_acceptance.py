"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

Run with pytest (lines are collected in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import functools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from conftest import ACCEPTANCE_LINES, reference_market
from dynlagrange import example_oracle as O
from dynlagrange.cli import main as cli_main
from dynlagrange.duality import DualField, verify_identities
from dynlagrange.portfolio import (budget_martingale, euler_replication_check, feedback_policy,
                                   homogeneity_error, simulate_batch)
from dynlagrange.utility import (build_envelope, example_utility, log_utility,
                                 reward_jump_utility)

T_GRID = (0.0, 2.5, 5.0, 7.5, 9.9)
Y_GRID = np.geomspace(0.05, 20.0, 40)
X_GRID = np.geomspace(0.1, 10.0, 20)
TINY = np.finfo(float).tiny  # smallest normal float
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@functools.lru_cache(maxsize=None)
def field(kind="example"):
    util = {"example": example_utility, "log": log_utility, "desk": reward_jump_utility}[kind]
    return DualField.from_parts(reference_market(), util())


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _rel(a, b):
    return np.abs(a - b) / np.abs(b)


def test_criterion_1_budget_map_vs_oracle():
    f = field()
    start = time.perf_counter()
    worst, worst_abs = 0.0, 0.0
    for t in T_GRID:
        got, ref = f.g(t, Y_GRID), O.oracle_g(t, Y_GRID)
        normal = ref >= TINY
        worst = max(worst, float(np.max(_rel(got[normal], ref[normal]))))
        if np.any(~normal):
            worst_abs = max(worst_abs, float(np.max(np.abs(got[~normal] - ref[~normal]))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and worst_abs <= 1e-300 and elapsed <= 10
    report(1, ok, f"max rel err {worst:.2e} (tol 1e-8), subnormal abs err {worst_abs:.1e}, "
                  f"{elapsed:.1f}s (<=10s)")
    assert ok


def test_criterion_2_value_and_conjugate_vs_oracle():
    f = field()
    start = time.perf_counter()
    err_u = err_v = 0.0
    for t in T_GRID:
        xs = O.oracle_g(t, Y_GRID)
        keep = xs >= TINY  # the multiplier is only solvable where x is a normal float
        u, _ = f.value_u_batch(t, xs[keep])
        err_u = max(err_u, float(np.max(_rel(u, O.oracle_u(t, y=Y_GRID[keep])))))
        v_ref = O.oracle_v(t, Y_GRID)
        nv = np.abs(v_ref) >= TINY
        err_v = max(err_v, float(np.max(_rel(f.conjugate_v(t, Y_GRID[nv]), v_ref[nv]))))
    elapsed = time.perf_counter() - start
    ok = err_u <= 1e-6 and err_v <= 1e-6 and elapsed <= 30
    report(2, ok, f"u max rel err {err_u:.2e}, v max rel err {err_v:.2e} (tol 1e-6), "
                  f"{elapsed:.1f}s (<=30s)")
    assert ok


def test_criterion_3_multiplier_identities():
    f = field()
    start = time.perf_counter()
    rep = verify_identities(f, T_GRID, X_GRID)
    elapsed = time.perf_counter() - start
    e_du = rep.max_errors["multiplier_vs_du_dx"]
    e_cj = rep.max_errors["multiplier_vs_conjugate"]
    ok = e_du <= 1e-5 and e_cj <= 1e-8 and elapsed <= 60
    report(3, ok, f"|Y - du/dx|/Y {e_du:.2e} (tol 1e-5), |Y - lambda_conj|/Y {e_cj:.2e} "
                  f"(tol 1e-8), {elapsed:.1f}s (<=60s)")
    assert ok


def test_criterion_4_homogeneity():
    f = field()
    start = time.perf_counter()
    batch = simulate_batch(f, 1.0, 1000, 50, seed=20240404, with_policy=False)
    err = homogeneity_error(batch)
    elapsed = time.perf_counter() - start
    ok = err <= 1e-8 and not batch.flagged.any() and elapsed <= 60
    report(4, ok, f"max rel deviation {err:.2e} (tol 1e-8), flagged {int(batch.flagged.sum())}, "
                  f"{elapsed:.1f}s (<=60s)")
    assert ok


def test_criterion_5_budget_martingale():
    f = field()
    start = time.perf_counter()
    rows, ok = [], True
    for k, x0 in enumerate((0.5, 2.0, 5.0)):
        # only t in {0, 5, 10} is needed, so two exact kernel steps suffice
        batch = simulate_batch(f, x0, 10 ** 5, 2, seed=555 + k,
                               check_homogeneity=False, with_policy=False)
        for c in budget_martingale(batch, (5.0, 10.0)):
            ok &= abs(c.z) <= 3
            rows.append(f"x0={x0:g},t={c.t:g}: z={c.z:.3g}")
    elapsed = time.perf_counter() - start
    ok = bool(ok) and elapsed <= 60
    report(5, ok, "; ".join(rows) + f" (|z|<=3), {elapsed:.1f}s (<=60s)")
    assert ok


def test_criterion_6_distributional_derivative():
    f = field()
    m = f.market
    err_or = err_fd = 0.0
    for t in T_GRID:
        gp = f.g_prime(t, Y_GRID)
        ref = O.oracle_g_prime(t, Y_GRID)
        normal = np.abs(ref) >= TINY
        err_or = max(err_or, float(np.max(_rel(gp[normal], ref[normal]))))
        s = m.theta_norm * math.sqrt(m.T - t)
        h = 1e-5 * min(1.0, s) * Y_GRID  # g varies on the kernel's dispersion scale in log y
        fd = (f.g(t, Y_GRID + h) - f.g(t, Y_GRID - h)) / (2 * h)
        visible = np.abs(gp) >= TINY
        err_fd = max(err_fd, float(np.max(_rel(fd[visible], gp[visible]))))
    ok = err_or <= 1e-6 and err_fd <= 1e-6
    report(6, ok, f"vs oracle {err_or:.2e}, vs central FD of g {err_fd:.2e} (tol 1e-6)")
    assert ok


def _envelope_suite(kind):
    b = field(kind).bundle
    u = b.source
    errs = {}
    ys = np.geomspace(1e-6, 1e6, 1000)
    ix = b.conjugate_point_I(ys)
    errs["form_of_I"] = float(np.max(np.abs(u(ix) - ys * ix - b.conjugate_V(ys))))
    xs = np.linspace(u.L, 60.0, 6001)[1:]
    env = b.envelope_value(xs)
    errs["dominance"] = float(max(0.0, np.max(u(xs) - env)))
    mid = b.envelope_value(0.5 * (xs[:-1] + xs[1:]))
    errs["midpoint"] = float(max(0.0, np.max(0.5 * (env[:-1] + env[1:]) - mid)))
    chord = 0.0
    for lo, hi in b.chord_intervals:
        w = np.linspace(0, 1, 101)
        lin = (1 - w) * b.envelope_value(lo) + w * b.envelope_value(hi)
        chord = max(chord, float(np.max(np.abs(b.envelope_value(lo + w * (hi - lo)) - lin))))
    errs["chord_affine"] = chord
    again = build_envelope(b.envelope)
    errs["biconjugate"] = float(np.max(np.abs(again.envelope_value(xs) - env)))

    grid = np.linspace(u.L, 50.0, 10 ** 6 + 1)
    if u.domain_open:
        grid = grid[1:]
    dx = grid[1] - grid[0]
    ug = u(grid)
    miss = 0
    for y in np.geomspace(0.05, 20.0, 100):
        k = int(np.argmax(ug - y * grid))
        target = float(b.conjugate_point_I(y))
        if abs(grid[k] - target) > 2 * dx:
            miss += 1
    errs["brute_force_misses"] = miss
    ok = (errs["form_of_I"] <= 1e-10 and errs["dominance"] <= 1e-12 and errs["midpoint"] <= 1e-12
          and errs["chord_affine"] <= 1e-12 and errs["biconjugate"] <= 1e-9 and miss == 0)
    return ok, errs


def test_criterion_7_envelope_properties():
    start = time.perf_counter()
    parts, ok = [], True
    for kind in ("example", "log", "desk"):
        good, errs = _envelope_suite(kind)
        ok &= good
        parts.append(f"{kind}: I-form {errs['form_of_I']:.1e}, biconj {errs['biconjugate']:.1e}, "
                     f"argmax misses {errs['brute_force_misses']}/100")
    elapsed = time.perf_counter() - start
    ok = bool(ok) and elapsed <= 30
    report(7, ok, "; ".join(parts) + f", {elapsed:.1f}s (<=30s)")
    assert ok


def _surface(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    ts = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    return ts, xs, data[:, 2].reshape(ts.size, xs.size)


def test_criterion_8_grid_surfaces(tmp_path):
    cfg = json.loads((CONFIGS / "example.json").read_text())
    cfg["output"] = {"directory": str(tmp_path), "formats": ["csv", "svg"]}
    cfg_path = tmp_path / "fig.json"
    cfg_path.write_text(json.dumps(cfg))
    start = time.perf_counter()
    code = cli_main(["grid", "--config", str(cfg_path)])
    elapsed = time.perf_counter() - start
    ts, xs, u = _surface(tmp_path / "u_surface.csv")
    _, _, lam = _surface(tmp_path / "lambda_surface.csv")
    concave = bool(np.all(np.diff(u, 2, axis=1) < 0))
    increasing_x = bool(np.all(np.diff(u, axis=1) > 0))
    decreasing_t = bool(np.all(np.diff(u, axis=0) < 0))
    lam_t_monotone = bool(np.all(np.diff(lam, axis=0) < 0))
    band = (xs >= 1.5) & (xs <= 10.0)
    last = int(np.argmin(np.abs(ts - 9.99)))
    limit_gap = float(np.max(np.abs(lam[last, band] - O.oracle_Lambda(xs[band]))))
    part_a = concave and increasing_x and decreasing_t
    part_b = lam_t_monotone and limit_gap <= 0.05
    ok = code == 0 and part_a and part_b and elapsed <= 30
    report(8, ok, f"(a) concave {concave}, increasing in x {increasing_x}, decreasing in t "
                  f"{decreasing_t}; (b) lambda decreasing in t {lam_t_monotone}, "
                  f"|lambda(9.99) - Lambda| {limit_gap:.3f} (tol 0.05); {elapsed:.1f}s (<=30s)")
    assert ok


def test_criterion_9_merton():
    f = field("log")
    m = f.market
    start = time.perf_counter()
    frac = (m.mu[0] - m.r) / m.sigma[0, 0] ** 2
    pol_err = 0.0
    for t in (0.0, 2.5, 5.0, 7.5, 9.9):
        for x in (0.1, 0.5, 1.0, 3.0, 10.0):
            pol_err = max(pol_err, abs(feedback_policy(f, t, x)[0] / (frac * x) - 1))
    batch = simulate_batch(f, 1.0, 100, 800, seed=99, check_homogeneity=False, with_policy=False)
    rep = euler_replication_check(f, batch, (100, 200, 400, 800))
    elapsed = time.perf_counter() - start
    ok = pol_err <= 1e-8 and rep.decreasing and elapsed <= 60
    decay = " > ".join(f"{e:.2e}" for e in rep.max_error)
    report(9, ok, f"policy rel err {pol_err:.1e} (tol 1e-8), Euler error {decay} "
                  f"(monotone {rep.decreasing}), {elapsed:.1f}s (<=60s)")
    assert ok


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_criterion_"):
            continue
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as tmp:
                    fn(Path(tmp))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
