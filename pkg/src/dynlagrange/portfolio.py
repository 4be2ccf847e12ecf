"""Optimal wealth, feedback portfolio and path simulation.

Along an optimal path the wealth is ``g(t, lambda0 xi_t)`` and the shadow price
obeys ``lambda(t, X_t) = lambda0 xi_t``. The simulator records this shortcut and,
separately, the multiplier recovered by inverting the budget map at the
simulated wealth, so that the two can be compared.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .duality import DualField
from .errors import DomainError
from .market import kernel_arrays


@dataclass(frozen=True, eq=False)
class PathGrid:
    times: np.ndarray
    xi: np.ndarray
    wealth: np.ndarray
    lambda_path: np.ndarray  # lambda0 * xi
    lambda_root: np.ndarray  # multiplier recovered from the wealth (nan if skipped)
    portfolio: np.ndarray  # (n_times, d); nan at T
    brownian_increments: np.ndarray
    seed: int
    path_id: int
    lambda0: float
    x0: float
    flagged: bool = False


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Many paths on a shared time grid, stored as arrays (rows are paths)."""

    times: np.ndarray
    xi: np.ndarray
    wealth: np.ndarray
    lambda_path: np.ndarray
    lambda_root: np.ndarray
    portfolio: np.ndarray  # (n_paths, n_times, d)
    dW: np.ndarray
    flagged: np.ndarray
    seed: int
    lambda0: float
    x0: float
    first_path: int = 0

    @property
    def n_paths(self) -> int:
        return self.xi.shape[0]

    def path(self, i: int) -> PathGrid:
        return PathGrid(self.times, self.xi[i], self.wealth[i], self.lambda_path[i],
                        self.lambda_root[i], self.portfolio[i], self.dW[i], self.seed,
                        self.first_path + i, self.lambda0, self.x0, bool(self.flagged[i]))

    def to_paths(self) -> list:
        return [self.path(i) for i in range(self.n_paths)]

    @classmethod
    def from_paths(cls, paths) -> "PathBatch":
        p0 = paths[0]
        return cls(p0.times, np.stack([p.xi for p in paths]), np.stack([p.wealth for p in paths]),
                   np.stack([p.lambda_path for p in paths]), np.stack([p.lambda_root for p in paths]),
                   np.stack([p.portfolio for p in paths]), np.stack([p.brownian_increments for p in paths]),
                   np.array([p.flagged for p in paths]), p0.seed, p0.lambda0, p0.x0, p0.path_id)


# ------------------------------------------------------------------- pointwise
def terminal_wealth(f: DualField, xi_T, lambda0: float):
    """``I(lambda0 xi_T)``: the optimal claim never lands inside a chord."""
    if not lambda0 > 0:
        raise DomainError("lambda0 must be positive")
    return f.bundle.conjugate_point_I(lambda0 * np.asarray(xi_T, dtype=float))


def optimal_wealth(f: DualField, t: float, xi_t, lambda0: float):
    if not lambda0 > 0:
        raise DomainError("lambda0 must be positive")
    return f.g(t, lambda0 * np.asarray(xi_t, dtype=float))


def _loading(f: DualField) -> np.ndarray:
    """Solves ``sigma^T v = theta`` (so ``pi^T sigma dW`` carries ``theta``)."""
    return np.linalg.solve(f.market.sigma.T, f.market.theta)


def feedback_policy(f: DualField, t: float, x: float) -> np.ndarray:
    """Dollar amounts in each risky asset at state ``(t, x)``."""
    if f._terminal(t):
        raise DomainError("the feedback policy is defined for t < T")
    lam = f.multiplier_Y(t, x)
    return -_loading(f) * lam * float(f.g_prime(t, lam))


def feedback_policy_batch(f: DualField, t: float, xs) -> tuple:
    """Vectorised policy; returns ``(pi (n, d), lambda (n,), ok (n,))``."""
    lam, ok = f.multiplier_Y_batch(t, xs)
    pi = np.full((lam.size, f.market.d), np.nan)
    if np.any(ok):
        _, gp = f.g_and_prime(t, lam[ok])
        pi[ok] = -np.outer(lam[ok] * gp, _loading(f))
    return pi, lam, ok


# ------------------------------------------------------------------ simulation
def _fill(f, times, xi, lambda0, check_homogeneity, with_policy):
    n, m = xi.shape
    T = f.market.T
    wealth = np.empty((n, m))
    root = np.full((n, m), np.nan)
    pi = np.full((n, m, f.market.d), np.nan)
    flagged = np.zeros(n, dtype=bool)
    for k, t in enumerate(times):
        y = lambda0 * xi[:, k]
        if t >= T:
            wealth[:, k] = f.bundle.conjugate_point_I(y)
            if check_homogeneity:
                root[:, k] = f.bundle.lambda_T(wealth[:, k])
            continue
        w = f.g(t, y)
        wealth[:, k] = w
        bad = ~(w > f.domain.L_hat)
        flagged |= bad
        if check_homogeneity or with_policy:
            lam = np.full(n, np.nan)
            good = ~bad
            if np.any(good):
                lam[good], ok = f.multiplier_Y_batch(t, w[good])
                flagged[np.flatnonzero(good)[~ok]] = True
            if check_homogeneity:
                root[:, k] = lam
            if with_policy:
                # policy through the recovered multiplier, evaluated in feedback form
                good = np.isfinite(lam)
                if np.any(good):
                    _, gpl = f.g_and_prime(t, lam[good])
                    pi[good, k] = -np.outer(lam[good] * gpl, _loading(f))
    return wealth, root, pi, flagged


def simulate_batch(f: DualField, x0: float, n_paths: int, n_steps: int, seed: int,
                   *, check_homogeneity: bool = True, with_policy: bool = True,
                   workers: int | None = None) -> PathBatch:
    """Simulate optimal paths on a uniform grid with ``n_steps`` steps."""
    f._x(x0)
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    lambda0 = f.multiplier_Y(0.0, x0)
    times = np.linspace(0.0, f.market.T, n_steps + 1)
    xi, dW = kernel_arrays(f.market, times, n_paths, seed)
    workers = workers or f.workers
    if workers > 1 and n_paths > 1:
        parts = np.array_split(np.arange(n_paths), workers)
        with ThreadPoolExecutor(workers) as pool:
            res = list(pool.map(lambda ix: _fill(f, times, xi[ix], lambda0, check_homogeneity,
                                                 with_policy), parts))
        wealth, root, pi, flagged = (np.concatenate([r[i] for r in res]) for i in range(4))
    else:
        wealth, root, pi, flagged = _fill(f, times, xi, lambda0, check_homogeneity, with_policy)
    return PathBatch(times, xi, wealth, lambda0 * xi, root, pi, dW, flagged, seed, lambda0, float(x0))


def simulate(f: DualField, x0: float, n_paths: int, n_steps: int, seed: int, **kw) -> list:
    return simulate_batch(f, x0, n_paths, n_steps, seed, **kw).to_paths()


# ----------------------------------------------------------------- diagnostics
def _as_batch(paths) -> PathBatch:
    if isinstance(paths, PathBatch):
        return paths
    if isinstance(paths, PathGrid):
        return PathBatch.from_paths([paths])
    return PathBatch.from_paths(list(paths))


def homogeneity_error(paths) -> float:
    """Largest ``|lambda_root - lambda0 xi| / (lambda0 xi)`` over unflagged paths and t < T."""
    b = _as_batch(paths)
    keep = ~b.flagged
    ref = b.lambda_path[keep, :-1]
    got = b.lambda_root[keep, :-1]
    if ref.size == 0:
        return math.nan
    return float(np.max(np.abs(got - ref) / ref))


@dataclass(frozen=True)
class BudgetCheck:
    t: float
    mean: float
    std_error: float
    z: float


def budget_martingale(paths, monitor_times) -> list:
    """Sample mean of ``xi_t X_t`` against ``x0`` at each monitored time."""
    b = _as_batch(paths)
    out = []
    for t in monitor_times:
        k = int(np.argmin(np.abs(b.times - t)))
        if not math.isclose(b.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"t={t} is not on the simulation grid")
        prod = b.xi[:, k] * b.wealth[:, k]
        se = float(prod.std(ddof=1) / math.sqrt(prod.size)) if prod.size > 1 else math.nan
        mean = float(prod.mean())
        z = (mean - b.x0) / se if se > 0 else (0.0 if mean == b.x0 else math.inf)
        out.append(BudgetCheck(float(b.times[k]), mean, se, float(z)))
    return out


@dataclass
class EulerReport:
    steps: list
    max_error: list  # mean over paths of max_t |X_euler - X*| / x0
    terminal_error: list  # per step count, per path |X_euler(T) - X*_T| / x0
    per_path: np.ndarray = field(repr=False, default=None)  # (n_steps_counts, n_paths)

    @property
    def decreasing(self) -> bool:
        e = self.max_error
        return all(b < a for a, b in zip(e, e[1:]))

    def to_dict(self) -> dict:
        return {"steps": self.steps, "max_error": self.max_error,
                "terminal_error_median": [float(np.median(t)) for t in self.terminal_error],
                "decreasing": self.decreasing}


def euler_replication_check(f: DualField, paths, steps=(100, 200, 400, 800)) -> EulerReport:
    """Integrate the wealth SDE under the feedback policy with the paths' own noise.

    The stored increments are summed into each coarser grid, so only the time
    discretisation differs from the exact optimal wealth.
    """
    b = _as_batch(paths)
    n_fine = b.times.size - 1
    m = f.market
    excess = m.mu - m.r
    errs, terms, per = [], [], []
    for n in steps:
        if n_fine % n:
            raise ValueError(f"path grid ({n_fine} steps) is not a multiple of {n}")
        r = n_fine // n
        dW = b.dW.reshape(b.n_paths, n, r, m.d).sum(axis=2)
        idx = np.arange(0, n_fine + 1, r)
        times = b.times[idx]
        exact = b.wealth[:, idx]
        X = np.full(b.n_paths, b.x0)
        err = np.zeros(b.n_paths)
        for k in range(n):
            dt = times[k + 1] - times[k]
            pi = np.zeros((b.n_paths, m.d))
            live = X > f.domain.L_hat
            if np.any(live):
                p, _, ok = feedback_policy_batch(f, times[k], X[live])
                pi[live] = np.where(ok[:, None], p, 0.0)
            X = X + (m.r * X + pi @ excess) * dt + np.einsum("pi,ij,pj->p", pi, m.sigma, dW[:, k])
            err = np.maximum(err, np.abs(X - exact[:, k + 1]) / b.x0)
        errs.append(float(err.mean()))
        terms.append(np.abs(X - exact[:, -1]) / b.x0)
        per.append(err)
    return EulerReport(list(steps), errs, terms, np.array(per))
