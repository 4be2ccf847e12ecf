"""Budget map ``g``, multiplier ``Y``, value ``u``, conjugate ``v`` and their identities.

Everything here is a functional of the pricing kernel ``Z_{t,T}`` applied to the
conjugate package of the utility. At ``t = T`` the kernel is degenerate and the
maps are defined by convention: ``g(T, .) = I``, ``v(T, .) = V``,
``lambda(T, .) = Lambda``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConsistencyError, ConsistencyWarning, DomainError, RangeError
from .market import MarketModel
from .quadrature import expect_batch
from .utility import EnvelopeBundle, PiecewiseUtility, build_envelope

ROUTE_WARN = 1e-9
ROUTE_FAIL = 1e-7
FD_STEP_V = 1e-3  # relative step of the 4th-order difference of v ...
FD_STEP_V_DISPERSION = 1e-2  # ... capped at this multiple of the kernel dispersion
FD_STEP_U = 1e-4  # relative step of the central difference of u

TOLERANCES = {
    "multiplier_vs_conjugate": 1e-8,
    "multiplier_vs_du_dx": 1e-5,
    "fenchel_equality": 1e-9,
    "dv_dy_vs_minus_g": 1e-6,
}


@dataclass(frozen=True)
class DomainSpec:
    """Admissible wealth ``(L_hat, inf)`` and the upper end of the multiplier range at t=0."""

    L_hat: float
    D_I_upper: float

    @property
    def D_U(self) -> tuple:
        return (self.L_hat, math.inf)

    def contains(self, x) -> bool:
        return bool(x > self.L_hat)


@dataclass(frozen=True, eq=False)
class DualField:
    market: MarketModel
    bundle: EnvelopeBundle
    domain: DomainSpec = None
    expansion: float = 4.0
    max_expansions: int = 200
    root_rtol: float = 1e-12
    workers: int = 1

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", _domain_spec(self))

    @classmethod
    def from_parts(cls, market: MarketModel, utility: PiecewiseUtility, **kw) -> "DualField":
        return cls(market, build_envelope(utility), **kw)

    @property
    def L(self) -> float:
        return self.bundle.source.L

    # ------------------------------------------------------------------ checks
    def _t(self, t) -> float:
        t = float(t)
        if not 0 <= t <= self.market.T:
            raise DomainError(f"t={t} outside [0, T={self.market.T}]")
        return t

    def _terminal(self, t) -> bool:
        return self._t(t) == self.market.T

    def _x(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(x)):
            raise DomainError("wealth must be finite")
        if np.any(x <= self.domain.L_hat):
            raise DomainError(f"wealth must exceed L_hat={self.domain.L_hat}")
        return x

    @staticmethod
    def _y(y):
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0)) or np.any(~np.isfinite(y)):
            raise DomainError("y must be positive and finite")
        return y

    def _quad(self, t, y, terms):
        flat = np.atleast_1d(y).ravel()
        vals = expect_batch(self.market, self.bundle, t, flat, terms)
        return [v.reshape(np.shape(y))[()] for v in vals]

    # -------------------------------------------------------------- core maps
    def g(self, t, y):
        """``E[Z I(yZ)]``; equals ``I(y)`` at ``t = T``."""
        y = self._y(y)
        if self._terminal(t):
            return self.bundle.conjugate_point_I(y)
        return self._quad(t, y, [("z", "I")])[0]

    def _jump_sum(self, t, y):
        out = np.zeros(np.shape(y))
        for a, i_minus, i_plus in self.bundle.jumps:
            out = out + (i_plus - i_minus) * a * a / y ** 3 * self.market.z_pdf(t, a / y)
        return out[()] if np.ndim(out) == 0 else out

    def g_prime(self, t, y):
        """Derivative in ``y``: smooth part of ``I`` plus one point mass per jump."""
        y = self._y(y)
        if self._terminal(t):
            raise DomainError("g_prime needs t < T")
        smooth = self._quad(t, y, [("z_squared", "IctnPrime")])[0]
        return smooth + self._jump_sum(t, y)

    def g_and_prime(self, t, y):
        """``(g, g_prime)`` from a single quadrature pass."""
        y = self._y(y)
        if self._terminal(t):
            raise DomainError("g_and_prime needs t < T")
        gv, smooth = self._quad(t, y, [("z", "I"), ("z_squared", "IctnPrime")])
        return gv, smooth + self._jump_sum(t, y)

    def conjugate_v(self, t, y):
        """``E[V(yZ)]``; equals ``V(y)`` at ``t = T``."""
        y = self._y(y)
        if self._terminal(t):
            return self.bundle.conjugate_V(y)
        return self._quad(t, y, [("one", "V")])[0]

    # ----------------------------------------------------------- inversions
    def _positive_branch(self) -> bool:
        return self.L >= 0

    def _bracket(self, fn):
        """Geometric expansion from ``log y = 0`` until ``fn`` changes sign."""
        step = math.log(self.expansion)
        f0 = fn(0.0)
        if f0 == 0:
            return 0.0, 0.0
        direction = 1.0 if f0 > 0 else -1.0  # g too large -> move to larger y
        lo = 0.0
        for k in range(1, self.max_expansions + 1):
            hi = direction * k * step
            fh = fn(hi)
            if fh == 0 or (fh > 0) != (f0 > 0):
                return (lo, hi) if direction > 0 else (hi, lo)
            lo = hi
        raise RangeError("target outside the range of the budget map")

    def multiplier_Y(self, t, x) -> float:
        """The ``y`` solving ``g(t, y) = x`` (Brent in ``log y``)."""
        x = float(self._x(x))
        if self._terminal(t):
            return float(self.bundle.lambda_T(x))
        t = float(t)

        if self._positive_branch():
            def fn(ly):
                gv = float(self.g(t, math.exp(ly)))
                return math.log(max(gv, 1e-320)) - math.log(x)
        else:
            def fn(ly):
                return float(self.g(t, math.exp(ly))) - x

        lo, hi = self._bracket(fn)
        if lo == hi:
            return math.exp(lo)
        ly = brentq(fn, lo, hi, xtol=self.root_rtol / 4, rtol=4 * np.finfo(float).eps, maxiter=500)
        return math.exp(ly)

    def multiplier_Y_batch(self, t, xs, max_iter: int = 100) -> tuple:
        """Vectorised inversion by bracketed Newton steps in ``log y``.

        Returns ``(y, ok)``; ``ok`` is False where no bracket or no convergence was found.
        """
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        n = xs.size
        y = np.full(n, np.nan)
        ok = np.zeros(n, dtype=bool)
        valid = np.isfinite(xs) & (xs > self.domain.L_hat)
        if self._terminal(t):
            y[valid] = self.bundle.lambda_T(xs[valid])
            return y, valid
        t = float(t)
        pos = self._positive_branch()

        def resid(idx, ly):
            gv, gp = self.g_and_prime(t, np.exp(ly))
            yy = np.exp(ly)
            if pos:
                gv = np.maximum(gv, 1e-320)
                return np.log(gv) - np.log(xs[idx]), yy * gp / gv
            return gv - xs[idx], yy * gp

        # bracket: f decreasing in log y, f(lo) > 0 > f(hi)
        idx = np.flatnonzero(valid)
        f0, _ = resid(idx, np.zeros(idx.size))
        lo = np.where(f0 > 0, 0.0, -np.inf)
        hi = np.where(f0 > 0, np.inf, 0.0)
        step = math.log(self.expansion)
        open_ = np.isinf(lo) | np.isinf(hi)
        k = 0
        while np.any(open_) and k < self.max_expansions:
            k += 1
            sel = np.flatnonzero(open_)
            trial = np.where(np.isinf(hi[sel]), k * step, -k * step)
            f, _ = resid(idx[sel], trial)
            up = np.isinf(hi[sel])
            hi[sel] = np.where(up & (f <= 0), trial, hi[sel])
            lo[sel] = np.where(up & (f > 0), trial, lo[sel])
            lo[sel] = np.where(~up & (f > 0), trial, lo[sel])
            hi[sel] = np.where(~up & (f <= 0), trial, hi[sel])
            open_ = np.isinf(lo) | np.isinf(hi)

        cur = np.where(open_, 0.0, 0.5 * (lo + hi))
        live = ~open_
        conv = np.zeros(idx.size, dtype=bool)
        tol = self.root_rtol / 4
        for _ in range(max_iter):
            act = np.flatnonzero(live & ~conv)
            if act.size == 0:
                break
            f, d = resid(idx[act], cur[act])
            lo[act] = np.where(f > 0, cur[act], lo[act])
            hi[act] = np.where(f <= 0, cur[act], hi[act])
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = cur[act] - f / d
            mid = 0.5 * (lo[act] + hi[act])
            inside = np.isfinite(newton) & (newton > lo[act]) & (newton < hi[act])
            nxt = np.where(inside, newton, mid)
            done = (np.abs(nxt - cur[act]) <= tol) | (hi[act] - lo[act] <= tol) | (f == 0)
            cur[act] = np.where(f == 0, cur[act], nxt)
            conv[act] = done
        y[idx] = np.exp(cur)
        ok[idx] = live & conv
        return y, ok

    def lambda_(self, t, x) -> float:
        """Shadow price of wealth: the multiplier ``Y``; ``Lambda(x)`` at ``t = T``."""
        return self.multiplier_Y(t, x)

    def _minus_dv_dy(self, t, y):
        # v varies on the scale of |theta| sqrt(T - t) in log y, which shrinks near T
        disp = self.market.theta_norm * math.sqrt(self.market.T - t)
        h = min(FD_STEP_V, FD_STEP_V_DISPERSION * disp) * y
        pts = np.array([y - 2 * h, y - h, y + h, y + 2 * h])
        v = self.conjugate_v(t, pts)
        return -(-v[3] + 8 * v[2] - 8 * v[1] + v[0]) / (12 * h)

    def lambda_via_conjugate(self, t, x) -> float:
        """Minimiser of ``v(t, y) + x y``, from ``-dv/dy = x`` with a differenced ``v``."""
        x = float(self._x(x))
        if self._terminal(t):
            return float(self.bundle.lambda_T(x))
        t = float(t)

        def fn(ly):
            s = float(self._minus_dv_dy(t, math.exp(ly)))
            if self._positive_branch():
                return math.log(max(s, 1e-320)) - math.log(x)
            return s - x

        lo, hi = self._bracket(fn)
        if lo == hi:
            return math.exp(lo)
        return math.exp(brentq(fn, lo, hi, xtol=self.root_rtol / 4,
                               rtol=4 * np.finfo(float).eps, maxiter=500))

    # ----------------------------------------------------------- value function
    def value_routes(self, t, x, y=None) -> tuple:
        """``(direct, via_conjugate, y)`` for ``u(t, x)``."""
        if self._terminal(t):
            raise DomainError("value_u needs t < T")
        if y is None:
            y = self.multiplier_Y(t, x)
        direct, v = self._quad(t, np.array([y, y]), [("one", "UstarstarI"), ("one", "V")])
        return float(direct[0]), float(v[1] + x * y), y

    def value_u(self, t, x) -> float:
        """``E[U**(I(Y Z))]``, cross-checked against ``v(t, Y) + x Y``."""
        x = float(self._x(x))
        direct, fenchel, y = self.value_routes(t, x)
        gap = _route_gap(direct, fenchel, x * y)
        if gap > ROUTE_FAIL:
            raise ConsistencyError(f"value routes disagree at (t={t}, x={x}): "
                                   f"{direct!r} vs {fenchel!r} (rel {gap:.2e})")
        if gap > ROUTE_WARN:
            warnings.warn(f"value routes differ by {gap:.2e} at (t={t}, x={x})", ConsistencyWarning)
        return direct

    def value_u_batch(self, t, xs) -> tuple:
        """Vectorised ``value_u``; returns ``(u, y)`` and applies the same route check."""
        xs = np.atleast_1d(self._x(xs)).astype(float)
        if self._terminal(t):
            raise DomainError("value_u needs t < T")
        y, ok = self.multiplier_Y_batch(t, xs)
        if not np.all(ok):
            raise RangeError(f"multiplier not found for x={xs[~ok].tolist()} at t={t}")
        direct, v = self._quad(t, y, [("one", "UstarstarI"), ("one", "V")])
        fenchel = v + xs * y
        scale = np.maximum.reduce([np.abs(direct), np.abs(fenchel), np.abs(xs * y),
                                   np.full(xs.shape, 1e-300)])
        gap = np.abs(direct - fenchel) / scale
        if np.any(gap > ROUTE_FAIL):
            k = int(np.argmax(gap))
            raise ConsistencyError(f"value routes disagree at (t={t}, x={xs[k]}) (rel {gap[k]:.2e})")
        if np.any(gap > ROUTE_WARN):
            warnings.warn(f"value routes differ by up to {gap.max():.2e} at t={t}", ConsistencyWarning)
        return direct, y

    def domain_I_upper(self, t) -> float:
        """Upper end of the multiplier range at time ``t`` (computed, never extrapolated)."""
        if self.L <= 0:
            return math.inf
        return self.multiplier_Y(t, self.domain.L_hat * (1 + 1e-12))

    # ----------------------------------------------------------- verification
    def verify_identities(self, t_grid, x_grid) -> "IdentityReport":
        return verify_identities(self, t_grid, x_grid)


def _route_gap(a, b, xy) -> float:
    scale = max(abs(a), abs(b), abs(xy), 1e-300)
    return abs(a - b) / scale


def _domain_spec(f: DualField) -> DomainSpec:
    m, L = f.market, f.bundle.source.L
    L_hat = max(L * math.exp(-m.r * m.T), L)
    if L_hat == L * math.exp(-m.r * m.T):
        return DomainSpec(L_hat, math.inf)
    probe = DualField(m, f.bundle, DomainSpec(L * math.exp(-m.r * m.T), math.inf),
                      f.expansion, f.max_expansions, f.root_rtol)
    return DomainSpec(L_hat, probe.multiplier_Y(0.0, L_hat))


# --------------------------------------------------------------------- report
@dataclass(frozen=True)
class IdentityRow:
    t: float
    x: float
    y: float
    multiplier_vs_conjugate: float
    multiplier_vs_du_dx: float
    fenchel_equality: float
    dv_dy_vs_minus_g: float


@dataclass
class IdentityReport:
    rows: list
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))

    @property
    def max_errors(self) -> dict:
        return {k: max((getattr(r, k) for r in self.rows), default=0.0) for k in self.tolerances}

    @property
    def passed(self) -> dict:
        return {k: bool(v <= self.tolerances[k]) for k, v in self.max_errors.items()}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"max_errors": self.max_errors, "tolerances": self.tolerances,
                "passed": self.passed, "ok": self.ok, "n_points": len(self.rows)}

    def csv_rows(self) -> list:
        head = ["t", "x", "y", *TOLERANCES]
        return [head] + [[getattr(r, h) for h in head] for r in self.rows]


def _identity_row(f: DualField, t: float, x: float) -> IdentityRow:
    y = f.multiplier_Y(t, x)
    nan = float("nan")
    if f._terminal(t):
        return IdentityRow(t, x, y, nan, nan, nan, nan)
    y_c = f.lambda_via_conjugate(t, x)
    h = FD_STEP_U * x
    u_hi = f.value_routes(t, x + h)[0]
    u_lo = f.value_routes(t, x - h)[0]
    du = (u_hi - u_lo) / (2 * h)
    direct, fenchel, _ = f.value_routes(t, x, y)
    gv = float(f.g(t, y))
    dv = -float(f._minus_dv_dy(t, y))
    return IdentityRow(
        t, x, y,
        abs(y - y_c) / y,
        abs(y - du) / y,
        _route_gap(direct, fenchel, x * y),
        abs(dv + gv) / max(abs(gv), 1e-300),
    )


def verify_identities(f: DualField, t_grid, x_grid) -> IdentityReport:
    """Tabulate the four multiplier identities over a ``(t, x)`` grid."""
    pts = [(float(t), float(x)) for t in t_grid for x in x_grid]
    for t, x in pts:
        f._t(t)
        f._x(x)
    if f.workers > 1:
        with ThreadPoolExecutor(f.workers) as pool:
            rows = list(pool.map(lambda p: _identity_row(f, *p), pts))
    else:
        rows = [_identity_row(f, t, x) for t, x in pts]
    return IdentityReport(rows)
