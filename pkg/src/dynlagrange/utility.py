"""Piecewise utilities, concave envelopes and Legendre-Fenchel conjugates.

A utility is a list of closed-form segments tiling ``[L, inf)``. The conjugate

    V(y) = sup_x { U(x) - x y }

is the upper envelope of per-candidate conjugates: each strictly concave
segment contributes its clipped critical point, every other segment its two
endpoints, and every internal breakpoint its explicit value. The envelope
``U**`` is rebuilt from the piecewise structure of the maximiser ``I``, so all
evaluations are closed-form once the bundle is constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, EnvelopeError, UtilityError

SEGMENT_KINDS = ("constant", "affine", "log_shifted", "power_shifted", "exp_shifted")

_PARAMS = {
    "constant": ("a",),
    "affine": ("a", "b"),
    "log_shifted": ("a", "b", "c"),
    "power_shifted": ("a", "b", "c", "p"),
    "exp_shifted": ("a", "b", "c", "p"),
}

# Jump-scan grid for the active-candidate map.
SCAN_POINTS = 4096
SCAN_RANGE = (1e-8, 1e8)
BISECT_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    """One closed-form piece of a utility on ``[x_lo, x_hi)``.

    ``constant``       a
    ``affine``         a + b x
    ``log_shifted``    a + b log(x - c)
    ``power_shifted``  a + b (x - c)**p
    ``exp_shifted``    a + b exp(p (x - c))
    """

    kind: str
    x_lo: float
    x_hi: float = math.inf
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise UtilityError(f"unknown segment kind {self.kind!r}")
        for name in ("a", "b", "c", "p", "x_lo"):
            if not math.isfinite(getattr(self, name)):
                raise UtilityError(f"{self.kind} segment: {name} must be finite")
        if not self.x_lo < self.x_hi:
            raise UtilityError(f"empty segment interval [{self.x_lo}, {self.x_hi})")
        kind, b, p = self.kind, self.b, self.p
        if kind == "affine" and b < 0:
            raise UtilityError("affine segment must have slope b >= 0")
        if kind == "log_shifted" and b <= 0:
            raise UtilityError("log_shifted segment needs b > 0")
        if kind in ("power_shifted", "exp_shifted"):
            if p == 0 or b * p <= 0:
                raise UtilityError(f"{kind} segment needs b*p > 0 to be increasing")
            if kind == "power_shifted" and p == 1:
                raise UtilityError("power_shifted with p == 1 is affine; use kind='affine'")
        if kind in ("log_shifted", "power_shifted") and self.x_lo < self.c:
            raise UtilityError(f"{kind} segment: x_lo={self.x_lo} below shift c={self.c}")

    @classmethod
    def from_dict(cls, spec: dict) -> "Segment":
        kind = spec["kind"]
        params = dict(spec.get("params", {}))
        allowed = _PARAMS.get(kind, ())
        unknown = set(params) - set(allowed)
        if unknown:
            raise UtilityError(f"{kind} segment: unknown params {sorted(unknown)}")
        x_hi = spec.get("x_hi")
        return cls(kind, float(spec["x_lo"]), math.inf if x_hi is None else float(x_hi),
                   **{k: float(v) for k, v in params.items()})

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {k: float(getattr(self, k)) for k in _PARAMS[self.kind]},
            "x_lo": self.x_lo,
            "x_hi": None if math.isinf(self.x_hi) else self.x_hi,
        }

    def restricted(self, x_lo: float, x_hi: float) -> "Segment":
        return Segment(self.kind, x_lo, x_hi, self.a, self.b, self.c, self.p)

    @property
    def curvature(self) -> str:
        """'linear', 'concave' or 'convex' (constant sign on the interval)."""
        if self.kind in ("constant", "affine"):
            return "linear"
        if self.kind == "log_shifted":
            return "concave"
        if self.kind == "power_shifted":
            return "concave" if self.p < 1 else "convex"
        return "concave" if self.b < 0 else "convex"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        a, b, c, p = self.a, self.b, self.c, self.p
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind == "constant":
                return np.full_like(x, a)
            if self.kind == "affine":
                return a + b * x
            if self.kind == "log_shifted":
                return a + b * np.log(x - c)
            if self.kind == "power_shifted":
                return a + b * np.power(x - c, p)
            return a + b * np.exp(p * (x - c))

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        b, c, p = self.b, self.c, self.p
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind == "constant":
                return np.zeros_like(x)
            if self.kind == "affine":
                return np.full_like(x, b)
            if self.kind == "log_shifted":
                return b / (x - c)
            if self.kind == "power_shifted":
                return b * p * np.power(x - c, p - 1)
            return b * p * np.exp(p * (x - c))

    def deriv2(self, x):
        x = np.asarray(x, dtype=float)
        b, c, p = self.b, self.c, self.p
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind in ("constant", "affine"):
                return np.zeros_like(x)
            if self.kind == "log_shifted":
                return -b / (x - c) ** 2
            if self.kind == "power_shifted":
                return b * p * (p - 1) * np.power(x - c, p - 2)
            return b * p * p * np.exp(p * (x - c))

    def inverse_deriv(self, y):
        """Solve ``deriv(x) = y`` for strictly concave kinds; y=0 maps to +inf."""
        y = np.asarray(y, dtype=float)
        b, c, p = self.b, self.c, self.p
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.kind == "log_shifted":
                return c + b / y
            if self.kind == "power_shifted":
                return c + np.power(y / (b * p), 1.0 / (p - 1))
            if self.kind == "exp_shifted":
                return c + np.log(y / (b * p)) / p
        raise EnvelopeError(f"{self.kind} segment has no invertible derivative")

    @property
    def unbounded_above(self) -> bool:
        if self.kind == "log_shifted":
            return True
        if self.kind == "power_shifted":
            return 0 < self.p < 1
        return self.kind == "affine" and self.b > 0


@dataclass(frozen=True)
class PiecewiseUtility:
    """Utility ``U`` on ``[L, inf)`` (or ``(L, inf)`` when ``domain_open``).

    ``breakpoint_values[k]`` is the value at ``segments[k + 1].x_lo``, stored
    explicitly so that jumps are represented exactly.
    """

    L: float
    segments: tuple
    breakpoint_values: tuple = ()
    domain_open: bool = False
    _breaks: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "breakpoint_values", tuple(float(v) for v in self.breakpoint_values))
        object.__setattr__(self, "_breaks", np.array([s.x_lo for s in self.segments[1:]], dtype=float))
        problems = self.structural_problems()
        if problems:
            raise UtilityError("; ".join(problems))

    @classmethod
    def from_dict(cls, spec: dict) -> "PiecewiseUtility":
        segments = [Segment.from_dict(s) for s in spec["segments"]]
        return cls(float(spec["L"]), segments, spec.get("breakpoint_values", ()),
                   bool(spec.get("domain_open", False)))

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "domain_open": self.domain_open,
            "segments": [s.to_dict() for s in self.segments],
            "breakpoint_values": list(self.breakpoint_values),
        }

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breaks

    def left_limit(self, k: int) -> float:
        return float(self.segments[k].value(self.segments[k].x_hi))

    def right_limit(self, k: int) -> float:
        return float(self.segments[k + 1].value(self.segments[k + 1].x_lo))

    def structural_problems(self) -> list:
        segs = self.segments
        if not segs:
            return ["utility needs at least one segment"]
        out = []
        if not math.isfinite(self.L):
            out.append("L must be finite")
        if segs[0].x_lo != self.L:
            out.append(f"first segment starts at {segs[0].x_lo}, expected L={self.L}")
        for k in range(len(segs) - 1):
            if segs[k].x_hi != segs[k + 1].x_lo:
                kind = "gap" if segs[k].x_hi < segs[k + 1].x_lo else "overlap"
                out.append(f"{kind} between segments {k} and {k + 1} "
                           f"({segs[k].x_hi} vs {segs[k + 1].x_lo})")
        if not math.isinf(segs[-1].x_hi):
            out.append("last segment must extend to +inf")
        if len(self.breakpoint_values) != len(segs) - 1:
            out.append(f"expected {len(segs) - 1} breakpoint values, got {len(self.breakpoint_values)}")
        if out:
            return out
        for k, seg in enumerate(segs):
            if k > 0 and seg.x_lo == seg.c and seg.kind in ("log_shifted", "power_shifted"):
                out.append(f"segment {k}: shift singularity at an internal breakpoint")
            probe = _interior_probe(seg)
            if np.any(seg.deriv(probe) < 0):
                out.append(f"segment {k} is decreasing")
        first = segs[0]
        if not np.isfinite(first.value(self.L)) and not self.domain_open:
            out.append("U(L) is infinite; declare domain_open")
        for k, v in enumerate(self.breakpoint_values):
            if not math.isfinite(v):
                out.append(f"breakpoint value {k} not finite")
                continue
            tol = 1e-12 * (1 + abs(v))
            if v < self.left_limit(k) - tol:
                out.append(f"U drops at breakpoint {self._breaks[k]}: value {v} < left limit")
            if self.right_limit(k) < v - tol:
                out.append(f"U drops right of breakpoint {self._breaks[k]}")
        return out

    def __call__(self, x):
        """Evaluate ``U``; ``-inf`` outside the domain."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("utility argument must be finite")
        idx = np.searchsorted(self._breaks, x, side="right")
        out = np.empty_like(x)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                out[mask] = seg.value(x[mask])
        if len(self._breaks):
            hit = np.searchsorted(self._breaks, x, side="left")
            hit_c = np.minimum(hit, len(self._breaks) - 1)
            on_break = self._breaks[hit_c] == x
            out[on_break] = np.asarray(self.breakpoint_values)[hit_c[on_break]]
        below = (x < self.L) | ((x == self.L) & self.domain_open)
        out[below] = -np.inf
        return out[()] if out.ndim == 0 else out

    def right_derivative(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._breaks, x, side="right")
        out = np.empty_like(x)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                out[mask] = seg.deriv(x[mask])
        return out[()] if out.ndim == 0 else out

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return (x > self.L) | ((x == self.L) & (not self.domain_open))

    def usc_violations(self) -> list:
        """Breakpoints where ``U`` is not upper semicontinuous."""
        out = []
        for k, v in enumerate(self.breakpoint_values):
            lim = max(self.left_limit(k), self.right_limit(k))
            if v < lim - 1e-12 * (1 + abs(lim)):
                out.append(float(self._breaks[k]))
        return out


def eval_utility(u: PiecewiseUtility, x):
    return u(x)


def _interior_probe(seg: Segment) -> np.ndarray:
    lo = seg.x_lo
    hi = seg.x_hi if math.isfinite(seg.x_hi) else lo + 1e6 * (1 + abs(lo))
    return lo + (hi - lo) * np.array([1e-6, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1 - 1e-6])


# --- conjugate candidates -------------------------------------------------


class _ClipCandidate:
    """Strictly concave segment: maximiser is the critical point clipped to the interval."""

    def __init__(self, seg: Segment):
        self.seg = seg
        self.lo, self.hi = seg.x_lo, seg.x_hi
        with np.errstate(divide="ignore", invalid="ignore"):
            self.d_lo = float(seg.deriv(self.lo))
            self.d_hi = float(seg.deriv(self.hi)) if math.isfinite(self.hi) else 0.0

    def x(self, y):
        y = np.asarray(y, dtype=float)
        inner = self.seg.inverse_deriv(np.where(y > 0, y, 1.0))
        inner = np.where(y > 0, inner, math.inf)
        out = np.where(self.d_lo <= y, self.lo, np.where(y <= self.d_hi, self.hi, inner))
        return np.minimum(np.maximum(out, self.lo), self.hi)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        x = self.x(y)
        return self.seg.value(x) - x * y

    def dx(self, y):
        """Right-hand derivative of the maximiser in y (zero where clipped)."""
        y = np.asarray(y, dtype=float)
        x = self.x(y)
        interior = (y < self.d_lo) & (y > self.d_hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = 1.0 / self.seg.deriv2(x)
        return np.where(interior, d, 0.0)

    def clip_points(self):
        return [v for v in (self.d_lo, self.d_hi) if 0 < v < math.inf]


class _PointCandidate:
    """Fixed location with fixed value (breakpoint value or segment endpoint limit)."""

    def __init__(self, x0: float, value0: float):
        self.x0, self.value0 = float(x0), float(value0)
        self.seg = None

    def x(self, y):
        return np.full(np.shape(y), self.x0)

    def value(self, y):
        return self.value0 - self.x0 * np.asarray(y, dtype=float)

    def dx(self, y):
        return np.zeros(np.shape(y))

    def clip_points(self):
        return []


def _candidates(u: PiecewiseUtility) -> list:
    cands = []
    for k, seg in enumerate(u.segments):
        if seg.curvature == "concave":
            cands.append(_ClipCandidate(seg))
        else:
            if np.isfinite(seg.value(seg.x_lo)):
                cands.append(_PointCandidate(seg.x_lo, float(seg.value(seg.x_lo))))
            if math.isfinite(seg.x_hi) and seg.kind != "constant":
                cands.append(_PointCandidate(seg.x_hi, float(seg.value(seg.x_hi))))
        if k > 0:
            cands.append(_PointCandidate(seg.x_lo, u.breakpoint_values[k - 1]))
    return cands


def _active(cands, y) -> np.ndarray:
    """Index of the maximising candidate; ties go to the smallest maximiser."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    vals = np.vstack([c.value(y) for c in cands])
    xs = np.vstack([c.x(y) for c in cands])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    vmax = vals.max(axis=0)
    tol = 1e-14 * (1 + np.abs(np.where(np.isfinite(vmax), vmax, 0.0)))
    eligible = vals >= vmax - tol
    xmin = np.where(eligible, xs, np.inf).min(axis=0)
    pick = eligible & (xs <= xmin)
    return np.argmax(pick, axis=0)


def _find_switches(cands, lo, hi, k_lo, k_hi, out):
    # invariant: active(lo) == k_lo != k_hi == active(hi)
    while True:
        mid = math.sqrt(lo * hi) if hi / lo > 1.0 + 1e-6 else 0.5 * (lo + hi)
        if hi - lo <= BISECT_TOL or mid <= lo or mid >= hi:
            out.append((hi, k_lo, k_hi))
            return
        k_mid = int(_active(cands, mid)[0])
        if k_mid == k_lo:
            lo = mid
        elif k_mid == k_hi:
            hi = mid
        else:
            _find_switches(cands, lo, mid, k_lo, k_mid, out)
            lo, k_lo = mid, k_mid


def _polish(cands, lo_y, hi_y, k_lo, k_hi, guess):
    """Exact crossing of the two candidate conjugates, when it is bracketed."""
    from scipy.optimize import brentq

    def diff(y):
        return float(cands[k_lo].value(y) - cands[k_hi].value(y))

    try:
        a, b = diff(lo_y), diff(hi_y)
    except FloatingPointError:
        return guess
    if not (np.isfinite(a) and np.isfinite(b)) or a * b > 0:
        return guess
    if a == 0:
        return lo_y
    if b == 0:
        return hi_y
    return brentq(diff, lo_y, hi_y, xtol=1e-300, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class Jump:
    """Discontinuity of ``I`` at ``y = a`` (slope of a chord of ``U**``)."""

    a: float
    I_minus: float
    I_plus: float

    def __iter__(self):
        return iter((self.a, self.I_minus, self.I_plus))


@dataclass(frozen=True, eq=False)
class EnvelopeBundle:
    """Conjugate package of a utility: ``V``, ``I``, ``Lambda``, ``U**``, jumps.

    The y-axis is partitioned by ``boundaries`` (ascending); on piece ``p``
    (``boundaries[p-1] <= y < boundaries[p]``) the maximiser of ``U(x) - xy``
    is given in closed form by candidate ``active[p]``.
    """

    source: PiecewiseUtility
    candidates: tuple
    boundaries: np.ndarray
    active: tuple
    jumps: tuple
    kinks: np.ndarray
    envelope: PiecewiseUtility

    # --- piecewise dispatch
    def _dispatch(self, y, attr):
        y = np.asarray(y, dtype=float)
        if np.any(~(y > 0)):
            raise DomainError("conjugate functions need y > 0")
        flat = np.atleast_1d(y)
        idx = np.searchsorted(self.boundaries, flat, side="right")
        out = np.empty_like(flat)
        for p, k in enumerate(self.active):
            mask = idx == p
            if np.any(mask):
                out[mask] = getattr(self.candidates[k], attr)(flat[mask])
        return out.reshape(y.shape)[()] if y.ndim == 0 else out.reshape(y.shape)

    def conjugate_V(self, y):
        return self._dispatch(y, "value")

    def conjugate_point_I(self, y):
        return self._dispatch(y, "x")

    def Ictn_prime(self, y):
        return self._dispatch(y, "dx")

    def lambda_T(self, x):
        """Generalised inverse of ``I``: the right derivative of ``U**``."""
        x = np.asarray(x, dtype=float)
        if np.any(~self.source.in_domain(x)):
            raise DomainError(f"x below the utility domain (L={self.source.L})")
        return self.envelope.right_derivative(x)

    def envelope_value(self, x):
        return self.envelope(x)

    @property
    def jump_set(self) -> list:
        return list(self.jumps)

    @property
    def chord_intervals(self) -> list:
        return [(j.I_plus, j.I_minus) for j in self.jumps]

    @property
    def split_points(self) -> np.ndarray:
        """Every y where ``I`` or its derivative may be discontinuous."""
        return np.unique(np.concatenate([self.boundaries, self.kinks]))

    def with_boundaries(self, boundaries) -> "EnvelopeBundle":
        """Copy with a replaced partition (test hook for corrupted jump sets)."""
        b = np.asarray(boundaries, dtype=float)
        if len(b) != len(self.boundaries):
            raise ValueError("boundary count must not change")
        return EnvelopeBundle(self.source, self.candidates, b, self.active,
                              self.jumps, self.kinks, self.envelope)


def build_envelope(u: PiecewiseUtility, *, n_scan: int = SCAN_POINTS,
                   scan_range: tuple = SCAN_RANGE) -> EnvelopeBundle:
    """Construct the conjugate package of ``u``."""
    last = u.segments[-1]
    if last.curvature != "concave":
        raise EnvelopeError("last segment must be strictly concave with vanishing slope "
                            f"(got {last.kind}); the conjugate would be infinite")
    cands = _candidates(u)
    grid = np.geomspace(scan_range[0], scan_range[1], n_scan)
    act = _active(cands, grid)

    switches = []
    for i in np.flatnonzero(act[1:] != act[:-1]):
        _find_switches(cands, grid[i], grid[i + 1], int(act[i]), int(act[i + 1]), switches)

    boundaries, active = [], [int(act[0])]
    for y_b, k_lo, k_hi in switches:
        lo_y = y_b * (1 - 1e-9)
        boundaries.append(_polish(cands, lo_y, y_b, k_lo, k_hi, y_b))
        active.append(k_hi)
    boundaries = np.array(boundaries, dtype=float)

    jumps = []
    for p, y_b in enumerate(boundaries):
        x_left = float(cands[active[p]].x(y_b))
        x_right = float(cands[active[p + 1]].x(y_b))
        if x_left - x_right > 1e-12 * max(1.0, abs(x_left)):
            jumps.append(Jump(float(y_b), x_left, x_right))

    edges = np.concatenate([[0.0], boundaries, [math.inf]])
    kinks = []
    for p, k in enumerate(active):
        for yk in cands[k].clip_points():
            if edges[p] < yk < edges[p + 1]:
                kinks.append(yk)
    kinks = np.array(sorted(kinks), dtype=float)

    envelope = _envelope_utility(u, cands, edges, active)
    return EnvelopeBundle(u, tuple(cands), boundaries, tuple(active), tuple(jumps), kinks, envelope)


def _envelope_utility(u, cands, edges, active) -> PiecewiseUtility:
    """Assemble ``U**`` as a piecewise utility, walking pieces in increasing x."""
    pieces = []  # (segment template, x_lo, x_hi)
    x_cur = None
    n = len(active)
    for p in reversed(range(n)):
        cand = cands[active[p]]
        y_top, y_bot = edges[p + 1], edges[p]
        x_start = float(cand.x(y_top)) if math.isfinite(y_top) else _x_at_infinity(cand)
        x_end = float(cand.x(y_bot)) if y_bot > 0 else _x_at_zero(cand)
        if x_cur is None:
            if abs(x_start - u.L) > 1e-9 * (1 + abs(u.L)):
                raise EnvelopeError(f"envelope starts at {x_start}, not at L={u.L}")
            x_cur = u.L
        elif x_start > x_cur * (1 + 1e-12) + 1e-12:
            # chord: the maximiser jumps over (x_cur, x_start) at y = y_top
            slope = y_top
            v = float(cand.value(y_top))
            pieces.append((Segment("affine", 0.0, 1.0, a=v, b=slope), x_cur, x_start))
            x_cur = x_start
        if cand.seg is not None and x_end > x_cur:
            pieces.append((cand.seg, x_cur, x_end))
            x_cur = x_end
    segs = [tpl.restricted(lo, hi) for tpl, lo, hi in pieces]
    if not segs:
        raise EnvelopeError("empty envelope")
    values = [float(s.value(s.x_lo)) for s in segs[1:]]
    return PiecewiseUtility(u.L, segs, values, u.domain_open)


def _x_at_infinity(cand) -> float:
    return cand.lo if isinstance(cand, _ClipCandidate) else cand.x0


def _x_at_zero(cand) -> float:
    if isinstance(cand, _ClipCandidate):
        return cand.hi
    return cand.x0


# --- assumption checks ----------------------------------------------------


@dataclass
class Check:
    name: str
    status: str  # "pass" | "warn" | "fail"
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list
    C0_hat: float
    M_hat: float
    usc_breakpoints: list

    @property
    def status(self) -> str:
        levels = {c.status for c in self.checks}
        if "fail" in levels:
            return "fail"
        return "warn" if "warn" in levels else "pass"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "checks": [c.__dict__ for c in self.checks],
            "growth": {"C0_hat": self.C0_hat, "M_hat": self.M_hat},
            "usc_breakpoints": self.usc_breakpoints,
        }


def validate_assumptions(u: PiecewiseUtility, b: EnvelopeBundle | None = None) -> AssumptionReport:
    """Numerical check of the standing assumptions on ``u`` and its envelope.

    Structural defects (gaps, overlaps, decreasing pieces) raise ``UtilityError``
    when ``u`` is built; everything else is reported.
    """
    problems = u.structural_problems()
    if problems:
        raise UtilityError("; ".join(problems))
    checks = [Check("monotone", "pass")]

    usc = u.usc_violations()
    for x in usc:
        checks.append(Check("upper_semicontinuous", "warn", f"U is not u.s.c. at x={x}"))
    if not usc:
        checks.append(Check("upper_semicontinuous", "pass"))

    last = u.segments[-1]
    checks.append(Check("unbounded_above", "pass" if last.unbounded_above else "fail",
                        f"last segment kind {last.kind}"))
    slope_ok = last.curvature == "concave"
    checks.append(Check("slope_vanishes", "pass" if slope_ok else "fail",
                        "U'(x) -> 0 as x -> inf"))

    if b is None:
        try:
            b = build_envelope(u)
        except EnvelopeError as exc:
            checks.append(Check("envelope", "fail", str(exc)))
            return AssumptionReport(checks, math.nan, math.nan, usc)

    xs = np.array([1e6, 1e9, 1e12]) * (1 + abs(u.L)) + u.L
    lam = b.lambda_T(xs)
    decay = np.polyfit(np.log(xs - u.L), np.log(np.maximum(lam, 1e-300)), 1)[0]
    ok = bool(np.all(np.diff(lam) < 0) and (decay < -1e-3 or lam[-1] < 1e-8))
    checks.append(Check("envelope_slope_vanishes", "pass" if ok else "fail",
                        f"(U**)'(x) at x=1e12: {lam[-1]:.3g}, log-log slope {decay:.3g}"))
    if u.domain_open:
        hs = np.array([1e-4, 1e-8, 1e-12]) * (1 + abs(u.L))
        lam0 = b.lambda_T(u.L + hs)
        ok = bool(np.all(np.diff(lam0) > 0) and lam0[-1] > 1e6)
        checks.append(Check("envelope_slope_explodes_at_L", "pass" if ok else "fail",
                            f"(U**)'(L+{hs[-1]:.0e}) = {lam0[-1]:.3g}"))

    ys = np.geomspace(1e-8, 1e-2, 61)
    i_vals = b.conjugate_point_I(ys)
    if np.all(i_vals > 0):
        slope, intercept = np.polyfit(np.log(ys), np.log(i_vals), 1)
        M_hat, C0_hat = float(-slope), float(math.exp(intercept))
        checks.append(Check("growth_bound", "pass", f"I(y) ~ {C0_hat:.3g} y^-{M_hat:.3g}"))
    else:
        M_hat = C0_hat = math.nan
        checks.append(Check("growth_bound", "fail", "I(y) not positive near y=0"))
    return AssumptionReport(checks, C0_hat, M_hat, usc)


# --- convenience constructors --------------------------------------------


def log_utility() -> PiecewiseUtility:
    """``U(x) = log x`` on ``(0, inf)``."""
    return PiecewiseUtility(0.0, [Segment("log_shifted", 0.0, a=0.0, b=1.0, c=0.0)], (), True)


def example_utility() -> PiecewiseUtility:
    """``U = 0`` on ``[0, 1]`` and ``log x + 1`` on ``(1, inf)``."""
    return PiecewiseUtility(
        0.0,
        [Segment("constant", 0.0, 1.0, a=0.0), Segment("log_shifted", 1.0, a=1.0, b=1.0)],
        (0.0,),
    )


def reward_jump_utility(jump: float = 1.0, at: float = math.e ** 2) -> PiecewiseUtility:
    """``max(0, log x)`` on ``[0, inf)`` plus a reward ``jump`` for ``x >= at``."""
    return PiecewiseUtility(
        0.0,
        [
            Segment("constant", 0.0, 1.0, a=0.0),
            Segment("log_shifted", 1.0, at, a=0.0, b=1.0),
            Segment("log_shifted", at, a=jump, b=1.0),
        ],
        (0.0, math.log(at) + jump),
    )


def from_segments(L: float, segments: Sequence[dict], breakpoint_values=(), domain_open=False):
    return PiecewiseUtility.from_dict({"L": L, "segments": list(segments),
                                       "breakpoint_values": list(breakpoint_values),
                                       "domain_open": domain_open})
