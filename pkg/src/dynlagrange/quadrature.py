"""Kernel expectations ``E[w(Z) h(y Z)]`` by split composite Gauss-Legendre.

With ``Z = exp(-(r + |theta|^2/2) tau - |theta| sqrt(tau) n)`` and ``n`` standard
normal, the expectation becomes an integral against the Gaussian density in
``n``. The ``n``-axis is cut at the preimages of every point where ``h`` may
jump or kink, each piece is windowed and integrated with order-40 Gauss-Legendre,
and all panels are bisected until the estimate settles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureAccuracyError
from .market import MarketModel
from .utility import EnvelopeBundle

WEIGHTS = {"one": 0, "z": 1, "z_squared": 2}
INTEGRANDS = ("I", "V", "UstarstarI", "IctnPrime")
ORDER = 40
TRUNCATION = 10.0
MAX_LEVELS = 20
ABS_FLOOR = 1e-300  # below this scale relative accuracy is lost to subnormal rounding
_CHUNK = 1 << 21

_nodes, _wts = leggauss(ORDER)
_U = 0.5 * (_nodes + 1.0)
_W = 0.5 * _wts
_settings = {"rel_tol": 1e-11}


def get_rel_tol() -> float:
    return _settings["rel_tol"]


def set_rel_tol(value: float) -> None:
    """Global override of the refinement tolerance (for slow machines)."""
    if not 0 < value < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    _settings["rel_tol"] = float(value)


@dataclass(frozen=True)
class ExpectationRequest:
    t: float
    y: float
    weight: str = "z"
    integrand: str = "I"
    jump_points: tuple | None = None  # None: split at every break of the bundle

    def __post_init__(self):
        if self.weight not in WEIGHTS:
            raise ValueError(f"unknown weight {self.weight!r}")
        if self.integrand not in INTEGRANDS:
            raise ValueError(f"unknown integrand {self.integrand!r}")
        if not self.y > 0:
            raise ValueError("y must be positive")


@dataclass
class QuadratureResult:
    value: float
    n_panels: int
    levels: int
    history: list = field(default_factory=list)


def expect(m: MarketModel, b: EnvelopeBundle, req: ExpectationRequest) -> float:
    return expect_with_info(m, b, req).value


def expect_with_info(m: MarketModel, b: EnvelopeBundle, req: ExpectationRequest,
                     *, rel_tol: float | None = None, max_levels: int = MAX_LEVELS) -> QuadratureResult:
    splits = b.split_points if req.jump_points is None else np.asarray(req.jump_points, dtype=float)
    vals, info = _integrate(m, b, req.t, np.array([req.y], dtype=float),
                            [(req.weight, req.integrand)], splits,
                            get_rel_tol() if rel_tol is None else rel_tol, max_levels, track=True)
    return QuadratureResult(float(vals[0, 0]), info["panels"][0], info["levels"][0], info["history"])


def expect_batch(m: MarketModel, b: EnvelopeBundle, t: float, ys, terms,
                 *, split_points=None, rel_tol: float | None = None,
                 max_levels: int = MAX_LEVELS) -> np.ndarray:
    """Several expectations at many ``y`` at once; returns shape ``(len(terms), len(ys))``.

    ``terms`` is a list of ``(weight, integrand)`` pairs sharing the same nodes.
    """
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    for w, h in terms:
        if w not in WEIGHTS or h not in INTEGRANDS:
            raise ValueError(f"unknown term {(w, h)}")
    if np.any(~(ys > 0)):
        raise ValueError("y must be positive")
    splits = b.split_points if split_points is None else np.asarray(split_points, dtype=float)
    vals, _ = _integrate(m, b, t, ys, terms, splits,
                         get_rel_tol() if rel_tol is None else rel_tol, max_levels)
    return vals


def _windows(m, t, ys, splits):
    """Integration windows in the normal variable, one per piece: shapes (n, P)."""
    tau = m.T - t
    s = m.theta_norm * math.sqrt(tau)
    drift = m.kernel_drift * tau
    if splits.size:
        nb = (np.log(ys)[:, None] - np.log(splits)[None, :] - drift) / s
        nb = np.sort(nb, axis=1)
    else:
        nb = np.empty((ys.size, 0))
    inf = np.full((ys.size, 1), np.inf)
    lo = np.concatenate([-inf, nb], axis=1)
    hi = np.concatenate([nb, inf], axis=1)
    c0 = np.clip(0.0, lo, hi)
    # pieces away from the bulk get a window scaled to their local decay rate
    ac = np.abs(c0)
    width = np.where(ac < 4.0, TRUNCATION, 40.0 / np.maximum(ac, 4.0))
    a = np.maximum(lo, c0 - width)
    bb = np.minimum(hi, c0 + width)
    return a, np.maximum(bb, a), s, drift


def _integrand(b, n, y, terms, s, drift):
    z = np.exp(np.clip(-drift - s * n, -690.0, 690.0))
    w = y * z
    phi = np.exp(-0.5 * n * n) / math.sqrt(2.0 * math.pi)
    cache = {}

    def h(name):
        if name not in cache:
            if name == "I":
                cache[name] = b.conjugate_point_I(w)
            elif name == "V":
                cache[name] = b.conjugate_V(w)
            elif name == "UstarstarI":
                cache[name] = b.envelope_value(h("I"))
            else:
                cache[name] = b.Ictn_prime(w)
        return cache[name]

    out = []
    live = phi > 0
    for weight, name in terms:
        k = WEIGHTS[weight]
        with np.errstate(invalid="ignore", over="ignore"):
            f = h(name) * phi * (z ** k if k else 1.0)
        out.append(np.where(live, f, 0.0))
    return out


def _gl(b, a, bb, ys, npan, terms, s, drift):
    """Composite GL with ``npan`` panels per piece; returns (n_terms, rows)."""
    rows, P = a.shape
    width = (bb - a) / npan  # (rows, P)
    block = max(1, _CHUNK // (rows * P * ORDER))
    total = np.zeros((len(terms), rows))
    y = ys[:, None, None, None]
    for j0 in range(0, npan, block):
        j = np.arange(j0, min(npan, j0 + block))
        left = a[:, :, None] + width[:, :, None] * j[None, None, :]  # (rows, P, panels)
        n = left[..., None] + width[:, :, None, None] * _U  # (rows, P, panels, ORDER)
        vals = _integrand(b, n, np.broadcast_to(y, n.shape), terms, s, drift)
        scale = width[:, :, None, None] * _W
        total += np.stack([(f * scale).sum(axis=(1, 2, 3)) for f in vals])
    return total


def _integrate(m, b, t, ys, terms, splits, rel_tol, max_levels, track=False):
    splits = splits[(splits > 0) & np.isfinite(splits)]
    a, bb, s, drift = _windows(m, t, ys, splits)
    nonempty = (bb > a).sum(axis=1)
    n_rows, P = a.shape
    K = len(terms)
    result = np.full((K, n_rows), np.nan)
    levels = np.zeros(n_rows, dtype=int)
    active = np.arange(n_rows)
    prev = None
    gap = np.full((K, n_rows), np.nan)
    history = []
    for level in range(max_levels + 1):
        npan = 1 << level
        step = max(1, _CHUNK // (P * npan * ORDER))
        est = np.empty((K, active.size))
        for start in range(0, active.size, step):
            rows = active[start:start + step]
            est[:, start:start + step] = _gl(b, a[rows], bb[rows], ys[rows], npan, terms, s, drift)
        if track:
            history.append(est[:, 0].copy())
        if prev is not None:
            gap = np.abs(est - prev)
            done = np.all((gap <= rel_tol * np.abs(est)) | (gap <= ABS_FLOOR), axis=0)
            result[:, active[done]] = est[:, done]
            levels[active[done]] = level
            active, est, gap = active[~done], est[:, ~done], gap[:, ~done]
            if active.size == 0:
                break
        prev = est
    else:
        worst = float(np.nanmax(gap)) if np.any(np.isfinite(gap)) else math.nan
        raise QuadratureAccuracyError(
            f"no convergence after {max_levels} refinement levels", est[:, 0].tolist(), worst)
    info = {"levels": levels.tolist(), "panels": (nonempty * (1 << levels)).tolist(),
            "history": [h.tolist() if K > 1 else float(h[0]) for h in history]}
    return result, info
