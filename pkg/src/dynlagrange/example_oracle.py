"""Closed forms for the two-piece worked example (zero up to 1, then ``log x + 1``).

These are written out directly from the normal distribution and never touch
the generic engine, so they can serve as an independent reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, ndtr


@dataclass(frozen=True)
class ExampleParams:
    r: float = 0.05
    mu: float = 0.086
    sigma: float = 0.3
    T: float = 10.0

    @property
    def theta(self) -> float:
        return (self.mu - self.r) / self.sigma


PARAMS = ExampleParams()
R, MU, SIGMA, T = PARAMS.r, PARAMS.mu, PARAMS.sigma, PARAMS.T
THETA = PARAMS.theta


def _check(t, y):
    if not 0 <= t < T:
        raise ValueError(f"t={t} outside [0, {T})")
    if np.any(np.asarray(y) <= 0):
        raise ValueError("y must be positive")


def _parts(t):
    tau = T - t
    return THETA * math.sqrt(tau), (R + 0.5 * THETA ** 2) * tau


def _phi(d):
    return np.exp(-0.5 * np.asarray(d) ** 2) / math.sqrt(2 * math.pi)


def oracle_d(t, y):
    _check(t, y)
    s, c = _parts(t)
    return -(np.log(1.0 / np.asarray(y, dtype=float)) + c) / s


def oracle_g(t, y):
    d = oracle_d(t, y)
    return ndtr(-d) / y  # 1 - Phi(d) without cancellation


def oracle_g_prime(t, y):
    d = oracle_d(t, y)
    s, _ = _parts(t)
    return -(ndtr(-d) + _phi(d) / s) / np.asarray(y, dtype=float) ** 2


def oracle_v(t, y):
    d = oracle_d(t, y)
    s, c = _parts(t)
    return ndtr(-d) * (np.log(1.0 / np.asarray(y, dtype=float)) + c) + s * _phi(d)


def oracle_v_prime(t, y):
    d = oracle_d(t, y)
    return -ndtr(-d) / y


def oracle_Y(t, x) -> float:
    """Invert ``oracle_g(t, .)`` at ``x > 0``."""
    if not x > 0:
        raise ValueError("x must be positive")
    # log g stays finite where g itself underflows
    f = lambda ly: float(log_ndtr(-oracle_d(t, math.exp(ly)))) - ly - math.log(x)
    lo, hi = -1.0, 1.0
    while f(lo) < 0:
        lo *= 2
    while f(hi) > 0:
        hi *= 2
    return math.exp(brentq(f, lo, hi, xtol=1e-15, rtol=1e-15))


def oracle_u(t, x=None, *, y=None):
    """Value at wealth ``x`` (or directly at multiplier ``y``)."""
    if y is None:
        y = oracle_Y(t, x)
    d = oracle_d(t, y)
    s, c = _parts(t)
    return ndtr(-d) * (1.0 - np.log(y) + c) + s * _phi(d)


def oracle_I(y):
    y = np.asarray(y, dtype=float)
    return np.where(y < 1, 1.0 / y, 0.0)


def oracle_V(y):
    y = np.asarray(y, dtype=float)
    return np.where(y < 1, -np.log(y), 0.0)


def oracle_Lambda(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 1, 1.0, 1.0 / np.maximum(x, 1.0))


def oracle_envelope(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 1, x, np.log(np.maximum(x, 1.0)) + 1.0)
