"""Constant-coefficient Black-Scholes market and its pricing kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, MarketError

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Bond rate ``r``, drifts ``mu`` (d,), volatility ``sigma`` (d, d), horizon ``T``.

    ``theta = sigma^{-1} (mu - r 1)`` is the market price of risk; the kernel
    ``xi_t = exp(-(r + |theta|^2/2) t - theta^T W_t)``.
    """

    r: float
    mu: np.ndarray
    sigma: np.ndarray
    T: float
    eig_floor: float = 1e-10
    min_theta_norm: float = 1e-6
    theta: np.ndarray = field(init=False)
    theta_norm: float = field(init=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        d = mu.shape[0]
        if mu.ndim != 1 or d < 1:
            raise MarketError("mu must be a non-empty vector")
        if sigma.shape != (d, d):
            raise MarketError(f"sigma must be {d}x{d}, got {sigma.shape}")
        if not (math.isfinite(self.r) and np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise MarketError("market coefficients must be finite")
        if not (math.isfinite(self.T) and self.T > 0):
            raise MarketError("horizon T must be positive")
        min_eig = float(np.linalg.eigvalsh(sigma @ sigma.T).min())
        if min_eig < self.eig_floor:
            raise MarketError(f"sigma sigma^T not positive definite (min eigenvalue {min_eig:.3g})")
        theta = np.linalg.solve(sigma, mu - self.r)
        theta_norm = float(np.linalg.norm(theta))
        if theta_norm < self.min_theta_norm:
            raise MarketError(f"market price of risk |theta|={theta_norm:.3g} is degenerate")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "theta_norm", theta_norm)

    @classmethod
    def from_dict(cls, spec: dict) -> "MarketModel":
        return cls(float(spec["r"]), spec["mu"], spec["sigma"], float(spec["T"]))

    def to_dict(self) -> dict:
        return {"r": self.r, "mu": self.mu.tolist(), "sigma": self.sigma.tolist(), "T": self.T}

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def kernel_drift(self) -> float:
        """``r + |theta|^2 / 2``."""
        return self.r + 0.5 * self.theta_norm ** 2

    def _tau(self, t):
        t = float(t)
        if not 0 <= t < self.T:
            raise DomainError(f"t={t} outside [0, T={self.T})")
        return self.T - t

    def d_hat(self, t, z):
        tau = self._tau(t)
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            return -(np.log(z) + self.kernel_drift * tau) / (self.theta_norm * math.sqrt(tau))

    def z_cdf(self, t, z):
        """``P(Z_{t,T} <= z) = 1 - Phi(d_hat(t, z))``."""
        z = np.asarray(z, dtype=float)
        out = np.where(z > 0, ndtr(-self.d_hat(t, np.where(z > 0, z, 1.0))), 0.0)
        return out[()] if out.ndim == 0 else out

    def z_pdf(self, t, z):
        tau = self._tau(t)
        z = np.asarray(z, dtype=float)
        zz = np.where(z > 0, z, 1.0)
        dh = self.d_hat(t, zz)
        out = np.where(z > 0, _INV_SQRT_2PI * np.exp(-0.5 * dh * dh)
                       / (zz * self.theta_norm * math.sqrt(tau)), 0.0)
        return out[()] if out.ndim == 0 else out

    def kernel_mean(self, t, s) -> float:
        """``E[Z_{t,s}] = exp(-r (s - t))``."""
        if not 0 <= t <= s <= self.T:
            raise DomainError(f"need 0 <= t <= s <= T, got t={t}, s={s}")
        return math.exp(-self.r * (s - t))

    def xi_from_increments(self, times, increments) -> np.ndarray:
        """Kernel values along paths from Brownian increments ``(..., n_steps, d)``."""
        times = np.asarray(times, dtype=float)
        w_theta = np.cumsum(increments @ self.theta, axis=-1)
        lead = np.zeros(w_theta.shape[:-1] + (1,))
        w_theta = np.concatenate([lead, w_theta], axis=-1)
        return np.exp(-self.kernel_drift * times - w_theta)


@dataclass(frozen=True, eq=False)
class KernelPath:
    times: np.ndarray
    xi: np.ndarray
    brownian_increments: np.ndarray  # (n_steps, d)
    seed: int
    path_id: int


def path_rng(seed: int, path_id: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, path_id); independent of batching."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(path_id)]))


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("time grid must be a non-empty vector")
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must start at 0 and be strictly increasing")
    return times


def kernel_arrays(m: MarketModel, times, n_paths: int, seed: int, first_path: int = 0):
    """Exact kernel sampling. Returns ``xi`` (n_paths, n_times) and ``dW`` (n_paths, n_steps, d)."""
    times = _check_times(times)
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    if times[-1] > m.T * (1 + 1e-12):
        raise ValueError("time grid exceeds the horizon")
    n_steps = times.size - 1
    sd = np.sqrt(np.diff(times))
    dW = np.empty((n_paths, n_steps, m.d))
    for i in range(n_paths):
        z = path_rng(seed, first_path + i).standard_normal((n_steps, m.d))
        dW[i] = z * sd[:, None]
    return m.xi_from_increments(times, dW), dW


def sample_kernel_paths(m: MarketModel, times, n_paths: int, seed: int) -> list:
    times = _check_times(times)
    xi, dW = kernel_arrays(m, times, n_paths, seed)
    return [KernelPath(times, xi[i], dW[i], seed, i) for i in range(n_paths)]
