"""VE and VP diffusion schedules.

Each schedule exposes the transition-kernel coefficients ``alpha_t`` and
``sigma_t`` of ``x_t = alpha_t x_0 + sigma_t eps`` together with the SDE
drift ``f(x, t)`` and squared diffusion ``g(t)^2`` that generate it.

VE uses ``sigma_t = t`` (``sigma_t^2 = t^ve_power`` with the default
``ve_power = 2``; ``ve_power = 1`` gives the Brownian-bridge schedule used
for the straight-line limit); VP uses the time-invariant drift ``-beta0/2 x``
(so ``beta1 == beta0`` in the usual linear schedule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when a quantity is requested outside its domain of definition."""


@dataclass(frozen=True)
class Schedule:
    kind: str = "ve"
    T: float = 1.0
    beta0: float = 1.0
    t_min_frac: float = 1e-4
    ve_power: float = 2.0

    def __post_init__(self):
        if self.kind not in ("ve", "vp"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.kind == "vp" and not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if not self.ve_power > 0:
            raise ValueError("ve_power must be positive")
        if not 0 < self.t_min_frac < 0.5:
            raise ValueError("t_min_frac must lie in (0, 0.5)")

    @property
    def t_min(self) -> float:
        return self.t_min_frac * self.T

    def clamp(self, t):
        return np.clip(t, self.t_min, self.T)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(t <= 0) or np.any(t > self.T):
            raise DomainError(f"time outside (0, T={self.T}]: {t}")
        return t

    def alpha(self, t):
        t = self._check(t)
        if self.kind == "ve":
            return np.ones_like(t)
        return np.exp(-0.5 * self.beta0 * t)

    def sigma_sq(self, t):
        t = self._check(t)
        if self.kind == "ve":
            return t**self.ve_power
        # 1 - exp(-beta0 t), written to stay accurate for small t
        return -np.expm1(-self.beta0 * t)

    def sigma(self, t):
        return np.sqrt(self.sigma_sq(t))

    def snr(self, t):
        a = self.alpha(t)
        return a * a / self.sigma_sq(t)

    def snr_ratio(self, t):
        """``SNR_T / SNR_t``; tends to 0 as t -> 0 and equals 1 at t = T."""
        t = self._check(t)
        if self.kind == "ve":
            return (t / self.T) ** self.ve_power
        # (alpha_T^2 / alpha_t^2) * (sigma_t^2 / sigma_T^2)
        b = self.beta0
        return np.exp(-b * (self.T - t)) * np.expm1(-b * t) / math.expm1(-b * self.T)

    def dlog_alpha(self, t):
        t = self._check(t)
        if self.kind == "ve":
            return np.zeros_like(t)
        return np.full_like(t, -0.5 * self.beta0)


def eval_schedule(sched: Schedule, t: float) -> tuple[float, float, float]:
    """Return ``(alpha_t, sigma_t, SNR_t)``."""
    alpha = float(sched.alpha(t))
    sigma = float(sched.sigma(t))
    return alpha, sigma, alpha * alpha / (sigma * sigma)


def drift(sched: Schedule, x, t):
    """Forward SDE drift ``f(x, t) = (d log alpha_t / dt) x``.

    ``t`` may be a scalar or one time per row of ``x``.
    """
    x = np.asarray(x, dtype=float)
    k = sched.dlog_alpha(t)
    if np.ndim(k) == 1 and x.ndim == 2:
        k = k[:, None]
    return k * x


def diffusion_sq(sched: Schedule, t):
    """Squared diffusion coefficient ``g(t)^2 = d sigma^2/dt - 2 (d log alpha/dt) sigma^2``.

    VE gives ``2t``; the constant-rate VP schedule gives ``beta0`` for all t.
    """
    t = sched._check(t)
    if sched.kind == "ve":
        p = sched.ve_power
        return p * t ** (p - 1.0)
    return np.full_like(t, sched.beta0)
