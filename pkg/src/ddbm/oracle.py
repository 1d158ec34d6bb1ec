"""Analytic ground truth for jointly Gaussian endpoint pairs.

With ``(x_0, x_T)`` Gaussian (diagonal covariance), ``x_t | x_T`` is Gaussian
too, so the score the bridge model learns is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .bridge import _col
from .precond import abc
from .schedules import DomainError, Schedule


def _vec(v, d):
    v = np.asarray(v, dtype=float)
    return np.broadcast_to(v, (d,)).copy()


@dataclass(frozen=True)
class GaussianPairSpec:
    d: int = 1
    mean0: np.ndarray = field(default=0.0)
    meanT: np.ndarray = field(default=0.0)
    var0: np.ndarray = field(default=1.0)
    varT: np.ndarray = field(default=1.0)
    cov0T: np.ndarray = field(default=0.8)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        for name in ("mean0", "meanT", "var0", "varT", "cov0T"):
            object.__setattr__(self, name, _vec(getattr(self, name), self.d))
        if np.any(self.var0 <= 0) or np.any(self.varT <= 0):
            raise ValueError("variances must be positive")
        if np.any(self.cov0T**2 > self.var0 * self.varT * (1 + 1e-12)):
            raise ValueError("cov0T violates Cauchy-Schwarz")

    @classmethod
    def unconditional(cls, sched: Schedule, mean0, var0, d=1):
        """Pair coupling ``x_T ~ N(alpha_T x_0, sigma_T^2)`` of a plain diffusion."""
        aT = float(sched.alpha(sched.T))
        sT2 = float(sched.sigma_sq(sched.T))
        mean0 = _vec(mean0, d)
        var0 = _vec(var0, d)
        return cls(d, mean0, aT * mean0, var0, aT * aT * var0 + sT2, aT * var0)

    def sample_pairs(self, n: int, rng: np.random.Generator):
        z0 = rng.standard_normal((n, self.d))
        z1 = rng.standard_normal((n, self.d))
        x0 = self.mean0 + np.sqrt(self.var0) * z0
        # x_T = meanT + (cov/var0)(x0 - mean0) + residual
        k = self.cov0T / self.var0
        resid = np.sqrt(np.maximum(self.varT - k * self.cov0T, 0.0))
        xT = self.meanT + k * (x0 - self.mean0) + resid * z1
        return x0, xT

    def sample_xT(self, n: int, rng: np.random.Generator):
        return self.meanT + np.sqrt(self.varT) * rng.standard_normal((n, self.d))

    def to_dict(self):
        return {
            "d": self.d,
            "mean0": self.mean0.tolist(),
            "meanT": self.meanT.tolist(),
            "var0": self.var0.tolist(),
            "varT": self.varT.tolist(),
            "cov0T": self.cov0T.tolist(),
        }


def posterior_x0_given_xT(spec: GaussianPairSpec, xT):
    xT = np.asarray(xT, dtype=float)
    mean = spec.mean0 + spec.cov0T / spec.varT * (xT - spec.meanT)
    var = np.maximum(spec.var0 - spec.cov0T**2 / spec.varT, 0.0)
    return mean, var


def conditional_moments(spec: GaussianPairSpec, sched: Schedule, xT, t):
    """Mean and per-dim variance of ``x_t | x_T``."""
    a, b, c = abc(sched, t)
    m, v = posterior_x0_given_xT(spec, xT)
    xT = np.asarray(xT, dtype=float)
    mean = _col(a, xT) * xT + _col(b, xT) * m
    var = _col(b, xT) ** 2 * v + _col(c, xT)
    return mean, var


def oracle_score(spec: GaussianPairSpec, sched: Schedule, x, xT, t):
    """Exact ``grad log q(x_t | x_T)``."""
    mean, var = conditional_moments(spec, sched, xT, t)
    if np.any(var < 1e-12):
        raise DomainError(f"conditional variance vanished at t={t}")
    return -(np.asarray(x, dtype=float) - mean) / var


def oracle_denoiser(spec: GaussianPairSpec, sched: Schedule, x, xT, t):
    """``E[x_0 | x_t, x_T]``, the minimiser of the pred-x regression."""
    a, b, c = abc(sched, t)
    m, v = posterior_x0_given_xT(spec, xT)
    x = np.asarray(x, dtype=float)
    xT = np.asarray(xT, dtype=float)
    b, c = _col(b, x), _col(c, x)
    resid = x - _col(a, x) * xT - b * m
    return m + b * v / (b * b * v + c) * resid


class OracleScore:
    """Score field backed by the analytic Gaussian-pair solution."""

    def __init__(self, spec: GaussianPairSpec, sched: Schedule):
        self.spec = spec
        self.sched = sched

    def __call__(self, x, xT, t):
        return oracle_score(self.spec, self.sched, x, xT, t)


def sample_posterior(spec: GaussianPairSpec, xT, n: int, rng: np.random.Generator):
    mean, var = posterior_x0_given_xT(spec, xT)
    return mean + np.sqrt(var) * rng.standard_normal((n, spec.d))


def mixture_score_1d(spec: GaussianPairSpec, sched: Schedule, x: float, xT: float, t: float,
                     n_grid: int = 2001, width: float = 10.0) -> float:
    """Score of ``q(x_t | x_T)`` by integrating bridge scores over ``x_0 | x_t, x_T``.

    Brute-force counterpart of :func:`oracle_score` for ``d = 1``. The
    posterior weights come from ``q(x_t | x_0, x_T) q(x_0 | x_T)`` on a grid.
    """
    m, v = posterior_x0_given_xT(spec, np.array([xT]))
    m, v = float(m[0]), float(v[0])
    a, b, c = (float(u) for u in abc(sched, t))
    sd = np.sqrt(v)
    grid = np.linspace(m - width * sd, m + width * sd, n_grid)
    mu = a * xT + b * grid
    log_w = -0.5 * (x - mu) ** 2 / c - 0.5 * (grid - m) ** 2 / v
    w = np.exp(log_w - log_w.max())
    scores = -(x - mu) / c
    return float(simpson(w * scores, x=grid) / simpson(w, x=grid))


def affine_denoiser_coefficients(spec: GaussianPairSpec, sched: Schedule, t: float):
    """``(k_x, k_T, k_1)`` with ``E[x_0 | x_t, x_T] = k_x x_t + k_T x_T + k_1`` per dimension."""
    a, b, c = (float(u) for u in abc(sched, t))
    g = spec.cov0T / spec.varT
    _, v = posterior_x0_given_xT(spec, spec.meanT)
    k = b * v / (b * b * v + c)
    k_T = g * (1 - k * b) - k * a
    k_1 = (1 - k * b) * (spec.mean0 - g * spec.meanT)
    return k * np.ones(spec.d), k_T, k_1


def whitened_normals(n: int, k: int, rng: np.random.Generator):
    """``(n, k)`` normals rescaled to empirical mean 0 and covariance exactly I."""
    z = rng.standard_normal((n, k))
    z -= z.mean(axis=0)
    L = np.linalg.cholesky(z.T @ z / n)
    return np.linalg.solve(L, z.T).T


def moment_matched_triples(spec: GaussianPairSpec, sched: Schedule, t: float, n: int,
                           rng: np.random.Generator):
    """``(x_0, x_T, x_t)`` at one time whose first and second sample moments are exact.

    Any least-squares fit on these rows lands on the population regression,
    so an affine model fitted to them must reproduce
    :func:`affine_denoiser_coefficients` up to optimiser tolerance.
    """
    a, b, c = (float(u) for u in abc(sched, t))
    z = whitened_normals(n, 3 * spec.d, rng).reshape(n, 3, spec.d)
    x0 = spec.mean0 + np.sqrt(spec.var0) * z[:, 0]
    g = spec.cov0T / spec.var0
    resid = np.sqrt(np.maximum(spec.varT - g * spec.cov0T, 0.0))
    xT = spec.meanT + g * (x0 - spec.mean0) + resid * z[:, 1]
    x_t = a * xT + b * x0 + np.sqrt(c) * z[:, 2]
    return x0, xT, x_t
