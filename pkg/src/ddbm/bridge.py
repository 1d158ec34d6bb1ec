"""Closed-form diffusion bridges pinned at both endpoints.

For a Gaussian transition kernel the bridge ``q(x_t | x_0, x_T)`` is
isotropic Gaussian with

    mu_hat    = r (alpha_t / alpha_T) x_T + alpha_t x_0 (1 - r)
    sigma_hat = sigma_t^2 (1 - r),          r = SNR_T / SNR_t

Arrays follow one convention throughout: vectors are ``(d,)`` or batches
``(n, d)``; time is a scalar or one value per row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .schedules import DomainError, Schedule, diffusion_sq, drift

_TINY = 1e-12


def _col(v, x):
    """Broadcast a per-row quantity against a batch."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x)
    if v.ndim == 1 and x.ndim == 2:
        return v[:, None]
    return v


def _same_dim(*arrays):
    dims = {np.shape(a)[-1] for a in arrays}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {[np.shape(a) for a in arrays]}")


def _check_scale(c):
    if not 0 < c <= 1:
        raise ValueError(f"variance scale must lie in (0, 1], got {c}")


def _in_domain(sched: Schedule, t, hi=None):
    t = np.asarray(t, dtype=float)
    hi = sched.T if hi is None else hi
    # a relative slack keeps grid endpoints like T - t_min representable
    lo_ok = t >= sched.t_min * (1 - 1e-12)
    hi_ok = t <= hi * (1 + 1e-12)
    if not (np.all(lo_ok) and np.all(hi_ok)):
        raise DomainError(f"t outside [{sched.t_min}, {hi}]: {t}")
    return t


@dataclass(frozen=True)
class BridgeMarginal:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    t: float | np.ndarray
    x0: np.ndarray
    xT: np.ndarray


def mean_coefficients(sched: Schedule, t):
    """``(a_t, b_t, c_t)`` with ``x_t = a_t x_T + b_t x_0 + sqrt(c_t) eps``."""
    r = sched.snr_ratio(t)
    alpha_t = sched.alpha(t)
    alpha_T = float(sched.alpha(sched.T))
    a = alpha_t / alpha_T * r
    b = alpha_t * (1.0 - r)
    c = sched.sigma_sq(t) * (1.0 - r)
    return a, b, np.maximum(c, 0.0)


def bridge_moments(sched: Schedule, x0, xT, t) -> BridgeMarginal:
    x0 = np.asarray(x0, dtype=float)
    xT = np.asarray(xT, dtype=float)
    _same_dim(x0, xT)
    t = _in_domain(sched, t)
    a, b, c = mean_coefficients(sched, t)
    mu = _col(a, xT) * xT + _col(b, x0) * x0
    return BridgeMarginal(mu_hat=mu, sigma_hat=np.sqrt(c), t=t, x0=x0, xT=xT)


def sample_bridge(sched: Schedule, x0, xT, t, rng: np.random.Generator, c: float = 1.0):
    """Draw ``x_t ~ N(mu_hat, c^2 sigma_hat^2 I)``."""
    _check_scale(c)
    m = bridge_moments(sched, x0, xT, t)
    mu = np.broadcast_to(m.mu_hat, np.broadcast_shapes(np.shape(m.mu_hat), np.shape(x0), np.shape(xT)))
    eps = rng.standard_normal(mu.shape)
    return mu + c * _col(m.sigma_hat, mu) * eps


def h_function(sched: Schedule, x, t, y, t_max: float | None = None):
    """Doob drift correction ``grad_x log p(x_T = y | x_t = x)``.

    Defined for t in ``[t_min, T - t_min]``; closer to T the kernel collapses
    and the caller has to fall back on the endpoint approximation. Endpoint
    code may widen the window with ``t_max``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _same_dim(x, y)
    t = _in_domain(sched, t, hi=sched.T - sched.t_min if t_max is None else t_max)
    r = sched.snr_ratio(t)
    ratio_alpha = sched.alpha(t) / float(sched.alpha(sched.T))
    # sigma_t^2 (SNR_t / SNR_T - 1), equal to sigma_T^2 - sigma_t^2 for VE
    denom = sched.sigma_sq(t) * (1.0 - r) / r
    if np.any(denom < _TINY):
        raise DomainError(f"h-function denominator vanished at t={t}")
    return (_col(ratio_alpha, x) * y - x) / _col(denom, x)


def closed_form_bridge_score(sched: Schedule, x, x0, xT, t, c: float = 1.0):
    """Score of the (variance-scaled) bridge marginal, ``-(x - mu_hat) / (c^2 sigma_hat^2)``."""
    _check_scale(c)
    x = np.asarray(x, dtype=float)
    _same_dim(x, x0, xT)
    m = bridge_moments(sched, x0, xT, t)
    var = (c * m.sigma_hat) ** 2
    if np.any(c * m.sigma_hat < _TINY):
        raise DomainError(f"bridge variance vanished at t={t}")
    return -(x - m.mu_hat) / _col(var, x)


def gaussian_logpdf(x, mean, var):
    """Isotropic Gaussian log-density summed over the last axis."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    var = np.asarray(var, dtype=float)
    sq = np.sum((x - mean) ** 2, axis=-1)
    return -0.5 * sq / var - 0.5 * d * np.log(2 * np.pi * var)


def transition_logpdf(sched: Schedule, x_t, t, x_s, s):
    """``log p(x_t | x_s)`` of the unconditioned diffusion, ``s < t``."""
    a_t, a_s = sched.alpha(t), sched.alpha(s)
    k = a_t / a_s
    var = sched.sigma_sq(t) - k * k * sched.sigma_sq(s)
    return gaussian_logpdf(x_t, _col(k, x_s) * x_s, var)


def bridge_logpdf(sched: Schedule, x, x0, xT, t):
    m = bridge_moments(sched, x0, xT, t)
    return gaussian_logpdf(x, m.mu_hat, m.sigma_hat**2)


def marginal_logpdf_x0(sched: Schedule, x, x0, t):
    """``log p(x_t | x_0)``; t may reach zero only through this kernel's limits."""
    a = sched.alpha(t)
    return gaussian_logpdf(x, _col(a, x0) * np.asarray(x0, dtype=float), sched.sigma_sq(t))


def simulate_pinned_forward(
    sched: Schedule,
    x0,
    y,
    n_steps: int,
    rng: np.random.Generator,
    eps: float | None = None,
):
    """Euler-Maruyama integration of the h-transformed forward SDE.

    Integrates ``dx = [f + g^2 h] dt + g dW`` on a uniform grid from
    ``t_min`` to ``T - eps`` (``eps`` defaults to ``t_min``) starting at
    ``x0``. Returns ``(ts, path)`` with ``path[k]`` the state at ``ts[k]``.
    """
    if n_steps < 100:
        raise ValueError("n_steps must be at least 100")
    eps = sched.t_min if eps is None else eps
    x = np.array(x0, dtype=float, copy=True)
    y = np.asarray(y, dtype=float)
    _same_dim(x, y)
    x = np.broadcast_to(x, np.broadcast_shapes(x.shape, y.shape)).copy()
    ts = np.linspace(sched.t_min, sched.T - eps, n_steps + 1)
    path = np.empty((n_steps + 1,) + x.shape)
    path[0] = x
    for k in range(n_steps):
        t, dt = ts[k], ts[k + 1] - ts[k]
        g2 = float(diffusion_sq(sched, t))
        mu = drift(sched, x, t) + g2 * h_function(sched, x, t, y)
        x = x + mu * dt + np.sqrt(g2 * dt) * rng.standard_normal(x.shape)
        path[k + 1] = x
    return ts, path


def write_path_csv(path_file, ts, path):
    """Dump one trajectory (``path`` of shape ``(steps, d)``) as ``t,dim_0,..``."""
    path = np.asarray(path)
    d = path.shape[-1]
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"dim_{i}" for i in range(d)])
        for t, row in zip(ts, path):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
