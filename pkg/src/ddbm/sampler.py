"""Hybrid Euler-Maruyama / Heun sampler for bridge models.

Each step from ``t_i`` to ``t_{i-1}`` spends the fraction ``euler_s`` of
the interval on a stochastic Euler-Maruyama step of the reverse bridge SDE
and the rest on a Heun step of the (guided) probability-flow ODE. The
corrector is skipped on the final step into ``t_0 = 0``.

Drifts here are reverse-time velocities ``dx/d(T - t)``, so every update
multiplies them by a positive backward time increment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bridge import h_function
from .schedules import Schedule, diffusion_sq, drift

log = logging.getLogger(__name__)


class NonFiniteState(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite sampler state at step {step}")
        self.step = step


@dataclass(frozen=True)
class SamplerConfig:
    N: int = 40
    rho: float = 7.0
    guidance_w: float = 0.5
    euler_s: float = 0.33
    # hybrid/SDE start x_{T - eps} = y, with eps = eps_frac * t_min
    eps_frac: float = 1.0
    # ODE start: eps is this fraction of the first grid gap, eps' = eps_prime_frac * eps
    ode_eps_gap_frac: float = 0.75
    eps_prime_frac: float = 1e-3
    # the single endpoint noise draw of ODE mode uses its own fixed stream
    ode_noise_seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 <= self.guidance_w <= 1:
            raise ValueError("guidance_w must lie in [0, 1]")
        if not 0 <= self.euler_s < 1:
            raise ValueError("euler_s must lie in [0, 1)")
        if not self.eps_frac > 0:
            raise ValueError("eps_frac must be positive")
        if not 0 < self.ode_eps_gap_frac < 1:
            raise ValueError("ode_eps_gap_frac must lie in (0, 1)")
        if not 0 < self.eps_prime_frac < 1:
            raise ValueError("eps_prime_frac must lie in (0, 1)")

    @classmethod
    def defaults_for(cls, kind: str, **kw):
        """Translation defaults; VP bridges need full h-guidance."""
        base = {"guidance_w": 1.0 if kind == "vp" else 0.5, "euler_s": 0.33}
        base.update(kw)
        return cls(**base)


def time_grid(N: int, T: float, t_min: float, rho: float = 7.0) -> np.ndarray:
    """Decreasing grid ``[t_N, ..., t_1, t_0]`` with ``t_N = T``, ``t_1 = t_min``, ``t_0 = 0``."""
    if N < 2:
        raise ValueError("N must be at least 2")
    i = np.arange(N, 0, -1)
    frac = (N - i) / (N - 1)
    hi, lo = T ** (1 / rho), t_min ** (1 / rho)
    ts = (hi + frac * (lo - hi)) ** rho
    ts[0], ts[-1] = T, t_min
    return np.append(ts, 0.0)


def drift_full(score_field, sched: Schedule, x, t, y, t_max: float | None = None):
    """Reverse-time drift of the bridge SDE, ``-f + g^2 (s - h)``."""
    g2 = float(diffusion_sq(sched, t))
    s = score_field(x, y, t)
    return -drift(sched, x, t) + g2 * (s - h_function(sched, x, t, y, t_max=t_max))


def drift_ode(score_field, sched: Schedule, x, t, y, guidance_w: float = 1.0):
    """Reverse-time drift of the guided probability-flow ODE, ``-f + g^2 (s/2 - w h)``."""
    g2 = float(diffusion_sq(sched, t))
    s = score_field(x, y, t)
    out = -drift(sched, x, t) + 0.5 * g2 * s
    if guidance_w != 0:
        out = out - guidance_w * g2 * h_function(sched, x, t, y)
    return out


def endpoint_offsets(cfg: SamplerConfig, sched: Schedule):
    """``(eps, eps_prime)``: the sampler starts at ``T - eps``; ODE mode first moves from ``T - eps_prime``."""
    if cfg.euler_s > 0:
        return cfg.eps_frac * sched.t_min, 0.0
    ts = time_grid(cfg.N, sched.T, sched.t_min, cfg.rho)
    eps = cfg.ode_eps_gap_frac * (ts[0] - ts[1])
    return eps, cfg.eps_prime_frac * eps


def sample(score_field, sched: Schedule, y, cfg: SamplerConfig, rng: np.random.Generator | None = None,
           return_traj: bool = False):
    """Translate ``y`` (rows are ``x_T`` draws) into ``x_0`` samples.

    With ``euler_s > 0`` the start is approximated by ``x_{T - eps} = y`` and
    ``rng`` drives the Euler-Maruyama sub-steps. With ``euler_s = 0`` an ODE
    cannot leave the pinned endpoint, so a single Euler-Maruyama step from
    ``T - eps'`` to ``T - eps`` spreads the start; its noise comes from the
    fixed stream ``cfg.ode_noise_seed``, which makes the whole ODE sampler a
    deterministic function of ``y`` and ``cfg``.
    Returns the samples, plus the trajectory times and ``(steps, n, d)``
    states when ``return_traj`` is set.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    T, t_min = sched.T, sched.t_min
    s, w = cfg.euler_s, cfg.guidance_w
    if s > 0 and rng is None:
        raise ValueError("stochastic sampling (euler_s > 0) needs an rng")
    eps, eps_p = endpoint_offsets(cfg, sched)
    t_top = T - eps
    ts = time_grid(cfg.N, T, t_min, cfg.rho)
    ts[0] = t_top

    def tc(t):
        return min(max(t, t_min), t_top)

    x = y.copy()
    traj, traj_t = [x.copy()], [T]
    if s == 0:
        noise = np.random.default_rng(cfg.ode_noise_seed).standard_normal(x.shape)
        t0 = T - eps_p
        d = drift_full(score_field, sched, x, t0, y, t_max=t0)
        g = np.sqrt(float(diffusion_sq(sched, t0)))
        x = x + d * (eps - eps_p) + g * np.sqrt(eps - eps_p) * noise
        traj.append(x.copy())
        traj_t.append(t_top)

    for k in range(cfg.N):
        i = cfg.N - k
        t_cur, t_next = ts[k], ts[k + 1]
        t_hat = t_cur + s * (t_next - t_cur)
        if s > 0:
            d = drift_full(score_field, sched, x, tc(t_cur), y)
            g = np.sqrt(float(diffusion_sq(sched, tc(t_cur))))
            dt = t_cur - t_hat
            x = x + d * dt + g * np.sqrt(dt) * rng.standard_normal(x.shape)
        x_hat = x
        d_hat = drift_ode(score_field, sched, x_hat, tc(t_hat), y, w)
        x = x_hat + d_hat * (t_hat - t_next)
        if i != 1:
            d_prime = drift_ode(score_field, sched, x, tc(t_next), y, w)
            x = x_hat + 0.5 * (d_hat + d_prime) * (t_hat - t_next)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(i)
        if return_traj:
            traj.append(x.copy())
            traj_t.append(t_next)
    if return_traj:
        return x, np.asarray(traj_t), np.stack(traj)
    return x
