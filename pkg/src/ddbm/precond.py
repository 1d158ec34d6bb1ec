"""Pred-x preconditioning for bridge models.

The denoiser is ``D = c_skip x_t + c_out F(c_in x_t, c_in x_T, c_noise)``,
trained with weight ``1 / c_out^2``. The scalings give unit-variance network
inputs and targets under a Gaussian model of ``(x_0, x_T)`` with variances
``sigma0_sq``, ``sigmaT_sq`` and covariance ``sigma0T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bridge import _col, closed_form_bridge_score, h_function, mean_coefficients, sample_bridge
from .schedules import DomainError, Schedule, diffusion_sq, drift


@dataclass(frozen=True)
class PrecondHyper:
    sigma0_sq: float = 0.25
    sigmaT_sq: float = 0.25
    sigma0T: float = 0.125

    def __post_init__(self):
        vals = (self.sigma0_sq, self.sigmaT_sq, self.sigma0T)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("preconditioning hyperparameters must be finite")
        if self.sigma0_sq <= 0 or self.sigmaT_sq <= 0:
            raise ValueError("sigma0_sq and sigmaT_sq must be positive")
        if self.sigma0T**2 > self.sigma0_sq * self.sigmaT_sq * (1 + 1e-12):
            raise ValueError(
                f"sigma0T={self.sigma0T} violates Cauchy-Schwarz for "
                f"sigma0_sq={self.sigma0_sq}, sigmaT_sq={self.sigmaT_sq}"
            )

    @classmethod
    def translation(cls, sigma0=0.5, sigmaT=0.5):
        """Image-translation defaults: ``sigma0T = sigma0^2 / 2``."""
        return cls(sigma0**2, sigmaT**2, sigma0**2 / 2)

    @classmethod
    def generation(cls, sigma0=0.5, T=1.0):
        """Unconditional defaults where ``x_T = x_0 + T eps``."""
        return cls(sigma0**2, sigma0**2 + T**2, sigma0**2)


@dataclass(frozen=True)
class Scalings:
    c_in: np.ndarray
    c_out: np.ndarray
    c_skip: np.ndarray
    c_noise: np.ndarray
    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def abc(sched: Schedule, t):
    """Coefficients of ``x_t = a x_T + b x_0 + sqrt(c) eps`` under the bridge."""
    t = np.asarray(t, dtype=float)
    if np.any(t < sched.t_min * (1 - 1e-12)) or np.any(t > sched.T):
        raise DomainError(f"t outside [{sched.t_min}, {sched.T}]: {t}")
    return mean_coefficients(sched, t)


def scalings(sched: Schedule, hyper: PrecondHyper, t) -> Scalings:
    a, b, c = abc(sched, t)
    s0, sT, s0T = hyper.sigma0_sq, hyper.sigmaT_sq, hyper.sigma0T
    in_var = a * a * sT + b * b * s0 + 2 * a * b * s0T + c
    out_rad = a * a * (sT * s0 - s0T * s0T) + s0 * c
    if np.any(in_var <= 0) or np.any(out_rad <= 0):
        raise DomainError("non-positive radicand in scalings; degenerate hyperparameters")
    c_in = 1.0 / np.sqrt(in_var)
    c_out = np.sqrt(out_rad) * c_in
    c_skip = (b * s0 + a * s0T) * c_in**2
    c_noise = 0.25 * np.log(np.maximum(np.asarray(t, dtype=float), sched.t_min))
    return Scalings(c_in, c_out, c_skip, c_noise, 1.0 / c_out**2, a, b, c)


def pred_x_to_score(sched: Schedule, D, x, xT, t):
    """Convert a pred-x output into the score of ``q(x_t | x_T)``."""
    a, b, c = abc(sched, t)
    if np.any(c < 1e-12):
        raise DomainError(f"bridge variance vanished at t={t}")
    x = np.asarray(x, dtype=float)
    mean = _col(a, x) * np.asarray(xT, dtype=float) + _col(b, x) * np.asarray(D, dtype=float)
    return -(x - mean) / _col(c, x)


def check_edm_reduction(sigma0: float = 0.5, T: float = 1.0, grid=None,
                        hyper: PrecondHyper | None = None) -> float:
    """Max relative deviation of VE bridge scalings from the EDM closed forms.

    ``hyper`` defaults to the generation setting; passing something else is
    how a broken configuration shows up as a large deviation.
    """
    sched = Schedule("ve", T=T)
    hyper = PrecondHyper.generation(sigma0, T) if hyper is None else hyper
    if grid is None:
        grid = np.geomspace(1e-3 * T, T, 100)
    t = np.asarray(grid, dtype=float)
    sc = scalings(sched, hyper, t)
    s2 = sigma0**2
    edm = {
        "c_in": 1.0 / np.sqrt(s2 + t**2),
        "c_out": sigma0 * t / np.sqrt(s2 + t**2),
        "c_skip": s2 / (s2 + t**2),
        "w": 1.0 / t**2 + 1.0 / s2,
    }
    dev = 0.0
    for name, ref in edm.items():
        got = getattr(sc, name)
        dev = max(dev, float(np.max(np.abs(got - ref) / np.abs(ref))))
    return dev


@dataclass(frozen=True)
class OTLimitReport:
    c_grid: np.ndarray
    deviations: np.ndarray
    slope: float


def ot_flow_drift(x, x0, xT, t, c, T=1.0):
    """Forward-time probability-flow drift of the bridge given both endpoints.

    Uses the Brownian-bridge VE schedule ``sigma_t^2 = c^2 t``; the noise
    scale ``c`` enters through the score's variance while ``g^2 h`` is
    c-independent.
    """
    sched = Schedule("ve", T=T, ve_power=1.0)
    g2 = float(diffusion_sq(sched, t))
    score = closed_form_bridge_score(sched, x, x0, xT, t, c=c)
    # h of the c-scaled kernel is h_base / c^2 and g^2 scales by c^2
    h = h_function(sched, x, t, xT)
    return drift(sched, x, t) - c * c * g2 * 0.5 * score + g2 * h


def check_ot_limit(x0, xT, grid_c=(1e-1, 1e-2, 1e-3), t: float = 0.3, n_draws: int = 1000,
                   seed: int = 0, T: float = 1.0) -> OTLimitReport:
    """Straight-line limit of the bridge probability-flow drift as the noise scale -> 0.

    For each ``c`` draws ``x_t`` from the c-scaled bridge, evaluates the
    drift and records ``E ||drift - (x_T - x_0)/T||``. The fitted log-log
    slope should be close to 1. At ``t = T/2`` the first-order term
    vanishes identically, hence the off-centre default time.
    """
    sched = Schedule("ve", T=T, ve_power=1.0)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    xT = np.atleast_2d(np.asarray(xT, dtype=float))
    target = (xT - x0) / T
    devs = []
    for c in grid_c:
        # common random numbers across c keep the slope free of sampling noise
        rng = np.random.default_rng(seed)
        x0b = np.repeat(x0, n_draws, axis=0) if x0.shape[0] == 1 else x0
        xTb = np.repeat(xT, n_draws, axis=0) if xT.shape[0] == 1 else xT
        xt = sample_bridge(sched, x0b, xTb, t, rng, c=c)
        d = ot_flow_drift(xt, x0b, xTb, t, c, T=T)
        devs.append(np.mean(np.linalg.norm(d - target, axis=-1)))
    devs = np.asarray(devs)
    cs = np.asarray(grid_c, dtype=float)
    if np.all(devs > 0):
        slope = float(np.polyfit(np.log(cs), np.log(devs), 1)[0])
    else:
        slope = float("nan")
    return OTLimitReport(cs, devs, slope)
