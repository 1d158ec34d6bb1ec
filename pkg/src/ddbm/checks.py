"""Self-contained invariant checks, each returning ``(passed, detail)``.

These back the ``verify`` command. They only compute; nothing is written.
"""

from __future__ import annotations

import numpy as np

from . import net
from .bridge import bridge_logpdf, marginal_logpdf_x0, mean_coefficients, sample_bridge, transition_logpdf
from .oracle import GaussianPairSpec, conditional_moments, mixture_score_1d, oracle_score
from .precond import PrecondHyper, scalings
from .schedules import Schedule


def bayes_identity(sched: Schedule, n: int = 1000, d: int = 2, seed: int = 0, tol: float = 1e-8):
    """Bridge log-density against ``log p(x_T|x_t) + log p(x_t|x_0) - log p(x_T|x_0)``."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.05, 0.95, n) * sched.T
    x0, xT, xt = (rng.standard_normal((n, d)) for _ in range(3))
    lhs = bridge_logpdf(sched, xt, x0, xT, t)
    rhs = (transition_logpdf(sched, xT, sched.T, xt, t) + marginal_logpdf_x0(sched, xt, x0, t)
           - marginal_logpdf_x0(sched, xT, x0, sched.T))
    err = float(np.max(np.abs(lhs - rhs)))
    return err <= tol, f"max abs err {err:.3g}"


def marginal_consistency(sched: Schedule, n: int = 20000, seed: int = 0):
    """Sample mean within 4 standard errors and variance within 5% of the bridge moments."""
    rng = np.random.default_rng(seed)
    x0, xT = np.array([0.7, -0.3]), np.array([-0.4, 1.1])
    worst_z, worst_v = 0.0, 0.0
    for frac in (0.25, 0.5, 0.75):
        t = frac * sched.T
        a, b, c = (float(u) for u in mean_coefficients(sched, t))
        xt = sample_bridge(sched, np.tile(x0, (n, 1)), np.tile(xT, (n, 1)), t, rng)
        z = np.abs(xt.mean(0) - (a * xT + b * x0)) / np.sqrt(c / n)
        worst_z = max(worst_z, float(z.max()))
        worst_v = max(worst_v, float(np.max(np.abs(xt.var(0) / c - 1))))
    return worst_z <= 4 and worst_v <= 0.05, f"max |z| {worst_z:.2f}, max var rel err {worst_v:.3g}"


def gradient_check(d: int = 2, seed: int = 0, n_coords: int = 20, h: float = 1e-5, tol: float = 1e-4):
    """Central differences of ``loss_and_grad`` on random coordinates of a small net."""
    rng = np.random.default_rng(seed)
    spec = net.MlpSpec(d=d, hidden=(16, 16), embed_dim=8)
    params = net.init(spec, rng)
    sched, hyper = Schedule("ve"), PrecondHyper()
    t = rng.uniform(0.05, 0.95, 16)
    sc = scalings(sched, hyper, t)
    x0, xT = rng.standard_normal((16, d)), rng.standard_normal((16, d))
    batch = net.Batch(sample_bridge(sched, x0, xT, t, rng), x0, xT, t,
                      sc.c_in, sc.c_out, sc.c_skip, sc.c_noise, sc.w)
    _, grad = net.loss_and_grad(spec, params, batch)
    worst = 0.0
    for j in rng.choice(spec.n_params, n_coords, replace=False):
        e = np.zeros_like(params)
        e[j] = h
        fd = (net.loss_and_grad(spec, params + e, batch)[0] - net.loss_and_grad(spec, params - e, batch)[0]) / (2 * h)
        worst = max(worst, abs(fd - grad[j]) / max(abs(fd), abs(grad[j]), 1e-8))
    return worst <= tol, f"max rel err {worst:.3g}"


def unit_variance(sched: Schedule, hyper: PrecondHyper, tol: float = 1e-6):
    """Under the hyperparameters' own Gaussian model, network input and target have unit variance."""
    t = np.linspace(sched.t_min, sched.T - sched.t_min, 200)
    sc = scalings(sched, hyper, t)
    a, b, c = sc.a, sc.b, sc.c
    s0, sT, s0T = hyper.sigma0_sq, hyper.sigmaT_sq, hyper.sigma0T
    var_x = a * a * sT + b * b * s0 + 2 * a * b * s0T + c
    cov_x0 = b * s0 + a * s0T
    # Var(x_0 - c_skip x_t) / c_out^2; cancellation near t_min costs ~8 digits
    target = (s0 - 2 * sc.c_skip * cov_x0 + sc.c_skip**2 * var_x) / sc.c_out**2
    err = max(float(np.max(np.abs(sc.c_in**2 * var_x - 1))), float(np.max(np.abs(target - 1))))
    return err <= tol, f"max |var - 1| {err:.3g}"


def mixture_identity(spec: GaussianPairSpec, sched: Schedule, seed: int = 0, tol: float = 1e-6):
    """Analytic score of ``q(x_t|x_T)`` against quadrature over ``x_0 | x_t, x_T`` (first dim)."""
    s1 = GaussianPairSpec(1, spec.mean0[0], spec.meanT[0], spec.var0[0], spec.varT[0], spec.cov0T[0])
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        t = float(rng.uniform(0.1, 0.9) * sched.T)
        xT, x = rng.standard_normal(2)
        ref = float(oracle_score(s1, sched, np.array([[x]]), np.array([[xT]]), t)[0, 0])
        got = mixture_score_1d(s1, sched, x, xT, t)
        worst = max(worst, abs(got - ref) / max(1.0, abs(ref)))
    return worst <= tol, f"max rel err {worst:.3g}"


def unconditional_reduction(sched: Schedule, mean0=0.3, var0=0.5, tol: float = 1e-10):
    """With ``x_T ~ N(alpha_T x_0, sigma_T^2)`` the bridge marginal is ``N(alpha_t x_0, sigma_t^2)``.

    Checked on the moment identities ``a alpha_T + b = alpha_t`` and
    ``a^2 sigma_T^2 + c = sigma_t^2``, and on the full ``x_t`` marginal of the
    coupled Gaussian pair.
    """
    t = np.linspace(sched.t_min, sched.T - sched.t_min, 200)
    a, b, c = mean_coefficients(sched, t)
    aT, sT2 = float(sched.alpha(sched.T)), float(sched.sigma_sq(sched.T))
    e1 = np.max(np.abs(a * aT + b - sched.alpha(t)))
    e2 = np.max(np.abs(a * a * sT2 + c - sched.sigma_sq(t)))
    spec = GaussianPairSpec.unconditional(sched, mean0, var0)
    # marginal over x_T: E[x_t] and Var[x_t] from the conditional moments
    mT, vT = float(spec.meanT[0]), float(spec.varT[0])
    m_lo, v_lo = conditional_moments(spec, sched, np.array([[mT - 1.0]]), t)
    m_hi, _ = conditional_moments(spec, sched, np.array([[mT + 1.0]]), t)
    slope = (m_hi - m_lo)[:, 0] / 2.0
    mean_xt = (m_lo[:, 0] + m_hi[:, 0]) / 2.0
    var_xt = v_lo[:, 0] + slope**2 * vT
    al, s2 = sched.alpha(t), sched.sigma_sq(t)
    e3 = np.max(np.abs(mean_xt - al * mean0))
    e4 = np.max(np.abs(var_xt - (al * al * var0 + s2)))
    err = float(max(e1, e2, e3, e4))
    return err <= tol, f"max identity err {err:.3g}"
