"""Denoising bridge score matching.

Sample a pair, a time and a bridge point ``x_t ~ q(x_t | x_0, x_T)``, then
regress ``D(x_t, x_T, t)`` onto ``x_0`` with weight ``1 / c_out^2``. The
minimiser is ``E[x_0 | x_t, x_T]``, which :func:`pred_x_to_score` turns into
the score of ``q(x_t | x_T)``.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import net
from .bridge import sample_bridge
from .evalkit import PairedDataset
from .oracle import GaussianPairSpec, conditional_moments, oracle_score
from .precond import PrecondHyper, pred_x_to_score, scalings
from .schedules import Schedule

log = logging.getLogger(__name__)

TIME_DISTS = ("uniform", "log-uniform")


class NonFiniteLoss(FloatingPointError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"non-finite loss {loss} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 2000
    batch_size: int = 256
    lr: float = 1e-4
    seed: int = 0
    time_dist: str = "uniform"
    log_every: int = 100
    ckpt_every: int = 500

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.time_dist not in TIME_DISTS:
            raise ValueError(f"time_dist must be one of {TIME_DISTS}")
        if self.log_every < 1 or self.ckpt_every < 1:
            raise ValueError("log_every and ckpt_every must be at least 1")


def sample_times(sched: Schedule, n: int, rng: np.random.Generator, time_dist: str = "uniform"):
    """Training times on ``[t_min, T - t_min]``."""
    lo, hi = sched.t_min, sched.T - sched.t_min
    if time_dist == "uniform":
        return rng.uniform(lo, hi, n)
    if time_dist == "log-uniform":
        return np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    raise ValueError(f"unknown time_dist {time_dist!r}")


def batch_at(sched: Schedule, hyper: PrecondHyper, x0, xT, t, rng: np.random.Generator) -> net.Batch:
    """Bridge draws and scalings for given pairs and per-row times."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    xT = np.atleast_2d(np.asarray(xT, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x0.shape[0],)).copy()
    x_t = sample_bridge(sched, x0, xT, t, rng)
    sc = scalings(sched, hyper, t)
    return net.Batch(x_t, x0, xT, t, sc.c_in, sc.c_out, sc.c_skip, sc.c_noise, sc.w)


def make_batch(ds: PairedDataset, sched: Schedule, hyper: PrecondHyper, cfg: TrainConfig,
               rng: np.random.Generator, t=None) -> net.Batch:
    """Resample ``cfg.batch_size`` pairs with replacement; ``t`` overrides the time draw."""
    if ds.n == 0:
        raise ValueError("cannot draw a batch from an empty dataset")
    idx = rng.integers(0, ds.n, cfg.batch_size)
    if t is None:
        t = sample_times(sched, cfg.batch_size, rng, cfg.time_dist)
    return batch_at(sched, hyper, ds.x0s[idx], ds.xTs[idx], t, rng)


@dataclass
class TrainResult:
    params: np.ndarray
    trace: list = field(default_factory=list)  # (iteration, loss, wall_ms)
    checkpoints: list = field(default_factory=list)


def train(ds: PairedDataset, sched: Schedule, hyper: PrecondHyper, spec: net.MlpSpec,
          cfg: TrainConfig, out_dir: str | None = None, params=None) -> TrainResult:
    """Run ``cfg.iters`` Adam steps; checkpoints and the loss trace go to ``out_dir``."""
    if spec.d != ds.d:
        raise ValueError(f"network dimension {spec.d} does not match dataset dimension {ds.d}")
    rng = np.random.default_rng(cfg.seed)
    init_rng, data_rng = (np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(2))
    params = net.init(spec, init_rng) if params is None else np.array(params, dtype=float)
    state = net.AdamState.zeros(spec.n_params)
    res = TrainResult(params)
    t0 = time.perf_counter()
    for it in range(1, cfg.iters + 1):
        batch = make_batch(ds, sched, hyper, cfg, data_rng)
        loss, grad = net.loss_and_grad(spec, params, batch)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NonFiniteLoss(it, loss)
        params, state = net.adam_step(params, grad, state, lr=cfg.lr)
        if it % cfg.log_every == 0 or it == cfg.iters:
            wall = (time.perf_counter() - t0) * 1e3
            res.trace.append((it, loss, wall))
            log.debug("iter %d loss %.5g", it, loss)
        if out_dir is not None and (it % cfg.ckpt_every == 0 or it == cfg.iters):
            path = os.path.join(out_dir, f"ckpt_{it:07d}.bin")
            net.save_checkpoint(path, spec, params, cfg.seed, it)
            res.checkpoints.append(path)
    res.params = params
    if out_dir is not None:
        write_trace_csv(os.path.join(out_dir, "loss_trace.csv"), res.trace)
    return res


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "wall_ms"])
        for it, loss, wall in trace:
            w.writerow([it, f"{loss:.17g}", f"{wall:.3f}"])


class NetScore:
    """Score field ``(x, x_T, t) -> grad log q(x_t | x_T)`` from a trained denoiser."""

    def __init__(self, spec: net.MlpSpec, params, sched: Schedule, hyper: PrecondHyper):
        self.spec, self.params, self.sched, self.hyper = spec, params, sched, hyper

    def denoise(self, x, xT, t):
        x = np.atleast_2d(x)
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        return net.denoise(self.spec, self.params, x, xT, scalings(self.sched, self.hyper, t))

    def __call__(self, x, xT, t):
        x = np.atleast_2d(x)
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        return pred_x_to_score(self.sched, self.denoise(x, xT, t), x, xT, t)


def eval_score_mse(score_field, oracle: GaussianPairSpec, sched: Schedule, n: int,
                   rng: np.random.Generator) -> float:
    """Relative score error ``sum ||s - s*||^2 / sum ||s*||^2`` over ``n`` draws.

    Draws ``x_T`` from its marginal, ``t`` uniform on ``[t_min, T - t_min]``
    and ``x_t ~ q(x_t | x_T)``. The errors are pooled before dividing: a
    per-draw ratio has ``||s*||^2`` near zero in its denominator whenever
    ``x_t`` lands on the conditional mean, and its mean does not exist.
    """
    xT = oracle.sample_xT(n, rng)
    t = sample_times(sched, n, rng, "uniform")
    mean, var = conditional_moments(oracle, sched, xT, t)
    x = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
    s_true = oracle_score(oracle, sched, x, xT, t)
    s_pred = score_field(x, xT, t)
    return float(np.sum((s_pred - s_true) ** 2) / np.sum(s_true**2))


def fit_full_batch(spec: net.MlpSpec, params, batch: net.Batch, lr: float = 1e-2, max_iters: int = 20000,
                   grad_tol: float = 1e-10, decay_every: int = 2000):
    """Full-batch Adam on a fixed batch until the gradient norm drops below ``grad_tol``.

    The step size halves every ``decay_every`` iterations. Returns
    ``(params, iterations, final_loss)``.
    """
    state = net.AdamState.zeros(spec.n_params)
    params = np.array(params, dtype=float)
    loss = np.inf
    for it in range(1, max_iters + 1):
        loss, grad = net.loss_and_grad(spec, params, batch)
        if not np.isfinite(loss):
            raise NonFiniteLoss(it, loss)
        if np.linalg.norm(grad) < grad_tol:
            break
        params, state = net.adam_step(params, grad, state, lr=lr * 0.5 ** (it // decay_every))
    return params, it, loss
