"""Reusable experiment drivers shared by scripts/, the CLI and the acceptance suite."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import net
from .evalkit import PairedDataset, energy_distance, gen_dataset, paired_mse
from .precond import PrecondHyper
from .sampler import SamplerConfig, sample
from .schedules import Schedule
from .training import NetScore, TrainConfig, train


def hyper_from_data(ds: PairedDataset) -> PrecondHyper:
    """Per-dimension averaged second moments of the pairs (means removed)."""
    x0 = ds.x0s - ds.x0s.mean(axis=0)
    xT = ds.xTs - ds.xTs.mean(axis=0)
    s0, sT = float(np.mean(x0**2)), float(np.mean(xT**2))
    cov = float(np.mean(x0 * xT))
    lim = np.sqrt(s0 * sT)
    return PrecondHyper(s0, sT, float(np.clip(cov, -lim, lim)))


@dataclass
class TranslationReport:
    kind: str
    paired_mse: float
    energy: float
    identity_mse: float
    identity_energy: float
    train_s: float
    sample_s: float
    final_loss: float

    @property
    def passed(self) -> bool:
        return (self.paired_mse <= 0.05 and self.energy <= 0.05
                and self.paired_mse < self.identity_mse and self.energy < self.identity_energy)


def rotate2d_translation(kind: str = "ve", n: int = 10_000, n_test: int = 2_000, theta: float = np.pi / 2,
                         noise_std: float = 0.05, spec: net.MlpSpec | None = None,
                         tcfg: TrainConfig | None = None, scfg: SamplerConfig | None = None,
                         seed: int = 0) -> TranslationReport:
    """Train a bridge on rotate2d pairs, translate held-out x_T back, score the result."""
    sched = Schedule(kind)
    ds = gen_dataset("rotate2d", n, seed, theta=theta, noise_std=noise_std)
    test = gen_dataset("rotate2d", n_test, seed + 1, theta=theta, noise_std=noise_std)
    hyper = hyper_from_data(ds)
    spec = spec or net.MlpSpec(d=2)
    tcfg = tcfg or TrainConfig(seed=seed)
    scfg = scfg or SamplerConfig.defaults_for(kind, N=40)
    t0 = time.perf_counter()
    res = train(ds, sched, hyper, spec, tcfg)
    t1 = time.perf_counter()
    x = sample(NetScore(spec, res.params, sched, hyper), sched, test.xTs, scfg, np.random.default_rng(seed + 2))
    t2 = time.perf_counter()
    return TranslationReport(
        kind=kind,
        paired_mse=paired_mse(x, test.x0s),
        energy=energy_distance(x, test.x0s),
        identity_mse=paired_mse(test.xTs, test.x0s),
        identity_energy=energy_distance(test.xTs, test.x0s),
        train_s=t1 - t0,
        sample_s=t2 - t1,
        final_loss=res.trace[-1][1],
    )
