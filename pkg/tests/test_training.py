import csv

import numpy as np
import pytest
from scipy import stats

from ddbm import net
from ddbm.evalkit import PairedDataset, gen_dataset
from ddbm.oracle import GaussianPairSpec, OracleScore
from ddbm.precond import PrecondHyper
from ddbm.schedules import Schedule
from ddbm.training import (NetScore, NonFiniteLoss, TrainConfig, eval_score_mse, make_batch, sample_times,
                           train)

SPEC = GaussianPairSpec(1, 0.3, -0.2, 1.0, 1.0, 0.6)
SMALL = net.MlpSpec(d=1, hidden=(32, 32), embed_dim=8)


@pytest.fixture
def ds():
    return gen_dataset("gaussian_pair", 2000, 0, spec=SPEC)


def test_config_validation():
    for kw in ({"iters": 0}, {"batch_size": 0}, {"lr": 0.0}, {"time_dist": "beta"}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def test_forced_time_limits(ds):
    s, h = Schedule("ve"), PrecondHyper(1.0, 1.0, 0.6)
    rng = np.random.default_rng(0)
    cfg = TrainConfig(batch_size=512)
    hi = make_batch(ds, s, h, cfg, rng, t=s.T - s.t_min)
    assert np.max(np.abs(hi.x_t - hi.xT)) < 0.1
    lo = make_batch(ds, s, h, cfg, rng, t=s.t_min)
    assert np.max(np.abs(lo.x_t - lo.x0)) < 1e-3


@pytest.mark.parametrize("dist", ["uniform", "log-uniform"])
def test_time_marginal(dist):
    s = Schedule("vp")
    t = sample_times(s, 100_000, np.random.default_rng(1), dist)
    lo, hi = s.t_min, s.T - s.t_min
    if dist == "uniform":
        p = stats.kstest(t, stats.uniform(lo, hi - lo).cdf).pvalue
    else:
        p = stats.kstest(np.log(t), stats.uniform(np.log(lo), np.log(hi) - np.log(lo)).cdf).pvalue
    assert p > 0.01


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        make_batch(PairedDataset(np.zeros((0, 1)), np.zeros((0, 1))), Schedule("ve"), PrecondHyper(),
                   TrainConfig(), np.random.default_rng(0))


def test_seeds_and_trace(ds, tmp_path):
    s, h = Schedule("ve"), PrecondHyper(1.0, 1.0, 0.6)
    cfg = TrainConfig(iters=30, batch_size=32, seed=4, log_every=10, ckpt_every=20)
    a = train(ds, s, h, SMALL, cfg, out_dir=str(tmp_path))
    b = train(ds, s, h, SMALL, cfg)
    c = train(ds, s, h, SMALL, TrainConfig(iters=30, batch_size=32, seed=5, log_every=10))
    assert np.array_equal(a.params, b.params)
    assert [r[:2] for r in a.trace] == [r[:2] for r in b.trace]
    assert [r[1] for r in a.trace] != [r[1] for r in c.trace]
    rows = list(csv.reader(open(tmp_path / "loss_trace.csv")))
    assert rows[0] == ["iteration", "loss", "wall_ms"] and [r[0] for r in rows[1:]] == ["10", "20", "30"]
    assert [p.rsplit("/", 1)[-1] for p in a.checkpoints] == ["ckpt_0000020.bin", "ckpt_0000030.bin"]


def test_identical_pairs_regress_to_constant():
    x = np.full((100, 1), 0.4)
    ds = PairedDataset(x, x.copy())
    s, h = Schedule("ve"), PrecondHyper(0.01, 0.01, 0.01)
    cfg = TrainConfig(iters=1500, batch_size=64, lr=3e-3, log_every=100)
    res = train(ds, s, h, SMALL, cfg)
    assert res.trace[-1][1] < 0.05
    field = NetScore(SMALL, res.params, s, h)
    xt = np.full((5, 1), 0.4)
    D = field.denoise(xt, xt, np.linspace(0.1, 0.9, 5))
    assert np.allclose(D, 0.4, atol=0.02)


def test_non_finite_loss_reports_iteration(ds):
    s, h = Schedule("ve"), PrecondHyper(1.0, 1.0, 0.6)
    bad = net.init(SMALL, np.random.default_rng(0))
    bad[0] = np.nan
    with pytest.raises(NonFiniteLoss) as exc:
        train(ds, s, h, SMALL, TrainConfig(iters=5), params=bad)
    assert exc.value.iteration == 1


def test_eval_score_mse(ds):
    s, h = Schedule("vp"), PrecondHyper(1.0, 1.0, 0.6)
    assert eval_score_mse(OracleScore(SPEC, s), SPEC, s, 5000, np.random.default_rng(0)) == 0.0
    p0 = net.init(SMALL, np.random.default_rng(0))
    untrained = eval_score_mse(NetScore(SMALL, p0, s, h), SPEC, s, 5000, np.random.default_rng(0))
    res = train(ds, s, h, SMALL, TrainConfig(iters=1500, batch_size=128, lr=1e-3, log_every=500))
    trained = eval_score_mse(NetScore(SMALL, res.params, s, h), SPEC, s, 5000, np.random.default_rng(0))
    assert trained < untrained


def test_dimension_mismatch(ds):
    with pytest.raises(ValueError):
        train(ds, Schedule("ve"), PrecondHyper(), net.MlpSpec(d=2, hidden=(4,)), TrainConfig(iters=1))
