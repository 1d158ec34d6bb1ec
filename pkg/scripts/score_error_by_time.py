"""Train the default MLP on a 1-D Gaussian pair and break the score error down by time band.

The pooled relative score MSE is dominated by small t, where the pred-x to
score conversion divides the denoiser error by the bridge variance c ~ t^2.

    python scripts/score_error_by_time.py --iters 20000
"""

import argparse

import numpy as np

from ddbm import net
from ddbm.evalkit import gen_dataset
from ddbm.oracle import GaussianPairSpec, conditional_moments, oracle_score
from ddbm.precond import PrecondHyper
from ddbm.schedules import Schedule
from ddbm.training import NetScore, TrainConfig, eval_score_mse, train

PAIR = GaussianPairSpec(1, 0.3, -0.2, 1.0, 1.0, 0.6)
BANDS = [(1e-4, 1e-2), (1e-2, 0.1), (0.1, 0.5), (0.5, 0.9), (0.9, 0.99), (0.99, 1 - 1e-4)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=20_000)
    ap.add_argument("--kind", default="ve")
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--time-dist", default="uniform")
    args = ap.parse_args()
    sched = Schedule(args.kind)
    hyper = PrecondHyper(1.0, 1.0, 0.6)
    spec = net.MlpSpec(d=1)
    ds = gen_dataset("gaussian_pair", 10_000, 0, spec=PAIR)
    res = train(ds, sched, hyper, spec, TrainConfig(iters=args.iters, lr=args.lr, time_dist=args.time_dist,
                                                    log_every=max(args.iters // 10, 1)))
    for it, loss, wall in res.trace:
        print(f"iter {it:6d}  loss {loss:.4f}  {wall / 1e3:.1f}s")
    field = NetScore(spec, res.params, sched, hyper)
    print(f"pooled relative score MSE: {eval_score_mse(field, PAIR, sched, 20_000, np.random.default_rng(0)):.4g}")
    rng = np.random.default_rng(1)
    print("band                 E|s - s*|^2    E|s*|^2")
    for lo, hi in BANDS:
        n = 5000
        xT = PAIR.sample_xT(n, rng)
        t = rng.uniform(lo, hi, n)
        mean, var = conditional_moments(PAIR, sched, xT, t)
        x = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
        s_true = oracle_score(PAIR, sched, x, xT, t)
        err = np.mean(np.sum((field(x, xT, t) - s_true) ** 2, axis=1))
        print(f"[{lo:<6.4g}, {hi:<6.4g})  {err:12.4g}  {np.mean(s_true**2):9.4g}")


if __name__ == "__main__":
    main()
