"""Train VE and VP bridges on rotate2d and translate held-out x_T back to x_0.

    python scripts/rotate2d_translation.py --iters 10000 --out runs/rotate2d.csv
"""

import argparse
import csv
from dataclasses import asdict

from ddbm.experiments import rotate2d_translation
from ddbm.sampler import SamplerConfig
from ddbm.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--N", type=int, default=40)
    ap.add_argument("--kinds", nargs="+", default=["ve", "vp"])
    ap.add_argument("--out", help="optional CSV summary")
    args = ap.parse_args()

    rows = []
    for kind in args.kinds:
        rep = rotate2d_translation(kind, tcfg=TrainConfig(iters=args.iters, seed=args.seed, log_every=1000),
                                   scfg=SamplerConfig.defaults_for(kind, N=args.N), seed=args.seed)
        row = asdict(rep) | {"passed": rep.passed}
        rows.append(row)
        print(f"{kind}: paired MSE {rep.paired_mse:.4f} (identity {rep.identity_mse:.4f}), "
              f"energy {rep.energy:.2e} (identity {rep.identity_energy:.2e}), "
              f"train {rep.train_s:.0f}s, sample {rep.sample_s:.1f}s")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
