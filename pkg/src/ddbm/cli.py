"""Command-line entry point: ``ddbm {train,sample,verify,reduce-check,grid-dump}``.

Exit codes: 0 success, 1 configuration or input error, 2 non-finite loss or
sampler state, 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import checks, config, net
from .oracle import OracleScore
from .precond import check_edm_reduction, check_ot_limit
from .sampler import NonFiniteState, endpoint_offsets, sample, time_grid
from .training import NetScore, NonFiniteLoss, train

log = logging.getLogger("ddbm")


def _f(v):
    return f"{float(v):.17g}"


def _snapshot(cfg: config.RunConfig, out_dir: str, name: str = "config.resolved.toml"):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(config.dumps(cfg.resolved()))


def cmd_train(cfg: config.RunConfig, args) -> int:
    out = cfg.out
    _snapshot(cfg, out)
    ds = cfg.dataset()
    spec = cfg.mlp()
    try:
        res = train(ds, cfg.schedule(), cfg.hyper(ds), spec, cfg.train_cfg(), out_dir=out)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    final = os.path.join(out, "final.bin")
    net.save_checkpoint(final, spec, res.params, cfg.seed, cfg.train_cfg().iters)
    print(f"trained {cfg.train_cfg().iters} iters, final loss {res.trace[-1][1]:.6g}, checkpoint {final}")
    return 0


def _write_samples(path, xT, x0):
    d = xT.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"xT_{i}" for i in range(d)] + [f"x0_{i}" for i in range(d)])
        for a, b in zip(xT, x0):
            w.writerow([_f(v) for v in a] + [_f(v) for v in b])


def _write_traj(path, ts, traj):
    steps, n, d = traj.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "step", "t"] + [f"dim_{i}" for i in range(d)])
        for j in range(n):
            for k in range(steps):
                w.writerow([j, k, _f(ts[k])] + [_f(v) for v in traj[k, j]])


def cmd_sample(cfg: config.RunConfig, args) -> int:
    sched = cfg.schedule()
    scfg = cfg.sampler_cfg()
    if args.oracle:
        if cfg.values["data"]["kind"] != "gaussian_pair":
            print("error: --oracle needs data.kind = \"gaussian_pair\"", file=sys.stderr)
            return 1
        field, source = OracleScore(cfg.oracle(), sched), "oracle"
    else:
        if not args.checkpoint:
            print("error: sample needs --checkpoint PATH or --oracle", file=sys.stderr)
            return 1
        try:
            ck = net.load_checkpoint(args.checkpoint)
        except FileNotFoundError:
            print(f"error: checkpoint not found: {args.checkpoint}", file=sys.stderr)
            return 1
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        field, source = NetScore(ck.spec, ck.params, sched, cfg.hyper()), args.checkpoint
    out = cfg.out
    _snapshot(cfg, out)
    d = cfg.data_dim()
    n = args.n
    y = cfg.dataset(seed_offset=1, n=n).xTs if n > 0 else np.zeros((0, d))
    ts, traj = None, None
    if n > 0:
        try:
            res = sample(field, sched, y, scfg, np.random.default_rng(cfg.seed), return_traj=args.traj)
        except NonFiniteState as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        x, ts, traj = res if args.traj else (res, None, None)
    else:
        x = np.zeros((0, d))
    _write_samples(os.path.join(out, "samples.csv"), y, x)
    if args.traj:
        _write_traj(os.path.join(out, "trajectory.csv"), ts if ts is not None else [],
                    traj if traj is not None else np.zeros((0, 0, d)))
    eps, eps_p = endpoint_offsets(scfg, sched)
    meta = {"N": scfg.N, "rho": scfg.rho, "guidance_w": scfg.guidance_w, "euler_s": scfg.euler_s,
            "seed": cfg.seed, "n": n, "eps": eps, "eps_prime": eps_p, "schedule": sched.kind,
            "source": source}
    with open(os.path.join(out, "samples.meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {n} samples to {os.path.join(out, 'samples.csv')}")
    return 0


def cmd_verify(cfg: config.RunConfig, args) -> int:
    sched = cfg.schedule()
    results = []

    def run(name, fn):
        try:
            ok, detail = fn()
        except (ValueError, FloatingPointError) as exc:
            ok, detail = False, str(exc)
        results.append((name, ok))
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    hyper_box = []

    def hyper_check():
        hyper_box.append(cfg.hyper())
        h = hyper_box[0]
        return True, f"sigma0_sq={h.sigma0_sq:.6g} sigmaT_sq={h.sigmaT_sq:.6g} sigma0T={h.sigma0T:.6g}"

    run("precond_hyper", hyper_check)
    run("bayes_identity", lambda: checks.bayes_identity(sched))
    run("marginal_consistency", lambda: checks.marginal_consistency(sched))
    run("gradient_check", lambda: checks.gradient_check(d=cfg.data_dim()))
    if hyper_box:
        run("unit_variance", lambda: checks.unit_variance(sched, hyper_box[0]))
    run("mixture_identity", lambda: checks.mixture_identity(cfg.oracle(), sched))
    run("unconditional_reduction", lambda: checks.unconditional_reduction(sched))
    failed = [name for name, ok in results if not ok]
    if failed:
        print(f"first failing check: {failed[0]}")
        return 3
    return 0


def cmd_reduce_check(cfg: config.RunConfig, args) -> int:
    p = cfg.values["precond"]
    T = cfg.values["schedule"]["T"]
    if p["mode"] == "explicit":
        sigma0, hyper = float(np.sqrt(p["sigma0_sq"])), cfg.hyper()
    else:
        sigma0, hyper = p["sigma0"], None
    dev = check_edm_reduction(sigma0=sigma0, T=T, hyper=hyper)
    rep = check_ot_limit(np.array([[0.5, -1.0]]), np.array([[-0.3, 0.8]]), seed=cfg.seed)
    edm_ok = dev <= 1e-10
    ot_ok = bool(0.8 <= rep.slope <= 1.2)
    print(f"{'PASS' if edm_ok else 'FAIL'} edm_reduction: max rel dev {dev:.3g} (tol 1e-10)")
    grid = ", ".join(f"c={c:g}: {d:.4g}" for c, d in zip(rep.c_grid, rep.deviations))
    print(f"{'PASS' if ot_ok else 'FAIL'} ot_limit: slope {rep.slope:.4f} in [0.8, 1.2] ({grid})")
    return 0 if edm_ok and ot_ok else 3


def cmd_grid_dump(cfg: config.RunConfig, args) -> int:
    sched, scfg = cfg.schedule(), cfg.sampler_cfg()
    ts = time_grid(scfg.N, sched.T, sched.t_min, scfg.rho)
    out = cfg.out
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "grid.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "t"])
        for k, t in enumerate(ts):
            w.writerow([scfg.N - k, _f(t)])
    print(f"wrote {len(ts)} grid points to {path}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "verify": cmd_verify,
    "reduce-check": cmd_reduce_check,
    "grid-dump": cmd_grid_dump,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddbm", description="Denoising diffusion bridge models on toy data.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="TOML run config (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--checkpoint", help="checkpoint for sample")
    p.add_argument("--oracle", action="store_true", help="sample with the analytic Gaussian-pair score")
    p.add_argument("--traj", action="store_true", help="also write full sampler trajectories")
    p.add_argument("-n", type=int, default=1000, help="number of samples (sample)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.n < 0:
        print("error: -n must be non-negative", file=sys.stderr)
        return 1
    # verify reports a bad precond block as a failed check rather than a config error
    try:
        cfg = config.load(args.config, seed=args.seed, out=args.out, check_hyper=args.command != "verify")
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
