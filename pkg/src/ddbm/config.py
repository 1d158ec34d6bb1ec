"""Run configuration: TOML in, validated dataclasses out, resolved snapshot back to TOML.

Grammar: a TOML document with optional top-level ``seed`` (int) and ``out``
(str) plus the tables ``[schedule] [precond] [net] [train] [sampler] [data]
[oracle]``. Every key is optional; unknown tables or keys are errors. Keys
and their defaults are exactly the ``DEFAULTS`` mapping below.
``sampler.guidance_w`` also accepts ``"auto"`` (1 for VP, 0.5 for VE).

``[precond] mode`` selects how the pred-x hyperparameters are set:
``auto`` (moments of the training pairs), ``translation`` (``sigma0``,
``sigmaT``), ``generation`` (``sigma0`` and the schedule's ``T``) or
``explicit`` (``sigma0_sq``, ``sigmaT_sq``, ``sigma0T``).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import tomli

from . import net
from .evalkit import KINDS, PairedDataset, gen_dataset
from .oracle import GaussianPairSpec
from .precond import PrecondHyper
from .sampler import SamplerConfig
from .schedules import Schedule
from .training import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "seed": 0,
    "out": "runs/default",
    "schedule": {"kind": "ve", "T": 1.0, "beta0": 1.0, "t_min_frac": 1e-4},
    "precond": {"mode": "auto", "sigma0": 0.5, "sigmaT": 0.5,
                "sigma0_sq": 0.25, "sigmaT_sq": 0.25, "sigma0T": 0.125},
    "net": {"hidden": [128, 128, 128], "embed_dim": 32, "activation": "silu"},
    "train": {"iters": 2000, "batch_size": 256, "lr": 1e-4, "time_dist": "uniform",
              "log_every": 100, "ckpt_every": 500},
    "sampler": {"N": 40, "rho": 7.0, "guidance_w": "auto", "euler_s": 0.33, "eps_frac": 1.0,
                "ode_eps_gap_frac": 0.75, "eps_prime_frac": 1e-3, "ode_noise_seed": 0},
    "data": {"kind": "rotate2d", "n": 10000, "theta": math.pi / 2, "noise_std": 0.05},
    "oracle": {"d": 1, "mean0": 0.0, "meanT": 0.0, "var0": 1.0, "varT": 1.0, "cov0T": 0.8},
}

PRECOND_MODES = ("auto", "translation", "generation", "explicit")
# numeric keys that also accept the string "auto"
AUTO_NUMERIC = {("sampler", "guidance_w")}


def _typecheck(section, key, value, default):
    where = f"{section}.{key}" if section else key
    if (section, key) in AUTO_NUMERIC:
        if value == "auto":
            return value
        default = 0.0
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    # oracle moments may be scalars or per-dimension lists
    if not ok and section == "oracle" and isinstance(value, list):
        ok = all(isinstance(v, (int, float)) for v in value)
    if not ok:
        raise ConfigError(f"{where}: expected {type(default).__name__}, got {value!r}")
    return value


def merge(raw: dict) -> dict:
    """Overlay ``raw`` on the defaults, rejecting unknown keys and wrong types."""
    out = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        if isinstance(DEFAULTS[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{key!r} must be a table")
            for k, v in value.items():
                if k not in DEFAULTS[key]:
                    raise ConfigError(f"unknown key {key}.{k}")
                out[key][k] = _typecheck(key, k, v, DEFAULTS[key][k])
        else:
            out[key] = _typecheck("", key, value, DEFAULTS[key])
    return out


@dataclass
class RunConfig:
    values: dict

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def out(self) -> str:
        return self.values["out"]

    def schedule(self) -> Schedule:
        return Schedule(**self.values["schedule"])

    def oracle(self) -> GaussianPairSpec:
        return GaussianPairSpec(**self.values["oracle"])

    def dataset(self, seed_offset: int = 0, n: int | None = None) -> PairedDataset:
        d = self.values["data"]
        n = d["n"] if n is None else n
        seed = self.seed + seed_offset
        if d["kind"] == "gaussian_pair":
            return gen_dataset("gaussian_pair", n, seed, spec=self.oracle())
        if d["kind"] == "rotate2d":
            return gen_dataset("rotate2d", n, seed, theta=d["theta"], noise_std=d["noise_std"])
        return gen_dataset(d["kind"], n, seed)

    def data_dim(self) -> int:
        return self.values["oracle"]["d"] if self.values["data"]["kind"] == "gaussian_pair" else 2

    def hyper(self, ds: PairedDataset | None = None) -> PrecondHyper:
        p = self.values["precond"]
        mode = p["mode"]
        if mode == "translation":
            return PrecondHyper.translation(p["sigma0"], p["sigmaT"])
        if mode == "generation":
            return PrecondHyper.generation(p["sigma0"], self.values["schedule"]["T"])
        if mode == "explicit":
            return PrecondHyper(p["sigma0_sq"], p["sigmaT_sq"], p["sigma0T"])
        from .experiments import hyper_from_data
        return hyper_from_data(ds if ds is not None else self.dataset())

    def mlp(self) -> net.MlpSpec:
        n = self.values["net"]
        return net.MlpSpec(d=self.data_dim(), hidden=tuple(n["hidden"]), embed_dim=n["embed_dim"],
                           activation=n["activation"])

    def train_cfg(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.values["train"])

    def sampler_cfg(self) -> SamplerConfig:
        s = dict(self.values["sampler"])
        if s["guidance_w"] == "auto":
            s["guidance_w"] = 1.0 if self.values["schedule"]["kind"] == "vp" else 0.5
        return SamplerConfig(**s)

    def validate(self, check_hyper: bool = True):
        """Build every component once so bad values fail before any compute."""
        if self.values["data"]["kind"] not in KINDS:
            raise ConfigError(f"data.kind must be one of {KINDS}")
        if self.values["precond"]["mode"] not in PRECOND_MODES:
            raise ConfigError(f"precond.mode must be one of {PRECOND_MODES}")
        if self.values["data"]["n"] < 1:
            raise ConfigError("data.n must be at least 1")
        try:
            self.schedule()
            self.oracle()
            self.mlp()
            self.train_cfg()
            self.sampler_cfg()
            if check_hyper and self.values["precond"]["mode"] != "auto":
                self.hyper()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def resolved(self) -> dict:
        """Snapshot with every default and ``auto`` made explicit."""
        v = copy.deepcopy(self.values)
        v["sampler"]["guidance_w"] = self.sampler_cfg().guidance_w
        if v["precond"]["mode"] != "explicit":
            h = self.hyper()
            v["precond"].update(mode="explicit", sigma0_sq=h.sigma0_sq, sigmaT_sq=h.sigmaT_sq, sigma0T=h.sigma0T)
        return v


def load(path, seed: int | None = None, out: str | None = None, check_hyper: bool = True) -> RunConfig:
    """Read, merge and validate a config file; ``path=None`` gives the defaults."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    values = merge(raw)
    if seed is not None:
        values["seed"] = seed
    if out is not None:
        values["out"] = out
    return RunConfig(values).validate(check_hyper=check_hyper)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        s = f"{float(v):.17g}"
        return s if any(ch in s for ch in ".eEn") else s + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {v!r}")


def dumps(values: dict) -> str:
    """TOML text with floats at 17 significant digits (exact round-trip)."""
    lines = [f"{k} = {_fmt(v)}" for k, v in values.items() if not isinstance(v, dict)]
    for k, v in values.items():
        if isinstance(v, dict):
            lines += ["", f"[{k}]"] + [f"{kk} = {_fmt(vv)}" for kk, vv in v.items()]
    return "\n".join(lines) + "\n"
