"""Paired toy datasets and sample-based distribution metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .oracle import GaussianPairSpec

KINDS = ("gaussian_pair", "rotate2d", "moons_to_rings", "checker_to_spiral")


@dataclass(frozen=True)
class PairedDataset:
    x0s: np.ndarray
    xTs: np.ndarray
    name: str = ""
    seed: int | None = None

    def __post_init__(self):
        if self.x0s.shape != self.xTs.shape or self.x0s.ndim != 2:
            raise ValueError(f"paired arrays must share an (n, d) shape: {self.x0s.shape} vs {self.xTs.shape}")
        if not (np.all(np.isfinite(self.x0s)) and np.all(np.isfinite(self.xTs))):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.x0s.shape[0]

    @property
    def d(self) -> int:
        return self.x0s.shape[1]


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _moons(n, rng):
    k = rng.integers(0, 2, n)
    a = rng.uniform(0, np.pi, n)
    pts = np.stack([np.cos(a), np.sin(a)], axis=1)
    pts[k == 1] = np.stack([1 - np.cos(a[k == 1]), 0.5 - np.sin(a[k == 1])], axis=1)
    pts += 0.05 * rng.standard_normal((n, 2))
    return (pts - np.array([0.5, 0.25])) / 1.0


def _rings(n, rng):
    k = rng.integers(0, 2, n)
    r = np.where(k == 0, 0.5, 1.0)
    a = rng.uniform(0, 2 * np.pi, n)
    pts = r[:, None] * np.stack([np.cos(a), np.sin(a)], axis=1)
    return pts + 0.04 * rng.standard_normal((n, 2))


def _checker(n, rng):
    x1 = rng.uniform(-1, 1, n)
    x2 = rng.uniform(0, 0.5, n) + rng.integers(-2, 2, n) * 0.5
    x2 = x2 + 0.5 * (np.floor(2 * x1) % 2)
    x2 = (x2 + 1) % 2 - 1
    return np.stack([x1, x2], axis=1)


def _spiral(n, rng):
    s = np.sqrt(rng.uniform(0, 1, n)) * 3 * np.pi
    pts = np.stack([s * np.cos(s), s * np.sin(s)], axis=1) / (3 * np.pi)
    return pts + 0.03 * rng.standard_normal((n, 2))


def _quantile_pair(src, dst):
    """Couple two clouds by matching the rank orders of their polar angles."""
    a_src = np.argsort(np.arctan2(src[:, 1], src[:, 0]), kind="stable")
    a_dst = np.argsort(np.arctan2(dst[:, 1], dst[:, 0]), kind="stable")
    out = np.empty_like(dst)
    out[a_src] = dst[a_dst]
    return out


def gen_dataset(kind: str, n: int, seed: int, **params) -> PairedDataset:
    """Generate ``n`` aligned pairs ``(x_0, x_T)``.

    ``rotate2d`` takes ``theta`` and ``noise_std``; ``gaussian_pair`` takes
    a ``spec`` (:class:`GaussianPairSpec`). The two synthetic shape pairs
    are coupled index-wise after sorting both clouds by polar angle.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if kind == "gaussian_pair":
        spec = params.get("spec") or GaussianPairSpec()
        x0, xT = spec.sample_pairs(n, rng)
    elif kind == "rotate2d":
        theta = params.get("theta", np.pi / 2)
        noise = params.get("noise_std", 0.05)
        x0 = _moons(n, rng)
        xT = x0 @ _rotation(theta).T + noise * rng.standard_normal((n, 2))
    elif kind == "moons_to_rings":
        x0 = _moons(n, rng)
        xT = _quantile_pair(x0, _rings(n, rng))
    elif kind == "checker_to_spiral":
        x0 = _checker(n, rng)
        xT = _quantile_pair(x0, _spiral(n, rng))
    else:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    return PairedDataset(np.ascontiguousarray(x0), np.ascontiguousarray(xT), kind, seed)


def _mean_abs_diff_1d(a, b):
    """Exact ``mean |a_i - b_j|`` over all pairs via sorting, O((n+m) log(n+m))."""
    b = np.sort(b)
    cum = np.concatenate([[0.0], np.cumsum(b)])
    k = np.searchsorted(b, a, side="right")
    below = a * k - cum[k]
    above = (cum[-1] - cum[k]) - a * (len(b) - k)
    return float(np.sum(below + above) / (len(a) * len(b)))


def _mean_pair_dist(a, b, block=1024):
    total = 0.0
    for i in range(0, len(a), block):
        ai = a[i:i + block]
        d2 = (np.sum(ai**2, 1)[:, None] + np.sum(b**2, 1)[None, :] - 2 * ai @ b.T)
        total += np.sqrt(np.maximum(d2, 0.0)).sum()
    return total / (len(a) * len(b))


def energy_distance(A, B, max_n: int = 5000, rng: np.random.Generator | None = None) -> float:
    """Energy distance ``2 E|a-b| - E|a-a'| - E|b-b'|`` (V-statistic, all pairs).

    Inputs larger than ``max_n`` rows are subsampled without replacement,
    except in 1-D where the all-pairs sums are exact at any size.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    if len(A) == 0 or len(B) == 0:
        raise ValueError("energy distance needs non-empty samples")
    if A.shape[1] == 1:
        a, b = A[:, 0], B[:, 0]
        ab = _mean_abs_diff_1d(a, b)
        aa = _mean_abs_diff_1d(a, a)
        bb = _mean_abs_diff_1d(b, b)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        if len(A) > max_n:
            A = A[rng.choice(len(A), max_n, replace=False)]
        if len(B) > max_n:
            B = B[rng.choice(len(B), max_n, replace=False)]
        ab = _mean_pair_dist(A, B)
        aa = _mean_pair_dist(A, A)
        bb = _mean_pair_dist(B, B)
    return max(2 * ab - aa - bb, 0.0)


def paired_mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


def save_dataset_csv(ds: PairedDataset, path):
    d = ds.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x0_{i}" for i in range(d)] + [f"xT_{i}" for i in range(d)])
        for a, b in zip(ds.x0s, ds.xTs):
            w.writerow([f"{v:.17g}" for v in a] + [f"{v:.17g}" for v in b])


def load_dataset_csv(path, name: str = "") -> PairedDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) // 2
    if header != [f"x0_{i}" for i in range(d)] + [f"xT_{i}" for i in range(d)]:
        raise ValueError(f"unexpected dataset header {header}")
    arr = np.array(body, dtype=float).reshape(-1, 2 * d)
    return PairedDataset(arr[:, :d].copy(), arr[:, d:].copy(), name)
