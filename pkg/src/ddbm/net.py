"""Small fully-connected pred-x network with hand-written backprop.

``F(c_in x_t, c_in x_T, c_noise)`` is an MLP over the concatenation of the
two scaled states and a sinusoidal embedding of ``c_noise``; the denoiser is
``D = c_skip x_t + c_out F``. Parameters live in one flat float64 vector so
checkpoints, Adam state and gradient checks all share a single layout.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

ACTIVATIONS = ("silu", "tanh", "identity")


@dataclass(frozen=True)
class MlpSpec:
    d: int = 2
    hidden: tuple[int, ...] = (128, 128, 128)
    embed_dim: int = 32
    activation: str = "silu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if len(self.hidden) < 1:
            raise ValueError("MlpSpec needs at least one hidden layer")
        if any(h < 1 for h in self.hidden):
            raise ValueError("layer widths must be at least 1")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ValueError("embed_dim must be an even integer >= 2")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def input_dim(self) -> int:
        return 2 * self.d + self.embed_dim

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.d]

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum((a + 1) * b for a, b in zip(w[:-1], w[1:]))

    def layer_views(self, flat):
        """``[(W, b), ...]`` views into ``flat``; W has shape ``(w_in, w_out)``."""
        out, k = [], 0
        w = self.widths
        for a, b in zip(w[:-1], w[1:]):
            W = flat[k:k + a * b].reshape(a, b)
            k += a * b
            out.append((W, flat[k:k + b]))
            k += b
        return out


def init(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Fan-in scaled uniform weights (unit-variance pre-activations), zero biases."""
    flat = np.zeros(spec.n_params)
    for W, _ in spec.layer_views(flat):
        bound = np.sqrt(3.0 / W.shape[0])
        W[...] = rng.uniform(-bound, bound, W.shape)
    return flat


def embed(c_noise, embed_dim: int):
    """Sinusoidal features ``sin/cos(2^k pi c_noise)`` for k < embed_dim/2."""
    c = np.atleast_1d(np.asarray(c_noise, dtype=float))[:, None]
    freqs = np.pi * 2.0 ** np.arange(embed_dim // 2)
    return np.concatenate([np.sin(c * freqs), np.cos(c * freqs)], axis=1)


def _act(name, z):
    if name == "silu":
        return z / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z):
    if name == "silu":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 + z * (1.0 - s))
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


def _inputs(spec, x_scaled, xT_scaled, c_noise):
    x_scaled = np.atleast_2d(np.asarray(x_scaled, dtype=float))
    xT_scaled = np.atleast_2d(np.asarray(xT_scaled, dtype=float))
    if x_scaled.shape[1] != spec.d or xT_scaled.shape != x_scaled.shape:
        raise ValueError(f"expected inputs of shape (n, {spec.d}), got {x_scaled.shape} and {xT_scaled.shape}")
    e = embed(np.broadcast_to(c_noise, (x_scaled.shape[0],)), spec.embed_dim)
    return np.concatenate([x_scaled, xT_scaled, e], axis=1)


def _forward(spec, params, h):
    layers = spec.layer_views(params)
    cache = []
    for j, (W, b) in enumerate(layers):
        z = h @ W + b
        cache.append((h, z))
        h = z if j == len(layers) - 1 else _act(spec.activation, z)
    return h, cache


def forward(spec: MlpSpec, params, x_scaled, xT_scaled, c_noise):
    out, _ = _forward(spec, params, _inputs(spec, x_scaled, xT_scaled, c_noise))
    return out


def denoise(spec: MlpSpec, params, x, xT, sc):
    """``D = c_skip x + c_out F(c_in x, c_in x_T, c_noise)`` for scalings ``sc``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xT = np.atleast_2d(np.asarray(xT, dtype=float))
    c_in, c_out, c_skip = (_as_col(v, x) for v in (sc.c_in, sc.c_out, sc.c_skip))
    F = forward(spec, params, c_in * x, c_in * xT, sc.c_noise)
    return c_skip * x + c_out * F


def _as_col(v, x):
    v = np.asarray(v, dtype=float)
    return v[:, None] if v.ndim == 1 else np.broadcast_to(v, (x.shape[0], 1))


@dataclass
class Batch:
    x_t: np.ndarray
    x0: np.ndarray
    xT: np.ndarray
    t: np.ndarray
    c_in: np.ndarray
    c_out: np.ndarray
    c_skip: np.ndarray
    c_noise: np.ndarray
    loss_w: np.ndarray


def loss_and_grad(spec: MlpSpec, params, batch: Batch):
    """Weighted pred-x loss ``mean_i w_i ||D_i - x0_i||^2`` and its exact gradient."""
    x = batch.x_t
    n = x.shape[0]
    c_in, c_out, c_skip = (_as_col(v, x) for v in (batch.c_in, batch.c_out, batch.c_skip))
    w = _as_col(batch.loss_w, x)
    h0 = _inputs(spec, c_in * x, c_in * batch.xT, batch.c_noise)
    F, cache = _forward(spec, params, h0)
    resid = c_skip * x + c_out * F - batch.x0
    loss = float(np.sum(w * resid**2) / n)

    grad = np.zeros_like(params)
    gviews = spec.layer_views(grad)
    layers = spec.layer_views(params)
    delta = 2.0 * w * c_out * resid / n
    for j in range(len(layers) - 1, -1, -1):
        h_in, z = cache[j]
        if j != len(layers) - 1:
            delta = delta * _act_grad(spec.activation, z)
        gW, gb = gviews[j]
        gW[...] = h_in.T @ delta
        gb[...] = delta.sum(axis=0)
        if j:
            delta = delta @ layers[j][0].T
    return loss, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grad, state: AdamState, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update; returns new params and mutates ``state``."""
    b1, b2 = betas
    state.step += 1
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1**state.step)
    v_hat = state.v / (1 - b2**state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), state


# Checkpoint layout (all integers little-endian):
#   8 bytes  magic b"DDBMCKPT"
#   4 bytes  uint32 format version (1)
#   4 bytes  uint32 header length H
#   H bytes  UTF-8 JSON header {"spec": {...}, "seed": int, "iteration": int, "n_params": P}
#   8*P      float64 little-endian parameters in MlpSpec.layer_views order
MAGIC = b"DDBMCKPT"
VERSION = 1


def save_checkpoint(path, spec: MlpSpec, params, seed: int, iteration: int):
    header = json.dumps(
        {"spec": asdict(spec), "seed": int(seed), "iteration": int(iteration), "n_params": spec.n_params},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(np.asarray(params, dtype="<f8").tobytes())


@dataclass
class Checkpoint:
    spec: MlpSpec
    params: np.ndarray
    seed: int
    iteration: int
    extra: dict = field(default_factory=dict)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode())
    spec = MlpSpec(**header["spec"])
    params = np.frombuffer(blob[16 + hlen:], dtype="<f8").astype(float)
    if params.size != spec.n_params:
        raise ValueError(f"{path}: expected {spec.n_params} parameters, found {params.size}")
    return Checkpoint(spec, params, header["seed"], header["iteration"])
