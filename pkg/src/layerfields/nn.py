"""Parameter storage, positional encoding, MLPs, Adam, and checkpoints.

All trainable state lives in named ``ParamStore`` entries so the optimizer
and the checkpoint writer can treat fields uniformly.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError, NumericalError


class ParamStore:
    """Ordered mapping of unique names to trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name: {name}")
        t = Tensor.param(np.asarray(data, dtype=ad.dtype))
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def set(self, name: str, data: np.ndarray):
        t = self._params[name]
        data = np.asarray(data, dtype=ad.dtype)
        if data.shape != t.data.shape:
            raise ConfigError(
                f"shape mismatch for {name}: {data.shape} vs {t.data.shape}")
        t.data = data

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._params.items()}


@dataclass(frozen=True)
class Encoding:
    """Sinusoidal feature expansion: frequencies 2^k * pi, k = 0..L-1.

    Output layout, per input component, low frequency first:
    ``[x?] [sin(pi x), cos(pi x), sin(2 pi x), cos(2 pi x), ...]`` with all
    identity channels (when enabled) preceding all sinusoid channels.
    """

    L: int
    include_identity: bool = True

    def out_dim(self, in_dim: int) -> int:
        return in_dim * (2 * self.L + (1 if self.include_identity else 0))


def positional_encode(x, enc: Encoding):
    """Encode the trailing axis of ``x`` (Tensor or array)."""
    if enc.L < 0:
        raise ConfigError("encoding frequency count must be >= 0")
    t = x if isinstance(x, Tensor) else Tensor(x)
    d = t.shape[-1]
    lead = t.shape[:-1]
    parts = []
    if enc.include_identity:
        parts.append(t)
    if enc.L > 0:
        freqs = (2.0 ** np.arange(enc.L)) * np.pi
        scaled = ad.mul(ad.reshape(t, lead + (d, 1)), freqs)  # (..., d, L)
        s = ad.reshape(ad.sin(scaled), lead + (d, enc.L, 1))
        c = ad.reshape(ad.cos(scaled), lead + (d, enc.L, 1))
        inter = ad.concat([s, c], axis=-1)  # (..., d, L, 2)
        parts.append(ad.reshape(inter, lead + (d * 2 * enc.L,)))
    if not parts:
        raise ConfigError("encoding with L=0 and no identity has empty output")
    if len(parts) == 1:
        return parts[0]
    return ad.concat(parts, axis=-1)


def positional_encode_np(x: np.ndarray, enc: Encoding) -> np.ndarray:
    """Numeric twin of ``positional_encode`` (same layout, keeps dtype)."""
    parts = []
    if enc.include_identity:
        parts.append(x)
    if enc.L > 0:
        freqs = ((2.0 ** np.arange(enc.L)) * np.pi).astype(x.dtype)
        scaled = x[..., None] * freqs
        inter = np.stack([np.sin(scaled), np.cos(scaled)], axis=-1)
        parts.append(inter.reshape(x.shape[:-1] + (-1,)))
    if not parts:
        raise ConfigError("encoding with L=0 and no identity has empty output")
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=-1)


def _softplus_np(h: np.ndarray) -> np.ndarray:
    en = np.exp(-np.abs(h))
    return np.maximum(h, 0) + np.log1p(en)


_ACTIVATIONS = {
    "relu": ad.relu,
    "softplus": ad.softplus,
    "tanh": ad.tanh,
    "sine": ad.sin,
}

_ACTIVATIONS_NP = {
    "relu": lambda h: np.maximum(h, 0),
    "softplus": _softplus_np,
    "tanh": np.tanh,
    "sine": np.sin,
}


class MLP:
    """Plain fully connected network over a ParamStore.

    ``dims`` is the full layer-size list including input and output, e.g.
    ``[63, 128, 128, 128, 1]``.  The activation is applied between layers,
    never after the final one.
    """

    def __init__(self, store: ParamStore, prefix: str, dims: list[int],
                 activation: str, rng: np.random.Generator):
        if len(dims) < 2:
            raise ConfigError("MLP needs at least input and output dims")
        if activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation: {activation}")
        self.store = store
        self.prefix = prefix
        self.dims = list(dims)
        self.activation = activation
        self.weight_names: list[str] = []
        self.bias_names: list[str] = []
        for i, (nin, nout) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / np.sqrt(nin)
            w = rng.uniform(-bound, bound, size=(nin, nout))
            b = rng.uniform(-bound, bound, size=(nout,))
            wn, bn = f"{prefix}.w{i}", f"{prefix}.b{i}"
            store.add(wn, w)
            store.add(bn, b)
            self.weight_names.append(wn)
            self.bias_names.append(bn)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dims[0]:
            raise ConfigError(
                f"MLP {self.prefix}: input dim {x.shape[-1]} != {self.dims[0]}")
        act = _ACTIVATIONS[self.activation]
        h = x
        n = len(self.weight_names)
        for i in range(n):
            h = ad.add(ad.matmul(h, self.store[self.weight_names[i]]),
                       self.store[self.bias_names[i]])
            if i < n - 1:
                h = act(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Graph-free forward pass in the input's dtype.

        Single-precision inputs run the whole network in float32, which
        roughly halves the cost of large inference-only sweeps.
        """
        act = _ACTIVATIONS_NP[self.activation]
        h = x
        n = len(self.weight_names)
        for i in range(n):
            w = self.store[self.weight_names[i]].data
            b = self.store[self.bias_names[i]].data
            h = h @ w.astype(x.dtype) + b.astype(x.dtype)
            if i < n - 1:
                h = act(h)
        return h

    def hidden_weight_names(self) -> list[str]:
        """All weight matrices except the final layer's."""
        return self.weight_names[:-1]


class Adam:
    """Adam with bias correction over one ParamStore."""

    def __init__(self, store: ParamStore, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v.data) for k, v in store.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in store.items()}

    def step(self, lr: float):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, p in self.store.items():
            g = p.grad
            if g is None:
                continue
            g = np.asarray(g)
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {name}")
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"step": self.step_count, "m": self.m, "v": self.v,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    def load_state(self, step: int, m: dict, v: dict):
        self.step_count = step
        for k in self.m:
            self.m[k] = np.asarray(m[k], dtype=ad.dtype)
            self.v[k] = np.asarray(v[k], dtype=ad.dtype)


# -- checkpoint container -----------------------------------------------------
#
# Single binary blob: magic, version, header length, JSON header (embeds the
# architecture/config text and the array manifest with shapes, in order),
# then every array as little-endian float64 in manifest order.

_CKPT_MAGIC = b"LFCP"
_CKPT_VERSION = 1


def save_blob(path, header: dict, arrays: dict[str, np.ndarray]):
    manifest = [{"name": k, "shape": list(np.asarray(v).shape)}
                for k, v in arrays.items()]
    full = dict(header)
    full["__manifest__"] = manifest
    hjson = json.dumps(full).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", _CKPT_VERSION))
        f.write(struct.pack("<Q", len(hjson)))
        f.write(hjson)
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_blob(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        buf = f.read()
    bio = io.BytesIO(buf)
    if bio.read(4) != _CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", bio.read(4))
    if version != _CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<Q", bio.read(8))
    header = json.loads(bio.read(hlen).decode("utf-8"))
    manifest = header.pop("__manifest__")
    arrays = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        raw = bio.read(n * 8)
        if len(raw) != n * 8:
            raise DataError(f"{path}: truncated checkpoint payload")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if bio.read(1):
        raise DataError(f"{path}: trailing bytes after checkpoint payload")
    return header, arrays
