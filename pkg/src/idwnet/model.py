"""Prototype attention network, FC-ReLU baseline, and the model file format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .attention import (AttentionOut, ScoreKind, attend, attend_backward,
                        kind_params, make_kind)
from .core import Rng, ShapeError, as_matrix, check_finite, gaussian_matrix, matmul

MAGIC = b"IDWNET-MODEL\n"
SCHEMA_VERSION = 1
KEY_INIT_STD_SCALE = 0.1


@dataclass
class PrototypeNet:
    keys: np.ndarray  # P x d
    values: np.ndarray  # P x C
    kind: ScoreKind
    meta: dict = field(default_factory=dict)
    version: int = 0

    arch = "prototype"
    param_names = ("keys", "values")

    def __post_init__(self):
        self.keys = as_matrix(self.keys, "keys")
        self.values = as_matrix(self.values, "values")
        if self.keys.shape[0] < 1:
            raise ShapeError("need at least one prototype")
        if self.keys.shape[0] != self.values.shape[0]:
            raise ShapeError(f"{self.keys.shape[0]} keys vs {self.values.shape[0]} values")

    @property
    def n_prototypes(self) -> int:
        return self.keys.shape[0]

    @property
    def n_features(self) -> int:
        return self.keys.shape[1]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"keys": self.keys, "values": self.values}

    def n_params(self) -> int:
        return self.keys.size + self.values.size


@dataclass
class FcReluNet:
    w1: np.ndarray  # d x H
    b1: np.ndarray  # 1 x H
    w2: np.ndarray  # H x C
    b2: np.ndarray  # 1 x C
    meta: dict = field(default_factory=dict)
    version: int = 0

    arch = "fcrelu"
    param_names = ("w1", "b1", "w2", "b2")

    def __post_init__(self):
        self.w1 = as_matrix(self.w1, "w1")
        self.b1 = as_matrix(self.b1, "b1")
        self.w2 = as_matrix(self.w2, "w2")
        self.b2 = as_matrix(self.b2, "b2")
        d, h = self.w1.shape
        c = self.w2.shape[1]
        if self.b1.shape != (1, h) or self.w2.shape[0] != h or self.b2.shape != (1, c):
            raise ShapeError("inconsistent FcReluNet shapes "
                             f"{self.w1.shape} {self.b1.shape} {self.w2.shape} {self.b2.shape}")

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def n_params(self) -> int:
        return sum(a.size for a in self.params().values())


Net = Union[PrototypeNet, FcReluNet]


def init_prototype_net(train_x, n_classes: int, n_prototypes: int, kind: ScoreKind,
                       rng: Rng) -> PrototypeNet:
    """Keys ~ Normal(column mean, 0.1 * column std) of the training data; values zero."""
    x = as_matrix(train_x, "train_x")
    if x.shape[0] < 2:
        raise ValueError("need at least two training rows to estimate the key spread")
    mean = x.mean(axis=0, keepdims=True)
    std = x.std(axis=0, keepdims=True)
    const = np.all(x == x[0], axis=0)
    mean[0, const] = x[0, const]  # exact, not a rounded average
    std[0, const] = 0.0
    keys = gaussian_matrix(n_prototypes, x.shape[1], mean, KEY_INIT_STD_SCALE * std, rng)
    return PrototypeNet(keys, np.zeros((n_prototypes, n_classes)), kind)


def init_fc_relu(n_features: int, n_hidden: int, n_classes: int, rng: Rng) -> FcReluNet:
    w1 = rng.normal((n_features, n_hidden)) / np.sqrt(n_features)
    w2 = rng.normal((n_hidden, n_classes)) / np.sqrt(n_hidden)
    return FcReluNet(w1, np.zeros((1, n_hidden)), w2, np.zeros((1, n_classes)))


@dataclass
class Cache:
    net_id: int
    version: int
    x: np.ndarray
    attn: AttentionOut | None = None
    hidden_pre: np.ndarray | None = None
    hidden: np.ndarray | None = None


class StaleCacheError(RuntimeError):
    pass


def forward(net: Net, x) -> tuple[np.ndarray, Cache]:
    """Logits (B x C) and the cache needed by :func:`backward`."""
    x = as_matrix(x, "x")
    if x.shape[1] != net.n_features:
        raise ShapeError(f"input has {x.shape[1]} features, model expects {net.n_features}")
    cache = Cache(id(net), net.version, x)
    if isinstance(net, PrototypeNet):
        cache.attn = attend(net.kind, x, net.keys, net.values)
        logits = cache.attn.output
    else:
        cache.hidden_pre = matmul(x, net.w1) + net.b1
        cache.hidden = np.maximum(cache.hidden_pre, 0.0)
        logits = matmul(cache.hidden, net.w2) + net.b2
    return check_finite(logits, "logits"), cache


def predict(net: Net, x, batch: int = 1000) -> np.ndarray:
    x = as_matrix(x, "x")
    out = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], batch):
        logits, _ = forward(net, x[s:s + batch])
        out[s:s + batch] = np.argmax(logits, axis=1)
    return out


def accuracy(net: Net, x, y) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        return float("nan")
    return int(np.sum(predict(net, x) == y)) / len(y)


def backward(net: Net, cache: Cache, grad_logits) -> dict[str, np.ndarray]:
    """Parameter gradients, keyed like ``net.params()``."""
    if cache.net_id != id(net) or cache.version != net.version:
        raise StaleCacheError("cache does not belong to the current parameters of this net")
    g = as_matrix(grad_logits, "grad_logits")
    if isinstance(net, PrototypeNet):
        _, dK, dV = attend_backward(cache.attn, g)
        return {"keys": dK, "values": dV}
    dh = matmul(g, net.w2.T) * (cache.hidden_pre > 0)
    return {
        "w1": matmul(cache.x.T, dh),
        "b1": dh.sum(axis=0, keepdims=True),
        "w2": matmul(cache.hidden.T, g),
        "b2": g.sum(axis=0, keepdims=True),
    }


# ---------------------------------------------------------------------------
# model file
#
#   IDWNET-MODEL\n
#   {json header, sorted keys, single line}\n
#   raw little-endian float64 payload, tensors in header["tensors"] order
# ---------------------------------------------------------------------------

class ModelFileError(Exception):
    pass


class CorruptModelError(ModelFileError):
    pass


class SchemaVersionError(ModelFileError):
    pass


class ModelShapeError(ModelFileError):
    pass


def _header(net: Net) -> dict:
    h = {
        "schema_version": SCHEMA_VERSION,
        "arch": net.arch,
        "tensors": [[name, list(arr.shape)] for name, arr in net.params().items()],
        "meta": net.meta,
    }
    if isinstance(net, PrototypeNet):
        h["hyper"] = kind_params(net.kind)
    return h


def dumps(net: Net) -> bytes:
    header = json.dumps(_header(net), sort_keys=True, separators=(",", ":"))
    if "\n" in header:
        raise ValueError("header must be a single line")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                       for a in net.params().values())
    return MAGIC + header.encode("utf-8") + b"\n" + payload


def loads(blob: bytes) -> Net:
    if not blob.startswith(MAGIC):
        raise CorruptModelError("missing model magic line")
    end = blob.find(b"\n", len(MAGIC))
    if end < 0:
        raise CorruptModelError("truncated header")
    try:
        h = json.loads(blob[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptModelError(f"unreadable header: {e}") from None
    version = h.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"model schema version {version}, this build reads {SCHEMA_VERSION}")
    try:
        arch = h["arch"]
        tensors = [(str(n), tuple(int(s) for s in shape)) for n, shape in h["tensors"]]
        meta = h.get("meta", {})
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModelError(f"malformed header: {e}") from None
    payload = memoryview(blob)[end + 1:]
    need = 8 * sum(int(np.prod(s)) for _, s in tensors)
    if len(payload) != need:
        raise CorruptModelError(f"payload is {len(payload)} bytes, header promises {need}")
    arrays = {}
    off = 0
    for name, shape in tensors:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(payload[off:off + 8 * n], dtype="<f8").astype(np.float64).reshape(shape)
        off += 8 * n
    try:
        if arch == PrototypeNet.arch:
            hyper = dict(h["hyper"])
            kind = make_kind(hyper.pop("kind"), **hyper)
            net = PrototypeNet(arrays["keys"], arrays["values"], kind, meta=meta)
        elif arch == FcReluNet.arch:
            net = FcReluNet(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"], meta=meta)
        else:
            raise CorruptModelError(f"unknown architecture {arch!r}")
    except (ShapeError, KeyError) as e:
        raise ModelShapeError(f"inconsistent tensors: {e}") from None
    return net


def save(net: Net, path) -> None:
    Path(path).write_bytes(dumps(net))


def load(path) -> Net:
    return loads(Path(path).read_bytes())
