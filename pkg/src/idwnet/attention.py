"""Score functions, softmax weighting and IDW attention with analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import ShapeError, NonFiniteError, as_matrix, matmul, pairwise_sq_dist


@dataclass(frozen=True)
class ScaledDot:
    """q.k / sqrt(d)."""
    name = "dot"


@dataclass(frozen=True)
class NegDist:
    """Negative squared Euclidean distance."""
    name = "negdist"


@dataclass(frozen=True)
class GaussDist:
    sigma: float = 1.0
    name = "gauss"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class InvDist:
    """1 / (eps + D**p), used as a softmax score."""
    p: float = 2.0
    eps: float = 1e-3
    name = "inv"

    def __post_init__(self):
        _check_p_eps(self.p, self.eps)


@dataclass(frozen=True)
class NegLogDist:
    """-log(eps + D**p). Inside a softmax this is exactly IDW weighting."""
    p: float = 2.0
    eps: float = 1e-3
    name = "neglog"

    def __post_init__(self):
        _check_p_eps(self.p, self.eps)


ScoreKind = Union[ScaledDot, NegDist, GaussDist, InvDist, NegLogDist]
DISTANCE_KINDS = (NegDist, GaussDist, InvDist, NegLogDist)
KIND_NAMES = {"dot": ScaledDot, "negdist": NegDist, "gauss": GaussDist,
              "inv": InvDist, "neglog": NegLogDist}


def _check_p_eps(p, eps):
    if not p > 0:
        raise ValueError(f"p must be > 0, got {p}")
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")


def make_kind(name: str, p: float = 2.0, eps: float = 1e-3, sigma: float = 1.0) -> ScoreKind:
    """Build a score kind from its short name (``dot``, ``negdist``, ``gauss``, ``inv``, ``neglog``)."""
    if name == "idw":
        name = "neglog"
    if name not in KIND_NAMES:
        raise ValueError(f"unknown score kind {name!r}; expected one of {sorted(KIND_NAMES)}")
    cls = KIND_NAMES[name]
    if cls is GaussDist:
        return GaussDist(sigma)
    if cls in (InvDist, NegLogDist):
        return cls(p, eps)
    return cls()


def kind_params(kind: ScoreKind) -> dict:
    out = {"kind": kind.name}
    if isinstance(kind, GaussDist):
        out["sigma"] = kind.sigma
    if isinstance(kind, (InvDist, NegLogDist)):
        out["p"] = kind.p
        out["eps"] = kind.eps
    return out


def is_distance_kind(kind: ScoreKind) -> bool:
    return isinstance(kind, DISTANCE_KINDS)


def dist_pow(sq_dist: np.ndarray, p: float) -> np.ndarray:
    """D**p from squared distances; exactly 0 where the distance is 0."""
    if p == 2.0:
        return sq_dist.copy()
    return np.power(sq_dist, 0.5 * p)


def score(kind: ScoreKind, x, d: int | None = None) -> np.ndarray:
    """Apply a score function.

    For distance kinds ``x`` holds squared distances; for :class:`ScaledDot`
    it holds raw inner products and ``d`` (the feature dimension) is required.
    """
    x = as_matrix(x, "scores input")
    if isinstance(kind, ScaledDot):
        if d is None:
            raise ValueError("ScaledDot needs the feature dimension d")
        s = x / np.sqrt(d)
    else:
        if np.any(x < 0):
            raise ValueError("negative squared distance")
        if isinstance(kind, NegDist):
            s = -x
        elif isinstance(kind, GaussDist):
            s = np.exp(-x / kind.sigma ** 2)
        elif isinstance(kind, InvDist):
            s = 1.0 / (kind.eps + dist_pow(x, kind.p))
        elif isinstance(kind, NegLogDist):
            s = -np.log(kind.eps + dist_pow(x, kind.p))
        else:
            raise TypeError(f"unknown score kind {kind!r}")
    if not np.all(np.isfinite(s)):
        raise NonFiniteError(f"non-finite score for {kind!r}")
    return s


def softmax_rows(scores) -> np.ndarray:
    s = as_matrix(scores, "scores")
    z = np.exp(s - s.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def idw_weights(sq_dist, p: float, eps: float) -> np.ndarray:
    """Shepard weights (eps + D**p)**-1, normalized per row."""
    sq_dist = as_matrix(sq_dist, "sq_dist")
    inv = 1.0 / (eps + dist_pow(sq_dist, p))
    return inv / inv.sum(axis=1, keepdims=True)


def voronoi_limit_check(sq_dist, p_large: float = 64.0, eps: float = 1e-9) -> np.ndarray:
    """IDW weights at a large power; near one-hot on the nearest key."""
    if p_large < 64:
        raise ValueError("p_large should be >= 64 for the Voronoi limit")
    return idw_weights(sq_dist, p_large, eps)


@dataclass
class AttentionOut:
    weights: np.ndarray  # B x P, rows sum to 1
    output: np.ndarray  # B x C
    raw: np.ndarray  # squared distances, or inner products for ScaledDot
    q: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    kind: ScoreKind


def attention_weights(kind: ScoreKind, q, keys) -> tuple[np.ndarray, np.ndarray]:
    """Return (weights, raw) where raw is the squared-distance or dot matrix."""
    q = as_matrix(q, "q")
    keys = as_matrix(keys, "keys")
    if q.shape[1] != keys.shape[1]:
        raise ShapeError(f"query dim {q.shape[1]} != key dim {keys.shape[1]}")
    if isinstance(kind, ScaledDot):
        raw = matmul(q, keys.T)
        w = softmax_rows(score(kind, raw, d=q.shape[1]))
    else:
        raw = pairwise_sq_dist(q, keys)
        if isinstance(kind, NegLogDist):
            w = idw_weights(raw, kind.p, kind.eps)
        else:
            w = softmax_rows(score(kind, raw))
    return w, raw


def attend(kind: ScoreKind, q, keys, values) -> AttentionOut:
    q = as_matrix(q, "q")
    keys = as_matrix(keys, "keys")
    values = as_matrix(values, "values")
    if keys.shape[0] != values.shape[0]:
        raise ShapeError(f"{keys.shape[0]} keys but {values.shape[0]} values")
    w, raw = attention_weights(kind, q, keys)
    return AttentionOut(w, matmul(w, values), raw, q, keys, values, kind)


def _score_slope(kind: ScoreKind, sq: np.ndarray) -> np.ndarray:
    """d score / d(squared distance), elementwise.

    At zero distance the slope is multiplied by (q - k) = 0 downstream, so
    any finite value works; 0 is used where u**(p/2 - 1) would blow up.
    """
    if isinstance(kind, NegDist):
        return -np.ones_like(sq)
    if isinstance(kind, GaussDist):
        s2 = kind.sigma ** 2
        return -np.exp(-sq / s2) / s2
    half = 0.5 * kind.p
    if half == 1.0:
        dpow_du = np.ones_like(sq)
    else:
        pos = sq > 0
        dpow_du = np.zeros_like(sq)
        dpow_du[pos] = half * np.power(sq[pos], half - 1.0)
    denom = kind.eps + dist_pow(sq, kind.p)
    if isinstance(kind, InvDist):
        return -dpow_du / denom ** 2
    if isinstance(kind, NegLogDist):
        return -dpow_du / denom
    raise TypeError(f"unknown distance kind {kind!r}")


def attend_backward(out: AttentionOut, grad_output) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients ``(dq, dkeys, dvalues)`` of a scalar loss given d loss / d output."""
    g = as_matrix(grad_output, "grad_output")
    if g.shape != out.output.shape:
        raise ShapeError(f"grad_output {g.shape} != output {out.output.shape}")
    w, q, K, V = out.weights, out.q, out.keys, out.values
    dV = matmul(w.T, g)
    dw = matmul(g, V.T)
    ds = w * (dw - np.sum(w * dw, axis=1, keepdims=True))
    if isinstance(out.kind, ScaledDot):
        scale = 1.0 / np.sqrt(q.shape[1])
        dq = matmul(ds, K) * scale
        dK = matmul(ds.T, q) * scale
    else:
        a = ds * _score_slope(out.kind, out.raw)
        dq = 2.0 * (a.sum(axis=1, keepdims=True) * q - matmul(a, K))
        dK = -2.0 * (matmul(a.T, q) - a.sum(axis=0)[:, None] * K)
    return dq, dK, dV
