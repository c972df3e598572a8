"""Low-impact special-case handling by appending a single prototype.

For an IDW network and an input ``q`` that should be classified as ``c``,
a new key ``q`` with value ``eta * e_c`` is appended. At ``q`` itself the
new prototype carries unnormalized weight ``1/eps``, so the smallest
``eta`` that ties class ``c`` with the best competitor has a closed form.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import NegLogDist, dist_pow
from .core import as_matrix
from .model import PrototypeNet, forward


class UnsupportedKindError(TypeError):
    pass


@dataclass(frozen=True)
class AugmentRequest:
    q: tuple[float, ...]
    c: int
    margin: float | None = None  # None: 1e-6 * (1 + |eta|)

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("target class must be >= 0")
        if self.margin is not None and not self.margin > 0:
            raise ValueError("margin must be > 0")


@dataclass(frozen=True)
class AugmentResult:
    c: int
    eta: float | None  # None when the model already predicted c
    value_scale: float  # eta + margin actually written to the new value row
    pre_class: int
    post_class: int
    noop: bool

    def to_dict(self) -> dict:
        return asdict(self)


def unnormalized_weights(dists, p: float, eps: float) -> np.ndarray:
    d = np.asarray(dists, dtype=np.float64)
    return 1.0 / (eps + np.power(d, p))


def sigma_weights(dists, p: float, eps: float) -> np.ndarray:
    """IDW weights from plain (not squared) distances."""
    d = np.asarray(dists, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be >= 0")
    u = unnormalized_weights(d, p, eps)
    return u / u.sum()


def compute_eta(dists, values, c: int, p: float, eps: float) -> float | None:
    """Smallest value mass on class ``c`` that makes it tie for the top logit at ``q``.

    ``dists`` are the Euclidean distances from ``q`` to the existing keys.
    Returns None if the unmodified model already predicts ``c``.
    """
    V = as_matrix(values, "values")
    u = unnormalized_weights(dists, p, eps)
    if u.shape != (V.shape[0],):
        raise ValueError(f"{u.shape[0]} distances for {V.shape[0]} prototypes")
    if not 0 <= c < V.shape[1]:
        raise ValueError(f"class {c} outside [0, {V.shape[1]})")
    S = u.sum()
    if int(np.argmax((u / S) @ V)) == c:
        return None
    # weights of the old prototypes once a key at distance 0 (weight 1/eps) joins
    w = u / (S + 1.0 / eps)
    logits = w @ V
    others = np.delete(logits, c)
    return float((1.0 + eps * S) * (others.max() - logits[c]))


def default_margin(eta: float) -> float:
    return 1e-6 * (1.0 + abs(eta))


def _with_prototype(net: PrototypeNet, key, value_row) -> PrototypeNet:
    return PrototypeNet(np.vstack([net.keys, np.asarray(key, dtype=np.float64)[None, :]]),
                        np.vstack([net.values, value_row[None, :]]),
                        net.kind, meta=dict(net.meta))


def inject(net: PrototypeNet, req: AugmentRequest) -> tuple[PrototypeNet, AugmentResult]:
    """Return a new network that classifies ``req.q`` as ``req.c``.

    The input network is left untouched. A no-op request returns the same
    object.
    """
    if not isinstance(net, PrototypeNet) or not isinstance(net.kind, NegLogDist):
        kind = getattr(net, "kind", net.arch)
        raise UnsupportedKindError(f"closed-form injection needs an IDW (neglog) network, got {kind!r}")
    q = np.asarray(req.q, dtype=np.float64).reshape(-1)
    if q.shape[0] != net.n_features:
        raise ValueError(f"special case has {q.shape[0]} features, model expects {net.n_features}")
    if req.c >= net.n_classes:
        raise ValueError(f"class {req.c} outside [0, {net.n_classes})")
    p, eps = net.kind.p, net.kind.eps
    pre_logits, _ = forward(net, q[None, :])
    pre = int(np.argmax(pre_logits[0]))
    dists = np.sqrt(np.sum((net.keys - q) ** 2, axis=1))
    eta = compute_eta(dists, net.values, req.c, p, eps)
    if eta is None:
        return net, AugmentResult(req.c, None, 0.0, pre, pre, True)
    margin = default_margin(eta) if req.margin is None else req.margin
    row = np.zeros(net.n_classes)
    row[req.c] = eta + margin
    new = _with_prototype(net, q, row)
    post_logits, _ = forward(new, q[None, :])
    post = int(np.argmax(post_logits[0]))
    if post != req.c:
        raise ArithmeticError(f"injection failed to flip the prediction to {req.c} (got {post})")
    result = AugmentResult(req.c, eta, eta + margin, pre, post, False)
    new.meta.setdefault("augmentations", [])
    new.meta["augmentations"] = list(new.meta["augmentations"]) + [
        {"q": [float(v) for v in q], **result.to_dict()}]
    return new, result


def injected_weight(net: PrototypeNet, q, x) -> np.ndarray:
    """Attention weight a prototype at ``q`` would get at each row of ``x``.

    ``w / (S(x) + w)`` with ``w = 1 / (eps + |x - q|**p)`` and ``S`` the
    total unnormalized weight of the existing keys.
    """
    x = as_matrix(x, "x")
    q = np.asarray(q, dtype=np.float64).reshape(1, -1)
    p, eps = net.kind.p, net.kind.eps
    w_new = 1.0 / (eps + dist_pow(np.sum((x - q) ** 2, axis=1), p))
    S = (1.0 / (eps + dist_pow(np.sum((x[:, None, :] - net.keys[None]) ** 2, axis=2), p))).sum(axis=1)
    return w_new / (S + w_new)


def mixture_logits(net: PrototypeNet, q, value_row, x) -> np.ndarray:
    """Logits of the augmented model written as an explicit two-part mixture."""
    x = as_matrix(x, "x")
    base, _ = forward(net, x)
    a = injected_weight(net, q, x)[:, None]
    return (1.0 - a) * base + a * np.asarray(value_row, dtype=np.float64)[None, :]


def honored(net: PrototypeNet, requests) -> list[bool]:
    if not requests:
        return []
    q = np.array([r.q for r in requests], dtype=np.float64)
    logits, _ = forward(net, q)
    return [int(np.argmax(row)) == r.c for row, r in zip(logits, requests)]


def inject_many(net: PrototypeNet, requests, max_rounds: int = 10, on_step=None):
    """Inject a batch of special cases in order until all of them hold at once.

    A later prototype nudges the logits at earlier cases by a small amount,
    which can undo a tie-plus-margin win. Cases broken this way get another
    pass (a further prototype at the same input) until every case is
    honored. Returns the new network and ``(case index, result)`` pairs in
    application order; ``on_step(index, result, net)`` sees each one as it
    lands.
    """
    requests = list(requests)
    results: list[tuple[int, AugmentResult]] = []
    todo = list(range(len(requests)))
    for _ in range(max_rounds):
        for i in todo:
            net, res = inject(net, requests[i])
            results.append((i, res))
            if on_step is not None:
                on_step(i, res, net)
        todo = [i for i, ok in enumerate(honored(net, requests)) if not ok]
        if not todo:
            return net, results
    raise ArithmeticError(f"special cases still conflict after {max_rounds} rounds")
