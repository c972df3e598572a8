"""Central finite-difference checks of the analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import GaussDist, InvDist, NegDist, NegLogDist, ScaledDot, ScoreKind
from .core import Rng
from .model import FcReluNet, Net, PrototypeNet, backward, forward
from .optim import cross_entropy

# denominator floor so near-zero entries are judged on absolute error
REL_FLOOR = 1e-6
ALL_KINDS = ("dot", "negdist", "gauss", "inv", "neglog", "fcrelu")


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)


def loss_fn(net: Net, x, y) -> float:
    logits, _ = forward(net, x)
    return cross_entropy(logits, y)[0]


def numeric_grads(net: Net, x, y, h: float = 1e-5) -> dict[str, np.ndarray]:
    out = {}
    for name, arr in net.params().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss_fn(net, x, y)
            arr[idx] = old - h
            down = loss_fn(net, x, y)
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def analytic_grads(net: Net, x, y) -> dict[str, np.ndarray]:
    logits, cache = forward(net, x)
    _, g = cross_entropy(logits, y)
    return backward(net, cache, g)


def random_kind(name: str, rng: Rng) -> ScoreKind:
    u = rng.uniform(2)
    if name == "dot":
        return ScaledDot()
    if name == "negdist":
        return NegDist()
    if name == "gauss":
        return GaussDist(sigma=0.5 + 1.5 * float(u[0]))
    p = [1.0, 2.0, 3.0][int(3 * u[0])]
    eps = float(10 ** (-2 + 2 * u[1]))
    return InvDist(p, eps) if name == "inv" else NegLogDist(p, eps)


def random_instance(name: str, rng: Rng) -> tuple[Net, np.ndarray, np.ndarray]:
    """A small random network plus batch (B<=3, P<=4, d<=5, C<=3)."""
    B, P, d = (int(v) for v in 1 + np.floor(rng.uniform(3) * [3, 4, 5]))
    C = 2 + int(2 * rng.uniform())
    x = rng.normal((B, d))
    y = np.floor(rng.uniform(B) * C).astype(np.int64)
    if name == "fcrelu":
        net = FcReluNet(rng.normal((d, P)), 0.5 * rng.normal((1, P)),
                        rng.normal((P, C)), rng.normal((1, C)))
        # keep pre-activations away from the ReLU kink
        pre = x @ net.w1 + net.b1
        net.b1 += np.where(np.abs(pre) < 1e-3, 1e-2, 0.0).max(axis=0, keepdims=True)
    else:
        net = PrototypeNet(rng.normal((P, d)), rng.normal((P, C)), random_kind(name, rng))
    return net, x, y


@dataclass
class CheckResult:
    kind: str
    max_rel_error: float
    worst_param: str
    passed: bool


def check(name: str, trials: int, tol: float, seed: int = 0, h: float = 1e-5,
          grads_fn=analytic_grads) -> CheckResult:
    """Compare ``grads_fn`` against central differences on ``trials`` random instances."""
    rng = Rng(seed).stream(f"gradcheck-{name}")
    worst, worst_param = 0.0, ""
    for _ in range(trials):
        net, x, y = random_instance(name, rng)
        num = numeric_grads(net, x, y, h)
        ana = grads_fn(net, x, y)
        for p, g in num.items():
            err = float(rel_error(ana[p], g).max())
            if err > worst or not worst_param:
                worst, worst_param = err, p
    return CheckResult(name, worst, worst_param, worst < tol)
