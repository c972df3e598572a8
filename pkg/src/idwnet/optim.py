"""Cross-entropy, AMSGrad, cosine annealing and the mini-batch training loop."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import NonFiniteError, Rng, as_matrix
from .model import Net, accuracy, backward, forward


@dataclass
class TrainConfig:
    batch_size: int = 10
    lr_max: float = 0.01
    epochs: int = 25
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr_max >= 0:
            raise ValueError("lr_max must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be > 0")


# reference training recipes for the two datasets
MOONS_CONFIG = TrainConfig(batch_size=10, lr_max=0.01, epochs=25)
MNIST_CONFIG = TrainConfig(batch_size=4, lr_max=0.001, epochs=50)


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    z = as_matrix(logits, "logits")
    y = np.asarray(labels, dtype=np.int64)
    B, C = z.shape
    if y.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {y.shape}")
    if np.any((y < 0) | (y >= C)):
        raise ValueError(f"labels must lie in [0, {C})")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(B)
    loss = float(np.mean(lse - shifted[rows, y]))
    grad = np.exp(shifted - lse[:, None])
    grad[rows, y] -= 1.0
    return loss, grad / B


def cosine_lr(t: float, total: float, lr_max: float) -> float:
    if t < 0 or t > total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return 0.5 * lr_max * (1.0 + math.cos(math.pi * t / total))


@dataclass
class AmsgradState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    v_max: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AmsgradState":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def amsgrad_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                 state: AmsgradState, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 adam_eps: float = 1e-8) -> None:
    """One in-place AMSGrad update.

    The running max is taken over the bias-corrected second moment.
    """
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient {k} has shape {g.shape}, parameter {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {k} at step {state.step + 1}")
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for k, g in grads.items():
        m, v, vmax = state.m[k], state.v[k], state.v_max[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        np.maximum(vmax, v / bc2, out=vmax)
        params[k] -= lr * (m / bc1) / (np.sqrt(vmax) + adam_eps)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    train_acc: float
    test_acc: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "lr", "loss", "train_acc", "test_acc"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.lr), repr(r.loss), repr(r.train_acc), repr(r.test_acc)])
        return buf.getvalue()


class TrainingError(NonFiniteError):
    pass


def train(net: Net, train_set, test_set, cfg: TrainConfig, on_epoch=None) -> tuple[Net, TrainLog]:
    """Train ``net`` in place with mini-batch AMSGrad and per-epoch cosine annealing.

    ``train_set``/``test_set`` are :class:`idwnet.data.Dataset` objects
    (``test_set`` may be None). Shuffling uses the ``shuffle`` stream of
    ``Rng(cfg.seed)``.
    """
    x, y = train_set.x, train_set.y
    if x.shape[1] != net.n_features:
        raise ValueError(f"data has {x.shape[1]} features, model expects {net.n_features}")
    if train_set.n_classes != net.n_classes:
        raise ValueError(f"data has {train_set.n_classes} classes, model has {net.n_classes}")
    n = x.shape[0]
    order_rng = Rng(cfg.seed).stream("shuffle")
    params = net.params()
    state = AmsgradState.zeros_like(params)
    log = TrainLog()
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max)
        order = order_rng.permutation(n) if cfg.shuffle else np.arange(n)
        total, seen = 0.0, 0
        for step, s in enumerate(range(0, n, cfg.batch_size)):
            idx = order[s:s + cfg.batch_size]
            try:
                with np.errstate(all="ignore"):
                    logits, cache = forward(net, x[idx])
                loss, g = cross_entropy(logits, y[idx])
                if not math.isfinite(loss):
                    raise NonFiniteError("non-finite loss")
                grads = backward(net, cache, g)
                amsgrad_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            except NonFiniteError as e:
                raise TrainingError(f"epoch {epoch}, step {step}: {e}") from None
            net.version += 1
            total += loss * len(idx)
            seen += len(idx)
        rec = EpochRecord(
            epoch=epoch, lr=lr, loss=total / seen,
            train_acc=accuracy(net, x, y),
            test_acc=accuracy(net, test_set.x, test_set.y) if test_set is not None else float("nan"),
        )
        log.records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    net.meta.update({"seed": cfg.seed, "epochs": cfg.epochs, "batch_size": cfg.batch_size,
                     "lr_max": cfg.lr_max})
    return net, log


def mean_loss(net: Net, ds) -> float:
    logits, _ = forward(net, ds.x)
    return cross_entropy(logits, ds.y)[0]

