"""Quantitative proxies for "the keys look like the data"."""
from __future__ import annotations

import numpy as np

from .core import pairwise_sq_dist
from .model import PrototypeNet


def key_data_distances(net: PrototypeNet, x) -> np.ndarray:
    """Euclidean distance from every key to its nearest data row."""
    return np.sqrt(pairwise_sq_dist(net.keys, x).min(axis=1))


def key_proximity(net: PrototypeNet, x) -> float:
    """Largest key-to-nearest-example distance (0 when every key sits on a data point)."""
    return float(key_data_distances(net, x).max())


def class_mean_images(x, y, n_classes: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    out = np.zeros((n_classes, x.shape[1]))
    for c in range(n_classes):
        rows = x[y == c]
        if len(rows):
            out[c] = rows.mean(axis=0)
    return out


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 0 else 0.0


def prototype_fidelity(net: PrototypeNet, x, y) -> float:
    """Mean Pearson correlation between each key and the mean image of its value-argmax class."""
    means = class_mean_images(x, y, net.n_classes)
    cls = np.argmax(net.values, axis=1)
    return float(np.mean([_pearson(k, means[c]) for k, c in zip(net.keys, cls)]))
