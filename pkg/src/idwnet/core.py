"""Dense float64 helpers, seeded random streams and distance kernels.

Matrices are plain 2-D ``numpy.ndarray`` objects with dtype float64.
"""
from __future__ import annotations

import zlib

import numpy as np

# rows per chunk when a product would otherwise allocate a huge k x n x m block
_CHUNK_ELEMS = 4_000_000


class ShapeError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a C-contiguous 2-D float64 array."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values in {what}")
    return a


class Rng:
    """Seeded PCG64 generator with named, independent sub-streams.

    ``Rng(seed).stream("shuffle")`` always yields the same sequence for the
    same seed, whatever other streams have been drawn from.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._key = _key
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=_key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def stream(self, name: str) -> "Rng":
        return Rng(self.seed, self._key + (zlib.crc32(name.encode("utf-8")),))

    def uniform(self, size=None) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def normal(self, size) -> np.ndarray:
        """Standard normal draws, Box-Muller on exactly two uniforms each."""
        u1 = 1.0 - self._gen.random(size)  # (0, 1], keeps log finite
        u2 = self._gen.random(size)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed, serial summation order.

    ``out[i, j]`` is accumulated as ``((a[i,0]b[0,j] + a[i,1]b[1,j]) + ...)``,
    which is bit-identical to the naive triple loop. A cumulative sum is
    used rather than ``add.reduce``: reductions that collapse to one
    contiguous axis switch to pairwise summation, accumulations never do.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    n, k = a.shape
    m = b.shape[1]
    out = np.empty((n, m))
    if k == 0:
        out[:] = 0.0
        return out
    rows = max(1, _CHUNK_ELEMS // max(1, k * m))
    at = a.T
    for s in range(0, n, rows):
        blk = at[:, s:s + rows, None] * b[:, None, :]
        out[s:s + rows] = np.cumsum(blk, axis=0)[-1]
    return out


def pairwise_sq_dist(q, k) -> np.ndarray:
    """Squared Euclidean distances, ``out[b, i] = sum_j (q[b,j] - k[i,j])**2``.

    Uses the direct subtract-square-sum form; the expanded norm identity
    cancels catastrophically when a query sits on a key.
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"pairwise_sq_dist: q has {q.shape[1]} cols, k has {k.shape[1]}")
    B, P = q.shape[0], k.shape[0]
    out = np.empty((B, P))
    rows = max(1, _CHUNK_ELEMS // max(1, P * q.shape[1]))
    for s in range(0, B, rows):
        diff = q[s:s + rows, None, :] - k[None, :, :]
        np.einsum("bpj,bpj->bp", diff, diff, out=out[s:s + rows])
    return out


def gaussian_matrix(rows: int, cols: int, mean, std, rng: Rng) -> np.ndarray:
    """Draw a ``rows x cols`` matrix with column-wise means and std devs."""
    mean = as_matrix(mean, "mean")
    std = as_matrix(std, "std")
    if mean.shape != (1, cols) or std.shape != (1, cols):
        raise ShapeError(f"mean/std must be 1x{cols}, got {mean.shape} and {std.shape}")
    if np.any(std < 0):
        raise ValueError("negative standard deviation")
    return mean + std * rng.normal((rows, cols))
