"""Two Moons generation, MNIST IDX parsing, subsetting and CSV I/O."""
from __future__ import annotations

import csv
import gzip
import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Rng, as_matrix

MNIST_ENV = "IDWNET_MNIST_DIR"
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
_IDX_NDIM = {IDX_IMAGES: 3, IDX_LABELS: 1}
_IDX_MAX_BYTES = 1 << 34

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    x: np.ndarray  # N x d
    y: np.ndarray  # N, int64
    n_classes: int

    def __post_init__(self):
        self.x = as_matrix(self.x, "x")
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.x.shape[0]} rows but {self.y.shape[0]} labels")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("non-finite features")
        if np.any((self.y < 0) | (self.y >= self.n_classes)):
            raise ValueError(f"labels outside [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.y.shape[0]


# -- Two Moons ---------------------------------------------------------------

@dataclass(frozen=True)
class MoonsConfig:
    n_train: int = 100
    n_test: int = 20
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample counts must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def moon_points(t, label: int) -> np.ndarray:
    """Noise-free points on the upper (label 0) or lower (label 1) arc."""
    t = np.asarray(t, dtype=np.float64)
    if label == 0:
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    return np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=-1)


def _moons(n: int, noise_std: float, rng: Rng) -> Dataset:
    n0 = n - n // 2
    t = np.pi * rng.uniform(n)
    y = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n - n0, dtype=np.int64)]
    x = np.where(y[:, None] == 0, moon_points(t, 0), moon_points(t, 1))
    x = x + noise_std * rng.normal((n, 2))
    return Dataset(x, y, 2)


def gen_moons(cfg: MoonsConfig = MoonsConfig()) -> tuple[Dataset, Dataset]:
    root = Rng(cfg.seed).stream("data-noise")
    return (_moons(cfg.n_train, cfg.noise_std, root.stream("train")),
            _moons(cfg.n_test, cfg.noise_std, root.stream("test")))


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(ds.x.shape[1])] + ["label"])
    for row, label in zip(ds.x, ds.y):
        w.writerow([repr(float(v)) for v in row] + [int(label)])
    return buf.getvalue()


def dataset_from_csv(text: str, n_classes: int | None = None) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][-1] != "label":
        raise ValueError("expected a header row ending in 'label'")
    body = [r for r in rows[1:] if r]
    x = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64).reshape(len(body), -1)
    y = np.array([int(r[-1]) for r in body], dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1 if len(y) else 1
    return Dataset(x, y, n_classes)


# -- IDX -----------------------------------------------------------------------

class IdxError(ValueError):
    """Base class for malformed IDX streams."""


class BadMagicError(IdxError):
    pass


class TruncatedError(IdxError):
    pass


class DimsOverflowError(IdxError):
    pass


@dataclass(frozen=True)
class IdxHeader:
    magic: int
    dims: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1


def parse_idx(blob: bytes) -> tuple[IdxHeader, np.ndarray]:
    """Decode an unsigned-byte IDX stream into its header and a uint8 array."""
    if len(blob) < 4:
        raise TruncatedError(f"stream ends at offset {len(blob)}, inside the 4-byte magic")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic not in _IDX_NDIM:
        raise BadMagicError(f"bad magic 0x{magic:08x} at offset 0 "
                            f"(expected 0x{IDX_IMAGES:08x} or 0x{IDX_LABELS:08x})")
    ndim = _IDX_NDIM[magic]
    end = 4 + 4 * ndim
    if len(blob) < end:
        raise TruncatedError(f"header needs {end} bytes, stream ends at offset {len(blob)}")
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    size = 1
    for i, n in enumerate(dims):
        size *= n
        if size > _IDX_MAX_BYTES:
            raise DimsOverflowError(f"dimension sizes overflow at dim {i} (offset {4 + 4 * i})")
    header = IdxHeader(magic, tuple(dims))
    have = len(blob) - end
    if have < size:
        raise TruncatedError(f"payload at offset {end} has {have} bytes, header promises {size}")
    if have > size:
        raise TruncatedError(f"{have - size} trailing bytes after payload ending at offset {end + size}")
    payload = np.frombuffer(blob, dtype=np.uint8, count=size, offset=end).reshape(dims)
    return header, payload


def serialize_idx(header: IdxHeader, payload) -> bytes:
    data = np.ascontiguousarray(payload, dtype=np.uint8)
    if tuple(data.shape) != header.dims:
        raise ValueError(f"payload shape {data.shape} != header dims {header.dims}")
    if header.magic not in _IDX_NDIM or len(header.dims) != _IDX_NDIM[header.magic]:
        raise BadMagicError(f"magic 0x{header.magic:08x} does not match {len(header.dims)} dims")
    return struct.pack(f">I{len(header.dims)}I", header.magic, *header.dims) + data.tobytes()


def _read_idx_file(base: Path) -> np.ndarray:
    for path in (base, base.with_name(base.name + ".gz")):
        if path.exists():
            blob = path.read_bytes()
            if path.suffix == ".gz":
                blob = gzip.decompress(blob)
            try:
                return parse_idx(blob)[1]
            except IdxError as e:
                raise IdxError(f"{path}: {e}") from None
    raise FileNotFoundError(f"missing IDX file {base} (or {base.name}.gz)")


def _load_split(directory: Path, split: str) -> Dataset:
    img_name, lab_name = MNIST_FILES[split]
    images = _read_idx_file(directory / img_name)
    labels = _read_idx_file(directory / lab_name)
    if images.ndim != 3 or labels.ndim != 1:
        raise IdxError(f"{split}: expected 3-D images and 1-D labels")
    if images.shape[0] != labels.shape[0]:
        raise IdxError(f"{split}: {images.shape[0]} images but {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), 10)


def mnist_dir(directory=None) -> Path:
    if directory is None:
        directory = os.environ.get(MNIST_ENV)
    if not directory:
        raise FileNotFoundError(f"no MNIST directory given and ${MNIST_ENV} is unset")
    return Path(directory)


def load_mnist(directory=None) -> tuple[Dataset, Dataset]:
    """Load the four standard MNIST IDX files (optionally gzipped)."""
    d = mnist_dir(directory)
    return _load_split(d, "train"), _load_split(d, "test")


def subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Uniform sample of ``n`` rows without replacement, in shuffled order."""
    if n > len(ds):
        raise ValueError(f"cannot take {n} rows from a dataset of {len(ds)}")
    if n < 0:
        raise ValueError("n must be >= 0")
    idx = Rng(seed).stream("subset").permutation(len(ds))[:n]
    return Dataset(ds.x[idx], ds.y[idx], ds.n_classes)
