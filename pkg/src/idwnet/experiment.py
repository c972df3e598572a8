"""Experiment configuration files and the runs built from them.

A config is a plain ``key = value`` document with a single ``[experiment]``
section. Unknown keys are rejected; keys left out take the recipe defaults
for the chosen dataset.
"""
from __future__ import annotations

import configparser
import csv
import io
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import data as data_mod
from .attention import make_kind
from .core import Rng
from .metrics import key_proximity
from .model import Net, PrototypeNet, init_fc_relu, init_prototype_net
from .optim import TrainConfig, TrainLog, train

CONFIG_SCHEMA = 1
SECTION = "experiment"

RECIPES = {
    "moons": {"batch_size": 10, "lr": 0.01, "epochs": 25, "prototypes": 16},
    "mnist": {"batch_size": 4, "lr": 0.001, "epochs": 50, "prototypes": 20},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = CONFIG_SCHEMA
    dataset: str = "moons"
    # moons
    n_train: int = 100
    n_test: int = 20
    noise_std: float = 0.1
    # mnist
    mnist_dir: str = ""
    subset: int = 0  # 0 = full training set
    # model
    arch: str = "prototype"
    kind: str = "neglog"
    p: float = 2.0
    eps: float = 1e-3
    sigma: float = 1.0
    prototypes: int = 16
    # training
    batch_size: int = 10
    lr: float = 0.01
    epochs: int = 25
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.schema_version != CONFIG_SCHEMA:
            raise ConfigError(f"config schema {self.schema_version}, expected {CONFIG_SCHEMA}")
        if self.dataset not in RECIPES:
            raise ConfigError(f"dataset must be one of {sorted(RECIPES)}, got {self.dataset!r}")
        if self.arch not in ("prototype", "fcrelu"):
            raise ConfigError(f"arch must be 'prototype' or 'fcrelu', got {self.arch!r}")
        if self.prototypes < 1:
            raise ConfigError("prototypes must be >= 1")
        if self.subset < 0:
            raise ConfigError("subset must be >= 0")
        try:
            self.score_kind()
            self.train_config()
            if self.dataset == "moons":
                self.moons_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def score_kind(self):
        return make_kind(self.kind, p=self.p, eps=self.eps, sigma=self.sigma)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, lr_max=self.lr, epochs=self.epochs,
                           beta1=self.beta1, beta2=self.beta2, adam_eps=self.adam_eps,
                           seed=self.seed, shuffle=self.shuffle)

    def moons_config(self) -> data_mod.MoonsConfig:
        return data_mod.MoonsConfig(self.n_train, self.n_test, self.noise_std, self.seed)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        lines = [f"[{SECTION}]"]
        for k, v in asdict(self).items():
            lines.append(f"{k} = {_format(v)}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, raw: str):
    typ = _FIELDS[key].type
    try:
        if typ == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_overrides(pairs) -> dict[str, str]:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(text: str | None = None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse a config document, apply ``key=value`` overrides and recipe defaults."""
    raw: dict[str, str] = {}
    if text:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"unreadable config: {e}") from None
        extra = [s for s in cp.sections() if s != SECTION]
        if extra:
            raise ConfigError(f"unknown sections {extra}; only [{SECTION}] is allowed")
        if cp.has_section(SECTION):
            raw.update(cp[SECTION])
    raw.update(overrides or {})
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {k: _coerce(k, v) for k, v in raw.items()}
    dataset = values.get("dataset", "moons")
    recipe = RECIPES.get(dataset, {})
    for k, v in recipe.items():
        values.setdefault(k, v)
    try:
        return ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_datasets(cfg: ExperimentConfig) -> tuple[data_mod.Dataset, data_mod.Dataset]:
    if cfg.dataset == "moons":
        return data_mod.gen_moons(cfg.moons_config())
    train_set, test_set = data_mod.load_mnist(cfg.mnist_dir or None)
    if cfg.subset:
        train_set = data_mod.subset(train_set, cfg.subset, cfg.seed)
    return train_set, test_set


def build_net(cfg: ExperimentConfig, train_set: data_mod.Dataset) -> Net:
    rng = Rng(cfg.seed).stream("key-init")
    if cfg.arch == "fcrelu":
        return init_fc_relu(train_set.x.shape[1], cfg.prototypes, train_set.n_classes, rng)
    return init_prototype_net(train_set.x, train_set.n_classes, cfg.prototypes, cfg.score_kind(), rng)


@dataclass
class RunResult:
    net: Net
    log: TrainLog
    train_acc: float
    test_acc: float


def run(cfg: ExperimentConfig, datasets=None, on_epoch=None) -> RunResult:
    train_set, test_set = datasets if datasets is not None else load_datasets(cfg)
    net = build_net(cfg, train_set)
    net, log = train(net, train_set, test_set, cfg.train_config(), on_epoch=on_epoch)
    net.meta["config"] = asdict(cfg)
    return RunResult(net, log, log.final.train_acc, log.final.test_acc)


@dataclass
class SweepRow:
    p: float
    eps: float
    seed: int
    train_acc: float
    test_acc: float
    key_proximity: float
    status: str


def sweep(cfg: ExperimentConfig, p_list, eps_list, seeds=None) -> list[SweepRow]:
    """Train one model per (p, eps, seed); failures are recorded, not raised."""
    if not p_list or not eps_list:
        raise ConfigError("p and eps lists must be non-empty")
    seeds = [cfg.seed] if seeds is None else list(seeds)
    rows = []
    for p in p_list:
        for eps in eps_list:
            for seed in seeds:
                nan = float("nan")
                try:
                    cell = cfg.with_overrides(p=float(p), eps=float(eps), seed=int(seed))
                    tr, te = load_datasets(cell)
                    res = run(cell, (tr, te))
                    prox = key_proximity(res.net, tr.x) if isinstance(res.net, PrototypeNet) else nan
                    rows.append(SweepRow(float(p), float(eps), int(seed), res.train_acc,
                                         res.test_acc, prox, "ok"))
                except (ArithmeticError, ValueError) as e:
                    rows.append(SweepRow(float(p), float(eps), int(seed), nan, nan, nan,
                                         f"error: {type(e).__name__}: {e}".replace("\n", " ")))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "eps", "seed", "train_acc", "test_acc", "key_proximity", "status"])
    for r in rows:
        w.writerow([repr(r.p), repr(r.eps), r.seed, repr(r.train_acc), repr(r.test_acc),
                    repr(r.key_proximity), r.status])
    return buf.getvalue()


def median_by(rows: list[SweepRow], attr: str) -> dict[tuple[float, float], float]:
    groups: dict[tuple[float, float], list[float]] = {}
    for r in rows:
        groups.setdefault((r.p, r.eps), []).append(getattr(r, attr))
    return {k: float(np.median(v)) for k, v in groups.items()}

