"""Command-line entry point: ``idwnet <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import model as model_mod
from .attention import NegLogDist, attention_weights
from .augment import AugmentRequest, UnsupportedKindError, inject_many
from .core import NonFiniteError
from .experiment import (ConfigError, ExperimentConfig, build_config, load_datasets,
                         parse_overrides, run, sweep, sweep_csv)
from .gradcheck import ALL_KINDS, check
from .model import PrototypeNet, accuracy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_GRADCHECK = 5

MOONS_BOX = (-1.5, 2.5, -1.0, 1.5)
MODEL_FILE = "model.idwm"


def _config(args) -> ExperimentConfig:
    text = Path(args.config).read_text() if getattr(args, "config", None) else None
    return build_config(text, parse_overrides(getattr(args, "set", None)))


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_gen_moons(args) -> int:
    cfg = _config(args)
    if cfg.dataset != "moons":
        raise ConfigError("gen-moons needs dataset = moons")
    train_set, test_set = data_mod.gen_moons(cfg.moons_config())
    out = _out_dir(args.out)
    (out / "train.csv").write_text(data_mod.dataset_to_csv(train_set))
    (out / "test.csv").write_text(data_mod.dataset_to_csv(test_set))
    print(f"wrote {len(train_set)} train and {len(test_set)} test points to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(args.out)
    (out / "config.ini").write_text(cfg.to_text())
    datasets = load_datasets(cfg)
    verbose = None
    if args.verbose:
        def verbose(r):
            print(f"epoch {r.epoch}: lr={r.lr:.6g} loss={r.loss:.6f} "
                  f"train_acc={r.train_acc:.4f} test_acc={r.test_acc:.4f}", file=sys.stderr)
    res = run(cfg, datasets, on_epoch=verbose)
    model_mod.save(res.net, out / MODEL_FILE)
    (out / "trainlog.csv").write_text(res.log.to_csv())
    print(f"train_acc={res.train_acc:.4f}, test_acc={res.test_acc:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = model_mod.load(args.model)
    cfg = _config(args)
    train_set, test_set = load_datasets(cfg)
    print(f"train_acc={accuracy(net, train_set.x, train_set.y):.4f}, "
          f"test_acc={accuracy(net, test_set.x, test_set.y):.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    seeds = [int(s) for s in _floats(args.seeds)] if args.seeds else None
    rows = sweep(cfg, _floats(args.p), _floats(args.eps), seeds)
    text = sweep_csv(rows)
    if args.out:
        out = _out_dir(args.out)
        (out / "config.ini").write_text(cfg.to_text())
        (out / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def write_pgm(path, image: np.ndarray) -> None:
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    parts = blob.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pixels = blob[len(blob) - w * h:]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


def key_image(key: np.ndarray) -> np.ndarray:
    """Min-max normalize one key to 0..255; a constant key becomes mid-gray."""
    lo, hi = key.min(), key.max()
    if hi == lo:
        return np.full(key.shape, 128, dtype=np.uint8)
    return np.rint(255.0 * (key - lo) / (hi - lo)).astype(np.uint8)


def key_order(net: PrototypeNet) -> list[int]:
    cls = np.argmax(net.values, axis=1)
    return sorted(range(net.n_prototypes), key=lambda i: (int(cls[i]), i))


def cmd_export_keys(args) -> int:
    net = model_mod.load(args.model)
    if not isinstance(net, PrototypeNet):
        raise ConfigError("export-keys needs a prototype model")
    out = _out_dir(args.out)
    cls = np.argmax(net.values, axis=1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if net.n_features == 784:
        w.writerow(["rank", "index", "class", "file"])
        for rank, i in enumerate(key_order(net)):
            name = f"key_{rank:03d}_class{int(cls[i])}_idx{i:03d}.pgm"
            write_pgm(out / name, key_image(net.keys[i]).reshape(28, 28))
            w.writerow([rank, i, int(cls[i]), name])
        (out / "keys_index.csv").write_text(buf.getvalue())
    elif net.n_features == 2:
        w.writerow(["rank", "index", "class", "x1", "x2"])
        for rank, i in enumerate(key_order(net)):
            w.writerow([rank, i, int(cls[i]), repr(float(net.keys[i, 0])), repr(float(net.keys[i, 1]))])
        (out / "keys.csv").write_text(buf.getvalue())
    else:
        raise ConfigError(f"export-keys supports d=784 or d=2, model has d={net.n_features}")
    print(f"exported {net.n_prototypes} keys to {out}")
    return EXIT_OK


def grid_rows(net: model_mod.Net, box, res: int):
    """Yield (x1, x2, predicted class, max-weight prototype) over a res x res vertex grid."""
    if net.n_features != 2:
        raise ConfigError(f"grid needs a 2-D model, got d={net.n_features}")
    if res < 2:
        raise ConfigError("grid resolution must be >= 2")
    x0, x1, y0, y1 = box
    xs = np.linspace(x0, x1, res)
    ys = np.linspace(y0, y1, res)
    pts = np.array([(a, b) for b in ys for a in xs])
    logits, _ = model_mod.forward(net, pts)
    pred = np.argmax(logits, axis=1)
    if isinstance(net, PrototypeNet):
        w, _ = attention_weights(net.kind, pts, net.keys)
        near = np.argmax(w, axis=1)
    else:
        near = np.full(len(pts), -1)
    for (a, b), c, k in zip(pts, pred, near):
        yield float(a), float(b), int(c), int(k)


def cmd_grid(args) -> int:
    net = model_mod.load(args.model)
    box = tuple(_floats(args.box)) if args.box else MOONS_BOX
    if len(box) != 4:
        raise ConfigError("--box takes x_min,x_max,y_min,y_max")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2", "pred_class", "max_weight_proto"])
    for a, b, c, k in grid_rows(net, box, args.res):
        w.writerow([repr(a), repr(b), c, k])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def read_cases(text: str) -> list[AugmentRequest]:
    """Special cases as CSV rows ``features..., target_class`` (header optional)."""
    out = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text))):
        if not row or not "".join(row).strip():
            continue
        try:
            vals = [float(v) for v in row[:-1]]
            c = int(row[-1])
        except ValueError:
            if lineno == 0:
                continue  # header
            raise ConfigError(f"bad special-case row {row}") from None
        out.append(AugmentRequest(tuple(vals), c))
    return out


def cmd_augment(args) -> int:
    net = model_mod.load(args.model)
    if not isinstance(net, PrototypeNet) or not isinstance(net.kind, NegLogDist):
        raise UnsupportedKindError(f"augment needs an IDW (neglog) model, got {getattr(net, 'kind', net.arch)!r}")
    cases = read_cases(Path(args.cases).read_text())
    cfg = _config(args)
    train_set, test_set = load_datasets(cfg)
    out = _out_dir(args.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "target", "eta", "pre_class", "post_class", "noop",
                "train_acc_before", "train_acc_after", "test_acc_before", "test_acc_after"])
    def accs(n):
        return accuracy(n, train_set.x, train_set.y), accuracy(n, test_set.x, test_set.y)

    before = [accs(net)]

    def log_step(i, res, new):
        after = accs(new)
        w.writerow([i, res.c, "" if res.eta is None else repr(res.eta), res.pre_class, res.post_class,
                    int(res.noop), repr(before[0][0]), repr(after[0]), repr(before[0][1]), repr(after[1])])
        before[0] = after

    net, results = inject_many(net, cases, on_step=log_step)
    model_mod.save(net, out / MODEL_FILE)
    (out / "augment_report.csv").write_text(buf.getvalue())
    print(f"applied {len(cases)} special case(s) in {len(results)} step(s); report in {out / 'augment_report.csv'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    bad = [k for k in kinds if k not in ALL_KINDS]
    if bad:
        raise ConfigError(f"unknown kinds {bad}; choose from {ALL_KINDS}")
    if not args.tol >= 0:
        raise ConfigError("tolerance must be >= 0")
    failed = False
    print(f"{'kind':<8} {'max_rel_err':>12} {'param':<7} result")
    for k in kinds:
        r = check(k, args.trials, args.tol, seed=args.seed)
        failed |= not r.passed
        print(f"{r.kind:<8} {r.max_rel_error:12.3e} {r.worst_param:<7} {'PASS' if r.passed else 'FAIL'}")
    return EXIT_GRADCHECK if failed else EXIT_OK


def _add_config_args(p):
    p.add_argument("--config", help="experiment config file ([experiment] key = value)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idwnet", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-moons", help="write Two Moons train/test CSVs")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_moons)

    p = sub.add_parser("train", help="train one model")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a saved model on the configured data")
    _add_config_args(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train over a grid of p and eps")
    _add_config_args(p)
    p.add_argument("--p", required=True, help="comma-separated powers")
    p.add_argument("--eps", required=True, help="comma-separated offsets")
    p.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-keys", help="dump learned keys as PGM images or CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_keys)

    p = sub.add_parser("grid", help="decision regions of a 2-D model on a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--box", help="x_min,x_max,y_min,y_max (default moons box)")
    p.add_argument("--res", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("augment", help="inject special cases into an IDW model")
    _add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--cases", required=True, help="CSV rows: features..., target_class")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    p.add_argument("--kinds", default=",".join(ALL_KINDS))
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnsupportedKindError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (data_mod.IdxError, model_mod.ModelFileError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, ArithmeticError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
