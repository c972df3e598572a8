"""Train every scoring rule on MNIST with 20 prototypes and print test accuracies.

Needs the four IDX files (optionally gzipped) in --mnist-dir or $IDWNET_MNIST_DIR.
Keys of the prototype models are exported as PGM images next to each model.

    python scripts/mnist_table.py --mnist-dir ~/data/mnist --subset 10000 --out runs/mnist
"""
import argparse
import time
from pathlib import Path

from idwnet import cli
from idwnet import model as M
from idwnet.experiment import build_config, load_datasets, run
from idwnet.metrics import prototype_fidelity
from idwnet.model import PrototypeNet

MODELS = {
    "fcrelu": {"arch": "fcrelu"},
    "dot": {"kind": "dot"},
    "negdist": {"kind": "negdist"},
    "gauss": {"kind": "gauss"},
    "inv": {"kind": "inv"},
    "idw": {"kind": "neglog"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mnist-dir", default="")
    ap.add_argument("--subset", type=int, default=0, help="training examples to use (0 = all)")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--models", default=",".join(MODELS))
    ap.add_argument("--out", default="runs/mnist")
    args = ap.parse_args()

    base = {"dataset": "mnist", "mnist_dir": args.mnist_dir, "subset": str(args.subset),
            "epochs": str(args.epochs), "seed": str(args.seed)}
    datasets = load_datasets(build_config(None, base))
    print(f"{len(datasets[0])} train / {len(datasets[1])} test examples")
    for name in args.models.split(","):
        t0 = time.time()
        res = run(build_config(None, {**base, **MODELS[name]}), datasets)
        cell = Path(args.out) / name
        cell.mkdir(parents=True, exist_ok=True)
        M.save(res.net, cell / cli.MODEL_FILE)
        (cell / "trainlog.csv").write_text(res.log.to_csv())
        extra = ""
        if isinstance(res.net, PrototypeNet):
            cli.main(["export-keys", "--model", str(cell / cli.MODEL_FILE), "--out", str(cell / "keys")])
            extra = f" fidelity={prototype_fidelity(res.net, datasets[0].x, datasets[0].y):.3f}"
        print(f"{name:8s} test_acc={100 * res.test_acc:6.2f}%{extra} ({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
