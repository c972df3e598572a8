"""Two Moons decision regions and keys for several scoring rules and prototype counts.

Writes one directory per (kind, P, seed) with the trained model, training
log, key coordinates and a decision-region grid, plus a summary.csv.

    python scripts/moons_figure.py --out runs/moons
"""
import argparse
import csv
from pathlib import Path

from idwnet import cli
from idwnet import model as M
from idwnet.experiment import build_config, load_datasets, run
from idwnet.metrics import key_proximity


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/moons")
    ap.add_argument("--kinds", default="dot,negdist,gauss,inv,neglog")
    ap.add_argument("--prototypes", default="2,16,128")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--res", type=int, default=100)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for kind in args.kinds.split(","):
        for P in map(int, args.prototypes.split(",")):
            for seed in map(int, args.seeds.split(",")):
                cfg = build_config(None, {"kind": kind, "prototypes": str(P), "seed": str(seed)})
                tr, te = load_datasets(cfg)
                res = run(cfg, (tr, te))
                cell = out / f"{kind}_P{P}_seed{seed}"
                cell.mkdir(exist_ok=True)
                M.save(res.net, cell / cli.MODEL_FILE)
                (cell / "trainlog.csv").write_text(res.log.to_csv())
                cli.main(["export-keys", "--model", str(cell / cli.MODEL_FILE), "--out", str(cell)])
                cli.main(["grid", "--model", str(cell / cli.MODEL_FILE), "--res", str(args.res),
                          "--out", str(cell / "grid.csv")])
                summary.append([kind, P, seed, res.train_acc, res.test_acc, key_proximity(res.net, tr.x)])
                print(f"{kind:8s} P={P:<4d} seed={seed} train={res.train_acc:.3f} test={res.test_acc:.3f}")
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["kind", "prototypes", "seed", "train_acc", "test_acc", "key_proximity"])
        w.writerows(summary)


if __name__ == "__main__":
    main()
