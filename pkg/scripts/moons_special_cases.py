"""Inject adversarial special cases into trained Two Moons IDW models.

For each seed, trains an IDW model, applies the cases in order and prints the
before and after accuracies. Also dumps decision grids before and after.

    python scripts/moons_special_cases.py --prototypes 16 --out runs/special
"""
import argparse
from pathlib import Path

import numpy as np

from idwnet import cli
from idwnet import model as M
from idwnet.augment import AugmentRequest, honored, inject_many
from idwnet.experiment import build_config, load_datasets, run
from idwnet.model import accuracy

CASES = [((0.0, 1.0), 1), ((-0.8, 0.6), 1), ((1.0, -0.5), 0), ((1.8, 0.1), 0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--prototypes", type=int, default=16)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--out", default="runs/special")
    args = ap.parse_args()

    reqs = [AugmentRequest(q, c) for q, c in CASES]
    for seed in map(int, args.seeds.split(",")):
        cfg = build_config(None, {"prototypes": str(args.prototypes), "seed": str(seed)})
        tr, te = load_datasets(cfg)
        net = run(cfg, (tr, te)).net
        new, steps = inject_many(net, reqs)
        cell = Path(args.out) / f"P{args.prototypes}_seed{seed}"
        cell.mkdir(parents=True, exist_ok=True)
        for name, n in (("before", net), ("after", new)):
            M.save(n, cell / f"{name}.idwm")
            cli.main(["grid", "--model", str(cell / f"{name}.idwm"), "--out", str(cell / f"grid_{name}.csv")])
        etas = ", ".join(f"{r.eta:.3g}" for _, r in steps if r.eta is not None)
        print(f"seed {seed}: train {accuracy(net, tr.x, tr.y):.2f} -> {accuracy(new, tr.x, tr.y):.2f}, "
              f"test {accuracy(net, te.x, te.y):.2f} -> {accuracy(new, te.x, te.y):.2f}, "
              f"honored {sum(honored(new, reqs))}/{len(reqs)}, {len(steps)} prototypes added (eta {etas})")
        print("  predictions at cases:", np.asarray(M.predict(new, np.array([q for q, _ in CASES]))).tolist())


if __name__ == "__main__":
    main()
