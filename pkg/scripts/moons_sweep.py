"""Sweep the IDW power p and offset eps on Two Moons and print per-cell medians.

    python scripts/moons_sweep.py --p 1,2,4,8 --eps 1e-3,1e-1,1 --seeds 0,1,2,3,4
"""
import argparse
from pathlib import Path

import numpy as np

from idwnet.experiment import build_config, median_by, parse_overrides, sweep, sweep_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", default="1,2,8")
    ap.add_argument("--eps", default="0.001")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="config override, e.g. n_test=1000")
    ap.add_argument("--out", help="write sweep.csv here")
    args = ap.parse_args()

    cfg = build_config(None, parse_overrides(args.set))
    rows = sweep(cfg, [float(v) for v in args.p.split(",")], [float(v) for v in args.eps.split(",")],
                 [int(s) for s in args.seeds.split(",")])
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.csv").write_text(sweep_csv(rows))
    test, train, prox = (median_by(rows, a) for a in ("test_acc", "train_acc", "key_proximity"))
    print(f"{'p':>5} {'eps':>8} {'train':>7} {'test':>7} {'test_mean':>9} {'key_dist':>8}")
    for key in test:
        mean = np.mean([r.test_acc for r in rows if (r.p, r.eps) == key])
        print(f"{key[0]:5g} {key[1]:8g} {train[key]:7.3f} {test[key]:7.3f} {mean:9.3f} {prox[key]:8.3f}")


if __name__ == "__main__":
    main()
