"""Connected-component profile of the case MRF across generator seeds and thresholds."""
import argparse

import numpy as np

from mrfcbr.dataset import generate_synthetic
from mrfcbr.mrf import build_mrf, connected_components


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=1500)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--st", type=float, nargs="+", default=[0.8, 0.9, 0.95])
    args = p.parse_args()
    print(f"{'seed':>4} {'st':>5} {'edges':>7} {'comps':>6} {'singletons':>10} {'largest':>8}")
    for seed in args.seeds:
        cb = generate_synthetic(args.n, seed)
        for st in args.st:
            mrf = build_mrf(cb, st, 2)
            sizes = np.array([len(c) for c in connected_components(mrf)])
            print(f"{seed:>4} {st:>5} {len(mrf.edges):>7} {len(sizes):>6} "
                  f"{int(np.sum(sizes == 1)):>10} {sizes.max() / len(cb):>8.1%}")


if __name__ == "__main__":
    main()
