"""Speed of RROA against the direct type-aggregated LP over population scales.

Writes bench.csv (xcount,ycount,S,seed,method,ms,objective,iters) plus one
mean_speedup row per cell.  ``--full-scale`` goes up to S=256.
"""

import argparse
from pathlib import Path

from tumatch import harness as hz


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", default="5x5,10x10,15x10", help="comma separated XxY type-space sizes")
    ap.add_argument("--scales", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--base-seed", type=int, default=0)
    ap.add_argument("--backend", default="simplex")
    ap.add_argument("--full-scale", action="store_true")
    ap.add_argument("--out", default="bench.csv")
    args = ap.parse_args()

    scales = (1, 2, 4, 8, 16, 32, 64, 128, 256) if args.full_scale else tuple(args.scales)
    records = []
    for cell in args.cells.split(","):
        x, y = (int(v) for v in cell.lower().split("x"))
        cfg = hz.ExperimentConfig(x_count=x, y_count=y, scales=scales, n_seeds=args.seeds,
                                  base_seed=args.base_seed, backend=args.backend)
        for r in hz.bench_solve(cfg):
            records.append(r)
            if r.seed is None:
                print(f"({x},{y}) S={r.S}: mean speedup {r.ms:.3g}x", flush=True)
    hz.write_bench(Path(args.out), records)


if __name__ == "__main__":
    main()
