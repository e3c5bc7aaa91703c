"""Side-by-side CS-SHRED vs SHRED on a subsampled synthetic field, over several seeds.

Usage: python3 scripts/desk_benchmark.py [--seeds 0 1 2] [--epochs 600] [--out bench.tsv]
"""

import argparse

from csshred.benchmark import DESK_BENCHMARK, benchmark_table, run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=DESK_BENCHMARK.epochs)
    ap.add_argument("--out")
    args = ap.parse_args()
    text = benchmark_table(run_benchmark(args.seeds, epochs=args.epochs))
    print(text, end="")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
