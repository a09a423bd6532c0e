"""Nested grid search on a five-fold LETOR directory (MQ2007, MQ2008 or MSLR-WEB10K).

Usage: python scripts/letor_gridsearch.py /data/MQ2008 --threshold 1
"""
import argparse
import logging

from directranker.experiments import DEFAULT_LETOR_GRID, GridSpec, grid_search
from directranker.letor import discover_folds, load_folds
from directranker.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("folds_dir")
    ap.add_argument("--threshold", type=int, default=1, help="1 for MQ sets, 2 for WEB10K")
    ap.add_argument("--metric", default="ndcg@10")
    ap.add_argument("--inner-folds", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="single-point grid, no internal CV")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="gridsearch.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    folds = load_folds(discover_folds(args.folds_dir))
    grid = GridSpec({"seed": [args.seed]} if args.quick else DEFAULT_LETOR_GRID)
    result = grid_search(folds, grid, TrainConfig(seed=args.seed), args.metric,
                         n_inner_folds=args.inner_folds, threshold=args.threshold, seed=args.seed)
    with open(args.out, "w", newline="") as fh:
        fh.write(result.to_csv())
    for name, agg in result.summary.items():
        print(f"{name}: {agg.mean:.4f} +- {agg.stderr:.4f} over {agg.count} folds")


if __name__ == "__main__":
    main()
