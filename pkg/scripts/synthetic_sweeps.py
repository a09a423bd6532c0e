"""Run the default one-variable synthetic sweeps and write one CSV per variable."""
import argparse
import logging
from pathlib import Path

from directranker.experiments import DEFAULT_SWEEP_VALUES, SyntheticProtocolConfig, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variables", default="n_classes,n_features,train_size")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="sweeps")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    protocol = SyntheticProtocolConfig(n_repeats=args.repeats, seed=args.seed)
    for variable in args.variables.split(","):
        report = sweep(variable, DEFAULT_SWEEP_VALUES[variable], protocol=protocol)
        path = out / f"{variable}.csv"
        path.write_text(report.to_csv())
        print(f"{variable}: " + "  ".join(f"{v}:{p.mu:.3f}" for v, p in zip(report.values, report.points)))
        print(f"wrote {path} ({report.seconds:.0f} s)")


if __name__ == "__main__":
    main()
