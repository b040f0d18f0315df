"""Sweep m for every attack on P and P', print the rows and the strong/weak labels.

    python3 scripts/binding_sweep.py --trials 20000 --output sweep.csv
"""

import argparse

from qbc.adversary import AliceStrategy
from qbc.harness import ExperimentConfig, classify_security, contrast, emit, run_experiment
from qbc.protocol import DEFAULT_PARAMS

ATTACKS = [
    ("p", AliceStrategy.BASIS_FLIP),
    ("p", AliceStrategy.DECOY_SUBSTITUTION),
    ("p", AliceStrategy.DEFERRED_MEASUREMENT),
    ("p", AliceStrategy.WEAK_ZETA_P),
    ("pprime", AliceStrategy.BASIS_FLIP),
    ("pprime", AliceStrategy.WEAK_ZETA_PRIME),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ms", default="2,4,6")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--output", default=None, help="CSV destination for all rows")
    args = ap.parse_args()
    ms = tuple(int(v) for v in args.ms.split(","))

    all_rows, reports = [], {}
    for protocol, alice in ATTACKS:
        cfg = ExperimentConfig(DEFAULT_PARAMS, protocol=protocol, alice=alice, trials=args.trials,
                               seed=args.seed, jobs=args.jobs, sweep=(("m", ms),))
        rows = run_experiment(cfg)
        all_rows.extend(rows)
        report = classify_security(rows)
        reports[(protocol, alice)] = report
        print(report.describe())
    print()
    print(contrast(reports[("p", AliceStrategy.WEAK_ZETA_P)], reports[("pprime", AliceStrategy.WEAK_ZETA_PRIME)]))
    if args.output:
        emit(all_rows, "csv", args.output)


if __name__ == "__main__":
    main()
