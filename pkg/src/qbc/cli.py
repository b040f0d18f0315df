"""Command-line entry point: ``python -m qbc`` or ``qbc``.

Exit codes: 0 success, 1 configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .adversary import AliceStrategy, BiasPolicy, BobStrategy, MeasurementPolicy
from .harness import SWEEPABLE, EmitError, ExperimentConfig, emit, run_experiment
from .protocol import DEFAULT_PARAMS, ConfigurationError, DecoyPolicy, ProtocolParams

log = logging.getLogger("qbc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sweep(text: str) -> tuple[str, tuple]:
    name, sep, values = text.partition("=")
    if not sep or not values:
        raise argparse.ArgumentTypeError(f"expected FIELD=V1,V2,..., got {text!r}")
    name = name.strip()
    if name not in SWEEPABLE:
        raise argparse.ArgumentTypeError(f"cannot sweep {name!r}")
    conv = float if name == "threshold" else int
    try:
        return name, tuple(conv(v) for v in values.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sweep values in {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qbc", description="Monte Carlo security estimates for the composite-evidence bit commitment.")
    ap.add_argument("--protocol", choices=["p", "pprime"], default="p")
    ap.add_argument("--alice", choices=[s.value for s in AliceStrategy], default="honest")
    ap.add_argument("--bob", choices=[s.value for s in BobStrategy], default="honest")
    for name in ("m", "n", "p", "q"):
        ap.add_argument(f"--{name}", type=int, default=getattr(DEFAULT_PARAMS, name))
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threshold", type=float, default=4.0, help="mixing-test deviation multiplier")
    ap.add_argument("--decoy-policy", choices=[d.value for d in DecoyPolicy], default="bb84")
    ap.add_argument("--zeta-policy", choices=[p.value for p in MeasurementPolicy], default="plus",
                    help="how Alice obtains R_x before the zeta attack on P")
    ap.add_argument("--bias-policy", choices=[p.value for p in BiasPolicy], default="all-zero-plus")
    ap.add_argument("--ancilla", action="store_true", help="deferred attack entangles marked qubits with ancillas")
    ap.add_argument("--sweep", type=_sweep, action="append", default=[], metavar="FIELD=V1,V2,...")
    ap.add_argument("--format", choices=["csv", "text"], default="csv")
    ap.add_argument("--output", default="-")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--single-thread", action="store_true", help="ignore --jobs and run in-process")
    ap.add_argument("--timing", action="store_true", help="fill the ms column (makes output non-reproducible)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = ExperimentConfig(
            params=ProtocolParams(args.m, args.n, args.p, args.q),
            protocol=args.protocol,
            alice=AliceStrategy(args.alice),
            bob=BobStrategy(args.bob),
            trials=args.trials,
            seed=args.seed,
            threshold=args.threshold,
            decoy_policy=DecoyPolicy(args.decoy_policy),
            sweep=tuple(args.sweep),
            zeta_policy=MeasurementPolicy(args.zeta_policy),
            bias_policy=BiasPolicy(args.bias_policy),
            ancilla=args.ancilla,
            jobs=1 if args.single_thread else args.jobs,
            timing=args.timing,
        )
        config.validate()
    except ConfigurationError as exc:
        print(f"qbc: configuration error: {exc}", file=sys.stderr)
        return 1
    if config.bob.value in ("bob-informed-marked", "bob-informed-nondecoy"):
        log.warning("note: %s is given Q/x directly (non-physical calibration)", config.bob.value)
    rows = run_experiment(config)
    try:
        emit(rows, args.format, args.output)
    except EmitError as exc:
        print(f"qbc: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
