"""Print Monte Carlo estimates next to exact enumeration and the quoted closed forms.

    python3 scripts/reproduce_claims.py --trials 20000
"""

import argparse

from qbc.adversary import (
    AliceStrategy,
    BobStrategy,
    MeasurementPolicy,
    exact_basis_flip_acceptance,
    exact_decoy_substitution_detection,
    exact_informed_marked,
    exact_informed_nondecoy,
    exact_zeta_on_p,
    quoted_decoy_substitution_detection,
    quoted_informed_marked,
    quoted_informed_nondecoy,
)
from qbc.harness import ExperimentConfig, run_experiment
from qbc.protocol import ProtocolParams


def row(label, mc, err, exact, quoted):
    print(f"{label:<34} {mc:>9.5f} +- {err:<8.5f} {exact:>10.5f} {quoted:>10.5f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    m = args.m
    params = ProtocolParams(m, 16, 64, 64)

    def run(**kw):
        cfg = ExperimentConfig(params, trials=args.trials, seed=args.seed, jobs=args.jobs, **kw)
        return run_experiment(cfg)[0]

    print(f"{'quantity (m=%d)' % m:<34} {'estimate':>21} {'exact':>10} {'quoted':>10}")
    r = run(alice=AliceStrategy.BASIS_FLIP)
    pass_c, accept = exact_basis_flip_acceptance(m)
    row("basis flip, outcome check", r.pass_outcome, (r.pass_outcome * (1 - r.pass_outcome) / r.trials) ** 0.5, pass_c, 2.0**-m)
    row("basis flip, accepted", r.accept, r.stderr, accept, 2.0**-m)

    r = run(alice=AliceStrategy.DECOY_SUBSTITUTION)
    row("decoy substitution, detected", 1 - r.accept, r.stderr,
        exact_decoy_substitution_detection(m), quoted_decoy_substitution_detection(m))

    r = run(alice=AliceStrategy.WEAK_ZETA_P)
    row("zeta on P, lambda", r.lam, r.lambda_stderr, exact_zeta_on_p(m, MeasurementPolicy.PLUS)["lambda"], 2.0**-m)

    r = run(protocol="pprime", alice=AliceStrategy.WEAK_ZETA_PRIME)
    row("zeta on P', lambda", r.lam, r.lambda_stderr, 0.5, 0.5)

    r = run(bob=BobStrategy.INFORMED_MARKED)
    row("informed Bob (marked), p_cheat", r.accept, r.stderr, exact_informed_marked(m), quoted_informed_marked(m))
    r = run(bob=BobStrategy.INFORMED_NONDECOY)
    row("informed Bob (non-decoy), p_cheat", r.accept, r.stderr, exact_informed_nondecoy(m), quoted_informed_nondecoy(m))


if __name__ == "__main__":
    main()
