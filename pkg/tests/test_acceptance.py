"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

Trial counts and tolerances are the contractual ones; several of these
runs take minutes on a single core.
"""

import itertools
import math
import random
import time

import numpy as np
import pytest

from qbc.adversary import (
    AliceStrategy,
    BiasPolicy,
    BobStrategy,
    attack_decoy_substitution,
    exact_basis_flip_acceptance,
    exact_decoy_substitution_detection,
    exact_informed_marked,
    exact_informed_nondecoy,
    exact_zeta_on_p,
    quoted_decoy_substitution_detection,
)
from qbc.cli import main as cli_main
from qbc.harness import ExperimentConfig, classify_security, run_experiment
from qbc.harness import trial_rng
from qbc.protocol import DEFAULT_PARAMS, ProtocolParams, averaged_evidence_state
from qbc.qstate import Basis, coding_sector_states, overlap_amplitude, trace_distance

pytestmark = pytest.mark.slow

HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def _record(log, cid, ok, detail):
    line = f"C{cid:<2} {'PASS' if ok else 'FAIL'}  {detail}"
    log.append(line)
    print(line)
    return ok


def _within(est, expected, stderr, sigmas=4.0):
    return abs(est - expected) <= sigmas * stderr


def _binomial_err(p, n):
    return math.sqrt(max(p * (1 - p), 1.0 / n) / n)


def _run(**kw):
    kw.setdefault("params", DEFAULT_PARAMS)
    return run_experiment(ExperimentConfig(**kw))


def _oracle_overlap_sq(a, b):
    # independent route: explicit Hadamard images of computational basis kets
    va = np.ones(1)
    vb = np.ones(1)
    for bit in a:
        va = np.kron(va, np.eye(2)[bit])
    for bit in b:
        vb = np.kron(vb, HADAMARD @ np.eye(2)[bit])
    return abs(va @ vb) ** 2


def test_c01_overlap_law(acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    for m in range(1, 5):
        for a in itertools.product((0, 1), repeat=m):
            for b in itertools.product((0, 1), repeat=m):
                amp = overlap_amplitude((a, Basis.PLUS), (b, Basis.CROSS))
                worst = max(worst, abs(abs(amp) ** 2 - 2.0**-m), abs(_oracle_overlap_sq(a, b) - 2.0**-m))
    rng = random.Random(1)
    for m in range(5, 13):
        for _ in range(20):
            a = [rng.getrandbits(1) for _ in range(m)]
            b = [rng.getrandbits(1) for _ in range(m)]
            worst = max(worst, abs(abs(overlap_amplitude((a, Basis.PLUS), (b, Basis.CROSS))) ** 2 - 2.0**-m))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and elapsed < 1.0
    _record(acceptance_log, 1, ok, f"overlap law: max |err| = {worst:.1e}, {elapsed:.2f}s")
    assert ok


def test_c02_honest_completeness(acceptance_log):
    t0 = time.perf_counter()
    (p,) = _run(trials=10_000, seed=2)
    (pp,) = _run(trials=10_000, seed=2, protocol="pprime")
    elapsed = time.perf_counter() - t0
    ok = p.accept >= 0.999 and pp.accept >= 0.999 and elapsed < 30
    _record(acceptance_log, 2, ok, f"honest accept P={p.accept:.5f} P'={pp.accept:.5f} (need >= 0.999), {elapsed:.1f}s")
    assert ok


def test_c03_basis_flip_binding(acceptance_log):
    t0 = time.perf_counter()
    rows = _run(alice=AliceStrategy.BASIS_FLIP, trials=100_000, seed=3, sweep=(("m", (2, 4, 6)),))
    elapsed = time.perf_counter() - t0
    parts, ok = [], elapsed < 300
    for r in rows:
        target = 2.0**-r.m
        good = _within(r.accept, target, _binomial_err(target, r.trials))
        ok &= good
        parts.append(
            f"m={r.m}: {r.accept:.5f} vs 2^-m={target:.5f} [pass-outcome {r.pass_outcome:.5f}, "
            f"exact end-to-end {exact_basis_flip_acceptance(r.m)[1]:.5f}]"
        )
    _record(acceptance_log, 3, ok, "basis flip; " + "; ".join(parts) + f"; {elapsed:.0f}s")
    assert ok


def test_c04_deferred_measurement(acceptance_log):
    parts, ok = [], True
    for m in (2, 4):
        params = ProtocolParams(m, 16, 64, 64)
        (plain,) = _run(params=params, alice=AliceStrategy.DEFERRED_MEASUREMENT, trials=100_000, seed=4)
        (anc,) = _run(params=params, alice=AliceStrategy.DEFERRED_MEASUREMENT, trials=100_000, seed=40, ancilla=True)
        target = 2.0**-m
        good = _within(plain.pass_outcome, target, _binomial_err(target, plain.trials))
        pooled = (plain.pass_outcome + anc.pass_outcome) / 2
        z = (plain.pass_outcome - anc.pass_outcome) / math.sqrt(pooled * (1 - pooled) * 2 / plain.trials)
        ok &= good and abs(z) <= 4
        parts.append(f"m={m}: pass {plain.pass_outcome:.5f} vs {target:.5f}, ancilla {anc.pass_outcome:.5f} (z={z:+.2f})")
    _record(acceptance_log, 4, ok, "deferred; " + "; ".join(parts))
    assert ok


def test_c05_weak_zeta_on_pprime(acceptance_log):
    (r,) = _run(protocol="pprime", alice=AliceStrategy.WEAK_ZETA_PRIME, trials=100_000, seed=5)
    n0 = n1 = r.trials / 2
    ok = (
        _within(r.beta0, 0.5, _binomial_err(0.5, n0))
        and _within(r.beta1, 0.5, _binomial_err(0.5, n1))
        and _within(r.lam, 0.5, r.lambda_stderr)
    )
    _record(acceptance_log, 5, ok, f"zeta on P': beta0={r.beta0:.4f} beta1={r.beta1:.4f} lambda={r.lam:.4f}+-{r.lambda_stderr:.4f} vs 0.5")
    assert ok


def test_c06_strong_vs_weak(acceptance_log):
    rows = _run(alice=AliceStrategy.WEAK_ZETA_P, trials=100_000, seed=6, sweep=(("m", (2, 4, 6)),))
    prime = _run(protocol="pprime", alice=AliceStrategy.WEAK_ZETA_PRIME, trials=20_000, seed=60, sweep=(("m", (2, 4, 6)),))
    rep_p, rep_pp = classify_security(rows), classify_security(prime)
    bounds_ok = all(r.lam <= 2.0**-r.m + 4 * r.lambda_stderr for r in rows)
    ok = bounds_ok and rep_p.label == "strong" and rep_pp.label == "weak"
    parts = [
        f"m={r.m}: lambda {r.lam:.4f}+-{r.lambda_stderr:.4f} vs 2^-m {2.0**-r.m:.4f} "
        f"(exact {exact_zeta_on_p(r.m, ExperimentConfig(DEFAULT_PARAMS).zeta_policy)['lambda']:.4f})"
        for r in rows
    ]
    _record(acceptance_log, 6, ok, "zeta on P; " + "; ".join(parts) + f"; P {rep_p.label}, P' {rep_pp.label}")
    assert ok


def test_c07_informed_bob(acceptance_log):
    (mk,) = _run(bob=BobStrategy.INFORMED_MARKED, trials=100_000, seed=7)
    (nd,) = _run(bob=BobStrategy.INFORMED_NONDECOY, trials=100_000, seed=70)
    m = DEFAULT_PARAMS.m
    t_mk, t_nd = 1 - 2.0**-m, 1 - 2.0 ** (-m / 2)
    ok = _within(mk.accept, t_mk, _binomial_err(t_mk, mk.trials)) and _within(nd.accept, t_nd, _binomial_err(t_nd, nd.trials))
    _record(
        acceptance_log, 7, ok,
        f"informed marked {mk.accept:.4f} vs {t_mk:.4f} (exact {exact_informed_marked(m):.4f}); "
        f"non-decoy {nd.accept:.4f} vs {t_nd:.4f} (exact {exact_informed_nondecoy(m):.4f})",
    )
    assert ok


def test_c08_concealment(acceptance_log):
    joint = trace_distance(
        averaged_evidence_state(0, 1, 1, 2, condition_on_rx=True),
        averaged_evidence_state(1, 1, 1, 2, condition_on_rx=True),
    )
    marginal = trace_distance(averaged_evidence_state(0, 1, 1, 2), averaged_evidence_state(1, 1, 1, 2))
    (r,) = _run(params=ProtocolParams(2, 4, 16, 16), bob=BobStrategy.UNINFORMED_GUESS, trials=100_000, seed=8)
    guess_ok = _within(r.accept, 0.5, _binomial_err(0.5, r.trials))
    ok = joint < 1e-10 and guess_ok
    _record(
        acceptance_log, 8, ok,
        f"trace distance joint with R_x {joint:.4f} (R_x traced out {marginal:.1e}), need < 1e-10; "
        f"uninformed guess {r.accept:.4f}+-{r.stderr:.4f} vs 0.5",
    )
    assert ok


def test_c09_coding_sector_inequivalence(acceptance_log):
    rho0, rho1 = coding_sector_states((0,))
    d1 = trace_distance(rho0, rho1)
    # pure states: D = sqrt(1 - |<a|b>|^2)
    oracle = math.sqrt(1 - 0.5)
    smallest = min(
        trace_distance(*coding_sector_states(r)) for m in range(1, 5) for r in itertools.product((0, 1), repeat=m)
    )
    ok = d1 >= 0.5 and abs(d1 - oracle) < 1e-12 and smallest > 0
    _record(acceptance_log, 9, ok, f"coding sector: m=1 distance {d1:.6f} (oracle {oracle:.6f}); min over m<=4 {smallest:.4f}")
    assert ok


def test_c10_biased_bob_detection(acceptance_log):
    (bias,) = _run(bob=BobStrategy.BIASED_STATE, bias_policy=BiasPolicy.ALL_ZERO_PLUS, trials=10_000, seed=10)
    (honest,) = _run(bob=BobStrategy.BIASED_STATE, bias_policy=BiasPolicy.HONEST, trials=10_000, seed=100)
    abort = bias.reject_mixing / bias.trials
    false_abort = honest.reject_mixing / honest.trials
    ok = DEFAULT_PARAMS.p - DEFAULT_PARAMS.n == 48 and abort >= 0.999 and false_abort < 1e-3
    _record(acceptance_log, 10, ok, f"biased Bob aborted {abort:.4f} (need >= 0.999); honest false abort {false_abort:.1e}")
    assert ok


def test_c11_decoy_substitution(acceptance_log):
    params = DEFAULT_PARAMS
    n = 100_000
    counts = {}
    for i in range(n):
        o = attack_decoy_substitution(params, trial_rng(11, 0, i))
        counts[o.result] = counts.get(o.result, 0) + 1
    verified = sum(v for k, v in counts.items() if k.value != "abort-mixing")
    rejected = sum(v for k, v in counts.items() if k.value not in ("accept", "abort-mixing"))
    only_crosscheck = all(k.value in ("accept", "abort-mixing", "reject-crosscheck") for k in counts)
    detection = rejected / verified
    oracle = exact_decoy_substitution_detection(params.m)
    ok = only_crosscheck and _within(detection, oracle, _binomial_err(oracle, verified))
    _record(
        acceptance_log, 11, ok,
        f"decoy substitution detection {detection:.4f} vs enumeration {oracle:.4f}, "
        f"stated figure {quoted_decoy_substitution_detection(params.m):.4f} (reported only); cross-check only: {only_crosscheck}",
    )
    assert ok


def test_c12_determinism(acceptance_log, capsys):
    argv = ["--alice", "zeta-p", "--sweep", "m=2,4", "--trials", "2000", "--seed", "12"]
    outs = []
    for jobs in ("1", "1", "2", "4"):
        assert cli_main(argv + ["--jobs", jobs]) == 0
        outs.append(capsys.readouterr().out)
    ok = len(set(outs)) == 1
    _record(acceptance_log, 12, ok, f"CSV identical across repeats and --jobs 1/2/4: {ok}")
    assert ok
