import math

import pytest

from conftest import sigma_band
from qbc.adversary import (
    AliceStrategy,
    BiasPolicy,
    BobStrategy,
    CheatStats,
    MeasurementPolicy,
    TrialOutcome,
    attack_basis_flip,
    attack_bob_biased,
    attack_bob_distinguish,
    attack_decoy_substitution,
    attack_deferred_measurement,
    attack_weak_zeta_on_p,
    attack_weak_zeta_prime,
    compute_lambda,
    exact_basis_flip_acceptance,
    exact_decoy_substitution_detection,
    exact_informed_marked,
    exact_informed_nondecoy,
    exact_zeta_on_p,
    quoted_decoy_substitution_detection,
)
from qbc.protocol import ProtocolError, ProtocolParams, VerificationResult, commit_p
from qbc.qstate import Basis, basis_for_bit


def _run(fn, n, rng):
    return CheatStats.of(fn(rng) for _ in range(n))


# ---------------------------------------------------------------- closed forms


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_exact_oracles_match_closed_forms(m):
    assert exact_decoy_substitution_detection(m) == pytest.approx(1 - 0.75**m, abs=1e-12)
    pass_c, accept = exact_basis_flip_acceptance(m)
    assert pass_c == pytest.approx(2.0**-m, abs=1e-12)
    assert accept == pytest.approx(0.375**m, abs=1e-12)
    for policy in (MeasurementPolicy.PLUS, MeasurementPolicy.CROSS, MeasurementPolicy.FIXED_GUESS):
        z = exact_zeta_on_p(m, policy)
        assert z["lambda"] == pytest.approx(0.5 * 0.75**m, abs=1e-12)
    z = exact_zeta_on_p(m, MeasurementPolicy.RANDOM)
    assert z["lambda"] == pytest.approx(0.5 * 0.875**m, abs=1e-12)
    assert exact_zeta_on_p(m, MeasurementPolicy.PLUS)["bivalid"] == pytest.approx(0.75**m)
    assert exact_zeta_on_p(m, MeasurementPolicy.FIXED_GUESS)["bivalid"] == pytest.approx(2.0**-m)
    assert exact_informed_marked(m) == pytest.approx(1 - 2.0 ** -(m + 1))
    assert exact_informed_nondecoy(m) == pytest.approx(1 - 0.5 * 0.75**m)


def test_quoted_detection_figure_differs_from_enumeration():
    for m in (2, 4, 6):
        assert quoted_decoy_substitution_detection(m) > exact_decoy_substitution_detection(m)


def test_compute_lambda_examples():
    assert compute_lambda(1.0, 1.0)[0] == 1.0
    assert compute_lambda(0.5, 0.5)[0] == 0.5
    assert compute_lambda(1.0, 0.0)[0] == 0.0
    assert compute_lambda((0.3, 0.01), (0.2, 0.02)) == (0.2, 0.02)
    with pytest.raises(ValueError):
        compute_lambda(None, 0.5)


def test_cheat_stats_merge_and_betas():
    outs = [TrialOutcome(bool(i % 3), target=i % 2) for i in range(30)]
    whole = CheatStats.of(outs)
    merged = CheatStats.of(outs[:11]).merge(CheatStats.of(outs[11:]))
    assert whole == merged
    assert whole.trials == 30 and whole.successes == 20
    assert whole.beta0 == pytest.approx(10 / 15)
    assert whole.lam == min(whole.beta0, whole.beta1)
    assert whole.stderr == pytest.approx(math.sqrt(whole.estimate * (1 - whole.estimate) / 30))


# ---------------------------------------------------------------- Alice


def test_basis_flip_mc_vs_exact(rng):
    params = ProtocolParams(2, 8, 32, 32)
    n = 20_000
    outs = [attack_basis_flip(params, rng) for _ in range(n)]
    pass_c, accept = exact_basis_flip_acceptance(2)
    assert sigma_band(sum(o.passed_outcome for o in outs) / n, pass_c, n)
    assert sigma_band(sum(o.success for o in outs) / n, accept, n)


def test_decoy_substitution_detection_path(rng):
    params = ProtocolParams(2, 8, 32, 32)
    n = 20_000
    rejected = 0
    for _ in range(n):
        o = attack_decoy_substitution(params, rng)
        assert o.result in (VerificationResult.ACCEPT, VerificationResult.REJECT_CROSSCHECK)
        if o.result is VerificationResult.REJECT_CROSSCHECK:
            rejected += 1
            assert o.info["crosscheck_basis"] is basis_for_bit(1)
    assert sigma_band(rejected / n, exact_decoy_substitution_detection(2), n)


def test_decoy_substitution_needs_room(rng):
    with pytest.raises(ProtocolError):
        attack_decoy_substitution(ProtocolParams(4, 16, 64, 18), rng)


def test_deferred_analytic_single_marked(rng):
    params = ProtocolParams(1, 4, 16, 16)
    n = 20_000
    outs = [attack_deferred_measurement(params, rng) for _ in range(n)]
    assert sigma_band(sum(o.passed_outcome for o in outs) / n, 0.5, n)
    for o in outs:
        assert o.success <= o.passed_outcome


@pytest.mark.parametrize("ancilla", [False, True])
def test_deferred_pass_rate(ancilla, rng):
    params = ProtocolParams(2, 8, 32, 32)
    n = 20_000
    outs = [attack_deferred_measurement(params, rng, ancilla=ancilla) for _ in range(n)]
    passed = sum(o.passed_outcome for o in outs)
    assert sigma_band(passed / n, 0.25, n)
    assert sum(o.success for o in outs) <= passed


def test_zeta_prime_conditional_acceptance(rng):
    params = ProtocolParams(2, 8, 32, 32)
    outs = [attack_weak_zeta_prime(params, rng) for _ in range(2_000)]
    assert all(o.info["accepted"] for o in outs)
    stats = CheatStats.of(outs)
    assert sigma_band(stats.lam, 0.5, 1_000)


def test_zeta_prime_cross_control_no_better(rng):
    params = ProtocolParams(2, 8, 32, 32)
    n = 5_000
    plus = CheatStats.of(attack_weak_zeta_prime(params, rng) for _ in range(n))
    cross = CheatStats.of(attack_weak_zeta_prime(params, rng, control_basis=Basis.CROSS) for _ in range(n))
    assert cross.lam <= plus.lam + 4 * math.hypot(plus.lam_stderr, cross.lam_stderr)


@pytest.mark.parametrize("policy", list(MeasurementPolicy))
def test_zeta_on_p_mc_vs_exact(policy, rng):
    params = ProtocolParams(2, 8, 32, 32)
    n = 10_000
    outs = [attack_weak_zeta_on_p(params, rng, policy) for _ in range(n)]
    exact = exact_zeta_on_p(2, policy)
    stats = CheatStats.of(outs)
    for b in (0, 1):
        assert sigma_band(stats.beta(b), exact[f"beta{b}"], stats.target_trials[b])
    assert sigma_band(sum(o.info["bivalid"] for o in outs) / n, exact["bivalid"], n)


def test_zeta_on_p_decays_in_m(rng):
    lams = []
    for m in (2, 4, 6):
        stats = _run(lambda r: attack_weak_zeta_on_p(ProtocolParams(m, 16, 64, 64), r), 4_000, rng)
        lams.append((stats.lam, stats.lam_stderr))
    for (a, ea), (b, eb) in zip(lams, lams[1:]):
        assert b < a + 4 * eb


@pytest.mark.slow
@pytest.mark.parametrize(
    "trial",
    [
        lambda p, r: attack_basis_flip(p, r),
        lambda p, r: attack_decoy_substitution(p, r),
        lambda p, r: attack_deferred_measurement(p, r),
        lambda p, r: attack_weak_zeta_on_p(p, r),
    ],
    ids=["basis-flip", "decoy-sub", "deferred", "zeta-p"],
)
def test_attacks_on_p_decay(trial, rng):
    est = []
    for m in (2, 4, 6):
        stats = _run(lambda r: trial(ProtocolParams(m, 16, 64, 64), r), 4_000, rng)
        est.append((stats.estimate, stats.stderr))
    for (a, _), (b, eb) in zip(est, est[1:]):
        assert b < a + 4 * eb


# ---------------------------------------------------------------- Bob


@pytest.mark.parametrize(
    "policy, aborts",
    [
        (BiasPolicy.ALL_ZERO_PLUS, True),
        (BiasPolicy.ALL_ZERO_CROSS, True),
        (BiasPolicy.HONEST, False),
    ],
)
def test_biased_bob(policy, aborts, rng):
    params = ProtocolParams(4, 16, 64, 64)
    outs = [attack_bob_biased(params, rng, policy) for _ in range(1_000)]
    escaped = sum(o.success for o in outs)
    assert (escaped == 0) if aborts else (escaped >= 999)


def test_basis_dependent_bias_mostly_escapes(rng):
    # each test group leans only g/4 towards 0, inside the 4-sigma window for g = 24
    params = ProtocolParams(4, 16, 64, 64)
    n = 2_000
    escaped = sum(attack_bob_biased(params, rng, BiasPolicy.BASIS_DEPENDENT).success for _ in range(n))
    assert 0.5 < escaped / n < 1.0


def test_bob_preparation_is_not_mutated(rng):
    params = ProtocolParams(2, 8, 32, 32)
    for _ in range(100):
        c = commit_p(params, rng.getrandbits(1), rng)
        before = (c.prep.r_b, c.prep.eta)
        with pytest.raises(AttributeError):
            c.prep.r_b = ()
        attack_bob_distinguish(params, BobStrategy.INFORMED_NONDECOY, rng)
        assert (c.prep.r_b, c.prep.eta) == before


@pytest.mark.parametrize(
    "strategy, expected",
    [
        (BobStrategy.INFORMED_MARKED, exact_informed_marked(2)),
        (BobStrategy.INFORMED_NONDECOY, exact_informed_nondecoy(2)),
        (BobStrategy.HONEST, 0.5),
    ],
)
def test_distinguishers_match_oracles(strategy, expected, rng):
    params = ProtocolParams(2, 8, 32, 32)
    n = 10_000
    stats = _run(lambda r: attack_bob_distinguish(params, strategy, r), n, rng)
    assert sigma_band(stats.estimate, expected, n)


def test_entangled_probe_advantage_shrinks_with_decoys(rng):
    # the kept Bell halves only help when the slot guess lands, which gets rarer as q grows
    n = 4_000
    est = {}
    for q in (4, 10):
        stats = _run(lambda r: attack_bob_distinguish(ProtocolParams(1, 2, 6, q), BobStrategy.ENTANGLED_PROBE, r), n, rng)
        est[q] = (stats.estimate, stats.stderr)
    assert est[4][0] > 0.5 + 4 * est[4][1]
    assert est[10][0] < est[4][0]
    assert est[10][0] < 0.5 + 0.5 / math.comb(10, 2) + 4 * est[10][1] + 0.02


def test_strategy_identifiers_are_stable():
    assert [s.value for s in AliceStrategy] == ["honest", "basis-flip", "decoy-sub", "deferred", "zeta-prime", "zeta-p"]
    assert [s.value for s in BobStrategy] == [
        "honest", "bob-bias", "bob-informed-marked", "bob-informed-nondecoy", "bob-probe", "bob-uninformed",
    ]
