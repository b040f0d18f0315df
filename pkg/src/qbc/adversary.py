"""Cheating strategies for both parties, one Monte Carlo trial per call.

Every ``attack_*`` function plays a single run against an honest
counterpart and returns a :class:`TrialOutcome`; :class:`CheatStats`
aggregates outcomes. ``exact_*`` functions give the corresponding
probabilities by exhaustive enumeration so Monte Carlo estimates can be
reported next to them.

Alice's per-bit success ``beta(b)`` is the probability that she opens ``b``
successfully when ``b`` is the bit she *wants* to open, drawn uniformly and
independently at unveiling time. Strategies that cannot steer the opened bit
(the zeta attacks) only succeed when their randomness happens to agree.
"""

from __future__ import annotations

import enum
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .protocol import (
    BobPreparation,
    Commitment,
    DecoyPolicy,
    Evidence,
    ProtocolError,
    ProtocolParams,
    Unveil,
    UnveilPrime,
    VerificationResult,
    alice_insert_decoys,
    alice_mixing_test,
    alice_prepare_prime,
    bob_prepare,
    check_evidence,
    check_evidence_prime,
    commit_p,
    make_decoy,
    mask_from_positions,
    ones,
    random_bits,
    run_honest,
    run_honest_prime,
    weight_mask,
)
from .qstate import (
    SQRT_HALF,
    Basis,
    DenseBlock,
    QuantumSystem,
    basis_for_bit,
    build_zeta,
    prepare_bb84,
)


class AliceStrategy(enum.Enum):
    HONEST = "honest"
    BASIS_FLIP = "basis-flip"
    DECOY_SUBSTITUTION = "decoy-sub"
    DEFERRED_MEASUREMENT = "deferred"
    WEAK_ZETA_PRIME = "zeta-prime"
    WEAK_ZETA_P = "zeta-p"


class BobStrategy(enum.Enum):
    HONEST = "honest"
    BIASED_STATE = "bob-bias"
    INFORMED_MARKED = "bob-informed-marked"
    INFORMED_NONDECOY = "bob-informed-nondecoy"
    ENTANGLED_PROBE = "bob-probe"
    UNINFORMED_GUESS = "bob-uninformed"


# Informed strategies are handed Q (and x) directly: calibration, not a physical attack.
NON_PHYSICAL = frozenset({BobStrategy.INFORMED_MARKED, BobStrategy.INFORMED_NONDECOY})


class MeasurementPolicy(enum.Enum):
    """How Alice produces R_x from the marked qubits before a zeta attack on P."""

    PLUS = "plus"
    CROSS = "cross"
    RANDOM = "random"
    FIXED_GUESS = "fixed"


class BiasPolicy(enum.Enum):
    HONEST = "honest"
    ALL_ZERO_PLUS = "all-zero-plus"
    ALL_ZERO_CROSS = "all-zero-cross"
    BASIS_DEPENDENT = "basis-dependent"


@dataclass
class TrialOutcome:
    success: bool
    result: Optional[VerificationResult] = None
    target: Optional[int] = None
    unveiled: Optional[int] = None
    # passed the marked-outcome check (everything before the cross-check)
    passed_outcome: bool = False
    info: dict = field(default_factory=dict)


def _passed_outcome(result: VerificationResult) -> bool:
    return result in (VerificationResult.ACCEPT, VerificationResult.REJECT_CROSSCHECK)


def _random_basis(rng: random.Random) -> Basis:
    return Basis.CROSS if rng.getrandbits(1) else Basis.PLUS


# ------------------------------------------------------------------ statistics


@dataclass
class CheatStats:
    trials: int = 0
    successes: int = 0
    target_trials: list[int] = field(default_factory=lambda: [0, 0])
    target_successes: list[int] = field(default_factory=lambda: [0, 0])

    def add(self, outcome: TrialOutcome) -> None:
        self.trials += 1
        self.successes += bool(outcome.success)
        if outcome.target is not None:
            self.target_trials[outcome.target] += 1
            self.target_successes[outcome.target] += bool(outcome.success)

    def merge(self, other: "CheatStats") -> "CheatStats":
        return CheatStats(
            self.trials + other.trials,
            self.successes + other.successes,
            [a + b for a, b in zip(self.target_trials, other.target_trials)],
            [a + b for a, b in zip(self.target_successes, other.target_successes)],
        )

    @classmethod
    def of(cls, outcomes: Iterable[TrialOutcome]) -> "CheatStats":
        stats = cls()
        for o in outcomes:
            stats.add(o)
        return stats

    @property
    def estimate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def stderr(self) -> float:
        return binomial_stderr(self.estimate, self.trials)

    def beta(self, b: int) -> Optional[float]:
        n = self.target_trials[b]
        return self.target_successes[b] / n if n else None

    def beta_stderr(self, b: int) -> Optional[float]:
        n = self.target_trials[b]
        return binomial_stderr(self.beta(b), n) if n else None

    @property
    def beta0(self) -> Optional[float]:
        return self.beta(0)

    @property
    def beta1(self) -> Optional[float]:
        return self.beta(1)

    @property
    def lam(self) -> Optional[float]:
        if self.beta0 is None or self.beta1 is None:
            return None
        return compute_lambda((self.beta0, self.beta_stderr(0)), (self.beta1, self.beta_stderr(1)))[0]

    @property
    def lam_stderr(self) -> Optional[float]:
        if self.beta0 is None or self.beta1 is None:
            return None
        return compute_lambda((self.beta0, self.beta_stderr(0)), (self.beta1, self.beta_stderr(1)))[1]


def binomial_stderr(p: float, n: int) -> float:
    if not n:
        return float("nan")
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def compute_lambda(beta0, beta1) -> tuple[float, float]:
    """``min(beta0, beta1)`` with the standard error of the smaller estimate.

    Each argument is a bare estimate or an ``(estimate, stderr)`` pair.
    """
    if beta0 is None or beta1 is None:
        raise ValueError("both beta estimates are required")
    pairs = [b if isinstance(b, tuple) else (b, 0.0) for b in (beta0, beta1)]
    est, err = min(pairs, key=lambda p: p[0])
    return est, err


# ------------------------------------------------------------------ Alice


def honest_trial(params, rng, protocol="p", decoy_policy=DecoyPolicy.BB84, threshold=4.0) -> TrialOutcome:
    b = rng.getrandbits(1)
    if protocol == "pprime":
        _, result = run_honest_prime(params, b, rng, threshold)
    else:
        _, result = run_honest(params, b, rng, decoy_policy, threshold)
    return TrialOutcome(result is VerificationResult.ACCEPT, result, unveiled=b, passed_outcome=_passed_outcome(result))


def attack_basis_flip(params, rng, protocol="p", decoy_policy=DecoyPolicy.BB84, threshold=4.0) -> TrialOutcome:
    """Commit 0 honestly, then open 1 with the same x and R_x."""
    if protocol == "pprime":
        _, result = run_honest_prime(params, 0, rng, threshold, unveil_b=1)
    else:
        _, result = run_honest(params, 0, rng, decoy_policy, threshold, unveil_b=1)
    return TrialOutcome(result is VerificationResult.ACCEPT, result, target=1, unveiled=1, passed_outcome=_passed_outcome(result))


def attack_decoy_substitution(params, rng, decoy_policy=DecoyPolicy.BB84, threshold=4.0) -> TrialOutcome:
    """Commit 0, plant |R_x>_x decoys next to the marked qubits, open 1 pointing at them.

    Alice lays out ``n + m`` occupied slots so that each planted decoy sits
    right after the marked survivor it replaces; relabelling then keeps the
    survivor order Bob derives from ``P``.
    """
    m, n, q = params.m, params.n, params.q
    if q < n + m:
        raise ProtocolError(f"decoy substitution needs q >= n + m decoy room, got q={q}")
    prep, world, anon = bob_prepare(params, rng)
    passed, P, survivors = alice_mixing_test(world, anon, params, threshold, rng)
    if not passed:
        r = VerificationResult.ABORT_MIXING
        return TrialOutcome(False, r, target=1, unveiled=1)
    x = weight_mask(n, m, rng)
    r_x = tuple(world.measure(survivors[k], Basis.PLUS, rng) for k in ones(x))

    occupied = sorted(rng.sample(range(q), n + m))
    slots = iter(occupied)
    register: list[Optional[int]] = [None] * q
    true_slots, opened_slots = [], []
    planted = iter(r_x)
    for k in range(n):
        s = next(slots)
        register[s] = survivors[k]
        true_slots.append(s)
        if x[k]:
            d = next(slots)
            register[d] = world.add(prepare_bb84(next(planted), Basis.CROSS))
            opened_slots.append(d)
        else:
            opened_slots.append(s)
    for s in range(q):
        if register[s] is None:
            register[s] = world.add(make_decoy(decoy_policy, rng))
    Q_open = mask_from_positions(q, opened_slots)
    verdict = check_evidence(Evidence(P, r_x, register, world), Unveil(Q_open, 1, x), prep, params, rng)
    info = {}
    if verdict.result is VerificationResult.REJECT_CROSSCHECK:
        origin = ones(P)
        info["crosscheck_basis"] = prep.eta[origin[verdict.position]]
    return TrialOutcome(
        verdict.result is VerificationResult.ACCEPT,
        verdict.result,
        target=1,
        unveiled=1,
        passed_outcome=_passed_outcome(verdict.result),
        info=info,
    )


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def attack_deferred_measurement(params, rng, ancilla=False, decoy_policy=DecoyPolicy.BB84, threshold=4.0) -> TrialOutcome:
    """Announce a random R_x without measuring; open a uniformly chosen bit.

    With ``ancilla`` each marked qubit is first entangled with a fresh
    ancilla by a CNOT that Alice keeps, the purified form of postponing the
    measurement.
    """
    prep, world, anon = bob_prepare(params, rng)
    passed, P, survivors = alice_mixing_test(world, anon, params, threshold, rng)
    target = rng.getrandbits(1)
    if not passed:
        return TrialOutcome(False, VerificationResult.ABORT_MIXING, target=target, unveiled=target)
    x = weight_mask(params.n, params.m, rng)
    r_x = random_bits(params.m, rng)
    if ancilla:
        for k in ones(x):
            a = world.add(prepare_bb84(0, Basis.PLUS))
            world.apply([survivors[k], a], CNOT)
    Q, register = alice_insert_decoys(world, survivors, params, rng, decoy_policy)
    verdict = check_evidence(Evidence(P, r_x, register, world), Unveil(Q, target, x), prep, params, rng)
    return TrialOutcome(
        verdict.result is VerificationResult.ACCEPT,
        verdict.result,
        target=target,
        unveiled=target,
        passed_outcome=_passed_outcome(verdict.result),
    )


def _zeta_payload(world: QuantumSystem, r_x, cap: int) -> tuple[int, list[int]]:
    labels = world.add_block(build_zeta(r_x, cap))
    return labels[0], labels[1:]


def attack_weak_zeta_prime(params, rng, control_basis=Basis.PLUS, threshold=4.0) -> TrialOutcome:
    """Zeta attack on P': send the payload of |zeta> as the marked qubits, open the control outcome."""
    prep, world, anon = bob_prepare(params, rng)
    target = rng.getrandbits(1)
    passed, P, survivors = alice_mixing_test(world, anon, params, threshold, rng)
    if not passed:
        return TrialOutcome(False, VerificationResult.ABORT_MIXING, target=target)
    holder = {}

    def zeta_marked(w, r_x):
        holder["control"], payload = _zeta_payload(w, r_x, w.max_block)
        return payload

    x, r_x, pi, register = alice_prepare_prime(world, survivors, params, rng, zeta_marked)
    c = world.measure(holder["control"], control_basis, rng)
    verdict = check_evidence_prime(Evidence(P, r_x, register, world), UnveilPrime(c, x, pi), prep, params, rng)
    accepted = verdict.result is VerificationResult.ACCEPT
    return TrialOutcome(
        accepted and c == target,
        verdict.result,
        target=target,
        unveiled=c,
        passed_outcome=_passed_outcome(verdict.result),
        info={"accepted": accepted},
    )


def _policy_outcomes(world, qubits, policy: MeasurementPolicy, rng) -> tuple[int, ...]:
    if policy is MeasurementPolicy.FIXED_GUESS:
        return tuple(0 for _ in qubits)
    out = []
    for i in qubits:
        if policy is MeasurementPolicy.PLUS:
            basis = Basis.PLUS
        elif policy is MeasurementPolicy.CROSS:
            basis = Basis.CROSS
        else:
            basis = _random_basis(rng)
        out.append(world.measure(i, basis, rng))
    return tuple(out)


def attack_weak_zeta_on_p(
    params,
    rng,
    policy: MeasurementPolicy = MeasurementPolicy.PLUS,
    decoy_policy=DecoyPolicy.BB84,
    threshold=4.0,
) -> TrialOutcome:
    """Zeta attack on P: obtain R_x by ``policy``, then send |zeta>'s payload as the marked qubits."""
    prep, world, anon = bob_prepare(params, rng)
    target = rng.getrandbits(1)
    passed, P, survivors = alice_mixing_test(world, anon, params, threshold, rng)
    if not passed:
        return TrialOutcome(False, VerificationResult.ABORT_MIXING, target=target)
    x = weight_mask(params.n, params.m, rng)
    marked = ones(x)
    r_x = _policy_outcomes(world, [survivors[k] for k in marked], policy, rng)
    origin = ones(P)
    bivalid = all(r_x[j] == prep.r_b[origin[k]] for j, k in enumerate(marked))
    control, payload = _zeta_payload(world, r_x, world.max_block)
    seq = list(survivors)
    for j, k in enumerate(marked):
        seq[k] = payload[j]
    Q, register = alice_insert_decoys(world, seq, params, rng, decoy_policy)
    c = world.measure(control, Basis.PLUS, rng)
    verdict = check_evidence(Evidence(P, r_x, register, world), Unveil(Q, c, x), prep, params, rng)
    accepted = verdict.result is VerificationResult.ACCEPT
    return TrialOutcome(
        accepted and c == target,
        verdict.result,
        target=target,
        unveiled=c,
        passed_outcome=_passed_outcome(verdict.result),
        info={"bivalid": bivalid, "accepted": accepted},
    )


# ------------------------------------------------------------------ Bob


def biased_prepare(policy: BiasPolicy):
    """A replacement for :func:`bob_prepare` that sends a biased anonymous state."""

    def prepare(params, rng, world=None):
        if policy is BiasPolicy.HONEST:
            return bob_prepare(params, rng, world)
        world = QuantumSystem() if world is None else world
        if policy is BiasPolicy.ALL_ZERO_PLUS:
            eta = (Basis.PLUS,) * params.p
            r_b = (0,) * params.p
        elif policy is BiasPolicy.ALL_ZERO_CROSS:
            eta = (Basis.CROSS,) * params.p
            r_b = (0,) * params.p
        else:
            # + qubits always carry 0, x qubits always carry 1
            eta = tuple(_random_basis(rng) for _ in range(params.p))
            r_b = tuple(0 if e is Basis.PLUS else 1 for e in eta)
        register = [world.add(prepare_bb84(bit, e)) for bit, e in zip(r_b, eta)]
        return BobPreparation(r_b, eta), world, register

    return prepare


def attack_bob_biased(params, rng, policy: BiasPolicy = BiasPolicy.ALL_ZERO_PLUS, threshold=4.0) -> TrialOutcome:
    """Bob sends a biased anonymous state; success means Alice's mixing test misses it."""
    _, world, anon = biased_prepare(policy)(params, rng)
    passed, _, _ = alice_mixing_test(world, anon, params, threshold, rng)
    result = None if passed else VerificationResult.ABORT_MIXING
    return TrialOutcome(passed, result)


def _guess_informed_marked(c: Commitment, rng) -> int:
    basis = _random_basis(rng)
    slots = ones(c.Q)
    outcomes = tuple(c.world.measure(c.register[slots[k]], basis, rng) for k in ones(c.x))
    same = outcomes == c.r_x
    return (0 if basis is Basis.PLUS else 1) ^ (0 if same else 1)


def _guess_informed_nondecoy(c: Commitment, rng) -> int:
    origin = ones(c.P)
    for k, s in enumerate(ones(c.Q)):
        i = origin[k]
        if c.world.measure(c.register[s], c.prep.eta[i], rng) != c.prep.r_b[i]:
            # a departure means Alice measured this qubit in the other basis
            return 0 if c.prep.eta[i] is Basis.CROSS else 1
    return rng.getrandbits(1)


def _guess_uninformed(c: Commitment, rng) -> int:
    """Measure every returned qubit in a random basis and compare bit balance per basis.

    Marked qubits reproduce R_x in the commit basis, so the basis whose
    outcomes lean towards R_x's majority bit is guessed as the commit basis.
    """
    lean = [0, 0]
    for idx in c.register:
        basis = _random_basis(rng)
        bit = c.world.measure(idx, basis, rng)
        lean[0 if basis is Basis.PLUS else 1] += 1 if bit == 0 else -1
    majority = sum(1 if v == 0 else -1 for v in c.r_x)
    if majority == 0 or lean[0] == lean[1]:
        return rng.getrandbits(1)
    score0, score1 = lean[0] * majority, lean[1] * majority
    return 0 if score0 > score1 else 1


BELL = np.array([SQRT_HALF, 0, 0, SQRT_HALF], dtype=complex)


def probe_prepare(kept: list[int]):
    """Bob's preparation for the entangled probe: halves of |Phi+> pairs."""

    def prepare(params, rng, world=None):
        world = QuantumSystem() if world is None else world
        register = []
        for _ in range(params.p):
            sent, keep = world.add_block(DenseBlock(BELL))
            register.append(sent)
            kept.append(keep)
        # no classical description exists; the record is a placeholder
        return BobPreparation((0,) * params.p, (Basis.PLUS,) * params.p), world, register

    return prepare


def _guess_probe(c: Commitment, kept: list[int], rng) -> int:
    """Pair a guessed set of return slots with kept halves and test + correlations."""
    params_q = len(c.register)
    n = len(c.survivors)
    guess = ones(weight_mask(params_q, n, rng))
    origin = ones(c.P)
    correlated = True
    for k, s in enumerate(guess):
        a = c.world.measure(c.register[s], Basis.PLUS, rng)
        b = c.world.measure(kept[origin[k]], Basis.PLUS, rng)
        if a != b:
            correlated = False
    return 0 if correlated else 1


def attack_bob_distinguish(
    params,
    strategy: BobStrategy,
    rng,
    decoy_policy=DecoyPolicy.BB84,
    threshold=4.0,
) -> TrialOutcome:
    """Honest Alice commits a uniform bit; Bob guesses it before the opening."""
    b = rng.getrandbits(1)
    kept: list[int] = []
    bob = probe_prepare(kept) if strategy is BobStrategy.ENTANGLED_PROBE else None
    c = commit_p(params, b, rng, decoy_policy, threshold, bob=bob)
    if c.aborted:
        guess = rng.getrandbits(1)
        return TrialOutcome(guess == b, VerificationResult.ABORT_MIXING, target=b)
    if strategy is BobStrategy.INFORMED_MARKED:
        guess = _guess_informed_marked(c, rng)
    elif strategy is BobStrategy.INFORMED_NONDECOY:
        guess = _guess_informed_nondecoy(c, rng)
    elif strategy is BobStrategy.ENTANGLED_PROBE:
        guess = _guess_probe(c, kept, rng)
    elif strategy is BobStrategy.UNINFORMED_GUESS:
        guess = _guess_uninformed(c, rng)
    else:
        guess = rng.getrandbits(1)
    return TrialOutcome(guess == b, target=b, info={"guess": guess})


# ------------------------------------------------------------------ exact values


def _marked_position_cases():
    """Bob's (eta, R_B) for one marked qubit, each with probability 1/4."""
    return [(e, r) for e in (Basis.PLUS, Basis.CROSS) for r in (0, 1)]


def _born(bit_measured: int, basis: Basis, prepared_bit: int, prepared_basis: Basis) -> float:
    if basis is prepared_basis:
        return 1.0 if bit_measured == prepared_bit else 0.0
    return 0.5


def exact_decoy_substitution_detection(m: int) -> float:
    """Probability Bob rejects the decoy-substitution opening, by full enumeration.

    Enumerates eta'' and R''_B over the marked qubits and Alice's honest
    + outcomes R_x. The planted |R_x>_x qubits always pass the outcome check,
    so acceptance is exactly the event that R_x agrees with R''_B on every
    x-prepared position.
    """
    accept = 0.0
    for config in itertools.product(_marked_position_cases(), repeat=m):
        for r_x in itertools.product((0, 1), repeat=m):
            p = 0.25**m
            for (e, r), bit in zip(config, r_x):
                p *= _born(bit, Basis.PLUS, r, e)
            if p and all(bit == r for (e, r), bit in zip(config, r_x) if e is Basis.CROSS):
                accept += p
    return 1.0 - accept


def quoted_decoy_substitution_detection(m: int) -> float:
    return 1.0 - 2.0**-m


def exact_basis_flip_acceptance(m: int) -> tuple[float, float]:
    """(pass outcome check, pass all checks) when a 0-commitment is opened as 1."""
    pass_c = accept = 0.0
    for config in itertools.product(_marked_position_cases(), repeat=m):
        for r_x in itertools.product((0, 1), repeat=m):
            p = 0.25**m
            for (e, r), bit in zip(config, r_x):
                p *= _born(bit, Basis.PLUS, r, e)
            if not p:
                continue
            # marked qubits now hold |R_x>_+; Bob measures them in x
            p_c = p * 0.5**m
            pass_c += p_c
            if all(bit == r for (e, r), bit in zip(config, r_x) if e is Basis.CROSS):
                accept += p_c
    return pass_c, accept


def exact_zeta_on_p(m: int, policy: MeasurementPolicy) -> dict:
    """beta(0), beta(1) and the bi-valid frequency of the zeta attack on P."""
    beta = [0.0, 0.0]
    bivalid = 0.0
    for config in itertools.product(_marked_position_cases(), repeat=m):
        for bases in itertools.product((Basis.PLUS, Basis.CROSS), repeat=m):
            if policy is MeasurementPolicy.PLUS and any(b is not Basis.PLUS for b in bases):
                continue
            if policy is MeasurementPolicy.CROSS and any(b is not Basis.CROSS for b in bases):
                continue
            p_bases = 0.5**m if policy is MeasurementPolicy.RANDOM else 1.0
            if policy is MeasurementPolicy.FIXED_GUESS:
                if any(b is not Basis.PLUS for b in bases):
                    continue
                outcomes = [((0,) * m, 1.0)]
            else:
                outcomes = []
                for r_x in itertools.product((0, 1), repeat=m):
                    p = 1.0
                    for (e, r), bit, mb in zip(config, r_x, bases):
                        p *= _born(bit, mb, r, e)
                    if p:
                        outcomes.append((r_x, p))
            for r_x, p_out in outcomes:
                p = 0.25**m * p_bases * p_out
                if all(bit == r for (e, r), bit in zip(config, r_x)):
                    bivalid += p
                for c in (0, 1):
                    cb = basis_for_bit(c)
                    if all(bit == r for (e, r), bit in zip(config, r_x) if e is cb):
                        beta[c] += 0.5 * p
    return {"beta0": beta[0], "beta1": beta[1], "lambda": min(beta), "bivalid": bivalid}


def exact_informed_marked(m: int) -> float:
    """Correct-guess probability of the informed-marked Bob (uniform measuring basis)."""
    # right basis: outcomes reproduce R_x; wrong basis: they coincide with prob 2^-m
    return 0.5 * 1.0 + 0.5 * (1.0 - 2.0**-m)


def exact_informed_nondecoy(m: int) -> float:
    """Correct-guess probability of the informed-non-decoy Bob.

    A marked qubit prepared in the commit basis never departs; one prepared
    in the other basis departs with probability 1/2. Without a departure Bob
    guesses uniformly.
    """
    silent = 0.0
    for config in itertools.product((Basis.PLUS, Basis.CROSS), repeat=m):
        silent += 0.5**m * 0.5 ** sum(1 for e in config if e is not Basis.PLUS)
    return 1.0 - 0.5 * silent


def quoted_informed_marked(m: int) -> float:
    return 1.0 - 2.0**-m


def quoted_informed_nondecoy(m: int) -> float:
    return 1.0 - 2.0 ** (-m / 2)
