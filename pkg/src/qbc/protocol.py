"""Honest parties and Bob's verifier for the composite-evidence commitment.

Two protocol variants are modelled:

``P``
    Bob sends ``p`` BB84 qubits; Alice tests ``p - n`` of them for random
    mixing, measures ``m`` marked survivors in the commit basis, interleaves
    the ``n`` survivors with ``q - n`` decoys and sends ``(P, R_x, evidence)``.
    She opens with ``(Q, b, x)``.
``P'``
    Alice *prepares* ``|R_x>`` in the commit basis in the marked slots instead
    of measuring, replaces decoys by an order-constrained permutation ``Pi``
    and opens with ``(b, x, Pi)``. There is no cross-check against Bob's
    preparation.

All qubits of one run live in a single :class:`~qbc.qstate.QuantumSystem`
(the "world"); registers passed between the parties are lists of indices
into it. Bit strings and masks are tuples of 0/1 ints.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .qstate import (
    Basis,
    QuantumSystem,
    basis_for_bit,
    bb84_vector,
    density_matrix,
    format_bases,
    haar_qubit,
    parse_bases,
    prepare_bb84,
)

Bits = tuple[int, ...]


class ProtocolError(Exception):
    """A malformed message or inconsistent parameters (not a cheating detection)."""


class ConfigurationError(ProtocolError):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    m: int
    n: int
    p: int
    q: int

    def __post_init__(self):
        for name in ("m", "n", "p", "q"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ConfigurationError(f"{name} must be a non-negative integer, got {value!r}")
        if self.n < 1:
            raise ConfigurationError("n must be at least 1")
        if not self.m <= self.n <= self.p:
            raise ConfigurationError(f"need m <= n <= p, got m={self.m}, n={self.n}, p={self.p}")
        if self.n > self.q:
            raise ConfigurationError(f"need n <= q, got n={self.n}, q={self.q}")
        if (self.p - self.n) % 2:
            raise ConfigurationError(f"p - n must be even, got {self.p - self.n}")

    def check_ordering(self) -> None:
        """Enforce the strict regime 1 <= m < n < p and n < q."""
        if not (1 <= self.m < self.n < self.p and self.n < self.q):
            raise ConfigurationError(
                f"parameters must satisfy 1 <= m < n < p and n < q, got {self}"
            )

    @property
    def test_group(self) -> int:
        return (self.p - self.n) // 2


DEFAULT_PARAMS = ProtocolParams(m=4, n=16, p=64, q=64)


class VerificationResult(enum.Enum):
    ACCEPT = "accept"
    ABORT_MIXING = "abort-mixing"
    REJECT_UNMARKED = "reject-unmarked"
    REJECT_OUTCOME = "reject-outcome"
    REJECT_CROSSCHECK = "reject-crosscheck"


class DecoyPolicy(enum.Enum):
    BB84 = "bb84"
    HAAR = "haar"


@dataclass(frozen=True)
class BobPreparation:
    r_b: Bits
    eta: tuple[Basis, ...]

    def __post_init__(self):
        if len(self.r_b) != len(self.eta):
            raise ValueError("R_B and eta differ in length")


@dataclass
class Evidence:
    """Alice's commitment: survivor mask ``P``, outcome ``R_x`` and a q-qubit register."""

    P: Bits
    r_x: Bits
    register: list[int]
    world: QuantumSystem

    @property
    def width(self) -> int:
        return len(self.register)


@dataclass(frozen=True)
class Unveil:
    Q: Bits
    b: int
    x: Bits


@dataclass(frozen=True)
class UnveilPrime:
    """Opening for P'. ``pi[j]`` is the survivor-sequence position held in evidence slot ``j``."""

    b: int
    x: Bits
    pi: tuple[int, ...]


@dataclass(frozen=True)
class Verdict:
    result: VerificationResult
    # survivor-sequence position of the first failing check, if any
    position: Optional[int] = None


# ------------------------------------------------------------------ mask helpers


def ones(mask: Sequence[int]) -> list[int]:
    return [i for i, v in enumerate(mask) if v]


def weight_mask(length: int, weight: int, rng: random.Random) -> Bits:
    """Uniformly random bit string of the given length and Hamming weight."""
    chosen = set(rng.sample(range(length), weight))
    return tuple(1 if i in chosen else 0 for i in range(length))


def mask_from_positions(length: int, positions: Sequence[int]) -> Bits:
    chosen = set(positions)
    return tuple(1 if i in chosen else 0 for i in range(length))


def random_bits(k: int, rng: random.Random) -> Bits:
    return tuple(rng.getrandbits(1) for _ in range(k))


def bits_str(bits: Sequence[int]) -> str:
    return "".join(str(int(v)) for v in bits)


def parse_bits(text: str) -> Bits:
    if any(ch not in "01" for ch in text):
        raise ValueError(f"not a bit string: {text!r}")
    return tuple(int(ch) for ch in text)


def _check_mask(name: str, mask: Sequence[int], length: int, weight: int) -> None:
    if len(mask) != length:
        raise ProtocolError(f"{name} has length {len(mask)}, expected {length}")
    if any(v not in (0, 1) for v in mask):
        raise ProtocolError(f"{name} is not a bit string")
    if sum(mask) != weight:
        raise ProtocolError(f"{name} has weight {sum(mask)}, expected {weight}")


# ------------------------------------------------------------------ phase 1


def bob_prepare(
    params: ProtocolParams,
    rng: random.Random,
    world: QuantumSystem | None = None,
) -> tuple[BobPreparation, QuantumSystem, list[int]]:
    """Random ``R_B`` and ``eta``, and the product state ``|R_B>_eta`` in ``world``."""
    world = QuantumSystem() if world is None else world
    r_b = random_bits(params.p, rng)
    eta = tuple(Basis.CROSS if rng.getrandbits(1) else Basis.PLUS for _ in range(params.p))
    register = [world.add(prepare_bb84(bit, basis)) for bit, basis in zip(r_b, eta)]
    return BobPreparation(r_b, eta), world, register


# ------------------------------------------------------------------ phase 2


def mixing_bound(group: int, threshold: float) -> float:
    return threshold * math.sqrt(group / 4)


def alice_mixing_test(
    world: QuantumSystem,
    register: Sequence[int],
    params: ProtocolParams,
    threshold: float,
    rng: random.Random,
) -> tuple[bool, Bits, list[int]]:
    """Measure two disjoint random test groups in + and x; returns (passed, P, survivors).

    A group passes when its count of 0 outcomes is within
    ``threshold * sqrt(size / 4)`` of ``size / 2``. Survivors keep their order.
    """
    if len(register) != params.p:
        raise ProtocolError(f"anonymous state has {len(register)} qubits, expected {params.p}")
    g = params.test_group
    tested = rng.sample(range(params.p), 2 * g)
    bound = mixing_bound(g, threshold)
    passed = True
    for group, basis in ((tested[:g], Basis.PLUS), (tested[g:], Basis.CROSS)):
        zeros = sum(1 - world.measure(register[i], basis, rng) for i in group)
        if abs(zeros - g / 2) > bound:
            passed = False
    if not passed:
        return False, (), []
    discarded = set(tested)
    P = tuple(0 if i in discarded else 1 for i in range(params.p))
    survivors = [register[i] for i in range(params.p) if P[i]]
    return True, P, survivors


def alice_commit(
    world: QuantumSystem,
    survivors: Sequence[int],
    b: int,
    params: ProtocolParams,
    rng: random.Random,
) -> tuple[Bits, Bits]:
    """Pick a weight-m mark mask ``x`` and measure marked survivors in the commit basis."""
    if len(survivors) != params.n:
        raise ProtocolError(f"expected {params.n} survivors, got {len(survivors)}")
    basis = basis_for_bit(b)
    x = weight_mask(params.n, params.m, rng)
    r_x = tuple(world.measure(survivors[i], basis, rng) for i in ones(x))
    return x, r_x


def make_decoy(policy: DecoyPolicy, rng: random.Random):
    if policy is DecoyPolicy.HAAR:
        return haar_qubit(rng)
    return prepare_bb84(rng.getrandbits(1), Basis.CROSS if rng.getrandbits(1) else Basis.PLUS)


def alice_insert_decoys(
    world: QuantumSystem,
    survivors: Sequence[int],
    params: ProtocolParams,
    rng: random.Random,
    decoy_policy: DecoyPolicy = DecoyPolicy.BB84,
    Q: Bits | None = None,
) -> tuple[Bits, list[int]]:
    """Interleave survivors (in order) into the set slots of a weight-n mask ``Q``."""
    if len(survivors) != params.n:
        raise ProtocolError(f"expected {params.n} survivors, got {len(survivors)}")
    if Q is None:
        Q = weight_mask(params.q, params.n, rng)
    else:
        _check_mask("Q", Q, params.q, params.n)
    it = iter(survivors)
    evidence = [next(it) if slot else world.add(make_decoy(decoy_policy, rng)) for slot in Q]
    return Q, evidence


# ------------------------------------------------------------------ phase 3


def check_evidence(
    evidence: Evidence,
    unveil: Unveil,
    prep: BobPreparation,
    params: ProtocolParams,
    rng: random.Random,
) -> Verdict:
    """Bob's unveiling checks in order: unmarked state, marked outcomes, cross-check."""
    _check_mask("P", evidence.P, params.p, params.n)
    _check_mask("Q", unveil.Q, params.q, params.n)
    _check_mask("x", unveil.x, params.n, params.m)
    if len(evidence.r_x) != params.m:
        raise ProtocolError(f"R_x has length {len(evidence.r_x)}, expected {params.m}")
    if evidence.width != params.q:
        raise ProtocolError(f"evidence has {evidence.width} qubits, expected {params.q}")
    if unveil.b not in (0, 1):
        raise ProtocolError(f"commit bit must be 0 or 1, got {unveil.b!r}")

    world = evidence.world
    seq = [evidence.register[j] for j in ones(unveil.Q)]
    origin = ones(evidence.P)
    marked = ones(unveil.x)
    marked_set = set(marked)

    for k in range(params.n):
        if k in marked_set:
            continue
        i = origin[k]
        if world.measure(seq[k], prep.eta[i], rng) != prep.r_b[i]:
            return Verdict(VerificationResult.REJECT_UNMARKED, k)

    basis = basis_for_bit(unveil.b)
    for j, k in enumerate(marked):
        if world.measure(seq[k], basis, rng) != evidence.r_x[j]:
            return Verdict(VerificationResult.REJECT_OUTCOME, k)

    for j, k in enumerate(marked):
        i = origin[k]
        if prep.eta[i] is basis and evidence.r_x[j] != prep.r_b[i]:
            return Verdict(VerificationResult.REJECT_CROSSCHECK, k)
    return Verdict(VerificationResult.ACCEPT)


def bob_verify(evidence, unveil, prep, params, rng) -> VerificationResult:
    return check_evidence(evidence, unveil, prep, params, rng).result


def validate_permutation(pi: Sequence[int], x: Sequence[int]) -> None:
    """``pi`` must be a permutation of range(n) keeping marked positions in order."""
    n = len(x)
    if sorted(pi) != list(range(n)):
        raise ProtocolError("Pi is not a permutation of the survivor positions")
    marked_in_slot_order = [k for k in pi if x[k]]
    if marked_in_slot_order != sorted(marked_in_slot_order):
        raise ProtocolError("Pi reorders marked qubits relative to each other")


def sample_permutation(x: Sequence[int], rng: random.Random) -> tuple[int, ...]:
    """Uniform permutation that keeps the marked positions in relative order."""
    n = len(x)
    marked = ones(x)
    unmarked = [k for k in range(n) if not x[k]]
    rng.shuffle(unmarked)
    marked_slots = set(rng.sample(range(n), len(marked)))
    mi, ui = iter(marked), iter(unmarked)
    return tuple(next(mi) if s in marked_slots else next(ui) for s in range(n))


def check_evidence_prime(
    evidence: Evidence,
    unveil: UnveilPrime,
    prep: BobPreparation,
    params: ProtocolParams,
    rng: random.Random,
) -> Verdict:
    """Unmarked-state and marked-outcome checks for P' (no cross-check)."""
    _check_mask("P", evidence.P, params.p, params.n)
    _check_mask("x", unveil.x, params.n, params.m)
    if len(evidence.r_x) != params.m:
        raise ProtocolError(f"R_x has length {len(evidence.r_x)}, expected {params.m}")
    if evidence.width != params.n:
        raise ProtocolError(f"evidence has {evidence.width} qubits, expected {params.n}")
    if unveil.b not in (0, 1):
        raise ProtocolError(f"commit bit must be 0 or 1, got {unveil.b!r}")
    if len(unveil.pi) != params.n:
        raise ProtocolError(f"Pi has length {len(unveil.pi)}, expected {params.n}")
    validate_permutation(unveil.pi, unveil.x)

    world = evidence.world
    seq = [0] * params.n
    for slot, k in enumerate(unveil.pi):
        seq[k] = evidence.register[slot]
    origin = ones(evidence.P)
    marked = ones(unveil.x)

    for k in range(params.n):
        if unveil.x[k]:
            continue
        i = origin[k]
        if world.measure(seq[k], prep.eta[i], rng) != prep.r_b[i]:
            return Verdict(VerificationResult.REJECT_UNMARKED, k)
    basis = basis_for_bit(unveil.b)
    for j, k in enumerate(marked):
        if world.measure(seq[k], basis, rng) != evidence.r_x[j]:
            return Verdict(VerificationResult.REJECT_OUTCOME, k)
    return Verdict(VerificationResult.ACCEPT)


def bob_verify_prime(evidence, unveil, prep, params, rng) -> VerificationResult:
    return check_evidence_prime(evidence, unveil, prep, params, rng).result


# ------------------------------------------------------------------ full runs


@dataclass
class Transcript:
    """Everything both parties said or chose during one run."""

    protocol: str
    params: ProtocolParams
    prep: BobPreparation
    b: int
    P: Bits = ()
    x: Bits = ()
    r_x: Bits = ()
    Q: Bits = ()
    pi: tuple[int, ...] = ()
    result: VerificationResult = VerificationResult.ACCEPT
    position: Optional[int] = None
    notes: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "protocol": self.protocol,
            "params": {"m": self.params.m, "n": self.params.n, "p": self.params.p, "q": self.params.q},
            "R_B": bits_str(self.prep.r_b),
            "eta": format_bases(self.prep.eta),
            "P": bits_str(self.P),
            "x": bits_str(self.x),
            "R_x": bits_str(self.r_x),
            "Q": bits_str(self.Q),
            "b": self.b,
            "result": self.result.value,
        }
        if self.pi:
            rec["Pi"] = list(self.pi)
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), separators=(",", ":"))

    @classmethod
    def from_record(cls, rec: dict) -> "Transcript":
        return cls(
            protocol=rec["protocol"],
            params=ProtocolParams(**rec["params"]),
            prep=BobPreparation(parse_bits(rec["R_B"]), parse_bases(rec["eta"])),
            b=int(rec["b"]),
            P=parse_bits(rec["P"]),
            x=parse_bits(rec["x"]),
            r_x=parse_bits(rec["R_x"]),
            Q=parse_bits(rec["Q"]),
            pi=tuple(rec.get("Pi", ())),
            result=VerificationResult(rec["result"]),
        )

    @classmethod
    def from_json(cls, line: str) -> "Transcript":
        return cls.from_record(json.loads(line))


def write_transcripts(transcripts, fh) -> None:
    for t in transcripts:
        fh.write(t.to_json() + "\n")


def read_transcripts(fh) -> Iterator[Transcript]:
    for line in fh:
        line = line.strip()
        if line:
            yield Transcript.from_json(line)


@dataclass
class Commitment:
    """State of an honest P run after the commitment phase."""

    prep: BobPreparation
    world: QuantumSystem
    anon: list[int]
    P: Bits = ()
    survivors: list[int] = field(default_factory=list)
    x: Bits = ()
    r_x: Bits = ()
    Q: Bits = ()
    register: list[int] = field(default_factory=list)
    aborted: bool = False

    @property
    def evidence(self) -> Evidence:
        return Evidence(self.P, self.r_x, self.register, self.world)


def commit_p(
    params: ProtocolParams,
    b: int,
    rng: random.Random,
    decoy_policy: DecoyPolicy = DecoyPolicy.BB84,
    threshold: float = 4.0,
    bob: Callable | None = None,
) -> Commitment:
    """Phases 1 and 2 of P with an honest Alice.

    ``bob(params, rng)`` may replace Bob's preparation; it must return the
    same triple as :func:`bob_prepare`.
    """
    prep, world, anon = (bob or bob_prepare)(params, rng)
    c = Commitment(prep, world, anon)
    passed, c.P, c.survivors = alice_mixing_test(world, anon, params, threshold, rng)
    if not passed:
        c.aborted = True
        return c
    c.x, c.r_x = alice_commit(world, c.survivors, b, params, rng)
    c.Q, c.register = alice_insert_decoys(world, c.survivors, params, rng, decoy_policy)
    return c


def run_honest(
    params: ProtocolParams,
    b: int,
    rng: random.Random,
    decoy_policy: DecoyPolicy = DecoyPolicy.BB84,
    threshold: float = 4.0,
    unveil_b: int | None = None,
) -> tuple[Transcript, VerificationResult]:
    """One run of P with an honest Alice committing ``b``.

    ``unveil_b`` lets the caller open a different bit than was committed,
    with everything else unchanged.
    """
    c = commit_p(params, b, rng, decoy_policy, threshold)
    t = Transcript("p", params, c.prep, b)
    t.notes["committed"] = b
    if c.aborted:
        t.result = VerificationResult.ABORT_MIXING
        return t, t.result
    opened = b if unveil_b is None else unveil_b
    verdict = check_evidence(c.evidence, Unveil(c.Q, opened, c.x), c.prep, params, rng)
    t.P, t.x, t.r_x, t.Q, t.b = c.P, c.x, c.r_x, c.Q, opened
    t.result, t.position = verdict.result, verdict.position
    return t, t.result


def alice_prepare_prime(
    world: QuantumSystem,
    survivors: Sequence[int],
    params: ProtocolParams,
    rng: random.Random,
    marked_state: Callable[[QuantumSystem, Bits], list[int]],
) -> tuple[Bits, Bits, tuple[int, ...], list[int]]:
    """P' commit: choose ``x`` and ``R_x``, put Alice's marked qubits in place, scramble.

    ``marked_state(world, r_x)`` appends the m marked qubits to ``world`` and
    returns their indices. Returns ``(x, R_x, Pi, evidence register)``.
    """
    x = weight_mask(params.n, params.m, rng)
    r_x = random_bits(params.m, rng)
    payload = iter(marked_state(world, r_x))
    seq = [next(payload) if x[k] else survivors[k] for k in range(params.n)]
    pi = sample_permutation(x, rng)
    return x, r_x, pi, [seq[k] for k in pi]


def run_honest_prime(
    params: ProtocolParams,
    b: int,
    rng: random.Random,
    threshold: float = 4.0,
    unveil_b: int | None = None,
) -> tuple[Transcript, VerificationResult]:
    """One run of P' with an honest Alice committing ``b``."""
    prep, world, anon = bob_prepare(params, rng)
    t = Transcript("pprime", params, prep, b)
    passed, P, survivors = alice_mixing_test(world, anon, params, threshold, rng)
    if not passed:
        t.result = VerificationResult.ABORT_MIXING
        return t, t.result
    basis = basis_for_bit(b)

    def honest_marked(w, r_x):
        return [w.add(prepare_bb84(bit, basis)) for bit in r_x]

    x, r_x, pi, register = alice_prepare_prime(world, survivors, params, rng, honest_marked)
    opened = b if unveil_b is None else unveil_b
    verdict = check_evidence_prime(Evidence(P, r_x, register, world), UnveilPrime(opened, x, pi), prep, params, rng)
    t.P, t.x, t.r_x, t.pi, t.b = P, x, r_x, pi, opened
    t.notes["committed"] = b
    t.result, t.position = verdict.result, verdict.position
    return t, t.result


# ------------------------------------------------------------------ exact ensembles


def averaged_evidence_state(
    b: int,
    m: int,
    n: int,
    q: int,
    condition_on_rx: bool = False,
) -> np.ndarray:
    """Evidence density matrix averaged over all discrete randomness of P.

    Enumerates Bob's ``(R_B, eta)`` on the ``n`` survivors, every mark mask,
    every commit outcome (Born weights), every decoy mask and every BB84
    decoy. The mixing test is not modelled: survivors of an honest Bob are
    uniform BB84 states either way. With ``condition_on_rx`` the classical
    ``R_x`` is kept as a block-diagonal register (dimension ``2^m * 2^q``).
    Intended for tiny instances only.
    """
    basis = basis_for_bit(b)
    dim_q = 2**q
    dim_c = 2**m if condition_on_rx else 1
    rho = np.zeros((dim_c * dim_q, dim_c * dim_q), dtype=complex)
    x_masks = [mask_from_positions(n, c) for c in itertools.combinations(range(n), m)]
    q_masks = [mask_from_positions(q, c) for c in itertools.combinations(range(q), n)]
    bb84 = [(bit, bs) for bit in (0, 1) for bs in (Basis.PLUS, Basis.CROSS)]
    total = 0.0
    for r_b in itertools.product((0, 1), repeat=n):
        for eta in itertools.product((Basis.PLUS, Basis.CROSS), repeat=n):
            for x in x_masks:
                marked = ones(x)
                for r_x in itertools.product((0, 1), repeat=m):
                    weight = 1.0
                    for j, k in enumerate(marked):
                        amp = np.vdot(bb84_vector(r_x[j], basis), bb84_vector(r_b[k], eta[k]))
                        weight *= abs(amp) ** 2
                    if weight == 0.0:
                        continue
                    survivors = [bb84_vector(r_b[k], eta[k]) for k in range(n)]
                    for j, k in enumerate(marked):
                        survivors[k] = bb84_vector(r_x[j], basis)
                    for Q in q_masks:
                        for decoys in itertools.product(bb84, repeat=q - n):
                            it_s, it_d = iter(survivors), iter(decoys)
                            vec = np.ones(1, dtype=complex)
                            for slot in Q:
                                v = next(it_s) if slot else bb84_vector(*next(it_d))
                                vec = np.kron(vec, v)
                            if condition_on_rx:
                                cl = np.zeros(dim_c)
                                cl[int(bits_str(r_x), 2) if m else 0] = 1.0
                                vec = np.kron(cl, vec)
                            w = weight / (len(q_masks) * 4 ** (q - n))
                            rho += w * np.outer(vec, vec.conj())
                            total += w
    return rho / total
