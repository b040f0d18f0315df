"""Qubit states, BB84 encodings and a lazily-entangling register.

A :class:`QuantumSystem` is a list of qubits, each owned by a factor: either a
:class:`PureQubit` (independent single-qubit pure state) or a
:class:`DenseBlock` (a small state vector over a few entangled qubits).
Honest protocol runs only ever touch product states, so their cost is linear
in the number of qubits; dense blocks appear only when an operation
explicitly entangles qubits.
"""

from __future__ import annotations

import enum
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

SQRT_HALF = math.sqrt(0.5)
DEFAULT_BLOCK_CAP = 20
STATE_ATOL = 1e-12
MATRIX_ATOL = 1e-10


class Basis(enum.Enum):
    PLUS = "+"
    CROSS = "x"

    @property
    def conjugate(self) -> "Basis":
        return Basis.CROSS if self is Basis.PLUS else Basis.PLUS

    def __str__(self) -> str:
        return self.value


def basis_for_bit(b: int) -> Basis:
    """Commit-basis selector: 0 -> PLUS, 1 -> CROSS."""
    if b == 0:
        return Basis.PLUS
    if b == 1:
        return Basis.CROSS
    raise ValueError(f"commit bit must be 0 or 1, got {b!r}")


def parse_bases(text: str) -> tuple[Basis, ...]:
    return tuple(Basis(ch) for ch in text)


def format_bases(bases: Iterable[Basis]) -> str:
    return "".join(b.value for b in bases)


@dataclass(frozen=True, slots=True)
class PureQubit:
    a0: complex
    a1: complex

    def __post_init__(self):
        norm = abs(self.a0) ** 2 + abs(self.a1) ** 2
        if abs(norm - 1.0) > STATE_ATOL:
            raise ValueError(f"qubit amplitudes not normalised (|a|^2 = {norm})")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=complex)

    def prob_zero(self, basis: Basis) -> float:
        """Probability of outcome 0 when measured in ``basis``."""
        if basis is Basis.PLUS:
            return abs(self.a0) ** 2
        return abs((self.a0 + self.a1) * SQRT_HALF) ** 2


# the four BB84 states, indexed by (bit, basis)
_BB84 = {
    (0, Basis.PLUS): (1.0 + 0j, 0j),
    (1, Basis.PLUS): (0j, 1.0 + 0j),
    (0, Basis.CROSS): (SQRT_HALF + 0j, SQRT_HALF + 0j),
    (1, Basis.CROSS): (SQRT_HALF + 0j, -SQRT_HALF + 0j),
}


_BB84_QUBITS = {key: PureQubit(*amps) for key, amps in _BB84.items()}


def prepare_bb84(bit: int, basis: Basis) -> PureQubit:
    """Return |bit> in ``basis``; the CROSS states are (|0> +/- |1>)/sqrt(2)."""
    try:
        return _BB84_QUBITS[(bit, basis)]
    except KeyError:
        raise ValueError(f"not a BB84 preparation: bit={bit!r}, basis={basis!r}") from None


def bb84_vector(bit: int, basis: Basis) -> np.ndarray:
    return np.array(_BB84[(bit, basis)], dtype=complex)


def haar_qubit(rng: random.Random) -> PureQubit:
    """Single-qubit pure state drawn from the Haar measure."""
    re0, im0, re1, im1 = (rng.gauss(0.0, 1.0) for _ in range(4))
    norm = math.sqrt(re0 * re0 + im0 * im0 + re1 * re1 + im1 * im1)
    return PureQubit(complex(re0, im0) / norm, complex(re1, im1) / norm)


def product_vector(bits: Sequence[int], bases: Union[Basis, Sequence[Basis]]) -> np.ndarray:
    """State vector of |bits> where qubit i is prepared in ``bases[i]``.

    The first qubit is the most significant index of the returned vector.
    """
    if isinstance(bases, Basis):
        bases = [bases] * len(bits)
    if len(bases) != len(bits):
        raise ValueError("bits and bases differ in length")
    vec = np.ones(1, dtype=complex)
    for bit, basis in zip(bits, bases):
        vec = np.kron(vec, bb84_vector(bit, basis))
    return vec


def overlap_amplitude(
    a: tuple[Sequence[int], Union[Basis, Sequence[Basis]]],
    b: tuple[Sequence[int], Union[Basis, Sequence[Basis]]],
) -> complex:
    """Inner product <a|b> of two BB84 product states given as (bits, bases)."""
    bits_a, bases_a = a
    bits_b, bases_b = b
    if len(bits_a) != len(bits_b):
        raise ValueError(f"length mismatch: {len(bits_a)} vs {len(bits_b)}")
    if isinstance(bases_a, Basis):
        bases_a = [bases_a] * len(bits_a)
    if isinstance(bases_b, Basis):
        bases_b = [bases_b] * len(bits_b)
    amp = 1.0 + 0j
    for ba, xa, bb, xb in zip(bits_a, bases_a, bits_b, bases_b):
        u0, u1 = _BB84[(ba, xa)]
        v0, v1 = _BB84[(bb, xb)]
        amp *= u0.conjugate() * v0 + u1.conjugate() * v1
    return amp


@dataclass(eq=False)
class DenseBlock:
    """State vector over a few entangled qubits.

    ``amplitudes`` has shape ``(2,) * num_qubits``; axis ``k`` belongs to the
    qubit ``qubit_labels[k]``.
    """

    amplitudes: np.ndarray
    qubit_labels: list[int] = field(default_factory=list)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        k = int(round(math.log2(amps.size))) if amps.size else -1
        if k < 1 or amps.size != 2**k:
            raise ValueError(f"amplitude count {amps.size} is not a power of two >= 2")
        self.amplitudes = amps.reshape((2,) * k)
        if not self.qubit_labels:
            self.qubit_labels = list(range(k))
        if len(self.qubit_labels) != k or len(set(self.qubit_labels)) != k:
            raise ValueError("qubit_labels must be distinct, one per qubit")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > STATE_ATOL:
            raise ValueError(f"block not normalised (norm^2 = {norm})")

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.ndim

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)


Factor = Union[PureQubit, DenseBlock]


def build_zeta(r_x: Sequence[int], cap: int = DEFAULT_BLOCK_CAP) -> DenseBlock:
    """(|0>|r_x>_+ + |1>|r_x>_x)/sqrt(2); qubit 0 is the control."""
    m = len(r_x)
    if m + 1 > cap:
        raise ValueError(f"zeta state needs {m + 1} qubits, block cap is {cap}")
    plus = product_vector(r_x, Basis.PLUS)
    cross = product_vector(r_x, Basis.CROSS)
    vec = np.concatenate([plus, cross]) * SQRT_HALF
    return DenseBlock(vec)


class QuantumSystem:
    """A register of qubits held as a tensor product of independent factors."""

    def __init__(self, qubits: Iterable[PureQubit] = (), max_block: int = DEFAULT_BLOCK_CAP):
        self.max_block = max_block
        self._factors: list[Factor] = list(qubits)

    @property
    def width(self) -> int:
        return len(self._factors)

    def factor(self, index: int) -> Factor:
        return self._factors[self._check(index)]

    def factors(self) -> list[Factor]:
        """Distinct factors, in order of their first qubit."""
        return [f for _, f in self._groups(range(self.width))]

    def _groups(self, indices: Iterable[int]) -> list[tuple[int, Factor]]:
        # pure qubits may share (immutable) instances, so only blocks dedupe by identity
        seen: set[int] = set()
        out = []
        for i in indices:
            f = self._factors[i]
            if isinstance(f, PureQubit):
                out.append((i, f))
            elif id(f) not in seen:
                seen.add(id(f))
                out.append((i, f))
        return out

    def add(self, qubit: PureQubit) -> int:
        self._factors.append(qubit)
        return len(self._factors) - 1

    def add_block(self, block: DenseBlock) -> list[int]:
        """Append the qubits of ``block``; returns their new global indices."""
        if block.num_qubits > self.max_block:
            raise ValueError(f"block of {block.num_qubits} qubits exceeds cap {self.max_block}")
        start = len(self._factors)
        labels = list(range(start, start + block.num_qubits))
        new = DenseBlock(block.amplitudes.copy(), labels)
        self._factors.extend([new] * block.num_qubits)
        return labels

    def _check(self, index: int) -> int:
        if not 0 <= index < len(self._factors):
            raise IndexError(f"qubit index {index} out of range for width {len(self._factors)}")
        return index

    def measure(self, index: int, basis: Basis, rng: random.Random) -> int:
        """Projective measurement of one qubit; collapses the state in place."""
        f = self._factors[self._check(index)]
        if isinstance(f, PureQubit):
            outcome = 0 if rng.random() < f.prob_zero(basis) else 1
            self._factors[index] = prepare_bb84(outcome, basis)
            return outcome
        return self._measure_in_block(f, index, basis, rng)

    def _measure_in_block(self, block: DenseBlock, index: int, basis: Basis, rng) -> int:
        axis = block.qubit_labels.index(index)
        amps = np.moveaxis(block.amplitudes, axis, 0)
        v0, v1 = amps[0], amps[1]
        if basis is Basis.CROSS:
            v0, v1 = (v0 + v1) * SQRT_HALF, (v0 - v1) * SQRT_HALF
        p0 = float(np.vdot(v0, v0).real)
        outcome = 0 if rng.random() < p0 else 1
        rest = v0 if outcome == 0 else v1
        prob = p0 if outcome == 0 else 1.0 - p0
        rest = rest / math.sqrt(prob)
        self._factors[index] = prepare_bb84(outcome, basis)
        labels = [q for q in block.qubit_labels if q != index]
        if len(labels) == 1:
            flat = rest.reshape(-1)
            self._factors[labels[0]] = PureQubit(complex(flat[0]), complex(flat[1]))
        elif labels:
            # renormalise against drift before re-validating
            rest = rest / math.sqrt(float(np.vdot(rest, rest).real))
            self._install(rest, labels)
        return outcome

    def _install(self, amps: np.ndarray, labels: list[int]) -> None:
        """Store a block, first peeling off any qubit that is no longer entangled."""
        amps = amps.reshape((2,) * len(labels))
        labels = list(labels)
        axis = 0
        while len(labels) > 1 and axis < len(labels):
            mat = np.moveaxis(amps, axis, 0).reshape(2, -1)
            sv = np.linalg.svd(mat, compute_uv=False)
            if sv[1] > 1e-9:
                axis += 1
                continue
            u, _, vh = np.linalg.svd(mat)
            single = u[:, 0] * sv[0]
            single = single / np.linalg.norm(single)
            rest = np.conj(single) @ mat
            rest = rest / np.linalg.norm(rest)
            self._factors[labels[axis]] = PureQubit(complex(single[0]), complex(single[1]))
            del labels[axis]
            amps = rest.reshape((2,) * len(labels)) if labels else rest
        if len(labels) == 1:
            flat = amps.reshape(-1)
            self._factors[labels[0]] = PureQubit(complex(flat[0]), complex(flat[1]))
            return
        block = DenseBlock(amps, labels)
        for q in labels:
            self._factors[q] = block

    def apply(self, indices: Sequence[int], unitary: np.ndarray) -> None:
        """Apply a unitary to the listed qubits, merging their factors first.

        ``indices[0]`` is the most significant qubit of ``unitary``.
        """
        indices = [self._check(i) for i in indices]
        k = len(indices)
        unitary = np.asarray(unitary, dtype=complex)
        if unitary.shape != (2**k, 2**k):
            raise ValueError(f"unitary shape {unitary.shape} does not act on {k} qubits")
        block = self._merge(indices)
        axes = [block.qubit_labels.index(i) for i in indices]
        amps = np.moveaxis(block.amplitudes, axes, list(range(k)))
        shape = amps.shape
        amps = (unitary @ amps.reshape(2**k, -1)).reshape(shape)
        block.amplitudes = np.moveaxis(amps, list(range(k)), axes)

    def _merge(self, indices: Sequence[int]) -> DenseBlock:
        parts = self._groups(indices)
        labels: list[int] = []
        vec = np.ones(1, dtype=complex)
        for i, f in parts:
            if isinstance(f, PureQubit):
                labels.append(i)
                vec = np.kron(vec, f.vector)
            else:
                labels.extend(f.qubit_labels)
                vec = np.kron(vec, f.vector)
        if len(labels) > self.max_block:
            raise ValueError(f"entangling {len(labels)} qubits exceeds block cap {self.max_block}")
        if len(parts) == 1 and isinstance(parts[0][1], DenseBlock):
            return parts[0][1]
        block = DenseBlock(vec, labels)
        for q in labels:
            self._factors[q] = block
        return block

    def state_vector(self, indices: Sequence[int] | None = None) -> np.ndarray:
        """Joint state vector of ``indices`` (all qubits by default).

        The listed qubits must not be entangled with any qubit outside the list.
        """
        if indices is None:
            indices = range(self.width)
        indices = [self._check(i) for i in indices]
        if len(indices) > self.max_block:
            raise ValueError(f"{len(indices)} qubits exceed dense cap {self.max_block}")
        wanted = set(indices)
        labels: list[int] = []
        vec = np.ones(1, dtype=complex)
        for i, f in self._groups(indices):
            if isinstance(f, PureQubit):
                labels.append(i)
                vec = np.kron(vec, f.vector)
            else:
                if not set(f.qubit_labels) <= wanted:
                    raise ValueError("requested qubits are entangled with qubits outside the selection")
                labels.extend(f.qubit_labels)
                vec = np.kron(vec, f.vector)
        order = [labels.index(i) for i in indices]
        return np.transpose(vec.reshape((2,) * len(labels)), order).reshape(-1)


def measure(system: QuantumSystem, index: int, basis: Basis, rng: random.Random) -> int:
    return system.measure(index, basis, rng)


def register_from_bb84(bits: Sequence[int], bases: Sequence[Basis], max_block: int = DEFAULT_BLOCK_CAP) -> QuantumSystem:
    return QuantumSystem((prepare_bb84(b, x) for b, x in zip(bits, bases)), max_block=max_block)


# ---------------------------------------------------------------- density matrices


def _as_vector(state) -> np.ndarray:
    if isinstance(state, np.ndarray):
        return state.reshape(-1).astype(complex)
    if isinstance(state, (PureQubit, DenseBlock)):
        return state.vector
    if isinstance(state, QuantumSystem):
        return state.state_vector()
    raise TypeError(f"cannot interpret {type(state).__name__} as a state")


def density_matrix(state, cap: int = DEFAULT_BLOCK_CAP) -> np.ndarray:
    """Density matrix of a pure state or of an ensemble ``[(prob, state), ...]``.

    States may be vectors, :class:`PureQubit`, :class:`DenseBlock` or a whole
    :class:`QuantumSystem`. Ensemble weights are normalised to sum to one.
    """
    if isinstance(state, (list, tuple)):
        ensemble = list(state)
        if not ensemble:
            raise ValueError("empty ensemble")
    else:
        ensemble = [(1.0, state)]
    rho = None
    total = 0.0
    for prob, member in ensemble:
        vec = _as_vector(member)
        if vec.size > 2**cap:
            raise ValueError(f"dimension {vec.size} exceeds 2^{cap}")
        term = prob * np.outer(vec, vec.conj())
        if rho is None:
            rho = term
        elif rho.shape != term.shape:
            raise ValueError("ensemble members have different dimensions")
        else:
            rho = rho + term
        total += prob
    return rho / total


def maximally_mixed(num_qubits: int) -> np.ndarray:
    """Trace-one maximally mixed operator 2^-k I."""
    dim = 2**num_qubits
    return np.eye(dim, dtype=complex) / dim


def is_density_matrix(rho: np.ndarray, atol: float = MATRIX_ATOL) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if not np.allclose(rho, rho.conj().T, atol=atol):
        return False
    if abs(np.trace(rho) - 1.0) > atol:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -atol)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the sum of absolute eigenvalues of ``a - b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def partial_trace(rho: np.ndarray, keep: Sequence[int], num_qubits: int) -> np.ndarray:
    """Reduced density matrix on the qubits ``keep`` (qubit 0 most significant)."""
    keep = list(keep)
    drop = [i for i in range(num_qubits) if i not in keep]
    t = np.asarray(rho).reshape((2,) * (2 * num_qubits))
    # bring kept row axes, dropped row axes, kept col axes, dropped col axes
    perm = keep + drop + [num_qubits + i for i in keep] + [num_qubits + i for i in drop]
    t = np.transpose(t, perm)
    dk, dd = 2 ** len(keep), 2 ** len(drop)
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def coding_sector_states(r_x: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Projectors onto |r_x>_+ and |r_x>_x, i.e. the two commit encodings of r_x."""
    return (
        density_matrix(product_vector(r_x, Basis.PLUS)),
        density_matrix(product_vector(r_x, Basis.CROSS)),
    )


def all_bitstrings(m: int):
    return itertools.product((0, 1), repeat=m)
