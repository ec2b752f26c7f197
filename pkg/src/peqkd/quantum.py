"""Dense pure-state simulation of small qubit registers.

Qubit 0 is the leftmost tensor factor, i.e. the most significant bit of the
computational basis label. Registers are capped at four qubits.

Randomness never enters this module directly: every measurement takes an
explicit uniform draw in [0, 1) and walks the cumulative distribution of the
outcomes in their fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_QUBITS = 4
ATOL = 1e-12
# Outcomes below this probability are never sampled.
MIN_PROB = 1e-15


class QuantumError(ValueError):
    """Raised for invalid states, operators, or measurement requests."""


class StateVector:
    """Unit-norm pure state of ``num_qubits`` qubits.

    Use :func:`make_state` to build one from raw amplitudes; the constructor
    itself trusts its input.
    """

    __slots__ = ("amplitudes", "num_qubits")

    def __init__(self, amplitudes: np.ndarray):
        self.amplitudes = amplitudes
        self.num_qubits = amplitudes.size.bit_length() - 1

    def __len__(self) -> int:
        return self.amplitudes.size

    def __repr__(self) -> str:
        amps = ", ".join(f"{a:.6g}" for a in self.amplitudes)
        return f"StateVector({self.num_qubits}q: [{amps}])"


def _wrap(amps: np.ndarray) -> StateVector:
    amps = np.ascontiguousarray(amps, dtype=complex)
    amps.flags.writeable = False
    return StateVector(amps)


def make_state(num_qubits: int, amplitudes: Sequence[complex]) -> StateVector:
    """Build a normalized state from (possibly unnormalized) amplitudes."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise QuantumError(f"register too large: {num_qubits} qubits (max {MAX_QUBITS})")
    amps = np.asarray(amplitudes, dtype=complex).ravel()
    if amps.size != 2**num_qubits:
        raise QuantumError(
            f"dimension mismatch: {amps.size} amplitudes for {num_qubits} qubits"
        )
    if not np.all(np.isfinite(amps)):
        raise QuantumError("amplitudes must be finite")
    norm = np.linalg.norm(amps)
    if norm == 0.0:
        raise QuantumError("degenerate state: zero vector")
    return _wrap(amps / norm)


def basis_state(bits: str) -> StateVector:
    """Computational basis state from a bit string, e.g. ``"01"``."""
    amps = np.zeros(2 ** len(bits), dtype=complex)
    amps[int(bits, 2)] = 1.0
    return make_state(len(bits), amps)


ZERO = basis_state("0")
ONE = basis_state("1")
PLUS = make_state(1, [1, 1])
MINUS = make_state(1, [1, -1])


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product with ``a`` occupying the leading qubits."""
    if a.num_qubits + b.num_qubits > MAX_QUBITS:
        raise QuantumError(
            f"register too large: {a.num_qubits} + {b.num_qubits} qubits"
        )
    return _wrap(_kron(a.amplitudes, b.amplitudes))


def _kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.multiply.outer(a, b).ravel()


# -- single-qubit operators ------------------------------------------------


@dataclass(frozen=True, eq=False)
class SingleQubitUnitary:
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise QuantumError("single-qubit unitary must be 2x2")
        if not np.allclose(m.conj().T @ m, np.eye(2), atol=ATOL, rtol=0):
            raise QuantumError(f"matrix is not unitary: {m!r}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other: "SingleQubitUnitary") -> "SingleQubitUnitary":
        return SingleQubitUnitary(self.matrix @ other.matrix, self.name + other.name)

    @property
    def dagger(self) -> "SingleQubitUnitary":
        return SingleQubitUnitary(self.matrix.conj().T, f"({self.name})^dag")


IDENTITY = SingleQubitUnitary(np.eye(2), "I")
SIGMA_X = SingleQubitUnitary([[0, 1], [1, 0]], "X")
SIGMA_Z = SingleQubitUnitary([[1, 0], [0, -1]], "Z")


def _check_index(s: StateVector, *qubits: int) -> None:
    for q in qubits:
        if not 0 <= q < s.num_qubits:
            raise QuantumError(f"qubit index {q} out of range for {s.num_qubits} qubits")
    if len(set(qubits)) != len(qubits):
        raise QuantumError(f"qubit indices collide: {qubits}")


def apply_single_qubit(s: StateVector, qubit_index: int, u: SingleQubitUnitary) -> StateVector:
    _check_index(s, qubit_index)
    t = s.amplitudes.reshape(1 << qubit_index, 2, -1)
    return _wrap((u.matrix @ t).reshape(-1))


# -- two-qubit projective measurement --------------------------------------


@dataclass(frozen=True, eq=False)
class BasisFour:
    """Four orthonormal two-qubit states, in fixed outcome order."""

    states: tuple[StateVector, StateVector, StateVector, StateVector]
    labels: tuple[str, ...] = ("0", "1", "2", "3")
    _bras: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.states) != 4 or any(s.num_qubits != 2 for s in self.states):
            raise QuantumError("BasisFour needs four 2-qubit states")
        kets = np.stack([s.amplitudes for s in self.states])
        gram = kets.conj() @ kets.T
        if not np.allclose(gram, np.eye(4), atol=ATOL, rtol=0):
            raise QuantumError("basis states are not orthonormal")
        bras = kets.conj()
        bras.flags.writeable = False
        object.__setattr__(self, "_bras", bras)

    def __getitem__(self, i: int) -> StateVector:
        return self.states[i]

    def __iter__(self):
        return iter(self.states)

    def __len__(self) -> int:
        return 4


def _pair_amplitudes(s: StateVector, i: int, j: int, basis: BasisFour) -> np.ndarray:
    """Row ``o`` holds the (unnormalized) rest-of-register state for outcome ``o``."""
    if s.num_qubits < 2:
        raise QuantumError("pair measurement needs at least 2 qubits")
    _check_index(s, i, j)
    k = s.num_qubits
    t = s.amplitudes.reshape((2,) * k).transpose(_front_perm(k, i, j)).reshape(4, -1)
    return basis._bras @ t


@lru_cache(maxsize=None)
def _front_perm(k: int, i: int, j: int) -> tuple[int, ...]:
    return (i, j) + tuple(q for q in range(k) if q not in (i, j))


@lru_cache(maxsize=None)
def _back_perm(k: int, i: int, j: int) -> tuple[int, ...]:
    return tuple(np.argsort(_front_perm(k, i, j)))


def _sample(probs, draw: float) -> int:
    probs = probs.tolist() if hasattr(probs, "tolist") else list(probs)
    total = sum(p for p in probs if p >= MIN_PROB)
    if total == 0.0:
        raise QuantumError("impossible outcome: every outcome has vanishing probability")
    target = draw * total
    cum = 0.0
    last = -1
    for idx, p in enumerate(probs):
        if p < MIN_PROB:
            continue
        cum += p
        last = idx
        if target < cum:
            return idx
    # draw landed on the far edge after rounding
    return last


def outcome_probabilities(s: StateVector, qubit_i: int, qubit_j: int, basis: BasisFour) -> np.ndarray:
    """Born probabilities of finding qubits (i, j) in each basis element."""
    rows = _pair_amplitudes(s, qubit_i, qubit_j, basis)
    return np.einsum("ij,ij->i", rows.conj(), rows).real


def _restore(pair: StateVector, rest: np.ndarray, i: int, j: int, k: int) -> StateVector:
    full = _kron(pair.amplitudes, rest).reshape((2,) * k)
    return _wrap(full.transpose(_back_perm(k, i, j)).reshape(-1))


def project_pair(s: StateVector, qubit_i: int, qubit_j: int, basis: BasisFour, random_draw: float):
    """Measure qubits (i, j) in ``basis``.

    Returns ``(outcome_index, collapsed_state, probability)`` where the
    collapsed state keeps the full register with the pair fixed to the
    measured basis element.
    """
    outcome, rest, prob = _measure_pair(s, qubit_i, qubit_j, basis, random_draw)
    if s.num_qubits == 2:
        return outcome, basis[outcome], prob
    return outcome, _restore(basis[outcome], rest, qubit_i, qubit_j, s.num_qubits), prob


def _measure_pair(s, i, j, basis, draw):
    rows = _pair_amplitudes(s, i, j, basis)
    probs = np.einsum("ij,ij->i", rows.conj(), rows).real
    outcome = _sample(probs, draw)
    prob = float(probs[outcome])
    return outcome, rows[outcome] / np.sqrt(prob), prob


def measure_pair_and_discard(s: StateVector, qubit_i: int, qubit_j: int, basis: BasisFour, random_draw: float):
    """Like :func:`project_pair` but returns the remaining qubits only.

    After the measurement the pair is in a product with the rest of the
    register, so nothing is lost by dropping it.
    """
    if s.num_qubits < 3:
        raise QuantumError("nothing left after discarding the measured pair")
    outcome, rest, prob = _measure_pair(s, qubit_i, qubit_j, basis, random_draw)
    return outcome, _wrap(rest), prob


def pair_branches(s: StateVector, qubit_i: int, qubit_j: int, basis: BasisFour):
    """All non-vanishing outcomes as ``(outcome, probability, remainder)``.

    The remainder is the normalized state of the unmeasured qubits, or
    ``None`` for a two-qubit register. Used by exhaustive enumeration.
    """
    rows = _pair_amplitudes(s, qubit_i, qubit_j, basis)
    probs = np.einsum("ij,ij->i", rows.conj(), rows).real
    out = []
    for o in range(4):
        if probs[o] < MIN_PROB:
            continue
        rest = _wrap(rows[o] / np.sqrt(probs[o])) if s.num_qubits > 2 else None
        out.append((o, float(probs[o]), rest))
    return out


# -- single-qubit X measurement -------------------------------------------

_X_BRAS = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _x_rows(s: StateVector, q: int) -> np.ndarray:
    _check_index(s, q)
    if s.num_qubits == 1:
        return (_X_BRAS @ s.amplitudes).reshape(2, 1)
    t = _X_BRAS @ s.amplitudes.reshape(1 << q, 2, -1)
    return t.transpose(1, 0, 2).reshape(2, -1)


def x_probabilities(s: StateVector, qubit_index: int) -> np.ndarray:
    """``[P(+), P(-)]`` for an X-basis measurement of one qubit."""
    rows = _x_rows(s, qubit_index)
    return np.einsum("ij,ij->i", rows.conj(), rows).real


def measure_x(s: StateVector, qubit_index: int, random_draw: float):
    """X-basis measurement; bit 0 is ``|+>``, bit 1 is ``|->``.

    Returns ``(bit, collapsed_state)``.
    """
    rows = _x_rows(s, qubit_index)
    probs = np.einsum("ij,ij->i", rows.conj(), rows).real
    bit = _sample(probs, random_draw)
    k = s.num_qubits
    eig = (PLUS, MINUS)[bit]
    if k == 1:
        return bit, eig
    rest = (rows[bit] / np.sqrt(probs[bit])).reshape(1 << qubit_index, 1, -1)
    full = eig.amplitudes.reshape(1, 2, 1) * rest
    return bit, _wrap(full.reshape(-1))


def fidelity(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|^2``, insensitive to global phase."""
    if a.num_qubits != b.num_qubits:
        raise QuantumError(
            f"dimension mismatch: {a.num_qubits} vs {b.num_qubits} qubits"
        )
    f = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return float(min(f, 1.0))


# -- labelled registers ----------------------------------------------------


class Lab:
    """Bookkeeping for several independent registers with named qubits.

    Parties refer to qubits by label; the lab merges registers when a
    measurement spans two of them and drops measured pairs afterwards so no
    register grows past :data:`MAX_QUBITS`.
    """

    def __init__(self):
        self._regs: list[tuple[StateVector, list[str]]] = []

    def add(self, state: StateVector, labels: Sequence[str]) -> None:
        labels = list(labels)
        if len(labels) != state.num_qubits:
            raise QuantumError("one label per qubit required")
        for lab in labels:
            if lab in self:
                raise QuantumError(f"label {lab!r} already in use")
        self._regs.append((state, labels))

    def __contains__(self, label: str) -> bool:
        return any(label in labels for _, labels in self._regs)

    def _find(self, label: str) -> int:
        for r, (_, labels) in enumerate(self._regs):
            if label in labels:
                return r
        raise KeyError(label)

    def _merged(self, a: str, b: str) -> int:
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return ra
        sa, la = self._regs[ra]
        sb, lb = self._regs[rb]
        merged = (tensor(sa, sb), la + lb)
        for r in sorted((ra, rb), reverse=True):
            del self._regs[r]
        self._regs.append(merged)
        return len(self._regs) - 1

    def state_of(self, label: str) -> tuple[StateVector, list[str]]:
        state, labels = self._regs[self._find(label)]
        return state, list(labels)

    def apply(self, label: str, u: SingleQubitUnitary) -> None:
        r = self._find(label)
        state, labels = self._regs[r]
        self._regs[r] = (apply_single_qubit(state, labels.index(label), u), labels)

    def measure_pair(self, a: str, b: str, basis: BasisFour, draw: float) -> int:
        """GBM-style measurement of qubits ``a`` and ``b``; both are consumed."""
        r = self._merged(a, b)
        state, labels = self._regs[r]
        i, j = labels.index(a), labels.index(b)
        rest_labels = [lab for lab in labels if lab not in (a, b)]
        if rest_labels:
            outcome, rest, _ = measure_pair_and_discard(state, i, j, basis, draw)
            self._regs[r] = (rest, rest_labels)
        else:
            outcome, _, _ = project_pair(state, i, j, basis, draw)
            del self._regs[r]
        return outcome

    def measure_x(self, label: str, draw: float) -> int:
        """X measurement of one qubit; the qubit is consumed."""
        r = self._find(label)
        state, labels = self._regs[r]
        q = labels.index(label)
        if state.num_qubits == 1:
            bit, _ = measure_x(state, 0, draw)
            del self._regs[r]
            return bit
        rows = _x_rows(state, q)
        probs = np.einsum("ij,ij->i", rows.conj(), rows).real
        bit = _sample(probs, draw)
        labels.pop(q)
        self._regs[r] = (_wrap(rows[bit] / np.sqrt(probs[bit])), labels)
        return bit

    def discard(self, label: str) -> None:
        """Throw away the whole register holding ``label``."""
        del self._regs[self._find(label)]

    def relabel(self, old: str, new: str) -> None:
        r = self._find(old)
        state, labels = self._regs[r]
        labels[labels.index(old)] = new
