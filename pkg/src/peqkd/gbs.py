"""Generalized Bell states and probabilistic teleportation over a partially
entangled channel ``(|00> + n|11>)/sqrt(1+n^2)``.

Channel and basis parameters are real numbers in (0, 1]. The value 1 gives
the ordinary Bell basis and is only meant for repeater links and limiting
checks; protocol channels use n < 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .quantum import (
    IDENTITY,
    MINUS,
    PLUS,
    SIGMA_X,
    SIGMA_Z,
    BasisFour,
    SingleQubitUnitary,
    StateVector,
    apply_single_qubit,
    fidelity,
    make_state,
    measure_pair_and_discard,
    tensor,
)


class GbsOutcome(enum.IntEnum):
    PHI_PLUS = 0
    PHI_MINUS = 1
    PSI_PLUS = 2
    PSI_MINUS = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "GbsOutcome":
        return cls(_LABELS.index(label))


_LABELS = ("PhiPlus", "PhiMinus", "PsiPlus", "PsiMinus")

# Outcomes that teleport perfectly when the basis matches the channel.
SUCCESS_OUTCOMES = frozenset({GbsOutcome.PHI_MINUS, GbsOutcome.PSI_PLUS})


def check_param(x: float, name: str = "n") -> float:
    if isinstance(x, complex):
        raise ValueError(f"{name} must be real, got {x!r}")
    x = float(x)
    if not (0.0 < x <= 1.0) or math.isnan(x):
        raise ValueError(f"{name} must lie in (0, 1], got {x!r}")
    return x


class KeyBit(enum.IntEnum):
    """Key bit encoded in the X basis: 0 is ``|+>``, 1 is ``|->``."""

    ZERO = 0
    ONE = 1

    @property
    def state(self) -> StateVector:
        return PLUS if self == KeyBit.ZERO else MINUS


@lru_cache(maxsize=256)
def _basis(m: float) -> BasisFour:
    a = np.zeros((4, 4))
    a[0, 0], a[0, 3] = 1.0, m
    a[1, 0], a[1, 3] = m, -1.0
    a[2, 1], a[2, 2] = 1.0, m
    a[3, 1], a[3, 2] = m, -1.0
    a /= math.sqrt(1.0 + m * m)
    states = tuple(make_state(2, row) for row in a)
    return BasisFour(states, labels=_LABELS)


def gbs_basis(m: float) -> BasisFour:
    """The four generalized Bell states for parameter ``m``, ordered
    Phi+, Phi-, Psi+, Psi-."""
    return _basis(check_param(m, "m"))


def channel_state(n: float) -> StateVector:
    """Partially entangled pair ``(|00> + n|11>)/sqrt(1+n^2)``."""
    return _basis(check_param(n))[GbsOutcome.PHI_PLUS]


_CORRECTIONS = {
    GbsOutcome.PHI_PLUS: IDENTITY,
    GbsOutcome.PHI_MINUS: SIGMA_Z,
    GbsOutcome.PSI_PLUS: SIGMA_X,
    GbsOutcome.PSI_MINUS: SIGMA_Z @ SIGMA_X,
}


def correction_for(outcome: GbsOutcome) -> SingleQubitUnitary:
    """Pauli correction Bob applies after hearing the GBM outcome."""
    return _CORRECTIONS[GbsOutcome(outcome)]


def _check_amplitudes(alpha: complex, beta: complex) -> None:
    norm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"unnormalized input qubit: |alpha|^2 + |beta|^2 = {norm!r}")


def gbm_probabilities(alpha: complex, beta: complex, n: float, m: float) -> list[float]:
    """Closed-form outcome probabilities of a GBM with basis ``m`` on
    ``(alpha|0> + beta|1>) (x) channel_state(n)``, ordered Phi+, Phi-, Psi+, Psi-."""
    _check_amplitudes(alpha, beta)
    n, m = check_param(n), check_param(m, "m")
    a2, b2 = abs(alpha) ** 2, abs(beta) ** 2
    denom = (1 + m * m) * (1 + n * n)
    mn2 = (m * n) ** 2
    return [
        (a2 + mn2 * b2) / denom,
        (m * m * a2 + n * n * b2) / denom,
        (n * n * a2 + m * m * b2) / denom,
        (mn2 * a2 + b2) / denom,
    ]


def bob_conditional_state(alpha: complex, beta: complex, n: float, m: float, outcome: GbsOutcome) -> StateVector:
    """Bob's qubit after the correction for ``outcome`` has been applied."""
    _check_amplitudes(alpha, beta)
    n, m = check_param(n), check_param(m, "m")
    outcome = GbsOutcome(outcome)
    # real parameters, so m* = m
    c0, c1 = {
        GbsOutcome.PHI_PLUS: (alpha, n * m * beta),
        GbsOutcome.PHI_MINUS: (m * alpha, n * beta),
        GbsOutcome.PSI_PLUS: (n * alpha, m * beta),
        GbsOutcome.PSI_MINUS: (m * n * alpha, beta),
    }[outcome]
    if abs(c0) ** 2 + abs(c1) ** 2 < 1e-30:
        raise ValueError(f"outcome {outcome.label} has zero probability for these parameters")
    return make_state(1, [c0, c1])


@dataclass(frozen=True)
class PqtRecord:
    n: float
    m: float
    outcome: GbsOutcome
    bob_state: StateVector
    succeeded: bool


def teleport_success(n: float, m: float, outcome: GbsOutcome) -> bool:
    return n == m and GbsOutcome(outcome) in SUCCESS_OUTCOMES


def run_pqt(qubit: StateVector, n: float, m: float, draw: float) -> tuple[GbsOutcome, StateVector]:
    """Teleport an arbitrary qubit across ``channel_state(n)`` using a GBM in
    basis ``m``; returns the outcome and Bob's corrected qubit."""
    joint = tensor(qubit, channel_state(n))
    o, bob, _ = measure_pair_and_discard(joint, 0, 1, gbs_basis(m), draw)
    outcome = GbsOutcome(o)
    return outcome, apply_single_qubit(bob, 0, correction_for(outcome))


def simulate_pqt(key: KeyBit, n: float, m: float, draws) -> PqtRecord:
    """One simulated PQT round teleporting the X-basis encoding of ``key``.

    ``draws`` is a numpy ``Generator`` or any iterator of uniform floats.
    """
    draw = draws.random() if hasattr(draws, "random") else next(draws)
    outcome, bob = run_pqt(KeyBit(key).state, n, m, draw)
    return PqtRecord(n, m, outcome, bob, teleport_success(n, m, outcome))


def p_suc(n: float) -> float:
    """Success probability of the PQT with a matched basis."""
    n = check_param(n)
    return 2 * n * n / (1 + n * n) ** 2


def p_final_rate(params: Sequence[float]) -> float:
    """Key rate after disclosing half of the successful rounds.

    Each parameter is used for the GBM a fraction 1/N of the time and half
    of the successes are spent on the eavesdropping check. With two
    parameters this is ``sum n^2 / (2 (1+n^2)^2)``.
    """
    params = list(params)
    if not params:
        raise ValueError("need at least one channel parameter")
    N = len(params)
    return sum(p_suc(n) / (2 * N) for n in params)


def p_wrong(m: float, n: float) -> float:
    """Probability of reading the wrong X-basis bit from a qubit teleported
    with basis ``m`` over ``channel_state(n)`` (Phi- or Psi+ outcome)."""
    m, n = check_param(m, "m"), check_param(n)
    return (m - n) ** 2 / (2 * (m * m + n * n))


def x_error(state: StateVector, key: KeyBit) -> float:
    """Probability that an X measurement of ``state`` disagrees with ``key``."""
    return 1.0 - fidelity(state, KeyBit(key).state)
