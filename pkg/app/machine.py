"""Classical and quantum ε-machines of the two-causal-state Ising process."""

from dataclasses import dataclass

import numpy as np
from scipy.special import entr
from scipy.stats import entropy

from app.errors import InvalidParams, TooLarge
from app.ising import stationary_distribution, transition_probabilities
from app.qmath import ket_to_density, von_neumann_entropy

MAX_WINDOW = 16


@dataclass(frozen=True)
class ClassicalMachine:
    gamma: object
    p: object
    states: tuple = ("S0", "S1")

    @classmethod
    def from_gamma(cls, gamma):
        return cls(gamma, stationary_distribution(gamma))

    @property
    def complexity(self):
        return classical_complexity(self.p, self.gamma)


@dataclass(frozen=True, eq=False)
class QuantumCausalStates:
    s0: np.ndarray
    s1: np.ndarray

    @property
    def overlap(self):
        return float(np.vdot(self.s0, self.s1).real)

    def projectors(self):
        return ket_to_density(self.s0), ket_to_density(self.s1)


@dataclass(frozen=True)
class ExcessEntropyEstimate:
    window: int
    value: float
    sequence: tuple

    @property
    def gap(self):
        """Change contributed by the last window step."""
        if len(self.sequence) < 2:
            return self.value
        return self.sequence[-1] - self.sequence[-2]


def classical_complexity(p, gamma=None):
    """
    Shannon entropy of the causal-state distribution, in bits.

    A process whose two causal states coincide is a one-state machine and
    has zero complexity.
    """
    if gamma is not None and gamma.is_degenerate:
        return 0.0
    return float(entropy([p.p0, p.p1], base=2))


def quantum_causal_states(gamma):
    g = gamma.gamma
    return QuantumCausalStates(
        np.sqrt(g[0]).astype(complex), np.sqrt(g[1]).astype(complex)
    )


def stationary_quantum_state(states, p):
    rho0, rho1 = states.projectors()
    return p.p0 * rho0 + p.p1 * rho1


def quantum_complexity(rho):
    return von_neumann_entropy(rho)


def _entropy_bits(probabilities):
    return float(entr(probabilities).sum() / np.log(2))


def excess_entropy(gamma, window, p=None):
    """
    Mutual information ``I(X_0; X_1 .. X_L)`` by exact word enumeration.

    The chain starts from ``p`` (the stationary distribution by default) and
    every step follows ``gamma``. Values for windows ``1 .. window`` are kept
    so the convergence gap can be reported.
    """
    if window > MAX_WINDOW:
        raise TooLarge(f"Window {window} exceeds {MAX_WINDOW}")
    if window < 1:
        raise InvalidParams("Window must be at least 1")
    if p is None:
        p = stationary_distribution(gamma)
    start = p.as_array()
    g = gamma.gamma
    h_first = _entropy_bits(start)

    sequence = []
    for length in range(1, window + 1):
        n_symbols = length + 1
        words = (
            np.arange(1 << n_symbols)[:, None]
            >> np.arange(n_symbols - 1, -1, -1)[None, :]
        ) & 1
        probabilities = start[words[:, 0]]
        for k in range(length):
            probabilities = probabilities * g[words[:, k], words[:, k + 1]]
        future = probabilities.reshape(2, -1).sum(axis=0)
        sequence.append(
            h_first + _entropy_bits(future) - _entropy_bits(probabilities)
        )
    return ExcessEntropyEstimate(window, sequence[-1], tuple(sequence))


def complexities(params):
    """Theoretical ``(gamma, C_c, C_q)`` of the chain at ``params``."""
    gamma = transition_probabilities(params)
    if gamma.is_degenerate:
        return gamma, 0.0, 0.0
    p = stationary_distribution(gamma)
    rho = stationary_quantum_state(quantum_causal_states(gamma), p)
    return gamma, classical_complexity(p, gamma), quantum_complexity(rho)
