"""
Controlled-unitary simulator step, noise, conditional channels and sampling.

Registers are ordered memory ⊗ ancilla. The ancilla starts in ``|0>`` and its
readout carries the emitted symbol; the memory keeps the next causal state.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from app.errors import (
    DegenerateStates,
    InsufficientData,
    InvalidParams,
    NoDecomposition,
)
from app.ising import TransitionMatrix, stationary_distribution
from app.machine import quantum_causal_states
from app.qmath import (
    CZ,
    H,
    I2,
    KET0,
    KET1,
    SWAP,
    QuantumChannel,
    depolarizing_kraus,
    hermitian_eigensolve,
    ket_to_density,
    on_ancilla,
    on_memory,
    ry,
)

UNITARY_TOL = 1e-10
DECOMPOSITION_TOL = 1e-8
DECOMPOSITION_FAIL = 1e-6

_BASIS = np.eye(4, dtype=complex)
# Basis candidates for the columns the simulator step leaves free,
# in the order they are tried
_COMPLETION_ORDER = (1, 3, 0, 2)


@dataclass(frozen=True, eq=False)
class Gate:
    name: str
    matrix: np.ndarray
    kind: str
    qubit: str = "ancilla"


@dataclass(frozen=True, eq=False)
class CircuitSpec:
    gamma: TransitionMatrix
    route: str
    gates: tuple
    residual: float = 0.0
    angles: tuple = ()

    @property
    def unitary(self):
        return _compose(self.gates)


@dataclass(frozen=True)
class NoiseModel:
    p: float = 0.0
    epsilon: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise InvalidParams(f"Depolarizing weight {self.p} not in [0, 1]")
        if not 0 <= self.q <= 0.5:
            raise InvalidParams(f"Readout flip {self.q} not in [0, 0.5]")
        if not np.isfinite(self.epsilon):
            raise InvalidParams("Over-rotation must be finite")

    @property
    def is_ideal(self):
        return self.p == 0 and self.epsilon == 0 and self.q == 0


@dataclass(frozen=True, eq=False)
class ConditionalChannelPair:
    e0: QuantumChannel
    e1: QuantumChannel

    def __getitem__(self, outcome):
        return (self.e0, self.e1)[outcome]

    @property
    def total(self):
        return self.e0 + self.e1


@dataclass(frozen=True)
class ShotCounts:
    n0: int
    n1: int

    @property
    def shots(self):
        return self.n0 + self.n1


def _check_distinct(gamma):
    if gamma.is_degenerate:
        raise DegenerateStates(
            "Causal states coincide; the controlled unitary is undefined"
        )


def _step_targets(gamma):
    """Inputs ``|S_i>|0>`` and the outputs the simulator step must produce."""
    states = quantum_causal_states(gamma)
    kets = (states.s0, states.s1)
    outcomes = (KET0, KET1)
    inputs = [np.kron(kets[i], KET0) for i in range(2)]
    outputs = [
        sum(
            np.sqrt(gamma[i, j]) * np.kron(kets[j], outcomes[j])
            for j in range(2)
        )
        for i in range(2)
    ]
    return inputs, outputs


def step_residual(unitary, gamma):
    inputs, outputs = _step_targets(gamma)
    return float(
        np.sqrt(
            sum(
                np.linalg.norm(unitary @ v - w) ** 2
                for v, w in zip(inputs, outputs)
            )
        )
    )


def build_cu_direct(gamma):
    """Complete the isometry ``|S_i>|0> -> sum_j sqrt(G_ij) |S_j>|j>``."""
    _check_distinct(gamma)
    states = quantum_causal_states(gamma)
    _, outputs = _step_targets(gamma)
    s_matrix = np.column_stack([states.s0, states.s1])
    defined = np.column_stack(outputs) @ np.linalg.inv(s_matrix)

    u = np.zeros((4, 4), dtype=complex)
    u[:, 0] = defined[:, 0]
    u[:, 2] = defined[:, 1]
    filled = [u[:, 0], u[:, 2]]
    free_columns = [1, 3]
    for candidate in _COMPLETION_ORDER:
        if not free_columns:
            break
        v = _BASIS[:, candidate].copy()
        for w in filled:
            v -= np.vdot(w, v) * w
        norm = np.linalg.norm(v)
        if norm < 1e-8:
            continue
        v /= norm
        u[:, free_columns.pop(0)] = v
        filled.append(v)

    if np.max(np.abs(u.conj().T @ u - np.eye(4))) > UNITARY_TOL:
        logging.warning("Completed controlled unitary drifts from unitarity")
    return u


def _decomposed_gates(theta0, theta1):
    v0, v1 = ry(theta0), ry(theta1)
    return (
        Gate("V1_inv", on_ancilla(v1.conj().T), "single"),
        Gate("H_inv", on_ancilla(H), "single"),
        Gate("CZ", CZ, "core", qubit="both"),
        Gate("H", on_ancilla(H), "single"),
        Gate("V1", on_ancilla(v1), "single"),
        Gate("V0", on_ancilla(v0), "single"),
        # outcome leaves on the first wire, next state on the second
        Gate("relabel", SWAP, "relabel", qubit="both"),
    )


def _compose(gates):
    u = np.eye(4, dtype=complex)
    for gate in gates:
        u = gate.matrix @ u
    return u


def build_cu_decomposed(gamma, starts=32, max_evals=20000, seed=0):
    """
    Fit the CZ-core sequence ``V0 V1 H CZ H V1^-1`` to the simulator step.

    ``V0`` and ``V1`` are Y rotations; their two angles are found by
    multi-start Nelder-Mead on the squared constraint residual.
    """
    _check_distinct(gamma)
    inputs, outputs = _step_targets(gamma)

    def cost(angles):
        u = _compose(_decomposed_gates(*angles))
        return sum(
            np.linalg.norm(u @ v - w) ** 2 for v, w in zip(inputs, outputs)
        )

    rng = np.random.default_rng(seed)
    warm = 2 * np.arctan2(np.sqrt(gamma[0, 1]), np.sqrt(gamma[0, 0]))
    initial_points = [np.array([warm, 0.0])] + [
        rng.uniform(-np.pi, np.pi, size=2) for _ in range(starts - 1)
    ]
    budget = max(max_evals // starts, 200)

    best = None
    for x0 in initial_points:
        result = minimize(
            cost,
            x0,
            method="Nelder-Mead",
            options={"maxfev": budget, "xatol": 1e-13, "fatol": 1e-28},
        )
        if best is None or result.fun < best.fun:
            best = result
        if np.sqrt(best.fun) <= DECOMPOSITION_TOL / 100:
            break

    residual = float(np.sqrt(best.fun))
    if residual > DECOMPOSITION_FAIL:
        raise NoDecomposition(residual)
    if residual > DECOMPOSITION_TOL:
        logging.warning(f"CZ-core decomposition residual {residual:.3e}")
    return CircuitSpec(
        gamma,
        "decomposed",
        _decomposed_gates(*best.x),
        residual=residual,
        angles=tuple(float(a) for a in best.x),
    )


def build_circuit(gamma, route="decomposed", seed=0):
    if route == "direct":
        u = build_cu_direct(gamma)
        return CircuitSpec(
            gamma,
            "direct",
            (Gate("CU", u, "core", qubit="both"),),
            residual=step_residual(u, gamma),
        )
    if route == "decomposed":
        return build_cu_decomposed(gamma, seed=seed)
    raise InvalidParams(f"Unknown circuit route {route!r}")


def _then(kraus, ops):
    return [op @ k for op in ops for k in kraus]


def apply_noise(spec, noise):
    """
    Noisy two-qubit channel of one simulator step.

    Every single-qubit gate is followed by a Y over-rotation on its qubit and
    the entangling core by two-qubit depolarizing noise. The direct route
    gets the depolarizing after the whole unitary and over-rotations on both
    qubits before readout.
    """
    over_rotation = ry(noise.epsilon)
    depolarizing = depolarizing_kraus(noise.p, n_qubits=2)
    kraus = [np.eye(4, dtype=complex)]
    if spec.route == "direct":
        kraus = _then(kraus, [spec.unitary])
        kraus = _then(kraus, depolarizing)
        kraus = _then(
            kraus, [on_memory(over_rotation) @ on_ancilla(over_rotation)]
        )
        return QuantumChannel.from_kraus(kraus)

    for gate in spec.gates:
        kraus = _then(kraus, [gate.matrix])
        if gate.kind == "single":
            place = on_ancilla if gate.qubit == "ancilla" else on_memory
            kraus = _then(kraus, [place(over_rotation)])
        elif gate.kind == "core":
            kraus = _then(kraus, depolarizing)
    return QuantumChannel.from_kraus(kraus)


def conditional_maps(noisy, q=0.0):
    """
    Split the step into memory channels conditioned on the ancilla readout.

    A readout flip with probability ``q`` turns the projective measurement
    into the POVM ``M_j = (1 - q) P_j + q P_(1-j)``.
    """
    prepare = np.kron(I2, KET0[:, None])
    project = [np.kron(I2, ket[None, :].conj()) for ket in (KET0, KET1)]
    branches = []
    for outcome in range(2):
        kraus = []
        for ancilla in range(2):
            weight = 1 - q if ancilla == outcome else q
            if weight == 0:
                continue
            kraus.extend(
                np.sqrt(weight) * project[ancilla] @ k @ prepare
                for k in noisy.kraus
            )
        branches.append(QuantumChannel.from_kraus(kraus))
    return ConditionalChannelPair(*branches)


def ideal_channel_pair(gamma, route="direct"):
    spec = build_circuit(gamma, route)
    return conditional_maps(QuantumChannel.unitary(spec.unitary), 0.0)


def spectral_ensemble(rho):
    """Pure-state ensemble of ``rho``: eigenvectors weighted by eigenvalues."""
    values, vectors = hermitian_eigensolve(rho)
    values = np.clip(values, 0.0, None)
    values = values / values.sum()
    return [
        (vectors[:, k], float(values[k]))
        for k in range(len(values))
        if values[k] > 0
    ]


def branch_probabilities(ensemble, pair):
    """Exact ``(P(0), P(1))`` for an input ensemble."""
    probabilities = np.zeros(2)
    for psi, weight in ensemble:
        rho = ket_to_density(psi)
        for outcome in range(2):
            probabilities[outcome] += weight * np.trace(
                pair[outcome].apply(rho)
            ).real
    return probabilities


def run_shots(ensemble, pair, n, seed):
    """
    Sample ``n`` single-step runs from a weighted ensemble of pure inputs.

    Each shot draws an ensemble member by weight and then the ancilla outcome
    from the member's branch probabilities.
    """
    weights = np.array([w for _, w in ensemble], dtype=float)
    if abs(weights.sum() - 1) > 1e-9:
        raise InvalidParams("Ensemble weights must sum to 1")
    if n < 1:
        raise InvalidParams("Shot count must be at least 1")
    rng = np.random.default_rng(seed)
    p_one = np.array(
        [
            np.clip(branch_probabilities([(psi, 1.0)], pair)[1], 0.0, 1.0)
            for psi, _ in ensemble
        ]
    )
    members = rng.choice(len(ensemble), size=n, p=weights / weights.sum())
    ones = int(np.count_nonzero(rng.random(n) < p_one[members]))
    return ShotCounts(n - ones, ones)


def classical_sample(gamma, n_steps, seed, start=None):
    """
    Emit ``n_steps`` symbols from the classical machine.

    The initial causal state is drawn from the stationary distribution unless
    ``start`` is given. Each emitted symbol is the next causal state.
    """
    rng = np.random.default_rng(seed)
    if start is None:
        p = stationary_distribution(gamma)
        start = int(rng.random() >= p.p0)
    to_one = gamma.gamma[:, 1]
    draws = rng.random(n_steps)
    symbols = np.empty(n_steps, dtype=np.int8)
    state = start
    for k in range(n_steps):
        state = 1 if draws[k] < to_one[state] else 0
        symbols[k] = state
    return symbols


def estimate_gamma(symbols, start=None):
    """Empirical transition matrix of an emitted symbol sequence."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if start is not None:
        symbols = np.concatenate([[start], symbols])
    counts = np.zeros((2, 2))
    np.add.at(counts, (symbols[:-1], symbols[1:]), 1)
    if np.any(counts.sum(axis=1) == 0):
        raise InsufficientData("A causal state was never visited")
    return TransitionMatrix.from_rows(counts)
