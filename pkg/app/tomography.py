"""
Simulated tomography of the conditional memory channels.

Data collection prepares each of four inputs, runs one simulator step,
conditions on the ancilla outcome and reads the memory qubit out in the X, Y
and Z bases. Channels are rebuilt by linear inversion followed by a
positivity projection of the Choi matrix.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from app.errors import IllConditioned, IncompleteData, InvalidParams
from app.qmath import (
    I2,
    KET0,
    KET1,
    KET_PLUS,
    KET_PLUS_I,
    PAULIS,
    BlochVector,
    QuantumChannel,
    bloch_to_density,
    hermitian_eigensolve,
    ket_to_density,
    trace_distance,
)

INPUT_STATES = {"0": KET0, "1": KET1, "+": KET_PLUS, "+i": KET_PLUS_I}
BASES = ("X", "Y", "Z")
OUTCOMES = (0, 1)
MIN_SHOTS = 100


@dataclass(frozen=True)
class TomographyRecord:
    input: str
    outcome: int
    basis: str
    n_plus: float
    n_minus: float


@dataclass(frozen=True)
class TomographyDataset:
    records: tuple
    shots: int
    seed: int
    exact: bool = False

    def counts(self):
        return {
            (r.input, r.outcome, r.basis): (r.n_plus, r.n_minus)
            for r in self.records
        }

    def to_json(self):
        return json.dumps(
            {
                "shots": self.shots,
                "seed": self.seed,
                "exact": self.exact,
                "records": [
                    dict(asdict(r), shots=self.shots, seed=self.seed)
                    for r in self.records
                ],
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        records = tuple(
            TomographyRecord(
                r["input"], r["outcome"], r["basis"], r["n_plus"], r["n_minus"]
            )
            for r in payload["records"]
        )
        return cls(
            records, payload["shots"], payload["seed"], payload["exact"]
        )


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    e0_hat: QuantumChannel
    e1_hat: QuantumChannel
    state_hats: dict
    fit_residual: float

    def __getitem__(self, outcome):
        return (self.e0_hat, self.e1_hat)[outcome]


def _outcome_probabilities(pair, rho, basis):
    """Joint ``P(j, +)``, ``P(j, -)`` for both ancilla outcomes."""
    sigma = PAULIS[basis]
    probabilities = []
    for outcome in OUTCOMES:
        out = pair[outcome].apply(rho)
        for sign in (1, -1):
            probabilities.append(np.trace(out @ (I2 + sign * sigma)).real / 2)
    probabilities = np.clip(probabilities, 0.0, None)
    return probabilities / probabilities.sum()


def generate_tomography_data(pair, shots, seed, exact=False):
    """
    Multinomial counts for every (input, basis), split by ancilla outcome.

    ``exact=True`` stores the expected counts instead of samples.
    """
    if shots < MIN_SHOTS:
        raise InvalidParams(f"Need at least {MIN_SHOTS} shots per setting")
    rng = np.random.default_rng(seed)
    records = []
    for label, ket in INPUT_STATES.items():
        rho = ket_to_density(ket)
        for basis in BASES:
            probabilities = _outcome_probabilities(pair, rho, basis)
            if exact:
                counts = shots * probabilities
            else:
                counts = rng.multinomial(shots, probabilities)
            for outcome in OUTCOMES:
                n_plus, n_minus = counts[2 * outcome], counts[2 * outcome + 1]
                records.append(
                    TomographyRecord(
                        label,
                        outcome,
                        basis,
                        float(n_plus) if exact else int(n_plus),
                        float(n_minus) if exact else int(n_minus),
                    )
                )
    return TomographyDataset(tuple(records), shots, seed, exact)


def cp_project(choi):
    """
    Nearest positive semidefinite Choi matrix by eigenvalue clipping.

    The trace is restored to the input trace, clipped to ``[0, 2]``.
    """
    choi = np.asarray(choi, dtype=complex)
    choi = (choi + choi.conj().T) / 2
    target_trace = float(np.clip(np.trace(choi).real, 0.0, 2.0))
    values, vectors = hermitian_eigensolve(choi)
    values = np.clip(values, 0.0, None)
    if values.sum() == 0:
        return np.zeros_like(choi)
    values *= target_trace / values.sum()
    return (vectors * values) @ vectors.conj().T


def _design_inverse():
    design = np.array(
        [ket_to_density(ket).reshape(-1) for ket in INPUT_STATES.values()]
    )
    if np.linalg.cond(design) > 1e12:
        raise IllConditioned("Tomography input states are not complete")
    return np.linalg.inv(design)


def reconstruct_channels(data):
    """Linear-inversion estimate of both conditional channels."""
    counts = data.counts()
    missing = [
        (label, outcome, basis)
        for label in INPUT_STATES
        for outcome in OUTCOMES
        for basis in BASES
        if (label, outcome, basis) not in counts
    ]
    if missing:
        raise IncompleteData(f"Missing tomography settings: {missing}")

    inverse = _design_inverse()
    channels, residual, state_hats = [], 0.0, {}
    for outcome in OUTCOMES:
        outputs = []
        for label in INPUT_STATES:
            # Branch weight from the outcome split, averaged over bases
            weight = np.mean(
                [sum(counts[(label, outcome, b)]) for b in BASES]
            ) / data.shots
            expectations = [
                np.subtract(*counts[(label, outcome, b)]) / data.shots
                for b in BASES
            ]
            outputs.append(
                (weight * I2 + sum(
                    e * PAULIS[b] for e, b in zip(expectations, BASES)
                )) / 2
            )
            try:
                state_hats[(label, outcome)] = reconstruct_state(
                    {b: counts[(label, outcome, b)] for b in BASES}
                )
            except IncompleteData:
                pass
        outputs = np.array(outputs)
        images = np.tensordot(inverse, outputs, axes=(1, 0))
        choi = sum(
            np.kron(np.outer(np.eye(2)[a], np.eye(2)[b]), images[2 * a + b])
            for a in range(2)
            for b in range(2)
        )
        projected = cp_project(choi)
        residual += float(np.linalg.norm(choi - projected))
        channels.append(QuantumChannel.from_choi(projected))
    return ReconstructionResult(channels[0], channels[1], state_hats, residual)


def reconstruct_state(counts):
    """
    Qubit state from Pauli counts ``{basis: (n_plus, n_minus)}``.

    The Bloch vector is clipped back into the unit ball.
    """
    missing = [b for b in BASES if b not in counts]
    if missing:
        raise IncompleteData(f"Missing measurement bases: {missing}")
    expectations = []
    for basis in BASES:
        n_plus, n_minus = counts[basis]
        total = n_plus + n_minus
        if total <= 0:
            raise IncompleteData(f"No counts recorded in basis {basis}")
        expectations.append((n_plus - n_minus) / total)
    vector = np.array(expectations, dtype=float)
    norm = np.linalg.norm(vector)
    if norm > 1:
        vector = vector / norm
    return bloch_to_density(BlochVector(*vector))


def sample_pauli_counts(rho, shots, seed, exact=False):
    """Pauli-basis counts of a single-qubit state."""
    rng = np.random.default_rng(seed)
    counts = {}
    for basis in BASES:
        p_plus = float(
            np.clip(np.trace(rho @ (I2 + PAULIS[basis])).real / 2, 0.0, 1.0)
        )
        if exact:
            counts[basis] = (shots * p_plus, shots * (1 - p_plus))
        else:
            n_plus = int(rng.binomial(shots, p_plus))
            counts[basis] = (n_plus, shots - n_plus)
    return counts


def choi_distance(estimate, truth):
    """Trace distance of two channels' Choi matrices, normalized per input."""
    d_in = truth.dim
    return trace_distance(estimate.choi / d_in, truth.choi / d_in)
