import numpy as np
import pytest

from app.ising import (
    IsingParams,
    StationaryDistribution,
    TransitionMatrix,
    stationary_distribution,
    transition_probabilities,
)
from app.machine import (
    complexities,
    quantum_causal_states,
    quantum_complexity,
    stationary_quantum_state,
)
from app.qmath import KET0, KET1, KET_PLUS


def test_identity_gives_orthogonal_states():
    """
    G = I is the classical limit: |S0> = |0>, |S1> = |1>.
    """
    states = quantum_causal_states(TransitionMatrix(np.eye(2)))

    assert np.allclose(states.s0, KET0)
    assert np.allclose(states.s1, KET1)
    assert states.overlap == pytest.approx(0.0)


def test_uniform_gives_identical_states():
    """
    G all 1/2 makes both states |+>.
    """
    states = quantum_causal_states(TransitionMatrix(np.full((2, 2), 0.5)))

    assert np.allclose(states.s0, KET_PLUS)
    assert np.allclose(states.s1, KET_PLUS)


def test_zero_field_overlap():
    """
    At B = 0, T = 2 the overlap is 2 sqrt(a (1 - a)) with a = G00, about
    0.8868.
    """
    gamma = transition_probabilities(IsingParams(1.0, 0.0, 2.0))
    a = gamma[0, 0]

    overlap = quantum_causal_states(gamma).overlap

    assert overlap == pytest.approx(2 * np.sqrt(a * (1 - a)), abs=1e-12)
    assert overlap == pytest.approx(0.8868, abs=1e-4)


def test_overlap_identity_for_random_gamma():
    """
    <S0|S1> = sqrt(G00 G10) + sqrt(G01 G11) and both states are normalized.
    """
    rng = np.random.default_rng(9)
    for _ in range(50):
        gamma = TransitionMatrix.from_off_diagonal(*rng.uniform(size=2))
        states = quantum_causal_states(gamma)
        assert np.linalg.norm(states.s0) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(states.s1) == pytest.approx(1.0, abs=1e-12)
        assert states.overlap == pytest.approx(
            np.sqrt(gamma[0, 0] * gamma[1, 0])
            + np.sqrt(gamma[0, 1] * gamma[1, 1]),
            abs=1e-12,
        )


def test_stationary_state_limits():
    """
    Orthogonal states mixed evenly give I/2; identical states give a pure
    state.
    """
    even = StationaryDistribution(0.5, 0.5)
    orthogonal = quantum_causal_states(TransitionMatrix(np.eye(2)))
    identical = quantum_causal_states(TransitionMatrix(np.full((2, 2), 0.5)))

    assert np.allclose(
        stationary_quantum_state(orthogonal, even), np.eye(2) / 2
    )
    assert quantum_complexity(
        stationary_quantum_state(identical, even)
    ) == pytest.approx(0.0, abs=1e-10)


def test_zero_field_quantum_complexity():
    """
    At B = 0, T = 2 the memory state is [[1/2, c], [c, 1/2]] with
    c = sqrt(a (1 - a)) and C_q is about 0.3137 bits, below C_c = 1.
    """
    gamma = transition_probabilities(IsingParams(1.0, 0.0, 2.0))
    a = gamma[0, 0]
    c = np.sqrt(a * (1 - a))
    rho = stationary_quantum_state(
        quantum_causal_states(gamma), stationary_distribution(gamma)
    )
    lam = 0.5 + c
    expected = -lam * np.log2(lam) - (1 - lam) * np.log2(1 - lam)

    assert np.allclose(rho, [[0.5, c], [c, 0.5]], atol=1e-12)
    assert quantum_complexity(rho) == pytest.approx(expected, abs=1e-10)
    assert quantum_complexity(rho) == pytest.approx(0.3137, abs=2e-4)

    _, c_c, c_q = complexities(IsingParams(1.0, 0.0, 2.0))
    assert c_c == pytest.approx(1.0, abs=1e-12)
    assert c_q == pytest.approx(expected, abs=1e-10)


def test_degenerate_point_has_zero_complexities():
    """
    At infinite temperature both causal states merge and both complexities
    vanish.
    """
    _, c_c, c_q = complexities(IsingParams(1.0, 0.3, 1e12))

    assert (c_c, c_q) == (0.0, 0.0)
