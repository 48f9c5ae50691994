import numpy as np
import pytest

from app.circuit import classical_sample, estimate_gamma
from app.errors import InsufficientData
from app.ising import IsingParams, TransitionMatrix, transition_probabilities


def test_frozen_chain_from_zero():
    """
    G = I started in S0 emits only zeros.
    """
    symbols = classical_sample(TransitionMatrix(np.eye(2)), 100, 5, start=0)

    assert not symbols.any()


def test_fair_coin_frequency():
    """
    G all 1/2 emits ones at rate 1/2 within five standard deviations.
    """
    n = 10**5
    symbols = classical_sample(
        TransitionMatrix(np.full((2, 2), 0.5)), n, seed=8, start=0
    )

    assert abs(symbols.mean() - 0.5) < 5 * np.sqrt(0.25 / n)


@pytest.mark.slow
def test_empirical_transitions_at_nominal_point():
    """
    10^6 steps at J=1, B=0.3, T=2 recover every transition probability
    within five standard deviations.
    """
    gamma = transition_probabilities(IsingParams(1.0, 0.3, 2.0))
    symbols = classical_sample(gamma, 10**6, seed=2019)
    visits = np.bincount(symbols[:-1], minlength=2)

    estimate = estimate_gamma(symbols)

    for i in range(2):
        sigma = np.sqrt(gamma[i, 1] * gamma[i, 0] / visits[i])
        assert abs(estimate[i, 1] - gamma[i, 1]) < 5 * sigma


def test_reproducible():
    """
    The same seed gives the same symbols.
    """
    gamma = TransitionMatrix.from_off_diagonal(0.3, 0.6)

    assert np.array_equal(
        classical_sample(gamma, 500, 1), classical_sample(gamma, 500, 1)
    )


def test_estimate_needs_both_states():
    """
    A sequence that never leaves one state cannot estimate the other row.
    """
    with pytest.raises(InsufficientData):
        estimate_gamma(np.zeros(50, dtype=int))
