import numpy as np
import pytest

from app.errors import Degenerate
from app.ising import (
    IsingParams,
    TransitionMatrix,
    stationary_distribution,
    transition_probabilities,
)


def test_symmetric_chain_is_uniform():
    """
    Zero field gives equal weight to both causal states.
    """
    p = stationary_distribution(
        transition_probabilities(IsingParams(1.0, 0.0, 2.0))
    )

    assert p.p0 == pytest.approx(0.5, abs=1e-12)
    assert p.p1 == pytest.approx(0.5, abs=1e-12)


def test_absorbing_state_zero():
    """
    With G01 = 0 and G10 > 0, all weight ends in state 0.
    """
    p = stationary_distribution(TransitionMatrix.from_off_diagonal(0.0, 0.4))

    assert p.p0 == pytest.approx(1.0)
    assert p.p1 == pytest.approx(0.0)


def test_left_fixed_vector():
    """
    At J=1, B=0.3, T=2 the distribution is a left fixed vector of G and
    satisfies p0 G01 = p1 G10.
    """
    gamma = transition_probabilities(IsingParams(1.0, 0.3, 2.0))
    p = stationary_distribution(gamma)

    assert np.allclose(p.as_array() @ gamma.gamma, p.as_array(), atol=1e-10)
    assert p.p0 * gamma[0, 1] == pytest.approx(p.p1 * gamma[1, 0], abs=1e-10)
    assert p.p0 > p.p1


def test_both_states_absorbing():
    """
    The identity chain has no unique stationary distribution.
    """
    with pytest.raises(Degenerate):
        stationary_distribution(TransitionMatrix(np.eye(2)))
