import numpy as np
import pytest

from app.circuit import NoiseModel, apply_noise, build_circuit
from app.errors import InvalidParams
from app.ising import IsingParams, transition_probabilities
from app.qmath import QuantumChannel, trace_distance

GAMMA = transition_probabilities(IsingParams(1.0, 0.3, 2.0))


@pytest.mark.parametrize("route", ["direct", "decomposed"])
def test_zero_noise_is_the_unitary(route):
    """
    p = epsilon = q = 0 leaves exactly the ideal unitary channel.
    """
    spec = build_circuit(GAMMA, route)

    noisy = apply_noise(spec, NoiseModel())
    ideal = QuantumChannel.unitary(spec.unitary)

    assert NoiseModel().is_ideal
    assert trace_distance(noisy.choi / 4, ideal.choi / 4) < 1e-12


@pytest.mark.parametrize("route", ["direct", "decomposed"])
def test_full_depolarizing(route):
    """
    p = 1 sends every two-qubit input to I/4.
    """
    noisy = apply_noise(build_circuit(GAMMA, route), NoiseModel(p=1.0))
    rng = np.random.default_rng(1)
    for _ in range(5):
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        out = noisy.apply(np.outer(psi, psi.conj()))
        assert np.allclose(out, np.eye(4) / 4, atol=1e-12)


@pytest.mark.parametrize("route", ["direct", "decomposed"])
def test_default_noise_is_cptp(route):
    """
    The default noise settings give a trace-preserving channel with a
    positive semidefinite Choi matrix.
    """
    noisy = apply_noise(
        build_circuit(GAMMA, route), NoiseModel(0.03, 0.02, 0.01)
    )

    assert noisy.is_trace_preserving()
    assert noisy.is_cp()


def test_noise_ranges():
    """
    Out-of-range noise parameters are rejected.
    """
    with pytest.raises(InvalidParams):
        NoiseModel(p=1.5)
    with pytest.raises(InvalidParams):
        NoiseModel(q=0.6)
