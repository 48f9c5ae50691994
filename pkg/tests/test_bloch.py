import numpy as np
import pytest

from app.errors import OutOfBall
from app.qmath import (
    KET0,
    BlochVector,
    bloch_to_density,
    density_to_bloch,
    ket_to_density,
    von_neumann_entropy,
)


def test_north_pole():
    """
    (0, 0, 1) is |0><0|.
    """
    assert np.allclose(
        bloch_to_density(BlochVector(0, 0, 1)), ket_to_density(KET0)
    )


def test_centre():
    """
    The origin is the maximally mixed state.
    """
    assert np.allclose(bloch_to_density(BlochVector(0, 0, 0)), np.eye(2) / 2)


def test_surface_point_is_pure():
    """
    (1/sqrt(2), 0, 1/sqrt(2)) lies on the sphere: a pure state.
    """
    rho = bloch_to_density(BlochVector(1 / np.sqrt(2), 0, 1 / np.sqrt(2)))

    assert von_neumann_entropy(rho) == pytest.approx(0.0, abs=1e-10)


def test_round_trip_and_eigenvalues():
    """
    Bloch vector to density and back is the identity within 1e-12, and the
    eigenvalues are (1 +- |b|) / 2.
    """
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = rng.normal(size=3)
        v *= rng.uniform() / np.linalg.norm(v)
        b = BlochVector(*v)
        rho = bloch_to_density(b)

        assert np.allclose(
            density_to_bloch(rho).as_tuple(), b.as_tuple(), atol=1e-12
        )
        assert np.allclose(
            np.sort(np.linalg.eigvalsh(rho)),
            [(1 - b.norm) / 2, (1 + b.norm) / 2],
            atol=1e-12,
        )


def test_out_of_ball():
    """
    A vector longer than 1 + 1e-10 raises OutOfBall.
    """
    with pytest.raises(OutOfBall):
        BlochVector(0.8, 0.8, 0.0)
