"""
Dense complex linear algebra for single-qubit and two-qubit operators.

Conventions used throughout the package:

* two-qubit registers are ordered memory ⊗ ancilla, basis index
  ``2 * memory + ancilla``;
* the Choi matrix of a channel is ``C = sum_ab |a><b| ⊗ E(|a><b|)``
  (input factor first);
* entropies are in bits.
"""

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import entr

from app.errors import (
    DimensionMismatch,
    InvalidState,
    NotCP,
    NotHermitian,
    OutOfBall,
)

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_FLOOR = -1e-10
CP_FLOOR = -1e-8

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
PAULIS = {"X": X, "Y": Y, "Z": Z}

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_PLUS_I = np.array([1, 1j], dtype=complex) / np.sqrt(2)


def ket_to_density(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def ry(theta):
    """Rotation about the Y axis, ``exp(-i theta Y / 2)``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def on_memory(op):
    return np.kron(op, I2)


def on_ancilla(op):
    return np.kron(I2, op)


def _as_square(m):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got {m.shape}")
    return m


def _check_hermitian(m, tol=HERMITIAN_TOL):
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise NotHermitian("Matrix is not Hermitian within tolerance")


def _eigh2(m):
    """Closed-form eigenpairs of a 2x2 Hermitian matrix, descending."""
    a, d, b = m[0, 0].real, m[1, 1].real, m[0, 1]
    half_gap = np.sqrt(((a - d) / 2) ** 2 + abs(b) ** 2)
    mean = (a + d) / 2
    lam_hi, lam_lo = mean + half_gap, mean - half_gap

    candidates = (
        np.array([b, lam_hi - a], dtype=complex),
        np.array([lam_hi - d, np.conj(b)], dtype=complex),
    )
    v_hi = max(candidates, key=np.linalg.norm)
    norm = np.linalg.norm(v_hi)
    if norm == 0.0:
        # Multiple of the identity
        v_hi = KET0.copy()
    else:
        v_hi = v_hi / norm
    v_lo = np.array([-np.conj(v_hi[1]), np.conj(v_hi[0])])
    return np.array([lam_hi, lam_lo]), np.column_stack([v_hi, v_lo])


def hermitian_eigensolve(m):
    """
    Eigen-decomposition of a Hermitian matrix.

    Returns the eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns. The 2x2 case is solved in closed form.
    """
    m = _as_square(m)
    _check_hermitian(m)
    if m.shape[0] == 2:
        return _eigh2(m)
    values, vectors = np.linalg.eigh((m + m.conj().T) / 2)
    return values[::-1], vectors[:, ::-1]


def _eigvalsh(m):
    if m.shape[0] == 2:
        a, d, b = m[0, 0].real, m[1, 1].real, m[0, 1]
        half_gap = np.sqrt(((a - d) / 2) ** 2 + abs(b) ** 2)
        return np.array([(a + d) / 2 + half_gap, (a + d) / 2 - half_gap])
    return np.linalg.eigvalsh((m + m.conj().T) / 2)[::-1]


def check_density_matrix(rho):
    """Validate a density matrix and return it as a complex array."""
    try:
        rho = _as_square(rho)
        _check_hermitian(rho, 1e-12)
    except (NotHermitian, DimensionMismatch) as e:
        raise InvalidState(str(e)) from e
    trace = np.trace(rho).real
    if abs(trace - 1.0) > TRACE_TOL:
        raise InvalidState(f"Density matrix has trace {trace:.12g}")
    smallest = _eigvalsh(rho)[-1]
    if smallest < PSD_FLOOR:
        raise InvalidState(
            f"Density matrix has negative eigenvalue {smallest:.3e}"
        )
    return rho


def von_neumann_entropy(rho):
    """Entropy ``-Tr(rho log2 rho)`` in bits."""
    rho = check_density_matrix(rho)
    eigenvalues = np.clip(_eigvalsh(rho), 0.0, None)
    return float(entr(eigenvalues).sum() / np.log(2))


def purity(rho):
    rho = np.asarray(rho, dtype=complex)
    return float(np.trace(rho @ rho).real)


def trace_distance(rho, sigma):
    """
    Half the trace norm of ``rho - sigma``.

    Unit trace is not required so trace-scaled operators can be compared.
    """
    rho, sigma = _as_square(rho), _as_square(sigma)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(
            f"Cannot compare {rho.shape} with {sigma.shape}"
        )
    diff = rho - sigma
    _check_hermitian(diff)
    return float(0.5 * np.abs(_eigvalsh(diff)).sum())


def choi_from_kraus(kraus):
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    d_out, d_in = kraus[0].shape
    choi = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in kraus:
        v = k.T.reshape(-1)
        choi += np.outer(v, v.conj())
    return choi


def kraus_from_choi(choi, d_in=2):
    choi = _as_square(choi)
    d_out = choi.shape[0] // d_in
    values, vectors = hermitian_eigensolve(choi)
    if values[-1] < CP_FLOOR:
        raise NotCP(values[-1])
    kraus = []
    for value, vector in zip(values, vectors.T):
        if value <= 1e-14:
            continue
        kraus.append(np.sqrt(value) * vector.reshape(d_in, d_out).T)
    if not kraus:
        kraus.append(np.zeros((d_out, d_in), dtype=complex))
    return kraus


def apply_choi(choi, rho):
    """Apply a channel given only by its Choi matrix."""
    rho = _as_square(rho)
    d_in = rho.shape[0]
    d_out = choi.shape[0] // d_in
    blocks = np.asarray(choi).reshape(d_in, d_out, d_in, d_out)
    return np.einsum("ab,acbe->ce", rho, blocks)


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A completely positive map in Kraus and Choi form."""

    kraus: tuple
    choi: np.ndarray

    @classmethod
    def from_kraus(cls, kraus):
        kraus = tuple(
            np.asarray(k, dtype=complex)
            for k in kraus
            if np.any(np.abs(k) > 0)
        ) or (np.zeros_like(np.asarray(kraus[0], dtype=complex)),)
        return cls(kraus, choi_from_kraus(kraus))

    @classmethod
    def from_choi(cls, choi, d_in=2):
        choi = np.asarray(choi, dtype=complex)
        return cls(tuple(kraus_from_choi(choi, d_in)), choi)

    @classmethod
    def unitary(cls, u):
        return cls.from_kraus([u])

    @property
    def dim(self):
        return self.kraus[0].shape[1]

    @cached_property
    def superoperator(self):
        # row-major vec: vec(K rho K^dag) = (K ⊗ K*) vec(rho)
        return sum(np.kron(k, k.conj()) for k in self.kraus)

    def apply(self, rho):
        return apply_channel(self, rho)

    def apply_fast(self, rho):
        """Unvalidated application through the superoperator."""
        d = self.kraus[0].shape[0]
        return (self.superoperator @ rho.reshape(-1)).reshape(d, d)

    def completeness(self):
        return sum(k.conj().T @ k for k in self.kraus)

    def is_trace_preserving(self, atol=1e-10):
        return np.allclose(
            self.completeness(), np.eye(self.dim), atol=atol, rtol=0
        )

    def is_cp(self, atol=1e-10):
        return _eigvalsh(self.choi)[-1] >= -atol

    def __add__(self, other):
        return QuantumChannel(
            self.kraus + other.kraus, self.choi + other.choi
        )


def apply_channel(channel, rho):
    rho = _as_square(rho)
    if rho.shape[0] != channel.dim:
        raise DimensionMismatch(
            f"Channel acts on dimension {channel.dim}, state has "
            f"{rho.shape[0]}"
        )
    out = sum(k @ rho @ k.conj().T for k in channel.kraus)
    return (out + out.conj().T) / 2


def depolarizing_kraus(p, n_qubits=1):
    """Kraus operators of ``rho -> (1 - p) rho + p I / d``."""
    d = 2**n_qubits
    n_paulis = d * d
    labels = [np.eye(2, dtype=complex), X, Y, Z]
    kraus = []
    for word in itertools.product(range(4), repeat=n_qubits):
        op = np.array([[1.0 + 0j]])
        for index in word:
            op = np.kron(op, labels[index])
        if any(word):
            weight = p / n_paulis
        else:
            weight = 1 - p * (n_paulis - 1) / n_paulis
        if weight > 0:
            kraus.append(np.sqrt(weight) * op)
    return kraus


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.norm > 1 + 1e-10:
            raise OutOfBall(self.norm)

    @property
    def norm(self):
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    def as_tuple(self):
        return (self.x, self.y, self.z)


def bloch_to_density(b):
    return (I2 + b.x * X + b.y * Y + b.z * Z) / 2


def density_to_bloch(rho):
    rho = _as_square(rho)
    if rho.shape != (2, 2):
        raise DimensionMismatch(f"Expected a qubit state, got {rho.shape}")
    return BlochVector(
        *(float(np.trace(rho @ PAULIS[axis]).real) for axis in "XYZ")
    )


def partial_trace_ancilla(rho4, trace_out="ancilla"):
    """Reduce a memory ⊗ ancilla operator to one qubit."""
    rho4 = _as_square(rho4)
    if rho4.shape != (4, 4):
        raise DimensionMismatch(f"Expected a 4x4 operator, got {rho4.shape}")
    tensor = rho4.reshape(2, 2, 2, 2)
    if trace_out == "ancilla":
        return np.einsum("iaja->ij", tensor)
    if trace_out == "memory":
        return np.einsum("aiaj->ij", tensor)
    raise ValueError(f"Unknown subsystem {trace_out!r}")
