"""
One-dimensional nearest-neighbour Ising chain.

Spins ``x = +1`` and ``x = -1`` map to indices 0 and 1, so ``S_0`` is the
field-aligned state when ``B > 0``.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import least_squares
from scipy.special import logsumexp

from app.errors import (
    Degenerate,
    InvalidParams,
    NoConvergence,
    NotAchievable,
    TooLarge,
)
from app.qmath import hermitian_eigensolve

SPINS = np.array([1.0, -1.0])
MAX_CHAIN_LENGTH = 28
MIN_CHAIN_LENGTH = 8
DEGENERACY_TOL = 1e-9
ENUMERATION_CHUNK = 1 << 20


@dataclass(frozen=True)
class IsingParams:
    J: float
    B: float
    T: float

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise InvalidParams(f"Temperature must be positive, got {self.T}")
        if not np.isfinite(self.J) or self.J == 0:
            raise InvalidParams("Coupling J must be non-zero")
        if not np.isfinite(self.B):
            raise InvalidParams(f"Field must be finite, got {self.B}")

    @property
    def beta(self):
        return 1.0 / self.T


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic ``gamma[i, j] = P(emit j, go to S_j | S_i)``."""

    gamma: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.shape != (2, 2):
            raise InvalidParams(f"Expected a 2x2 matrix, got {gamma.shape}")
        if not np.all(np.isfinite(gamma)):
            raise InvalidParams("Transition probabilities must be finite")
        if np.any(gamma < -1e-12) or np.any(gamma > 1 + 1e-12):
            raise InvalidParams("Transition probabilities must lie in [0, 1]")
        if np.any(np.abs(gamma.sum(axis=1) - 1) > 1e-12):
            raise InvalidParams("Transition matrix rows must sum to 1")
        object.__setattr__(self, "gamma", np.clip(gamma, 0.0, 1.0))

    @classmethod
    def from_off_diagonal(cls, g01, g10):
        return cls(np.array([[1 - g01, g01], [g10, 1 - g10]]))

    @classmethod
    def from_rows(cls, rows):
        rows = np.asarray(rows, dtype=float)
        return cls(rows / rows.sum(axis=1, keepdims=True))

    def __getitem__(self, index):
        return float(self.gamma[index])

    @property
    def is_degenerate(self):
        """Both rows coincide, so the two causal states merge."""
        return abs(self.gamma[0, 0] - self.gamma[1, 0]) < DEGENERACY_TOL

    def relabeled(self):
        return TransitionMatrix(self.gamma[::-1, ::-1].copy())

    def as_list(self):
        return [float(v) for v in self.gamma.reshape(-1)]


@dataclass(frozen=True)
class StationaryDistribution:
    p0: float
    p1: float

    def __post_init__(self):
        if min(self.p0, self.p1) < 0 or abs(self.p0 + self.p1 - 1) > 1e-12:
            raise InvalidParams(
                f"Invalid distribution ({self.p0}, {self.p1})"
            )

    def as_array(self):
        return np.array([self.p0, self.p1])


def _log_transfer(params):
    return params.beta * (
        params.J * np.outer(SPINS, SPINS)
        + params.B * (SPINS[:, None] + SPINS[None, :]) / 2
    )


def transfer_matrix(params):
    """``V[x, x'] = exp(beta (J x x' + B (x + x') / 2))``."""
    return np.exp(_log_transfer(params))


def transition_probabilities(params):
    """Conditional spin statistics from the Perron eigenpair of ``V``."""
    log_v = _log_transfer(params)
    v = np.exp(log_v - log_v.max())
    values, vectors = hermitian_eigensolve(v)
    lam = values[0]
    phi = np.abs(vectors[:, 0].real)
    gamma = v * phi[None, :] / (lam * phi[:, None])
    return TransitionMatrix(gamma / gamma.sum(axis=1, keepdims=True))


@lru_cache(maxsize=8)
def _density_of_states(chain_length):
    """
    Count configurations of an open chain by (x_0, x_1, flips, downs).

    ``flips`` is the number of anti-aligned bonds and ``downs`` the number of
    ``-1`` spins; bit ``k`` of the configuration index is site ``k``.
    """
    n_configs = 1 << chain_length
    bond_mask = np.uint64((1 << (chain_length - 1)) - 1)
    n_flips, n_downs = chain_length, chain_length + 1
    histogram = np.zeros(4 * n_flips * n_downs, dtype=np.int64)
    for start in range(0, n_configs, ENUMERATION_CHUNK):
        stop = min(start + ENUMERATION_CHUNK, n_configs)
        idx = np.arange(start, stop, dtype=np.uint64)
        downs = np.bitwise_count(idx).astype(np.int64)
        flips = np.bitwise_count(
            (idx ^ (idx >> np.uint64(1))) & bond_mask
        ).astype(np.int64)
        pair = (
            2 * (idx & np.uint64(1)) + ((idx >> np.uint64(1)) & np.uint64(1))
        ).astype(np.int64)
        key = (pair * n_flips + flips) * n_downs + downs
        histogram += np.bincount(key, minlength=histogram.size)
    return histogram.reshape(4, n_flips, n_downs)


def brute_force_gamma(params, chain_length):
    """
    Boltzmann enumeration of every configuration of an open chain.

    The conditional ``P(x_1 | x_0)`` of the left-most pair is returned: by the
    Markov property it does not depend on the spins to the left, so the whole
    remaining chain acts as the future.
    """
    if chain_length > MAX_CHAIN_LENGTH:
        raise TooLarge(
            f"2^{chain_length} configurations exceed the enumeration bound "
            f"2^{MAX_CHAIN_LENGTH}"
        )
    if chain_length < MIN_CHAIN_LENGTH:
        raise InvalidParams(
            f"Chain length must be at least {MIN_CHAIN_LENGTH}"
        )
    histogram = _density_of_states(chain_length)
    flips = np.arange(chain_length)[:, None]
    downs = np.arange(chain_length + 1)[None, :]
    bond_sum = (chain_length - 1) - 2 * flips
    magnetization = chain_length - 2 * downs
    # -beta H = beta (J sum x x' + B sum x)
    log_weight = params.beta * (params.J * bond_sum + params.B * magnetization)

    log_joint = np.empty(4)
    for pair in range(4):
        counts = histogram[pair]
        mask = counts > 0
        log_joint[pair] = logsumexp(np.log(counts[mask]) + log_weight[mask])
    log_joint = log_joint.reshape(2, 2)
    gamma = np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
    return TransitionMatrix(gamma / gamma.sum(axis=1, keepdims=True))


def stationary_distribution(gamma):
    g01, g10 = gamma[0, 1], gamma[1, 0]
    if g01 + g10 <= 0:
        raise Degenerate("Both causal states are absorbing")
    p0 = g10 / (g10 + g01)
    return StationaryDistribution(p0, 1.0 - p0)


def closed_form_parameters(gamma, J):
    """
    Exact inverse for the two-state chain.

    ``G01 G10 / (G00 G11) = exp(-4 J / T)`` and ``G00 / G11 = exp(2 B / T)``.
    Returns ``None`` when the ratios do not describe a positive temperature.
    """
    g = gamma.gamma
    ratio = g[0, 1] * g[1, 0] / (g[0, 0] * g[1, 1])
    log_ratio = np.log(ratio)
    if log_ratio == 0 or not np.isfinite(log_ratio):
        return None
    t = -4 * J / log_ratio
    if t <= 0:
        return None
    return t, t * np.log(g[0, 0] / g[1, 1]) / 2


def _inversion_residual(x, J, target):
    try:
        with np.errstate(all="ignore"):
            gamma = transition_probabilities(
                IsingParams(J, x[1], np.exp(x[0]))
            )
    except (InvalidParams, FloatingPointError, ValueError, OverflowError):
        return np.full(2, 1e3)
    return np.array([gamma[0, 1], gamma[1, 0]]) - target


def invert_parameters(
    gamma, J, initial_guess=None, restarts=64, seed=0, tolerance=1e-9
):
    """
    Recover ``(T, B)`` whose transition matrix matches ``gamma``.

    Least-squares on ``(log T, B)`` over the independent entries
    ``(G01, G10)``, warm-started from the closed form and the caller's
    guess, then from seeded random restarts.
    """
    g = gamma.gamma
    if np.any(g <= 0) or np.any(g >= 1):
        raise InvalidParams(
            "Inversion needs every transition probability strictly in (0, 1)"
        )
    target = np.array([g[0, 1], g[1, 0]])

    starts = []
    for guess in (closed_form_parameters(gamma, J), initial_guess):
        if guess is not None and guess[0] > 0:
            starts.append(np.array([np.log(guess[0]), guess[1]]))
    rng = np.random.default_rng(seed)
    starts.extend(
        np.array([rng.uniform(np.log(0.05), np.log(100.0)),
                  rng.uniform(-3.0, 3.0)])
        for _ in range(restarts)
    )

    best_x, best_residual = None, np.inf
    for x0 in starts:
        try:
            fit = least_squares(
                _inversion_residual,
                x0,
                args=(J, target),
                method="lm",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=2000,
            )
        except (ValueError, FloatingPointError) as e:
            logging.warning(f"Inversion start {x0} failed: {e}")
            continue
        residual = float(np.linalg.norm(fit.fun))
        if residual < best_residual:
            best_x, best_residual = fit.x, residual
        if best_residual < tolerance:
            break

    if best_x is None:
        raise NoConvergence("Parameter inversion failed from every start")
    if best_residual > 1e-4:
        raise NotAchievable(best_residual)
    if best_residual > tolerance:
        logging.warning(
            f"Parameter inversion stopped at residual {best_residual:.3e}"
        )
    return float(np.exp(best_x[0])), float(best_x[1])
