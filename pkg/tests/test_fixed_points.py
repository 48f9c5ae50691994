import json
from unittest.mock import patch

import numpy as np
import pytest

from app.circuit import (
    ConditionalChannelPair,
    NoiseModel,
    apply_noise,
    build_circuit,
    conditional_maps,
    ideal_channel_pair,
)
from app.errors import InvalidParams, NotAchievable
from app.fixedpoint import (
    FixedPointCandidate,
    OptimizerConfig,
    _fast_objective,
    decode,
    encode,
    noiseless_candidate,
    objective,
    solve_fixed_points,
)
from app.ising import (
    IsingParams,
    stationary_distribution,
    transition_probabilities,
)
from app.qmath import purity, trace_distance

PARAMS = IsingParams(1.0, 0.3, 2.0)
GAMMA = transition_probabilities(PARAMS)
QUICK = OptimizerConfig(starts=6, max_evals=6000, seed=1, workers=2)


def noisy_pair(noise):
    spec = build_circuit(GAMMA, "decomposed")
    return conditional_maps(apply_noise(spec, noise), noise.q)


def test_ideal_candidate_has_zero_objective():
    """
    The pure causal states with the nominal transitions are exact fixed
    points of the ideal channels.
    """
    pair = ideal_channel_pair(GAMMA)

    assert objective(noiseless_candidate(GAMMA), pair) < 1e-10


def test_swapped_labels_are_penalised():
    """
    Exchanging the two states without relabelling G is detected.
    """
    pair = ideal_channel_pair(GAMMA)
    good = noiseless_candidate(GAMMA)
    swapped = FixedPointCandidate(good.rho1, good.rho0, GAMMA)

    assert objective(swapped, pair) > 1e-3


def test_relabelling_both_keeps_residual():
    """
    Swapping the states together with the matching relabelling of G and of
    the emitted symbols leaves the residual unchanged.
    """
    pair = noisy_pair(NoiseModel(0.03, 0.02, 0.01))
    swapped = ConditionalChannelPair(pair.e1, pair.e0)
    candidate = noiseless_candidate(GAMMA)

    assert objective(candidate.relabeled(), swapped) == pytest.approx(
        objective(candidate, pair), abs=1e-12
    )


def test_vectorized_objective_matches():
    """
    The encoded objective used by the optimizer equals the trace-distance
    sum on the decoded candidate.
    """
    pair = noisy_pair(NoiseModel(0.03, 0.02, 0.01))
    supers = np.array([pair[j].superoperator for j in range(2)])
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.normal(size=8)
        assert _fast_objective(x, supers) == pytest.approx(
            objective(decode(x), pair), abs=1e-10
        )
    x = encode(noiseless_candidate(GAMMA))
    assert _fast_objective(x, supers) == pytest.approx(
        objective(noiseless_candidate(GAMMA), pair), abs=1e-9
    )


def test_zero_noise_recovery():
    """
    Without noise the solver returns the pure causal states, the nominal
    transitions and the nominal (T, B).
    """
    solution = solve_fixed_points(
        ideal_channel_pair(GAMMA, "decomposed"),
        QUICK,
        1.0,
        reference=GAMMA,
        nominal=(2.0, 0.3),
    )
    expected = noiseless_candidate(GAMMA)

    assert solution.residual < 1e-8
    assert solution.converged
    assert trace_distance(solution.rho0, expected.rho0) < 1e-6
    assert trace_distance(solution.rho1, expected.rho1) < 1e-6
    assert purity(solution.rho0) == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(solution.gamma_m.gamma, GAMMA.gamma, atol=1e-6)
    assert solution.t_m == pytest.approx(2.0, abs=1e-4)
    assert solution.b_m == pytest.approx(0.3, abs=1e-4)


def test_solution_invariants():
    """
    The reported residual matches a recomputation; p_m is stationary for
    G_m and rho_m mixes the two states with p_m.
    """
    pair = noisy_pair(NoiseModel(0.03, 0.02, 0.01))

    solution = solve_fixed_points(
        pair, QUICK, 1.0, reference=GAMMA, nominal=(2.0, 0.3)
    )
    recomputed = objective(
        FixedPointCandidate(solution.rho0, solution.rho1, solution.gamma_m),
        pair,
    )
    p = stationary_distribution(solution.gamma_m)

    assert solution.residual == pytest.approx(recomputed, abs=1e-10)
    assert np.allclose(solution.gamma_m.gamma.sum(axis=1), 1.0, atol=1e-12)
    assert (solution.p_m.p0, solution.p_m.p1) == pytest.approx((p.p0, p.p1))
    assert np.allclose(
        solution.rho_m, p.p0 * solution.rho0 + p.p1 * solution.rho1
    )
    assert np.trace(solution.rho0).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(solution.rho0).min() >= -1e-10


def test_solver_improves_on_noiseless_candidate():
    """
    With default noise the solver does strictly better than the noiseless
    candidate it starts from, and the inverted parameters stay near
    nominal.
    """
    pair = noisy_pair(NoiseModel(0.03, 0.02, 0.01))

    solution = solve_fixed_points(
        pair, QUICK, 1.0, reference=GAMMA, nominal=(2.0, 0.3)
    )

    assert solution.residual < objective(noiseless_candidate(GAMMA), pair)
    assert not solution.converged
    assert abs(solution.t_m - 2.0) < 1.0
    assert abs(solution.b_m - 0.3) < 0.2


def test_depolarizing_gives_mixed_states():
    """
    Depolarizing noise alone leaves fixed points that are not pure.
    """
    solution = solve_fixed_points(
        noisy_pair(NoiseModel(p=0.05)), QUICK, 1.0, reference=GAMMA
    )

    assert purity(solution.rho0) < 1 - 1e-4
    assert purity(solution.rho1) < 1 - 1e-4


@pytest.mark.slow
def test_independent_seeds_agree():
    """
    Two solver seeds with the full 32 starts reach the same residual within
    1e-6 and the same states within 1e-4.
    """
    pair = noisy_pair(NoiseModel(0.03, 0.02, 0.01))

    first = solve_fixed_points(
        pair, OptimizerConfig(seed=1), 1.0, reference=GAMMA
    )
    second = solve_fixed_points(
        pair, OptimizerConfig(seed=2), 1.0, reference=GAMMA
    )

    assert first.residual == pytest.approx(second.residual, abs=1e-6)
    assert trace_distance(first.rho0, second.rho0) < 1e-4
    assert trace_distance(first.rho1, second.rho1) < 1e-4


def test_solution_json():
    """
    The JSON form carries the Bloch vectors, transitions and residual.
    """
    solution = solve_fixed_points(
        ideal_channel_pair(GAMMA), QUICK, 1.0, reference=GAMMA
    )

    payload = json.loads(solution.to_json())

    assert payload["bloch0"] == pytest.approx(
        [solution.rho0[0, 1].real * 2, -solution.rho0[0, 1].imag * 2,
         (solution.rho0[0, 0] - solution.rho0[1, 1]).real],
        abs=1e-12,
    )
    assert payload["gamma"] == pytest.approx(solution.gamma_m.as_list())
    assert payload["residual"] == solution.residual


def test_optimizer_config_validation():
    """
    At least one start and a positive tolerance are required.
    """
    with pytest.raises(InvalidParams):
        OptimizerConfig(starts=0)
    with pytest.raises(InvalidParams):
        OptimizerConfig(tolerance=0.0)


def test_antiferromagnetic_recovery_without_reference():
    """
    With no reference transitions the solver still recovers the causal
    states of an antiferromagnetic chain, where |S_1> lies nearer |0> than
    |S_0> does.
    """
    gamma = transition_probabilities(IsingParams(-1.0, 0.3, 2.0))
    pair = ideal_channel_pair(gamma)
    expected = noiseless_candidate(gamma)

    solution = solve_fixed_points(pair, QUICK, -1.0)

    assert solution.residual < 1e-8
    assert trace_distance(solution.rho0, expected.rho0) < 1e-6
    assert trace_distance(solution.rho1, expected.rho1) < 1e-6
    assert np.allclose(solution.gamma_m.gamma, gamma.gamma, atol=1e-6)
    assert solution.inversion_error is None
    assert solution.t_m == pytest.approx(2.0, abs=1e-4)
    assert solution.b_m == pytest.approx(0.3, abs=1e-4)


def test_labels_follow_the_outcomes():
    """
    The solver never swaps the states away from the outcome that prepares
    them, so its reported residual is the residual against the pair.
    """
    pair = noisy_pair(NoiseModel(0.03, 0.02, 0.01))

    solution = solve_fixed_points(pair, QUICK, 1.0)
    recomputed = objective(
        FixedPointCandidate(solution.rho0, solution.rho1, solution.gamma_m),
        pair,
    )

    assert solution.residual == pytest.approx(recomputed, abs=1e-10)
    assert solution.residual < objective(
        FixedPointCandidate(solution.rho1, solution.rho0,
                            solution.gamma_m.relabeled()),
        pair,
    )


def test_failed_inversion_is_reported(caplog):
    """
    When the fixed-point transitions cannot be inverted the solution keeps
    NaN parameters and names the failure; the miss is logged as a warning.
    """
    with patch(
        "app.fixedpoint.invert_parameters",
        side_effect=NotAchievable(1e-2),
    ):
        solution = solve_fixed_points(
            noisy_pair(NoiseModel(0.03, 0.02, 0.01)), QUICK, 1.0,
            reference=GAMMA,
        )

    assert np.isnan(solution.t_m) and np.isnan(solution.b_m)
    assert solution.inversion_error == "NotAchievable"
    assert any(
        r.levelname == "WARNING" and "No exact fixed point" in r.getMessage()
        for r in caplog.records
    )
