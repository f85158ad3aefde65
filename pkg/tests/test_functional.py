import math

import numpy as np
import pytest

from ktm.errors import InvalidConfigError, InvalidInputError
from ktm.functional import (
    ContinuousTrajectory,
    TimeBasis,
    discretise,
    evaluate,
    fit_weights,
    penalised_objective,
    time_features,
)

from oracles import ridge_by_lstsq


def random_instance(rng, n_points=None, n_bases=None, **basis_kw):
    n_points = n_points or int(rng.integers(2, 12))
    n_bases = n_bases or int(rng.integers(1, 6))
    basis = TimeBasis(tuple(np.sort(rng.choice(np.arange(0, 25), n_bases, replace=False)).astype(float)),
                      ell_t=float(rng.uniform(2, 20)), **basis_kw)
    times = np.arange(1, n_points + 1, dtype=float)
    target = rng.normal(scale=3.0, size=(n_points, 2))
    return basis, times, target


def test_time_features_values():
    basis = TimeBasis((5.0,), ell_t=10.0)
    assert time_features(10.0, basis)[0] == pytest.approx(0.28650, abs=1e-5)
    assert time_features(10.0, basis)[0] == math.exp(-1.25)
    assert time_features(5.0, basis)[0] == 1.0


def test_time_features_range_and_shape():
    basis = TimeBasis.evenly_spaced(20, 5)
    feats = time_features(np.linspace(-5, 30, 71), basis)
    assert feats.shape == (71, 5)
    assert np.all((feats > 0) & (feats <= 1))


def test_evenly_spaced_basis():
    assert TimeBasis.evenly_spaced(20, 5).inducing_times == (0.0, 5.0, 10.0, 15.0, 20.0)
    assert TimeBasis.evenly_spaced(10, 2.5).size == 5


@pytest.mark.parametrize(
    "kwargs",
    [
        {"inducing_times": ()},
        {"inducing_times": (1.0, 1.0)},
        {"inducing_times": (2.0, 1.0)},
        {"inducing_times": (0.0,), "ell_t": 0.0},
        {"inducing_times": (0.0,), "lambda1": 0.0},
        {"inducing_times": (0.0,), "lambda2": -1.0},
    ],
)
def test_basis_validation(kwargs):
    with pytest.raises(InvalidConfigError):
        TimeBasis(**kwargs)


def test_zero_target_gives_zero_weights():
    basis = TimeBasis.evenly_spaced(10, 2.5)
    traj = fit_weights(np.zeros((10, 2)), np.arange(1, 11), basis)
    assert np.all(traj.w_x == 0) and np.all(traj.w_y == 0)
    assert np.all(evaluate(traj, np.linspace(0, 10, 50)) == 0)


def test_three_points_two_bases_against_lstsq():
    basis = TimeBasis((0.0, 3.0), ell_t=4.0, lambda1=1e-2, lambda2=5.0)
    target = np.array([[1.0, -0.5], [2.5, -1.0], [3.0, -2.5]])
    times = np.array([1.0, 2.0, 3.0])
    traj = fit_weights(target, times, basis)
    for weights, column in ((traj.w_x, 0), (traj.w_y, 1)):
        oracle = ridge_by_lstsq(target[:, column], times, basis.inducing_times, 4.0, 1e-2, 5.0)
        np.testing.assert_allclose(weights, oracle, rtol=1e-9, atol=1e-12)


def test_y_weights_regress_y_coordinates():
    basis = TimeBasis.evenly_spaced(6, 2)
    times = np.arange(1, 7, dtype=float)
    traj = fit_weights(np.column_stack([np.zeros(6), times]), times, basis)
    assert np.all(traj.w_x == 0)
    assert np.any(traj.w_y != 0)


def test_random_instances_match_lstsq():
    rng = np.random.default_rng(0)
    for _ in range(50):
        basis, times, target = random_instance(rng, lambda1=1e-2)
        traj = fit_weights(target, times, basis)
        for weights, column in ((traj.w_x, 0), (traj.w_y, 1)):
            oracle = ridge_by_lstsq(target[:, column], times, basis.inducing_times, basis.ell_t, 1e-2, basis.lambda2)
            np.testing.assert_allclose(weights, oracle, rtol=1e-6, atol=1e-8)


def objective_gradient(weights, values, times, basis):
    feats = time_features(times, basis)
    phi0 = time_features(0.0, basis)
    resid = feats @ weights - values
    return 2 * (feats.T @ resid + basis.lambda1 * weights + basis.lambda2 * (phi0 @ weights) * phi0)


def test_gradient_vanishes_at_solution():
    rng = np.random.default_rng(1)
    for _ in range(50):
        basis, times, target = random_instance(rng)
        traj = fit_weights(target, times, basis)
        for weights, column in ((traj.w_x, 0), (traj.w_y, 1)):
            rhs = time_features(times, basis).T @ target[:, column]
            grad = objective_gradient(weights, target[:, column], times, basis)
            assert np.linalg.norm(grad) <= 1e-8 * (1 + np.linalg.norm(rhs))


def perturbation(rng, size, magnitude=1e-3):
    """Random direction scaled to Euclidean norm ``magnitude``."""
    step = rng.normal(size=size)
    return magnitude * step / np.linalg.norm(step)


def test_solution_beats_perturbations():
    rng = np.random.default_rng(2)
    basis, times, target = random_instance(rng, n_points=6, n_bases=3)
    traj = fit_weights(target, times, basis)
    best = penalised_objective(traj.w_x, target[:, 0], times, basis)
    for _ in range(1000):
        nudged = traj.w_x + perturbation(rng, traj.w_x.shape)
        assert penalised_objective(nudged, target[:, 0], times, basis) >= best


def test_constraint_tightens_with_penalty():
    rng = np.random.default_rng(3)
    times = np.arange(1, 11, dtype=float)
    target = np.cumsum(rng.normal(1.0, 0.3, size=(10, 2)), axis=0) + 2.0
    residuals = []
    for lam in (0.0, 1.0, 1e2, 1e4, 1e6):
        basis = TimeBasis.evenly_spaced(10, 2.5, ell_t=10.0, lambda2=lam)
        traj = fit_weights(target, times, basis)
        residuals.append(abs(traj.w_x @ time_features(0.0, basis)))
    assert all(b <= a for a, b in zip(residuals, residuals[1:]))
    assert residuals[-1] <= 1e-3


def test_fit_rejects_mismatched_times():
    basis = TimeBasis.evenly_spaced(10, 5)
    with pytest.raises(InvalidInputError):
        fit_weights(np.zeros((3, 2)), [1, 2], basis)


def test_evaluate_single_basis_at_centre():
    traj = ContinuousTrajectory([2.0], [0.0], TimeBasis((0.0,), ell_t=1.0))
    assert tuple(evaluate(traj, 0.0)) == (2.0, 0.0)


def test_evaluate_matches_dot_product():
    rng = np.random.default_rng(4)
    basis = TimeBasis.evenly_spaced(20, 5)
    traj = ContinuousTrajectory(rng.normal(size=5), rng.normal(size=5), basis)
    for t in rng.uniform(-5, 25, size=20):
        phi = [math.exp(-((c - t) ** 2) / (2 * basis.ell_t)) for c in basis.inducing_times]
        x = sum(w * p for w, p in zip(traj.w_x, phi))
        y = sum(w * p for w, p in zip(traj.w_y, phi))
        np.testing.assert_allclose(evaluate(traj, t), [x, y], rtol=1e-12, atol=1e-12)


def test_from_weights_round_trip():
    basis = TimeBasis.evenly_spaced(20, 5)
    w = np.arange(10, dtype=float)
    traj = ContinuousTrajectory.from_weights(w, basis)
    assert np.array_equal(traj.weights, w)
    with pytest.raises(InvalidInputError):
        ContinuousTrajectory.from_weights(w[:-1], basis)


def test_discretise_zero_weights_is_constant():
    basis = TimeBasis.evenly_spaced(20, 5)
    traj = ContinuousTrajectory(np.zeros(5), np.zeros(5), basis)
    pts = discretise(traj, np.arange(1, 8), (3.0, 4.0))
    assert pts.shape == (7, 2)
    assert np.all(pts == [3.0, 4.0])
    with pytest.raises(InvalidInputError):
        discretise(traj, [], (0, 0))


def test_round_trip_on_sine_arc():
    # A smooth arc leaving the origin, sampled every step for 20 steps.  The
    # bases run a little past the last sample so the far end is not starved.
    times = np.arange(1, 21, dtype=float)
    arc = np.column_stack([0.8 * times, 3.0 * np.sin(times / 20 * np.pi)])
    basis = TimeBasis.evenly_spaced(25, 2.5, ell_t=10.0)
    traj = fit_weights(arc, times, basis)
    rebuilt = discretise(traj, times, (0.0, 0.0))
    rms = math.sqrt(np.mean(np.sum((rebuilt - arc) ** 2, axis=1)))
    assert rms <= 0.1
    assert np.hypot(*evaluate(traj, 0.0)) <= 1e-2


def test_second_derivative_bounded():
    basis = TimeBasis.evenly_spaced(20, 5)
    traj = ContinuousTrajectory(np.full(5, 3.0), np.full(5, -2.0), basis)
    t = np.linspace(0, 20, 401)
    h = t[1] - t[0]
    x = evaluate(traj, t)[:, 0]
    second = (x[2:] - 2 * x[1:-1] + x[:-2]) / h**2
    # |d2/dt2 exp(-u^2 / 2l)| <= 1/l, so each weight contributes at most |w|/l.
    assert np.max(np.abs(second)) <= 5 * 3.0 / basis.ell_t + 1e-6
