import numpy as np
import pytest

from mosaic.barycenter import (
    barycenter,
    barycenter_objective,
    gaussian_barycenter,
    gaussian_barycenter_variance,
    inner_minimizer,
)
from mosaic.exceptions import AllWeightsZero, SizeExceeded
from mosaic.transport import DiscreteDistribution, GroundCost, ot_cost


def _support(distribution):
    return sorted(map(tuple, np.round(distribution.atoms, 9)))


def _random_distribution(rng, size, d):
    return DiscreteDistribution(rng.normal(size=(size, d)), rng.dirichlet(np.ones(size)))


def test_inner_minimizer_examples():
    phi, Phi = inner_minimizer(np.array([[1.0, 1.0], [1.0, 0.0]]), [1, 1], GroundCost.sq_euclidean())
    assert phi == pytest.approx(0.5)
    np.testing.assert_allclose(Phi, [1.0, 0.5])

    phi, Phi = inner_minimizer(np.array([[0.3, 0.7]]), [2.0], GroundCost.l1())
    assert phi == 0.0
    np.testing.assert_allclose(Phi, [0.3, 0.7])

    phi, Phi = inner_minimizer(np.array([0.0, 1.0]), [2.0, 1.0], GroundCost.l1())
    assert phi == pytest.approx(1.0)
    np.testing.assert_allclose(Phi, [0.0])


def test_inner_minimizer_ties_take_lower_median():
    _, Phi = inner_minimizer(np.array([0.0, 1.0]), [1.0, 1.0], GroundCost.l1())
    np.testing.assert_allclose(Phi, [0.0])


def test_inner_minimizer_ignores_zero_weights():
    phi, Phi = inner_minimizer(np.array([[0.0], [5.0]]), [1.0, 0.0], GroundCost.sq_euclidean())
    assert phi == 0.0
    np.testing.assert_allclose(Phi, [0.0])

    with pytest.raises(AllWeightsZero):
        inner_minimizer(np.array([[0.0], [5.0]]), [0.0, 0.0], GroundCost.sq_euclidean())


def test_crossing_pair_barycenter(crossing_pair):
    result = barycenter(crossing_pair, [1.0, 1.0], GroundCost.sq_euclidean())

    assert result.objective == pytest.approx(0.5, abs=1e-9)
    assert _support(result.barycenter) in (
        [(0.0, 0.5), (1.0, 0.5)],
        [(0.5, 0.0), (0.5, 1.0)],
    )
    np.testing.assert_allclose(result.barycenter.probs, [0.5, 0.5])
    assert result.plan.marginal_error() <= 1e-9


def test_identical_inputs_return_the_input():
    P = DiscreteDistribution(np.array([[0.0, 1.0], [2.0, 0.0], [1.0, 1.0]]), np.array([0.2, 0.3, 0.5]))

    for cost in (GroundCost.sq_euclidean(), GroundCost.l1()):
        result = barycenter([P, P, P], [1.0, 2.0, 3.0], cost)
        assert result.objective == pytest.approx(0.0, abs=1e-12)
        assert _support(result.barycenter) == _support(P)


@pytest.mark.parametrize("seed", range(20))
def test_heavier_l1_marginal_is_a_barycenter(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    P1 = _random_distribution(rng, int(rng.integers(1, 4)), d)
    P2 = _random_distribution(rng, int(rng.integers(1, 4)), d)
    weights = [float(rng.uniform(1.0, 2.0)), float(rng.uniform(0.0, 1.0))]
    cost = GroundCost.l1()

    result = barycenter([P1, P2], weights, cost)

    assert barycenter_objective(P1, [P1, P2], weights, cost) == pytest.approx(
        result.objective, abs=1e-9
    )


@pytest.mark.parametrize("cost", [GroundCost.sq_euclidean(), GroundCost.l1()])
def test_objective_is_optimal_and_consistent(cost):
    rng = np.random.default_rng(11)
    distributions = [_random_distribution(rng, 2, 2), _random_distribution(rng, 3, 2)]
    weights = [0.3, 0.7]

    result = barycenter(distributions, weights, cost)
    achieved = barycenter_objective(result.barycenter, distributions, weights, cost)

    assert achieved == pytest.approx(result.objective, abs=1e-7)
    for _ in range(20):
        candidate = _random_distribution(rng, int(rng.integers(1, 4)), 2)
        assert result.objective <= barycenter_objective(candidate, distributions, weights, cost) + 1e-7


def test_weight_scaling():
    rng = np.random.default_rng(5)
    distributions = [_random_distribution(rng, 2, 2), _random_distribution(rng, 2, 2)]
    cost = GroundCost.sq_euclidean()

    base = barycenter(distributions, [1.0, 3.0], cost)
    scaled = barycenter(distributions, [2.0, 6.0], cost)

    assert scaled.objective == pytest.approx(2.0 * base.objective, abs=1e-9)
    assert _support(scaled.barycenter) == _support(base.barycenter)


def test_geodesic_interpolation_on_the_line():
    P1 = DiscreteDistribution.from_samples(np.array([0.0, 2.0]))
    P2 = DiscreteDistribution.from_samples(np.array([1.0, 5.0]))
    _, plan = ot_cost(P1, P2, GroundCost.sq_euclidean())
    matching = [(P1.atoms[i, 0], P2.atoms[j, 0]) for i, j, _ in plan.entries()]

    for t in np.linspace(0.0, 1.0, 6):
        result = barycenter([P1, P2], [t, 1.0 - t], GroundCost.sq_euclidean(), method="lp")
        expected = sorted(t * x + (1.0 - t) * y for x, y in matching)
        np.testing.assert_allclose(np.sort(result.barycenter.atoms[:, 0]), expected, atol=1e-9)


def test_monotone_path_matches_lp():
    rng = np.random.default_rng(2)
    distributions = [_random_distribution(rng, 3, 1) for _ in range(3)]

    lp = barycenter(distributions, [0.2, 0.3, 0.5], GroundCost.sq_euclidean(), method="lp")
    monotone = barycenter(distributions, [0.2, 0.3, 0.5], GroundCost.sq_euclidean(), method="monotone")

    assert monotone.objective == pytest.approx(lp.objective, abs=1e-9)


def test_enumeration_cap():
    rng = np.random.default_rng(0)
    distributions = [_random_distribution(rng, 50, 2) for _ in range(3)]

    with pytest.raises(SizeExceeded):
        barycenter(distributions, [1.0, 1.0, 1.0], GroundCost.sq_euclidean())


def test_gaussian_barycenter():
    mean, variance = gaussian_barycenter([0.0, 1.0], [1.0, 3.0], [0.5, 0.5])

    assert mean == pytest.approx(0.5)
    assert variance == pytest.approx(4.0)
    assert gaussian_barycenter_variance([1.0, 3.0], [0.5, 0.5]) == pytest.approx(4.0)
