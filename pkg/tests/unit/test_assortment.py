import numpy as np
import pytest

from mosaic.ambiguity import AmbiguitySpec
from mosaic.assortment import (
    AssortmentSpec,
    assortment_brute_force,
    assortment_prices,
    assortment_solve,
    realized_revenue,
)
from mosaic.exceptions import DimensionMismatch, InvalidParams
from mosaic.generators import Region, generate_demand
from mosaic.transport import DiscreteDistribution, GroundCost, ot_cost


def _spec(centers, radii, prices, capacity):
    return AssortmentSpec(np.array(prices), capacity, AmbiguitySpec.of(centers, radii))


def test_zero_radius_is_a_knapsack():
    spec = _spec([DiscreteDistribution.dirac([5.0, 1.0, 3.0, 2.0])], [0.0], [1.0, 1.0, 1.0, 1.0], 2)

    solution = assortment_solve(spec)

    assert solution.selection == (0, 2)
    assert solution.revenue == pytest.approx(8.0, abs=1e-9)


def test_full_capacity_takes_everything():
    spec = _spec([DiscreteDistribution.dirac([5.0, 1.0, 3.0])], [0.5], [1.0, 2.0, 1.5], 3)

    solution = assortment_solve(spec)

    assert solution.selection == (0, 1, 2)
    np.testing.assert_allclose(solution.theta, 1.0)


def test_radius_discounts_the_best_product():
    spec = _spec([DiscreteDistribution.dirac([5.0, 1.0, 3.0])], [1.0], [1.0, 1.0, 1.0], 1)

    solution = assortment_solve(spec)

    # the adversary removes eps of demand from the chosen product
    assert solution.selection == (0,)
    assert solution.revenue == pytest.approx(4.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_joint_lp_matches_brute_force(seed):
    d = 6
    centers = [
        DiscreteDistribution.from_samples(generate_demand(Region.S, 2, d, seed=2 * seed)),
        DiscreteDistribution.from_samples(generate_demand(Region.C, 2, d, seed=2 * seed + 1)),
    ]
    distance, _ = ot_cost(centers[0], centers[1], GroundCost.l1())
    spec = _spec(centers, [0.2 * distance, 1.1 * distance], assortment_prices(d), 2)

    joint = assortment_solve(spec, backend="highs")
    brute = assortment_brute_force(spec, backend="highs")

    assert joint.revenue == pytest.approx(brute.revenue, abs=1e-6)
    assert len(joint.selection) == 2


def test_invalid_specs():
    center = DiscreteDistribution.dirac([1.0, 2.0])

    with pytest.raises(DimensionMismatch):
        _spec([center], [0.1], [1.0], 1)
    with pytest.raises(InvalidParams):
        _spec([center], [0.1], [1.0, 1.0], 3)
    with pytest.raises(InvalidParams):
        _spec([center], [0.1], [1.0, -1.0], 1)


def test_prices_and_realized_revenue():
    prices = assortment_prices(4)
    demands = np.array([[10.0, 20.0, 30.0, 40.0], [0.0, 0.0, 10.0, 0.0]])

    np.testing.assert_allclose(prices, [0.01, 0.02, 0.03, 0.04])
    np.testing.assert_allclose(realized_revenue([0, 1, 1, 0], prices, demands), [1.3, 0.3])
