import numpy as np
import pytest
from scipy import stats  # type: ignore

from mosaic.exceptions import DimensionMismatch, InvalidDistribution, InvalidParams
from mosaic.transport import (
    CostKind,
    DiscreteDistribution,
    GroundCost,
    Norm,
    ot_cost,
    w1_to_cdf,
    wasserstein_distance,
)


def _random_distribution(rng, size=3, d=2):
    return DiscreteDistribution(rng.normal(size=(size, d)), rng.dirichlet(np.ones(size)))


def test_identical_diracs_cost_nothing():
    P = DiscreteDistribution.dirac([0.0])
    value, plan = ot_cost(P, P, GroundCost.l1())

    assert value == 0.0
    assert plan.entries() == [(0, 0, 1.0)]


def test_crossing_pair_squared_euclidean(crossing_pair):
    value, plan = ot_cost(*crossing_pair, GroundCost.sq_euclidean())

    assert value == pytest.approx(1.0, abs=1e-9)
    assert plan.marginal_error() <= 1e-9
    assert plan.total_mass == pytest.approx(1.0, abs=1e-9)


def test_dirac_distances(two_diracs):
    assert ot_cost(*two_diracs, GroundCost.l1())[0] == pytest.approx(1.0)

    a = DiscreteDistribution.dirac([0.0, 0.0])
    b = DiscreteDistribution.dirac([3.0, 4.0])
    assert wasserstein_distance(a, b, Norm.L1) == pytest.approx(7.0)
    assert wasserstein_distance(a, b, Norm.L2) == pytest.approx(5.0)
    assert wasserstein_distance(a, b, Norm.LINF) == pytest.approx(4.0)
    assert wasserstein_distance(a, b, Norm.L2, p=2) == pytest.approx(5.0)


@pytest.mark.parametrize("seed", range(5))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    P, Q, R = (_random_distribution(rng) for _ in range(3))

    pq = wasserstein_distance(P, Q)
    assert wasserstein_distance(P, P) == pytest.approx(0.0, abs=1e-12)
    assert pq >= 0.0
    assert pq == pytest.approx(wasserstein_distance(Q, P), abs=1e-9)
    assert pq <= wasserstein_distance(P, R) + wasserstein_distance(R, Q) + 1e-9


@pytest.mark.parametrize("cost", [GroundCost.l1(), GroundCost.sq_euclidean()])
def test_monotone_coupling_matches_lp_on_the_line(cost):
    rng = np.random.default_rng(7)
    P = _random_distribution(rng, size=5, d=1)
    Q = _random_distribution(rng, size=4, d=1)

    lp_value, lp_plan = ot_cost(P, Q, cost, method="lp")
    monotone_value, monotone_plan = ot_cost(P, Q, cost, method="monotone")

    assert monotone_value == pytest.approx(lp_value, abs=1e-9)
    assert lp_plan.marginal_error() <= 1e-9
    assert monotone_plan.marginal_error() <= 1e-9
    assert monotone_plan.cost(cost) == pytest.approx(monotone_value, abs=1e-12)


def test_highs_backend_agrees():
    rng = np.random.default_rng(3)
    P, Q = _random_distribution(rng, 4), _random_distribution(rng, 3)

    simplex, _ = ot_cost(P, Q, GroundCost.l1(), backend="simplex")
    highs, _ = ot_cost(P, Q, GroundCost.l1(), backend="highs")

    assert highs == pytest.approx(simplex, abs=1e-9)


def test_coincident_atoms_are_legal():
    P = DiscreteDistribution(np.array([[0.0], [0.0], [1.0]]), np.array([0.25, 0.25, 0.5]))
    Q = DiscreteDistribution.from_samples(np.array([0.0, 1.0]))

    value, _ = ot_cost(P, Q, GroundCost.l1(), method="lp")

    assert value == pytest.approx(0.0, abs=1e-12)
    merged = P.merged()
    assert merged.size == 2
    np.testing.assert_allclose(merged.probs, [0.5, 0.5])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        ot_cost(DiscreteDistribution.dirac([0.0]), DiscreteDistribution.dirac([0.0, 1.0]), GroundCost.l1())
    with pytest.raises(DimensionMismatch):
        ot_cost(
            DiscreteDistribution.dirac([0.0, 0.0]),
            DiscreteDistribution.dirac([0.0, 1.0]),
            GroundCost.l1(),
            method="monotone",
        )


@pytest.mark.parametrize(
    "atoms, probs",
    [
        ([[0.0], [1.0]], [0.5, 0.4]),
        ([[0.0], [1.0]], [1.0, 0.0]),
        ([[0.0], [np.nan]], [0.5, 0.5]),
        ([[0.0]], [0.5, 0.5]),
    ],
)
def test_invalid_distributions(atoms, probs):
    with pytest.raises(InvalidDistribution):
        DiscreteDistribution(np.array(atoms), np.array(probs))


def test_invalid_cost_and_method():
    with pytest.raises(InvalidParams):
        GroundCost(CostKind.NORM_POWER, Norm.L1, 0.5)
    with pytest.raises(InvalidParams):
        ot_cost(DiscreteDistribution.dirac([0.0]), DiscreteDistribution.dirac([0.0]), GroundCost.l1(), method="sinkhorn")


def test_distribution_json():
    data = {"atoms": [[0, 1], [2, 3]], "probs": [0.25, 0.75]}

    P = DiscreteDistribution.from_dict(data)

    assert P.dim == 2 and P.size == 2
    np.testing.assert_allclose(P.mean(), [1.5, 2.5])
    assert P.to_dict() == {"atoms": [[0.0, 1.0], [2.0, 3.0]], "probs": [0.25, 0.75]}
    assert GroundCost.from_dict({"kind": "sq_euclidean"}) == GroundCost.sq_euclidean()
    assert GroundCost.from_dict({"norm": "linf", "p": 1}).norm == Norm.LINF


def test_w1_to_cdf_shrinks_with_samples():
    rng = np.random.default_rng(0)
    reference = stats.norm()

    small = w1_to_cdf(rng.normal(size=10), reference)
    large = w1_to_cdf(rng.normal(size=10000), reference)

    assert large < 0.05
    assert large < small
    assert w1_to_cdf(rng.normal(2.0, 1.0, size=20000), reference) == pytest.approx(2.0, abs=0.05)
