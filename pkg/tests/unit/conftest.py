import itertools
import pathlib

import numpy as np
import pytest

from mosaic.ambiguity import AmbiguitySpec, PiecewiseAffineLoss, Polyhedron
from mosaic.calibration import ConcentrationParams
from mosaic.transport import DiscreteDistribution, GroundCost, ot_cost

BASE = pathlib.Path(__file__).parent.parent.absolute()


@pytest.fixture(scope="module")
def crossing_pair():
    # diagonal and anti-diagonal corners of the unit square
    P1 = DiscreteDistribution(np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([0.5, 0.5]))
    P2 = DiscreteDistribution(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
    return P1, P2


@pytest.fixture(scope="module")
def two_diracs():
    return DiscreteDistribution.dirac([0.0]), DiscreteDistribution.dirac([1.0])


def _grid_distribution(rng: np.random.Generator, d: int) -> DiscreteDistribution:
    size = int(rng.integers(1, 4))
    atoms = rng.integers(0, 9, size=(size, d)) / 8.0
    probs = rng.dirichlet(np.ones(size))
    probs = probs / probs.sum()
    return DiscreteDistribution(atoms, probs)


def _random_instance(seed: int):
    """
    Ball centers with atoms on the 1/8 grid of [0, 1]^d. The second radius
    exceeds the distance between the centers, so the first center lies in
    both balls.
    """

    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    K = int(rng.integers(1, 3))
    L = int(rng.integers(1, 4))

    centers = [_grid_distribution(rng, d) for _ in range(K)]
    radii = [float(rng.uniform(0.05, 0.5))]
    if K == 2:
        distance, _ = ot_cost(centers[0], centers[1], GroundCost.l1())
        radii.append(distance * (1.0 + float(rng.uniform(0.1, 0.5))) + 0.01)

    loss = PiecewiseAffineLoss(rng.integers(-3, 4, size=(L, d)).astype(float), rng.normal(size=L))
    support = Polyhedron.box(np.zeros(d), np.ones(d))

    return AmbiguitySpec.of(centers, radii), loss, support


@pytest.fixture(scope="module")
def dro_instances():
    return [_random_instance(seed) for seed in range(30)]


@pytest.fixture(scope="module")
def small_dual_instances():
    """
    Two sources with at most three atoms between them per source and a dual
    dimension of at most eight.
    """

    instances = []
    for seed in itertools.count(100):
        amb, loss, support = _random_instance(seed)
        if amb.num_sources == 2 and amb.num_sources + sum(amb.sizes) <= 8:
            instances.append((amb, loss, support))
        if len(instances) == 10:
            return instances


@pytest.fixture(scope="module")
def unit_params():
    return ConcentrationParams(a=2.0, c1=1.0, c2=1.0, d=1, p=1.0)


@pytest.fixture(scope="module")
def prior_curve_params():
    return ConcentrationParams(a=5.0, c1=1.0, c2=1.0, d=5, p=2.0)
