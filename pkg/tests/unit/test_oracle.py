import numpy as np
import pytest

from mosaic.ambiguity import AmbiguitySpec, PiecewiseAffineLoss, Polyhedron
from mosaic.dro import ellipsoid_radius, worst_case_value
from mosaic.exceptions import NegativeLambda, UnsupportedCost
from mosaic.oracle import (
    Halfspace,
    Inside,
    dual_dimension,
    ellipsoid_solve,
    moreau_envelope,
    separation_oracle,
)
from mosaic.transport import CostKind, DiscreteDistribution, GroundCost, Norm

LINF = GroundCost(CostKind.NORM_POWER, Norm.LINF, 1)


def test_moreau_envelope_at_the_anchor():
    result = moreau_envelope([1.0], [[0.0]], PiecewiseAffineLoss.affine([1.0]), Polyhedron.free(1), GroundCost.l1())

    assert result.value == pytest.approx(0.0)
    np.testing.assert_allclose(result.maximizer, [0.0])


def test_moreau_envelope_unbounded_gives_a_cut():
    result = moreau_envelope([0.5], [[0.0]], PiecewiseAffineLoss.affine([1.0]), Polyhedron.free(1), GroundCost.l1())

    assert not result.is_finite
    assert not result.halfspace.contains(np.array([0.5]))
    assert result.halfspace.contains(np.array([2.0]))


def test_moreau_envelope_on_a_box():
    support = Polyhedron.box([0.0], [1.0])

    result = moreau_envelope([0.5], [[0.0]], PiecewiseAffineLoss.affine([1.0]), support, GroundCost.l1())

    assert result.value == pytest.approx(0.5)
    np.testing.assert_allclose(result.maximizer, [1.0])


def test_moreau_envelope_linf_lp_path():
    loss = PiecewiseAffineLoss(np.array([[1.0, 1.0], [-1.0, 0.0]]), np.array([0.0, -0.5]))

    result = moreau_envelope([2.0], [[0.0, 0.0]], loss, Polyhedron.free(2), LINF)

    assert result.value == pytest.approx(0.0, abs=1e-9)
    assert result.piece == 0


def test_moreau_envelope_rejects_bad_inputs():
    loss = PiecewiseAffineLoss.affine([1.0])

    with pytest.raises(NegativeLambda):
        moreau_envelope([-0.1], [[0.0]], loss, Polyhedron.free(1), GroundCost.l1())
    with pytest.raises(UnsupportedCost):
        moreau_envelope([1.0], [[0.0]], loss, Polyhedron.free(1), GroundCost.sq_euclidean())


def test_separation_oracle(two_diracs):
    amb = AmbiguitySpec.of(two_diracs, [0.5, 0.5])
    loss = PiecewiseAffineLoss.affine([1.0])
    support = Polyhedron.free(1)
    dual = worst_case_value(amb, loss)

    negative = separation_oracle(np.array([-1.0, 1.0, 0.0, 0.0]), amb, loss, support)
    assert isinstance(negative, Halfspace)
    np.testing.assert_allclose(negative.normal, [-1.0, 0.0, 0.0, 0.0])

    assert isinstance(separation_oracle(dual.point, amb, loss, support, tol=1e-6), Inside)

    lowered = dual.point.copy()
    lowered[2] -= 1.0
    cut = separation_oracle(lowered, amb, loss, support)
    assert isinstance(cut, Halfspace)
    assert not cut.contains(lowered)
    assert cut.contains(dual.point, 1e-6)


def test_ellipsoid_matches_the_lp(small_dual_instances):
    for amb, loss, support in small_dual_instances:
        dual = worst_case_value(amb, loss, support)

        result = ellipsoid_solve(amb, loss, support, radius=ellipsoid_radius(dual), delta=1e-3)

        assert dual_dimension(amb) <= 8
        assert result.value >= dual.value - 1e-6 * (1.0 + abs(dual.value))
        assert result.value <= dual.value + 1e-3 + 1e-6 * (1.0 + abs(dual.value))
        assert result.lower_bound <= dual.value + 1e-6
        assert np.all(np.diff(result.log_det_history) < 0.0)


def test_ellipsoid_on_the_midpoint(two_diracs):
    amb = AmbiguitySpec.of(two_diracs, [0.5, 0.5])
    support = Polyhedron.box([-2.0], [2.0])

    result = ellipsoid_solve(amb, PiecewiseAffineLoss.affine([1.0]), support, radius=20.0)

    assert result.value == pytest.approx(0.5, abs=1e-3)


def test_dual_dimension():
    amb = AmbiguitySpec.of(
        [DiscreteDistribution.from_samples(np.array([0.0, 1.0])), DiscreteDistribution.dirac([2.0])],
        [0.1, 2.0],
    )

    assert dual_dimension(amb) == 2 + 3
