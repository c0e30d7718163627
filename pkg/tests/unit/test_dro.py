import numpy as np
import pytest

from mosaic.ambiguity import AffineDecisionLoss, AmbiguitySpec, PiecewiseAffineLoss, Polyhedron
from mosaic.config import SolverSettings
from mosaic.dro import (
    build_dual_lp,
    ellipsoid_radius,
    grid_primal_value,
    solve_msdro,
    worst_case_distribution,
    worst_case_value,
)
from mosaic.exceptions import (
    IntersectionEmpty,
    SizeExceeded,
    UnboundedObjective,
    UnsupportedCost,
)
from mosaic.transport import CostKind, DiscreteDistribution, GroundCost, Norm, ot_cost

GRID_STEPS = [1 / 8, 1 / 16, 1 / 32, 1 / 64]


def _center(seed, size=3, d=2):
    rng = np.random.default_rng(seed)
    return DiscreteDistribution(rng.normal(size=(size, d)), rng.dirichlet(np.ones(size)))


def _identity_loss():
    return PiecewiseAffineLoss.affine([1.0])


def test_zero_radius_gives_the_sample_average():
    center = _center(0)
    loss = PiecewiseAffineLoss(np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([0.0, -1.0]))

    dual = worst_case_value(AmbiguitySpec.of([center], [0.0]), loss)

    assert dual.value == pytest.approx(loss.expectation(center), abs=1e-7)


@pytest.mark.parametrize("norm, dual_norm", [(Norm.L1, np.inf), (Norm.LINF, 1)])
def test_single_ball_affine_closed_form(norm, dual_norm):
    center = _center(1)
    slope = np.array([1.0, -2.0])
    loss = PiecewiseAffineLoss.affine(slope, 0.5)
    cost = GroundCost(CostKind.NORM_POWER, norm, 1)

    dual = worst_case_value(AmbiguitySpec.of([center], [0.3], cost), loss)

    expected = loss.expectation(center) + 0.3 * np.linalg.norm(slope, ord=dual_norm)
    assert dual.value == pytest.approx(expected, abs=1e-7)
    assert dual.value == pytest.approx(
        0.3 * dual.lam[0] + center.probs @ dual.gammas[0], abs=1e-7
    )


def test_identical_centers_match_one_ball():
    center = _center(2)
    loss = PiecewiseAffineLoss(np.array([[1.0, 0.0], [-1.0, 1.0]]), np.array([0.0, 0.2]))

    one = worst_case_value(AmbiguitySpec.of([center], [0.4]), loss)
    two = worst_case_value(AmbiguitySpec.of([center, center], [0.4, 0.4]), loss)

    assert two.value == pytest.approx(one.value, abs=1e-7)


def test_midpoint_is_the_only_feasible_distribution(two_diracs):
    amb = AmbiguitySpec.of(two_diracs, [0.5, 0.5])

    dual = worst_case_value(amb, _identity_loss())
    worst = worst_case_distribution(amb, _identity_loss())

    assert dual.value == pytest.approx(0.5, abs=1e-7)
    assert worst.distribution.size == 1
    np.testing.assert_allclose(worst.distribution.atoms, [[0.5]], atol=1e-7)


def test_disjoint_balls_raise_a_valid_certificate(two_diracs):
    amb = AmbiguitySpec.of(two_diracs, [0.25, 0.25])

    with pytest.raises(IntersectionEmpty) as info:
        worst_case_value(amb, _identity_loss())

    certificate = info.value.certificate
    assert certificate is not None
    assert certificate.slope < 0.0
    assert certificate.objective_slope(amb) == pytest.approx(certificate.slope)
    assert certificate.validate(amb, _identity_loss())


def test_value_grows_with_every_radius():
    centers = [_center(3), _center(4)]
    distance, _ = ot_cost(centers[0], centers[1], GroundCost.l1())
    loss = PiecewiseAffineLoss(np.array([[1.0, 1.0], [-2.0, 0.5]]), np.array([0.0, 0.3]))

    values = [
        worst_case_value(AmbiguitySpec.of(centers, [eps, distance + eps]), loss).value
        for eps in (0.05, 0.1, 0.2, 0.4, 0.8)
    ]

    assert np.all(np.diff(values) >= -1e-7)


def test_permuting_sources_keeps_the_value(dro_instances):
    for amb, loss, support in dro_instances:
        if amb.num_sources < 2:
            continue
        value = worst_case_value(amb, loss, support).value
        permuted = worst_case_value(amb.permuted([1, 0]), loss, support).value
        assert permuted == pytest.approx(value, abs=1e-9 * (1.0 + abs(value)))


def test_scaling_the_loss_scales_the_value():
    amb = AmbiguitySpec.of([_center(5), _center(6)], [1.0, 3.0])
    loss = PiecewiseAffineLoss(np.array([[1.0, -1.0], [0.0, 2.0]]), np.array([0.1, -0.4]))

    value = worst_case_value(amb, loss).value
    scaled = worst_case_value(amb, loss.scaled(2.5)).value

    assert scaled == pytest.approx(2.5 * value, abs=1e-7 * (1.0 + abs(value)))


def test_euclidean_cost_is_rejected():
    amb = AmbiguitySpec.of([_center(7)], [0.1], GroundCost(CostKind.NORM_POWER, Norm.L2, 1))

    with pytest.raises(UnsupportedCost):
        build_dual_lp(amb, PiecewiseAffineLoss.affine([1.0, 0.0]))


def test_block_count_is_capped():
    amb = AmbiguitySpec.of([_center(8), _center(9)], [0.1, 5.0])

    with pytest.raises(SizeExceeded):
        worst_case_value(amb, PiecewiseAffineLoss.affine([1.0, 0.0]), settings=SolverSettings(max_scenarios=4))


def test_layout_maps_blocks_to_rows():
    amb = AmbiguitySpec.of([_center(10, size=2), _center(11, size=3)], [0.1, 5.0])
    loss = PiecewiseAffineLoss(np.eye(2), np.zeros(2))

    model, layout = build_dual_lp(amb, loss)

    assert layout.num_blocks == 2 * 3 * 2
    assert layout.equality_rows.shape == (6, 2, 2)
    assert np.all(layout.robust_rows < model.num_rows)
    assert len(layout.gamma) == 2 and layout.gamma[1].size == 3


def test_grid_sandwich(dro_instances):
    for amb, loss, support in dro_instances:
        value = worst_case_value(amb, loss, support).value
        scale = 1.0 + abs(value)

        grid_values = [grid_primal_value(amb, loss, support, step) for step in GRID_STEPS]
        gaps = value - np.array(grid_values)

        assert np.all(gaps >= -1e-7 * scale)
        assert gaps[-1] <= 0.05 * scale
        assert np.all(np.diff(gaps) <= 1e-7 * scale)


def test_worst_case_certificates(dro_instances):
    for amb, loss, support in dro_instances:
        worst = worst_case_distribution(amb, loss, support)
        value = worst.dual.value

        assert worst.distribution.size <= 1 + sum(amb.sizes)
        assert np.all(worst.budgets <= amb.radii + 1e-6)
        assert worst.expected_loss == pytest.approx(value, abs=1e-6 * max(1.0, abs(value)))
        assert all(support.contains(atom, 1e-7) for atom in worst.distribution.atoms)


def test_zero_radius_worst_case_is_the_center():
    center = DiscreteDistribution(np.array([[0.0, 1.0], [1.0, 0.5]]), np.array([0.4, 0.6]))
    amb = AmbiguitySpec.of([center], [0.0])

    worst = worst_case_distribution(amb, PiecewiseAffineLoss.affine([1.0, 2.0]))

    np.testing.assert_allclose(worst.distribution.atoms, center.atoms, atol=1e-7)
    np.testing.assert_allclose(worst.distribution.probs, center.probs, atol=1e-7)


def test_singleton_decisions_match_the_fixed_loss():
    amb = AmbiguitySpec.of([_center(12), _center(13)], [0.5, 4.0])
    family = AffineDecisionLoss(
        slope_maps=np.array([[[1.0], [0.0]], [[0.0], [-1.0]]]),
        slope_offsets=np.array([[0.0, 1.0], [0.5, 0.0]]),
        intercept_weights=np.array([[1.0], [0.0]]),
        intercepts=np.array([0.0, 0.2]),
    )
    theta = np.array([0.7])
    decisions = Polyhedron(np.array([[1.0], [-1.0]]), np.array([0.7, -0.7]))

    solution = solve_msdro(amb, family, decisions)
    fixed = worst_case_value(amb, family.at(theta))

    np.testing.assert_allclose(solution.theta, theta, atol=1e-7)
    assert solution.value == pytest.approx(fixed.value, abs=1e-7)
    assert ellipsoid_radius(solution.dual) >= 10.0


def test_unbounded_decisions():
    amb = AmbiguitySpec.of([_center(14)], [0.1])
    family = AffineDecisionLoss(
        slope_maps=np.zeros((1, 2, 1)),
        slope_offsets=np.zeros((1, 2)),
        intercept_weights=np.ones((1, 1)),
        intercepts=np.zeros(1),
    )

    with pytest.raises(UnboundedObjective):
        solve_msdro(amb, family, Polyhedron.free(1))


def test_decision_loss_json():
    data = {"pieces": [{"A": [[1, 0], [0, 1]], "a": [0, 1], "beta": [1, -1], "b": 2}]}

    family = AffineDecisionLoss.from_dict(data)
    loss = family.at(np.array([1.0, 2.0]))

    np.testing.assert_allclose(loss.slopes, [[1.0, 3.0]])
    np.testing.assert_allclose(loss.intercepts, [1.0])
    assert AffineDecisionLoss.from_dict(family.to_dict()).to_dict() == family.to_dict()


def test_ambiguity_json(two_diracs):
    amb = AmbiguitySpec.of(two_diracs, [0.5, 0.5])

    restored = AmbiguitySpec.from_dict(amb.to_dict())

    np.testing.assert_allclose(restored.radii, [0.5, 0.5])
    assert restored.cost == GroundCost.l1()
    assert worst_case_value(restored, _identity_loss()).value == pytest.approx(0.5, abs=1e-7)
