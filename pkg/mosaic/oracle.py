import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from mosaic.ambiguity import AmbiguitySpec, PiecewiseAffineLoss, Polyhedron
from mosaic.config import SolverSettings
from mosaic.exceptions import (
    InvalidInput,
    IterationBudgetExceeded,
    NegativeLambda,
    NumericalFailure,
    UnboundedObjective,
    UnsupportedCost,
)
from mosaic.lp import LpBuilder, LpStatus, RowSense, Sense, solve_lp
from mosaic.transport import CostKind, GroundCost, Norm

logger = logging.getLogger("mosaic")

BOUNDARY_FRACTION = 0.95


@dataclass
class Halfspace:
    """
    {x : normal . x <= offset}
    """

    normal: np.ndarray
    offset: float

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(self.normal @ x <= self.offset + tol * (1.0 + abs(self.offset)))


@dataclass
class Inside:
    pass


@dataclass
class MoreauResult:
    """
    Value of  max_xi  l(xi) - sum_k lambda_k c(xi, anchor_k)  over the support.
    When the value is +inf, `halfspace` separates lambda from the set of
    weights for which it is finite.
    """

    value: float
    maximizer: Optional[np.ndarray] = None
    piece: Optional[int] = None
    halfspace: Optional[Halfspace] = None

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


def _check_cost(cost: GroundCost):
    if cost.kind != CostKind.NORM_POWER or cost.p != 1 or cost.norm == Norm.L2:
        raise UnsupportedCost("The Moreau envelope is linear only for L1 or Linf costs with p = 1")


def _norm(u: np.ndarray, norm: Norm) -> float:
    return float(np.abs(u).sum() if norm == Norm.L1 else np.abs(u).max())


def _finiteness_halfspace(
    num_sources: int, slope: np.ndarray, direction: np.ndarray, norm: Norm
) -> Halfspace:
    # along direction u the objective grows at rate <a, u> - ||u|| sum_k lambda_k
    direction = direction / _norm(direction, norm)
    return Halfspace(
        normal=-np.ones(num_sources) * _norm(direction, norm),
        offset=-float(slope @ direction),
    )


def _separable_piece(
    lam: np.ndarray,
    anchors: np.ndarray,
    slope: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
):
    """
    L1 cost over a box: maximizes each coordinate of
    a_i x - sum_k lambda_k |x - anchor_ki| on [lower_i, upper_i] separately.
    Returns (maximizer, None) or (None, unbounded direction).
    """

    total = lam.sum()
    d = slope.size
    maximizer = np.empty(d)

    for i in range(d):
        if np.isinf(upper[i]) and slope[i] - total > 0.0:
            direction = np.zeros(d)
            direction[i] = 1.0
            return None, direction
        if np.isinf(lower[i]) and slope[i] + total < 0.0:
            direction = np.zeros(d)
            direction[i] = -1.0
            return None, direction

        candidates = np.clip(anchors[:, i], lower[i], upper[i])
        bounds = [b for b in (lower[i], upper[i]) if np.isfinite(b)]
        candidates = np.unique(np.concatenate([candidates, bounds]))
        values = slope[i] * candidates - np.abs(candidates[:, None] - anchors[None, :, i]) @ lam
        # np.unique sorts, so argmax keeps the lowest maximizer on ties
        maximizer[i] = candidates[int(np.argmax(values))]

    return maximizer, None


def _lp_piece(
    lam: np.ndarray,
    anchors: np.ndarray,
    slope: np.ndarray,
    support: Polyhedron,
    norm: Norm,
    settings: Optional[SolverSettings],
):
    K, d = anchors.shape
    builder = LpBuilder(Sense.MAX)
    xi = builder.add_variables(d, lower=-np.inf, cost=slope)

    for k in range(K):
        if lam[k] <= 0.0:
            continue
        if norm == Norm.L1:
            gaps = builder.add_variables(d, cost=-lam[k])
            for i in range(d):
                builder.add_row([xi[i], gaps[i]], [1.0, -1.0], RowSense.LE, anchors[k, i])
                builder.add_row([xi[i], gaps[i]], [-1.0, -1.0], RowSense.LE, -anchors[k, i])
        else:
            gap = builder.add_variable(cost=-lam[k])
            for i in range(d):
                builder.add_row([xi[i], gap], [1.0, -1.0], RowSense.LE, anchors[k, i])
                builder.add_row([xi[i], gap], [-1.0, -1.0], RowSense.LE, -anchors[k, i])

    for row, rhs in zip(support.C, support.g):
        builder.add_row(xi, row, RowSense.LE, rhs)

    solution = solve_lp(builder.build(), settings)

    if solution.status == LpStatus.INFEASIBLE:
        raise InvalidInput("The support polyhedron is empty")
    if solution.status == LpStatus.UNBOUNDED:
        return None, solution.ray[xi]

    return solution.primal[xi], None


def moreau_envelope(
    lam: Sequence[float],
    anchors: np.ndarray,
    loss: PiecewiseAffineLoss,
    support: Polyhedron,
    cost: GroundCost,
    settings: SolverSettings = None,
) -> MoreauResult:
    lam = np.asarray(lam, dtype=float)
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))

    if np.any(lam < 0.0):
        raise NegativeLambda(f"Transport weights must be nonnegative, got {lam}")
    _check_cost(cost)

    box = support.box_bounds() if cost.norm == Norm.L1 else None

    best: Optional[np.ndarray] = None
    best_piece = None
    best_value = -np.inf

    for piece, slope in enumerate(loss.slopes):
        if box is not None:
            maximizer, direction = _separable_piece(lam, anchors, slope, *box)
        else:
            maximizer, direction = _lp_piece(lam, anchors, slope, support, cost.norm, settings)

        if direction is not None:
            return MoreauResult(
                value=math.inf,
                piece=piece,
                halfspace=_finiteness_halfspace(lam.size, slope, direction, cost.norm),
            )

        value = float(slope @ maximizer + loss.intercepts[piece]) - float(
            lam @ cost.pairwise(maximizer, anchors)[0]
        )
        if value > best_value:
            best, best_piece, best_value = maximizer, piece, value

    value = float(loss(best)) - float(lam @ cost.pairwise(best, anchors)[0])

    return MoreauResult(value=value, maximizer=best, piece=best_piece)


def _split(point: np.ndarray, amb: AmbiguitySpec):
    K = amb.num_sources
    lam = point[:K]
    offsets = np.cumsum([K] + amb.sizes)
    gammas = [point[offsets[k] : offsets[k + 1]] for k in range(K)]
    return lam, gammas


def dual_dimension(amb: AmbiguitySpec) -> int:
    return amb.num_sources + sum(amb.sizes)


def dual_objective(amb: AmbiguitySpec) -> np.ndarray:
    return np.concatenate([amb.radii] + [center.probs for center in amb.centers])


def separation_oracle(
    point: np.ndarray,
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    support: Polyhedron,
    settings: SolverSettings = None,
    tol: float = 1e-9,
) -> Union[Inside, Halfspace]:
    """
    Membership oracle for the feasible set of weights (lambda, gamma): either
    Inside, or a halfspace containing every feasible point but not `point`.
    """

    point = np.asarray(point, dtype=float)
    lam, gammas = _split(point, amb)
    K = amb.num_sources
    n = point.size

    negative = np.flatnonzero(lam < 0.0)
    if negative.size:
        normal = np.zeros(n)
        normal[negative[0]] = -1.0
        return Halfspace(normal, 0.0)

    gamma_offsets = np.cumsum([K] + amb.sizes)[:-1]
    atoms = [center.atoms for center in amb.centers]

    for alpha in itertools.product(*(range(size) for size in amb.sizes)):
        anchors = np.array([atoms[k][alpha[k]] for k in range(K)])
        result = moreau_envelope(lam, anchors, loss, support, amb.cost, settings)

        if not result.is_finite:
            normal = np.zeros(n)
            normal[:K] = result.halfspace.normal
            return Halfspace(normal, result.halfspace.offset)

        budget = sum(gammas[k][alpha[k]] for k in range(K))
        if result.value > budget + tol * (1.0 + abs(budget)):
            costs = amb.cost.pairwise(result.maximizer, anchors)[0]
            normal = np.zeros(n)
            normal[:K] = -costs
            for k in range(K):
                normal[gamma_offsets[k] + alpha[k]] = -1.0
            return Halfspace(normal, -float(loss(result.maximizer)))

    return Inside()


@dataclass
class EllipsoidState:
    center: np.ndarray
    shape: np.ndarray
    iterations: int = 0
    best_value: float = math.inf


@dataclass
class EllipsoidResult:
    value: float
    point: np.ndarray
    iterations: int
    lower_bound: float
    log_det_history: List[float] = field(default_factory=list, repr=False)


def iteration_budget(dim: int, radius: float, objective_norm: float, delta: float) -> int:
    return int(
        math.ceil(4 * dim * (dim + 1) * math.log(max(2.0, radius * (1.0 + objective_norm) / delta)))
    ) + 100


def _log_det(shape: np.ndarray) -> float:
    try:
        factor = np.linalg.cholesky(shape)
    except np.linalg.LinAlgError as e:
        raise NumericalFailure("Ellipsoid shape matrix lost positive definiteness") from e
    return float(2.0 * np.sum(np.log(np.diag(factor))))


def _central_cut(state: EllipsoidState, normal: np.ndarray):
    n = state.center.size
    scaled = state.shape @ normal
    width = float(normal @ scaled)
    if width <= 0.0:
        raise NumericalFailure("Degenerate cut direction for the ellipsoid")

    step = scaled / math.sqrt(width)
    state.center = state.center - step / (n + 1)
    shape = (n * n / (n * n - 1.0)) * (state.shape - (2.0 / (n + 1)) * np.outer(step, step))
    state.shape = 0.5 * (shape + shape.T)
    state.iterations += 1


def ellipsoid_solve(
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    support: Polyhedron,
    radius: float,
    delta: float = 1e-3,
    center: np.ndarray = None,
    max_iterations: int = None,
    settings: SolverSettings = None,
) -> EllipsoidResult:
    """
    Central-cut ellipsoid method over the weights (lambda, gamma) inside the
    ball of the given radius. Feasible centers get an objective cut; the
    run stops once the best feasible value is within `delta` of the lower
    bound min { c.x : x in ellipsoid }.
    """

    n = dual_dimension(amb)
    c = dual_objective(amb)
    budget = max_iterations or iteration_budget(n, radius, float(np.linalg.norm(c)), delta)

    state = EllipsoidState(
        center=np.zeros(n) if center is None else np.asarray(center, dtype=float).copy(),
        shape=radius**2 * np.eye(n),
    )
    best_point = None
    lower_bound = -math.inf
    history = [_log_det(state.shape)]

    logger.info(f"Ellipsoid method in dimension {n} with radius {radius} and budget {budget}")

    while state.iterations < budget:
        x = state.center
        lower_bound = max(lower_bound, float(c @ x - math.sqrt(c @ state.shape @ c)))

        if best_point is not None and state.best_value - lower_bound <= delta:
            break

        outside_ball = float(np.linalg.norm(x)) > radius
        cut = Halfspace(x, radius * float(np.linalg.norm(x))) if outside_ball else (
            separation_oracle(x, amb, loss, support, settings)
        )

        if isinstance(cut, Inside):
            value = float(c @ x)
            if value < state.best_value:
                state.best_value = value
                best_point = x.copy()
            _central_cut(state, c)
        else:
            _central_cut(state, cut.normal)

        history.append(_log_det(state.shape))
    else:
        raise IterationBudgetExceeded(
            f"Ellipsoid method did not reach accuracy {delta} within {budget} iterations"
        )

    if np.linalg.norm(best_point) >= BOUNDARY_FRACTION * radius:
        raise UnboundedObjective(
            f"Best point lies on the boundary of the radius-{radius} ball; "
            "the objective is likely unbounded below"
        )

    logger.info(
        f"Ellipsoid method finished after {state.iterations} iterations "
        f"with value {state.best_value}"
    )

    return EllipsoidResult(
        value=state.best_value,
        point=best_point,
        iterations=state.iterations,
        lower_bound=lower_bound,
        log_det_history=history,
    )
