import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from mosaic.config import SolverSettings, resolve_settings
from mosaic.exceptions import (
    AllWeightsZero,
    DimensionMismatch,
    InvalidParams,
    SizeExceeded,
    SolverError,
    UnsupportedCost,
)
from mosaic.lp import LpBuilder, RowSense, solve_lp
from mosaic.transport import (
    MERGE_TOL,
    CostKind,
    DiscreteDistribution,
    GroundCost,
    Norm,
    ot_cost,
)

logger = logging.getLogger("mosaic")


@dataclass
class MultiMarginPlan:
    """
    `indices[s]` is a multi-index alpha (one atom per marginal) carrying
    `masses[s]`; only positive masses are stored.
    """

    indices: np.ndarray
    masses: np.ndarray
    marginals: List[DiscreteDistribution] = field(repr=False)

    def marginal_error(self) -> float:
        error = abs(self.masses.sum() - 1.0)
        for k, marginal in enumerate(self.marginals):
            sums = np.bincount(self.indices[:, k], weights=self.masses, minlength=marginal.size)
            error = max(error, float(np.abs(sums - marginal.probs).max()))
        return error


@dataclass
class BarycenterResult:
    barycenter: DiscreteDistribution
    plan: MultiMarginPlan
    objective: float


def _check_weights(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0.0):
        raise InvalidParams("Barycenter weights must be nonnegative")
    if not np.any(weights > 0.0):
        raise AllWeightsZero("At least one barycenter weight must be positive")
    return weights


def _inner_minimizers(
    points: np.ndarray, weights: np.ndarray, cost: GroundCost
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized inner problem over a batch: `points` has shape (S, K, d).
    Returns phi with shape (S,) and the minimizers Phi with shape (S, d).
    """

    active = weights > 0.0
    points = points[:, active, :]
    w = weights[active]

    if cost.kind == CostKind.SQ_EUCLIDEAN:
        minimizers = np.tensordot(w, points, axes=(0, 1)) / w.sum()
        gaps = points - minimizers[:, None, :]
        values = np.einsum("k,skd->s", w, gaps**2)
        return values, minimizers

    if cost.norm != Norm.L1 or cost.p != 1:
        raise UnsupportedCost("Barycenters support the squared Euclidean and L1 costs only")

    order = np.argsort(points, axis=1, kind="stable")
    ordered = np.take_along_axis(points, order, axis=1)
    cumulative = np.cumsum(w[order], axis=1)
    half = 0.5 * w.sum()
    # first breakpoint reaching half the weight: the lower end of the median interval
    position = np.argmax(cumulative >= half - 1e-12 * w.sum(), axis=1)
    minimizers = np.take_along_axis(ordered, position[:, None, :], axis=1)[:, 0, :]

    values = np.einsum("k,skd->s", w, np.abs(points - minimizers[:, None, :]))
    return values, minimizers


def inner_minimizer(
    points: np.ndarray, weights: Sequence[float], cost: GroundCost
) -> Tuple[float, np.ndarray]:
    """
    Minimizes sum_k weights[k] * c(x, points[k]) over x. Zero weights are
    ignored; L1 ties resolve to the lower end of the weighted-median interval.
    """

    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    weights = _check_weights(weights)
    if points.shape[0] != weights.shape[0]:
        raise DimensionMismatch(f"{points.shape[0]} points but {weights.shape[0]} weights")

    values, minimizers = _inner_minimizers(points[None, :, :], weights, cost)
    return float(values[0]), minimizers[0]


def _comonotone_plan(distributions: Sequence[DiscreteDistribution]) -> Tuple[np.ndarray, np.ndarray]:
    orders = [np.argsort(P.atoms[:, 0], kind="stable") for P in distributions]
    cumulatives = []
    for P, order in zip(distributions, orders):
        cumulative = np.cumsum(P.probs[order])
        cumulative[-1] = 1.0
        cumulatives.append(cumulative)

    breaks = np.unique(np.concatenate([[0.0]] + cumulatives))
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    masses = np.diff(breaks)

    indices = np.column_stack(
        [
            order[np.minimum(np.searchsorted(cumulative, mids), len(order) - 1)]
            for order, cumulative in zip(orders, cumulatives)
        ]
    )
    keep = masses > 0.0
    return indices[keep], masses[keep]


def _lp_plan(
    distributions: Sequence[DiscreteDistribution],
    phi: np.ndarray,
    indices: np.ndarray,
    settings: SolverSettings,
) -> Tuple[np.ndarray, np.ndarray]:
    builder = LpBuilder()
    columns = builder.add_variables(len(phi), cost=phi)

    for k, P in enumerate(distributions):
        for j in range(P.size):
            members = columns[indices[:, k] == j]
            builder.add_row(members, np.ones(members.size), RowSense.EQ, P.probs[j])

    solution = solve_lp(builder.build(), settings)
    if not solution.is_optimal:
        raise SolverError(f"Multi-margin LP ended {solution.status.value}")

    masses = np.maximum(solution.primal, 0.0)
    keep = masses > 1e-15
    return indices[keep], masses[keep]


def _use_monotone(method: str, distributions, cost: GroundCost) -> bool:
    if method == "lp":
        return False
    one_dimensional = distributions[0].dim == 1
    supported = cost.kind == CostKind.SQ_EUCLIDEAN or len(distributions) == 2
    if method == "monotone":
        if not (one_dimensional and supported):
            raise InvalidParams(
                "The comonotone plan is optimal only on the line, for the squared "
                "Euclidean cost or for two marginals"
            )
        return True
    return one_dimensional and supported


def barycenter(
    distributions: Sequence[DiscreteDistribution],
    weights: Sequence[float],
    cost: GroundCost,
    method: str = "auto",
    settings: SolverSettings = None,
    backend: str = None,
) -> BarycenterResult:
    """
    Optimal transport barycenter through the multi-margin problem over all
    multi-indices alpha, pushed forward by the inner minimizer.
    """

    settings = resolve_settings(settings, backend)
    weights = _check_weights(weights)

    if len(distributions) != weights.shape[0]:
        raise DimensionMismatch(f"{len(distributions)} distributions but {weights.shape[0]} weights")
    if method not in ("auto", "lp", "monotone"):
        raise InvalidParams(f"Unknown barycenter method '{method}'")

    dims = {P.dim for P in distributions}
    if len(dims) != 1:
        raise DimensionMismatch(f"Distributions live in dimensions {sorted(dims)}")

    if _use_monotone(method, distributions, cost):
        indices, masses = _comonotone_plan(distributions)
        points = np.stack([P.atoms[indices[:, k]] for k, P in enumerate(distributions)], axis=1)
        phi, minimizers = _inner_minimizers(points, weights, cost)
    else:
        sizes = [P.size for P in distributions]
        num_scenarios = int(np.prod(sizes))
        if num_scenarios > settings.max_scenarios:
            raise SizeExceeded(
                f"{num_scenarios} multi-indices exceed the enumeration cap of {settings.max_scenarios}"
            )

        all_indices = np.array(np.unravel_index(np.arange(num_scenarios), sizes)).T
        points = np.stack([P.atoms[all_indices[:, k]] for k, P in enumerate(distributions)], axis=1)
        all_phi, all_minimizers = _inner_minimizers(points, weights, cost)

        logger.info(f"Solving multi-margin LP over {num_scenarios} multi-indices")
        indices, masses = _lp_plan(distributions, all_phi, all_indices, settings)

        lookup = np.ravel_multi_index(indices.T, sizes)
        phi, minimizers = all_phi[lookup], all_minimizers[lookup]

    objective = float(masses @ phi)
    pushforward = DiscreteDistribution.from_weights(minimizers, masses).merged(MERGE_TOL)

    return BarycenterResult(
        barycenter=pushforward,
        plan=MultiMarginPlan(indices, masses, list(distributions)),
        objective=objective,
    )


def barycenter_objective(
    candidate: DiscreteDistribution,
    distributions: Sequence[DiscreteDistribution],
    weights: Sequence[float],
    cost: GroundCost,
    settings: SolverSettings = None,
    backend: str = None,
) -> float:
    total = 0.0
    for weight, P in zip(weights, distributions):
        if weight > 0.0:
            value, _ = ot_cost(candidate, P, cost, settings=settings, backend=backend)
            total += weight * value
    return total


def gaussian_barycenter(
    means: Sequence[float], sds: Sequence[float], weights: Sequence[float]
) -> Tuple[float, float]:
    """
    Mean and variance of the 2-Wasserstein barycenter of 1-D Gaussians.
    """

    weights = _check_weights(weights)
    weights = weights / weights.sum()
    mean = float(weights @ np.asarray(means, dtype=float))
    sd = float(weights @ np.asarray(sds, dtype=float))
    return mean, sd**2


def gaussian_barycenter_variance(sds: Sequence[float], weights: Sequence[float]) -> float:
    return gaussian_barycenter(np.zeros(len(sds)), sds, weights)[1]
