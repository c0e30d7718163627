import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from mosaic.ambiguity import AffineDecisionLoss, AmbiguitySpec, Polyhedron
from mosaic.config import SolverSettings, resolve_settings
from mosaic.dro import solve_msdro, worst_case_value
from mosaic.exceptions import DimensionMismatch, InvalidParams, UnsupportedCost
from mosaic.transport import CostKind, Norm

logger = logging.getLogger("mosaic")

PRICE_STEP = 0.01


def assortment_prices(d: int) -> np.ndarray:
    return PRICE_STEP * np.arange(1, d + 1)


def realized_revenue(theta: np.ndarray, prices: np.ndarray, demands: np.ndarray) -> np.ndarray:
    """
    Revenue of the assortment `theta` under each demand row.
    """

    return np.atleast_2d(demands) @ (np.asarray(prices, dtype=float) * np.asarray(theta, dtype=float))


@dataclass(frozen=True, eq=False)
class AssortmentSpec:
    """
    Pick at most `capacity` products to maximize the worst-case expected
    revenue sum_i prices[i] theta_i xi_i over nonnegative demands xi.
    """

    prices: np.ndarray
    capacity: int
    ambiguity: AmbiguitySpec

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if prices.shape != (self.ambiguity.dim,):
            raise DimensionMismatch(f"{prices.size} prices for {self.ambiguity.dim} products")
        if not np.all(np.isfinite(prices)) or np.any(prices < 0.0):
            raise InvalidParams("Prices must be finite and nonnegative")
        if not 0 <= self.capacity <= self.ambiguity.dim:
            raise InvalidParams(f"Capacity {self.capacity} must lie in [0, {self.ambiguity.dim}]")
        cost = self.ambiguity.cost
        if cost.kind != CostKind.NORM_POWER or cost.norm != Norm.L1 or cost.p != 1:
            raise UnsupportedCost("Assortment balls use the L1 transport cost with p = 1")

    @property
    def dim(self) -> int:
        return self.ambiguity.dim

    def loss_family(self) -> AffineDecisionLoss:
        # negative revenue, a single piece
        d = self.dim
        return AffineDecisionLoss(
            slope_maps=-np.diag(self.prices)[None, :, :],
            slope_offsets=np.zeros((1, d)),
            intercept_weights=np.zeros((1, d)),
            intercepts=np.zeros(1),
        )

    def decision_set(self) -> Polyhedron:
        d = self.dim
        return Polyhedron(
            np.vstack([np.ones(d), np.eye(d), -np.eye(d)]),
            np.concatenate([[self.capacity], np.ones(d), np.zeros(d)]),
        )

    def support(self) -> Polyhedron:
        return Polyhedron.nonnegative_orthant(self.dim)


@dataclass
class AssortmentSolution:
    selection: Tuple[int, ...]
    theta: np.ndarray
    revenue: float


def assortment_solve(
    spec: AssortmentSpec, settings: SolverSettings = None, backend: str = None
) -> AssortmentSolution:
    settings = resolve_settings(settings, backend)
    solution = solve_msdro(
        spec.ambiguity,
        spec.loss_family(),
        spec.decision_set(),
        support=spec.support(),
        binary=range(spec.dim),
        cardinality_cap=spec.capacity,
        settings=settings,
    )
    theta = np.round(solution.theta)
    selection = tuple(int(i) for i in np.flatnonzero(theta > 0.5))

    return AssortmentSolution(selection=selection, theta=theta, revenue=-solution.value)


def assortment_brute_force(
    spec: AssortmentSpec, settings: SolverSettings = None, backend: str = None
) -> AssortmentSolution:
    """
    Evaluates the worst-case revenue of every subset of at most `capacity`
    products with a separate dual LP. Ties keep the subset seen first.
    """

    settings = resolve_settings(settings, backend)
    family = spec.loss_family()
    best: Optional[AssortmentSolution] = None

    for size in range(spec.capacity + 1):
        for subset in itertools.combinations(range(spec.dim), size):
            theta = np.zeros(spec.dim)
            theta[list(subset)] = 1.0
            value = worst_case_value(spec.ambiguity, family.at(theta), spec.support(), settings)
            revenue = -value.value

            margin = settings.opt_tol * (1.0 + abs(best.revenue)) if best else 0.0
            if best is None or revenue > best.revenue + margin:
                best = AssortmentSolution(selection=subset, theta=theta, revenue=revenue)

    logger.info(f"Brute force picked products {best.selection}")
    return best
