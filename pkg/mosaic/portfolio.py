import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import dacite  # type: ignore
import numpy as np
import pandas as pd  # type: ignore

from mosaic.ambiguity import AffineDecisionLoss, AmbiguitySpec, Polyhedron
from mosaic.config import DACITE_CONFIG, SolverSettings, resolve_settings
from mosaic.dro import solve_msdro
from mosaic.exceptions import InvalidParams, UnsupportedCost
from mosaic.generators import DataModel, VarianceConvention, generate_synthetic, split_seeds
from mosaic.transport import CostKind, DiscreteDistribution, GroundCost, Norm, ot_cost

logger = logging.getLogger("mosaic")


@dataclass(frozen=True)
class PortfolioSpec:
    """
    Mean-CVaR portfolio: minimize E[-<theta, xi>] + rho CVaR_eta(-<theta, xi>)
    over the unit simplex, written with the auxiliary threshold tau as the
    two-piece loss max_t a_t <theta, xi> + b_t tau.
    """

    ambiguity: AmbiguitySpec
    rho: float = 10.0
    eta: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise InvalidParams(f"CVaR level {self.eta} must lie in (0, 1]")
        if self.rho < 0.0:
            raise InvalidParams(f"Risk aversion {self.rho} must be nonnegative")
        cost = self.ambiguity.cost
        if cost.kind != CostKind.NORM_POWER or cost.norm != Norm.L1 or cost.p != 1:
            raise UnsupportedCost("Portfolio balls use the L1 transport cost with p = 1")

    @property
    def dim(self) -> int:
        return self.ambiguity.dim

    @property
    def pieces(self) -> Tuple[np.ndarray, np.ndarray]:
        a = np.array([-1.0, -1.0 - self.rho / self.eta])
        b = np.array([self.rho, self.rho * (1.0 - 1.0 / self.eta)])
        return a, b

    def loss_family(self) -> AffineDecisionLoss:
        """
        Decisions are (theta_1, ..., theta_d, tau).
        """

        d = self.dim
        a, b = self.pieces
        selector = np.hstack([np.eye(d), np.zeros((d, 1))])
        tau = np.zeros(d + 1)
        tau[d] = 1.0

        return AffineDecisionLoss(
            slope_maps=np.stack([a_t * selector for a_t in a]),
            slope_offsets=np.zeros((2, d)),
            intercept_weights=np.stack([b_t * tau for b_t in b]),
            intercepts=np.zeros(2),
        )

    def decision_set(self) -> Polyhedron:
        d = self.dim
        weights = np.hstack([np.ones(d), [0.0]])
        nonnegative = np.hstack([-np.eye(d), np.zeros((d, 1))])
        return Polyhedron(
            np.vstack([weights, -weights, nonnegative]),
            np.concatenate([[1.0, -1.0], np.zeros(d)]),
        )

    def objective(self, theta: np.ndarray, samples: np.ndarray) -> float:
        """
        Empirical mean-CVaR objective of a fixed portfolio.
        """

        losses = -np.atleast_2d(samples) @ theta
        tail = np.sort(losses)[::-1]
        count = self.eta * losses.size
        whole = int(np.floor(count))
        cvar = (tail[:whole].sum() + (count - whole) * (tail[whole] if whole < tail.size else 0.0)) / count
        return float(losses.mean() + self.rho * cvar)


@dataclass
class PortfolioSolution:
    weights: np.ndarray
    tau: float
    value: float


def portfolio_solve(
    spec: PortfolioSpec, settings: SolverSettings = None, backend: str = None
) -> PortfolioSolution:
    settings = resolve_settings(settings, backend)
    solution = solve_msdro(
        spec.ambiguity, spec.loss_family(), spec.decision_set(), settings=settings
    )
    weights = np.maximum(solution.theta[: spec.dim], 0.0)
    weights = weights / weights.sum()

    return PortfolioSolution(weights=weights, tau=float(solution.theta[-1]), value=solution.value)


def radii_from_lambda_m(lam: float, m: float, distance: float) -> Tuple[float, float]:
    """
    eps_1 = lam (1 + m) W and eps_2 = (1 - lam) (1 + m) W, which keeps the
    intersection of the two balls nonempty.
    """

    if not 0.0 <= lam <= 1.0:
        raise InvalidParams(f"lambda {lam} must lie in [0, 1]")
    if m < 0.0:
        raise InvalidParams(f"m {m} must be nonnegative")
    return lam * (1.0 + m) * distance, (1.0 - lam) * (1.0 + m) * distance


def l1_distance(P: DiscreteDistribution, Q: DiscreteDistribution, settings: SolverSettings = None) -> float:
    return ot_cost(P, Q, GroundCost.l1(), settings=settings)[0]


@dataclass
class SensitivityConfig:
    seed: int = 0
    samples: int = 30
    rho: float = 10.0
    eta: float = 0.2
    lambdas: List[float] = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(11)])
    ms: List[float] = field(default_factory=lambda: [0.01])
    variance_convention: str = VarianceConvention.SD.value
    backend: str = "highs"

    @classmethod
    def from_dict(cls, data: Dict) -> "SensitivityConfig":
        return dacite.from_dict(data_class=cls, data=data, config=DACITE_CONFIG)


def sensitivity_sweep(
    config: SensitivityConfig, settings: SolverSettings = None
) -> pd.DataFrame:
    """
    Optimal weights over the (lambda, m) grid in long format: one row per
    (lambda, m, asset).
    """

    settings = resolve_settings(settings, config.backend)
    convention = VarianceConvention(config.variance_convention)
    target_seed, source_seed = split_seeds(config.seed, 0, 2)

    target = DiscreteDistribution.from_samples(
        generate_synthetic(DataModel.SENSITIVITY_TARGET, config.samples, target_seed, convention)
    )
    source = DiscreteDistribution.from_samples(
        generate_synthetic(DataModel.SENSITIVITY_SOURCE, config.samples, source_seed, convention)
    )
    distance = l1_distance(target, source, settings.with_backend("highs"))
    logger.info(f"Sensitivity sweep with W1 distance {distance:.6g} between the sources")

    rows = []
    for m in config.ms:
        for lam in config.lambdas:
            radii = radii_from_lambda_m(lam, m, distance)
            spec = PortfolioSpec(
                AmbiguitySpec.of([target, source], radii), rho=config.rho, eta=config.eta
            )
            solution = portfolio_solve(spec, settings)
            for asset, weight in enumerate(solution.weights, start=1):
                rows.append({"lambda": lam, "m": m, "asset": asset, "weight": weight})

    return pd.DataFrame(rows, columns=["lambda", "m", "asset", "weight"])


def weights_by_asset(frame: pd.DataFrame, lam: float, m: float) -> np.ndarray:
    selected = frame[np.isclose(frame["lambda"], lam) & np.isclose(frame["m"], m)]
    return selected.sort_values("asset")["weight"].to_numpy()


def single_ball(center: DiscreteDistribution, radius: float, rho: float, eta: float) -> PortfolioSpec:
    return PortfolioSpec(AmbiguitySpec.of([center], [radius]), rho=rho, eta=eta)


def pooled(distributions: Sequence[DiscreteDistribution]) -> DiscreteDistribution:
    """
    Empirical distribution of the union of the samples behind each uniform
    empirical distribution.
    """

    return DiscreteDistribution.from_samples(np.vstack([P.atoms for P in distributions]))
