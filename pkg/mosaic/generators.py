from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from mosaic.exceptions import InvalidParams

NUM_ASSETS = 10

MARKETS = ("europe", "usa", "pacific")

# monthly sector index returns in percent; europe and usa move alike, pacific does not
REGIONAL_MEANS = {
    "europe": (0.5, 0.3, 0.6),
    "usa": (0.6, 0.4, 0.5),
    "pacific": (0.1, 0.7, -0.2),
}
REGIONAL_FACTOR_SPREAD = 4.0
REGIONAL_IDIO_SPREAD = 2.0


class DataModel(Enum):
    SENSITIVITY_TARGET = "sensitivity"
    SENSITIVITY_SOURCE = "sensitivity-source"
    BACKTEST_1 = "backtest-model-1"
    BACKTEST_2 = "backtest-model-2"
    REGIONAL_EUROPE = "regional-europe"
    REGIONAL_USA = "regional-usa"
    REGIONAL_PACIFIC = "regional-pacific"


class VarianceConvention(Enum):
    SD = "sd"  # N(m, s) reads s as the standard deviation
    VARIANCE = "variance"


@dataclass(frozen=True)
class FactorModel:
    """
    Returns xi_i = psi + zeta_i with psi ~ N(0, factor_sd^2) shared by all
    assets and independent zeta_i ~ N(means[i], idio_sd^2). Returns are
    fractions: 0.01 is one percent.
    """

    means: np.ndarray
    factor_sd: float
    idio_sd: float

    @property
    def dim(self) -> int:
        return len(self.means)

    def sample(self, N: int, rng: np.random.Generator) -> np.ndarray:
        factor = rng.normal(0.0, self.factor_sd, size=(N, 1)) if self.factor_sd > 0 else 0.0
        idiosyncratic = rng.normal(self.means, self.idio_sd, size=(N, self.dim))
        return idiosyncratic + factor


def _spread(percent: float, convention: VarianceConvention) -> float:
    value = percent / 100.0
    if convention == VarianceConvention.VARIANCE:
        return float(np.sqrt(value))
    return value


def factor_model(
    model: DataModel,
    convention: VarianceConvention = VarianceConvention.SD,
    dim: int = NUM_ASSETS,
) -> FactorModel:
    index = np.arange(1, dim + 1)

    if model == DataModel.SENSITIVITY_TARGET:
        return FactorModel(index / 100.0, 0.0, _spread(1.0, convention))
    if model == DataModel.SENSITIVITY_SOURCE:
        return FactorModel((dim + 1 - index) / 100.0, 0.0, _spread(1.0, convention))
    if model == DataModel.BACKTEST_1:
        means = np.where(index <= 2, 0.4, -0.4) / 100.0
        return FactorModel(means, _spread(2.0, convention), _spread(1.0, convention))
    if model == DataModel.BACKTEST_2:
        means = np.where(index <= 5, 0.2, -0.4) / 100.0
        return FactorModel(means, _spread(2.0, convention), _spread(1.0, convention))
    if model.value.startswith("regional-"):
        means = np.array(REGIONAL_MEANS[model.value[len("regional-") :]]) / 100.0
        return FactorModel(
            means,
            _spread(REGIONAL_FACTOR_SPREAD, convention),
            _spread(REGIONAL_IDIO_SPREAD, convention),
        )

    raise InvalidParams(f"Unknown data model {model}")


def regional_model(market: str) -> DataModel:
    if market not in MARKETS:
        raise InvalidParams(f"Unknown market '{market}', expected one of {MARKETS}")
    return DataModel(f"regional-{market}")


def generate_synthetic(
    model: DataModel,
    N: int,
    seed: int,
    convention: VarianceConvention = VarianceConvention.SD,
) -> np.ndarray:
    if N < 1:
        raise InvalidParams(f"Need at least one sample, got {N}")
    rng = np.random.default_rng(seed)
    return factor_model(model, convention).sample(N, rng)


class Region(Enum):
    # J hosts the new store; S and C host the existing ones
    J = "J"
    S = "S"
    C = "C"


# products whose demand in region J resembles region S; the rest resemble C
S_LIKE_PRODUCTS = (3, 5, 6, 8, 9)
DEMAND_SHIFT = 0.6
DEMAND_SPREAD = 0.5


def demand_log_means(region: Region, d: int) -> np.ndarray:
    base = np.log(50.0 * (1.0 + np.arange(d) / d))
    s_like = np.isin(np.arange(d), S_LIKE_PRODUCTS)

    if region == Region.S:
        return base + DEMAND_SHIFT * ~s_like
    if region == Region.C:
        return base + DEMAND_SHIFT * s_like
    return base


def generate_demand(region: Region, N: int, d: int, seed: int) -> np.ndarray:
    """
    Lognormal product demands. Region J shares its marginals with S on some
    products and with C on the others, so neither source region matches J
    everywhere.
    """

    if N < 1 or d < 1:
        raise InvalidParams(f"Need N >= 1 and d >= 1, got N={N}, d={d}")
    rng = np.random.default_rng(seed)
    return rng.lognormal(demand_log_means(region, d), DEMAND_SPREAD, size=(N, d))


def demand_means(region: Region, d: int) -> np.ndarray:
    return np.exp(demand_log_means(region, d) + 0.5 * DEMAND_SPREAD**2)


def split_seeds(seed: int, replication: int, count: int) -> Tuple[int, ...]:
    """
    Independent child seeds for the disjoint draws of one replication.
    """

    children = np.random.SeedSequence([seed, replication]).spawn(count)
    return tuple(int(child.generate_state(1)[0]) for child in children)
