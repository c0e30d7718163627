from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd  # type: ignore

from mosaic.generators import FactorModel

METRICS = ("mean", "sd", "sharpe")
REVENUE_METRICS = ("revenue", "sd")


@dataclass
class PortfolioMetrics:
    """
    Out-of-sample mean and standard deviation in percent, and their ratio.
    """

    mean: float
    sd: float
    sharpe: float

    def as_record(self) -> Dict[str, float]:
        return {"expected_return": self.mean, "std_dev": self.sd, "sharpe": self.sharpe}


@dataclass
class RevenueMetrics:
    """
    Average revenue of an assortment over test demands and its spread.
    """

    revenue: float
    sd: float

    def as_record(self) -> Dict[str, float]:
        return {"expected_return": self.revenue, "std_dev": self.sd, "sharpe": np.nan}


@dataclass
class MethodOutcome:
    method: str
    replication: int
    weights: np.ndarray
    metrics: Union[PortfolioMetrics, RevenueMetrics]
    hyperparameters: Dict[str, float] = field(default_factory=dict)


def analytic_metrics(theta: np.ndarray, model: FactorModel) -> PortfolioMetrics:
    theta = np.asarray(theta, dtype=float)
    mean = float(theta @ model.means)
    variance = theta.sum() ** 2 * model.factor_sd**2 + model.idio_sd**2 * float(theta @ theta)
    sd = float(np.sqrt(variance))
    sharpe = mean / sd if sd > 0.0 else np.nan
    return PortfolioMetrics(mean=100.0 * mean, sd=100.0 * sd, sharpe=sharpe)


def revenue_metrics(revenues: np.ndarray) -> RevenueMetrics:
    revenues = np.asarray(revenues, dtype=float)
    sd = float(revenues.std(ddof=1)) if revenues.size > 1 else 0.0
    return RevenueMetrics(revenue=float(revenues.mean()), sd=sd)


def outcomes_frame(outcomes: List[MethodOutcome]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"replication": outcome.replication, "method": outcome.method, **asdict(outcome.metrics)}
            for outcome in outcomes
        ]
    )


def summarize(
    frame: pd.DataFrame, methods: List[str], metrics: Sequence[str] = METRICS
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Metric rows by method columns: means across replications and their
    standard errors.
    """

    grouped = frame.groupby("method")[list(metrics)]
    means = grouped.mean().reindex(methods)
    errors = grouped.sem(ddof=1).reindex(methods).fillna(0.0)

    def table(values: pd.DataFrame) -> pd.DataFrame:
        result = pd.DataFrame({"metric": list(metrics)})
        for method in methods:
            result[method] = values.loc[method].to_numpy()
        return result

    return table(means), table(errors)
