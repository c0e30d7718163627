import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import dacite  # type: ignore
import numpy as np
import pandas as pd  # type: ignore
from scipy import stats as scipy_stats  # type: ignore

from mosaic.alerts import AlertTarget
from mosaic.ambiguity import AmbiguitySpec
from mosaic.assortment import AssortmentSpec, assortment_prices, assortment_solve, realized_revenue
from mosaic.barycenter import barycenter, gaussian_barycenter_variance
from mosaic.config import DACITE_CONFIG, SolverSettings, resolve_settings
from mosaic.exceptions import InvalidParams, SolverError
from mosaic.generators import (
    DataModel,
    Region,
    VarianceConvention,
    factor_model,
    generate_demand,
    generate_synthetic,
    regional_model,
    split_seeds,
)
from mosaic.portfolio import (
    PortfolioSpec,
    l1_distance,
    pooled,
    portfolio_solve,
    radii_from_lambda_m,
    single_ball,
)
from mosaic.run import RunningExperiment
from mosaic.stats import (
    METRICS,
    REVENUE_METRICS,
    MethodOutcome,
    PortfolioMetrics,
    RevenueMetrics,
    analytic_metrics,
    outcomes_frame,
    revenue_metrics,
    summarize,
)
from mosaic.transport import DiscreteDistribution, GroundCost

logger = logging.getLogger("mosaic")

METHODS = ["target", "source", "pooled", "barycenter", "multi_source"]
ASSORTMENT_METHODS = ["source_1", "source_2", "pooled", "barycenter", "multi_source"]

EPS_GRID = [0.005, 0.01, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500]
M_GRID = [0.002, 0.005, 0.01, 0.02]
BARYCENTER_TILT = 0.01

REGIONAL_TARGET_SIZES = (5, 10, 20, 50)
REGIONAL_SOURCE_SAMPLES = 5

SOURCE_REGIONS = (Region.S, Region.C)
ASSORTMENT_TEST_SAMPLES = 3372


def _lambda_grid() -> List[float]:
    return [round(0.1 * i, 1) for i in range(11)]


@dataclass
class ExperimentConfig:
    name: str = "backtest"
    seed: int = 0
    replications: int = 10
    target_samples: int = 5
    source_samples: int = 30
    validation_samples: int = 5
    lambdas: List[float] = field(default_factory=_lambda_grid)
    ms: List[float] = field(default_factory=lambda: list(M_GRID))
    eps_grid: List[float] = field(default_factory=lambda: list(EPS_GRID))
    rho: float = 10.0
    eta: float = 0.2
    target_model: str = DataModel.BACKTEST_1.value
    source_model: str = DataModel.BACKTEST_2.value
    variance_convention: str = VarianceConvention.SD.value
    backend: str = "highs"
    workers: int = 1

    def __post_init__(self):
        if not (self.lambdas and self.ms and self.eps_grid):
            raise InvalidParams("Hyperparameter grids must be nonempty")
        if self.replications < 1 or self.workers < 1:
            raise InvalidParams("Need at least one replication and one worker")

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        return dacite.from_dict(data_class=cls, data=data, config=DACITE_CONFIG)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class GridFailure:
    method: str
    error: SolverError


@dataclass
class ReplicationResult:
    outcomes: List[MethodOutcome]
    failures: List[GridFailure]


@dataclass
class ReplicationData:
    target: DiscreteDistribution
    source: DiscreteDistribution
    validation: np.ndarray


def replication_data(config: ExperimentConfig, replication: int) -> ReplicationData:
    """
    Training, source and validation draws come from three disjoint seeds, so
    the selection step never sees data the portfolio was trained on.
    """

    convention = VarianceConvention(config.variance_convention)
    target_seed, source_seed, validation_seed = split_seeds(config.seed, replication, 3)
    target_model = DataModel(config.target_model)

    return ReplicationData(
        target=DiscreteDistribution.from_samples(
            generate_synthetic(target_model, config.target_samples, target_seed, convention)
        ),
        source=DiscreteDistribution.from_samples(
            generate_synthetic(
                DataModel(config.source_model), config.source_samples, source_seed, convention
            )
        ),
        validation=generate_synthetic(
            target_model, config.validation_samples, validation_seed, convention
        ),
    )


Candidate = Tuple[Dict[str, float], Any]


def _select(
    method: str,
    candidates: List[Candidate],
    solve: Callable[[Any], np.ndarray],
    score: Callable[[np.ndarray], float],
    failures: List[GridFailure],
) -> Tuple[Optional[np.ndarray], Dict[str, float]]:
    """
    Solves every grid point and keeps the decision with the highest
    validation score; failed grid points are reported and skipped.
    """

    best_decision, best_params, best_score = None, {}, -np.inf

    for params, spec in candidates:
        try:
            decision = solve(spec)
        except SolverError as error:
            failures.append(GridFailure(method, error))
            continue

        value = score(decision)
        if value > best_score:
            best_decision, best_params, best_score = decision, params, value

    return best_decision, best_params


def barycenter_centers(
    first: DiscreteDistribution,
    second: DiscreteDistribution,
    settings: SolverSettings,
    tilt: float = BARYCENTER_TILT,
) -> List[DiscreteDistribution]:
    """
    L1 barycenters of the pair with the weights tilted towards each
    distribution in turn. With equal weights every barycenter of two
    distributions is optimal, and these two are the candidates the
    validation step chooses from.
    """

    if not 0.0 < tilt < 0.5:
        raise InvalidParams(f"Barycenter tilt {tilt} must lie in (0, 0.5)")

    cost = GroundCost.l1()
    return [
        barycenter([first, second], weights, cost, settings=settings).barycenter
        for weights in ((0.5 + tilt, 0.5 - tilt), (0.5 - tilt, 0.5 + tilt))
    ]


def _barycenter_center(
    data: ReplicationData,
    centers: List[DiscreteDistribution],
    radius: float,
    config: ExperimentConfig,
    settings: SolverSettings,
) -> DiscreteDistribution:
    """
    Keeps the barycenter whose portfolio has the smaller empirical risk on
    the validation samples.
    """

    best, best_risk = centers[0], np.inf
    for center in centers:
        spec = single_ball(center, radius, config.rho, config.eta)
        weights = portfolio_solve(spec, settings).weights
        risk = spec.objective(weights, data.validation)
        if risk < best_risk:
            best, best_risk = center, risk

    return best


def run_replication(config: ExperimentConfig, replication: int) -> ReplicationResult:
    settings = resolve_settings(None, config.backend)
    data = replication_data(config, replication)
    target_model = factor_model(
        DataModel(config.target_model), VarianceConvention(config.variance_convention)
    )

    failures: List[GridFailure] = []
    outcomes = []

    single_source = {
        "target": lambda eps: single_ball(data.target, eps, config.rho, config.eta),
        "source": lambda eps: single_ball(data.source, eps, config.rho, config.eta),
        "pooled": lambda eps: single_ball(
            pooled([data.target, data.source]), eps, config.rho, config.eta
        ),
    }

    plans: Dict[str, Callable[[], List[Candidate]]] = {
        method: (lambda build=build: [({"eps": eps}, build(eps)) for eps in config.eps_grid])
        for method, build in single_source.items()
    }

    def barycenter_candidates() -> List[Candidate]:
        try:
            centers = barycenter_centers(data.target, data.source, settings)
        except SolverError as error:
            failures.append(GridFailure("barycenter", error))
            return []

        candidates = []
        for eps in config.eps_grid:
            try:
                center = _barycenter_center(data, centers, eps, config, settings)
            except SolverError as error:
                failures.append(GridFailure("barycenter", error))
                continue
            candidates.append(({"eps": eps}, single_ball(center, eps, config.rho, config.eta)))
        return candidates

    def multi_source_candidates() -> List[Candidate]:
        distance = l1_distance(data.target, data.source, settings)
        candidates = []
        for m in config.ms:
            for lam in config.lambdas:
                radii = radii_from_lambda_m(lam, m, distance)
                spec = PortfolioSpec(
                    AmbiguitySpec.of([data.target, data.source], radii),
                    rho=config.rho,
                    eta=config.eta,
                )
                candidates.append(({"lambda": lam, "m": m}, spec))
        return candidates

    plans["barycenter"] = barycenter_candidates
    plans["multi_source"] = multi_source_candidates

    def solve(spec: PortfolioSpec) -> np.ndarray:
        return portfolio_solve(spec, settings).weights

    def score(weights: np.ndarray) -> float:
        return float(np.mean(data.validation @ weights))

    for method in METHODS:
        weights, params = _select(method, plans[method](), solve, score, failures)
        if weights is None:
            metrics = PortfolioMetrics(np.nan, np.nan, np.nan)
            weights = np.full(target_model.dim, np.nan)
        else:
            metrics = analytic_metrics(weights, target_model)
        outcomes.append(MethodOutcome(method, replication, weights, metrics, params))

    logger.info(f"Finished replication {replication} with {len(failures)} skipped grid points")

    return ReplicationResult(outcomes=outcomes, failures=failures)


def _run_indexed(args: Tuple[ExperimentConfig, int]) -> ReplicationResult:
    return run_replication(*args)


@dataclass
class BacktestReport:
    summary: pd.DataFrame
    errors: pd.DataFrame
    outcomes: pd.DataFrame

    def table(self) -> pd.DataFrame:
        return self.summary.merge(self.errors, on="metric", suffixes=("", "_se"))


def _map(worker: Callable, jobs: List, workers: int) -> List[ReplicationResult]:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(worker, jobs))
    return [worker(job) for job in jobs]


def _report(
    results: List[ReplicationResult],
    methods: List[str],
    metrics: Sequence[str],
    run: Optional[RunningExperiment],
) -> BacktestReport:
    outcomes: List[MethodOutcome] = []
    for result in results:
        outcomes.extend(result.outcomes)
        if run is not None:
            for failure in result.failures:
                run.add_alert(failure.method, failure.error)
            for outcome in result.outcomes:
                run.record_result(outcome)

    frame = outcomes_frame(outcomes)
    summary, errors = summarize(frame, methods, metrics)

    return BacktestReport(summary=summary, errors=errors, outcomes=frame)


def run_backtest(config: ExperimentConfig, run: RunningExperiment = None) -> BacktestReport:
    jobs = [(config, replication) for replication in range(config.replications)]
    return _report(_map(_run_indexed, jobs, config.workers), METHODS, METRICS, run)


def regional_config(
    target: str, source: str, target_samples: int, base: ExperimentConfig = None
) -> ExperimentConfig:
    """
    Backtest on sector index returns of the `target` market, with a few
    returns of the `source` market as the second data source.
    """

    if target == source:
        raise InvalidParams(f"Target and source markets must differ, both are '{target}'")

    return replace(
        base or ExperimentConfig(),
        name=f"regional-{source}-{target}-n{target_samples}",
        target_model=regional_model(target).value,
        source_model=regional_model(source).value,
        target_samples=target_samples,
        source_samples=REGIONAL_SOURCE_SAMPLES,
    )


def run_regional_study(
    target: str,
    source: str,
    target_sizes: Sequence[int] = REGIONAL_TARGET_SIZES,
    base: ExperimentConfig = None,
    targets: Sequence[AlertTarget] = (),
    record: bool = False,
) -> pd.DataFrame:
    """
    One backtest per target sample size, each run as its own experiment.
    Rows are the metric tables of the runs stacked with a `target_samples`
    column.
    """

    frames = []
    for size in target_sizes:
        config = regional_config(target, source, size, base)
        with RunningExperiment(config.name, config.to_dict(), targets, record=record) as run:
            report = run_backtest(config, run)

        table = report.table()
        table.insert(0, "target_samples", size)
        frames.append(table)

    return pd.concat(frames, ignore_index=True)


@dataclass
class AssortmentExperimentConfig:
    name: str = "assortment"
    seed: int = 0
    runs: int = 50
    products: int = 10
    capacity: int = 3
    source_samples: List[int] = field(default_factory=lambda: [25, 25])
    validation_samples: int = 5
    test_samples: int = ASSORTMENT_TEST_SAMPLES
    validate_on_target: bool = False
    lambdas: List[float] = field(default_factory=_lambda_grid)
    ms: List[float] = field(default_factory=lambda: list(M_GRID))
    eps_grid: List[float] = field(default_factory=lambda: list(EPS_GRID))
    backend: str = "highs"
    workers: int = 1

    def __post_init__(self):
        if not (self.lambdas and self.ms and self.eps_grid):
            raise InvalidParams("Hyperparameter grids must be nonempty")
        if self.runs < 1 or self.workers < 1:
            raise InvalidParams("Need at least one run and one worker")
        if len(self.source_samples) != len(SOURCE_REGIONS) or min(self.source_samples) < 1:
            raise InvalidParams(f"Need a positive sample size per source, got {self.source_samples}")
        if self.validation_samples < 1 or self.test_samples < 1:
            raise InvalidParams("Validation and test draws must be nonempty")
        if not 0 <= self.capacity <= self.products:
            raise InvalidParams(f"Capacity {self.capacity} must lie in [0, {self.products}]")

    @classmethod
    def from_dict(cls, data: Dict) -> "AssortmentExperimentConfig":
        return dacite.from_dict(data_class=cls, data=data, config=DACITE_CONFIG)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class AssortmentRunData:
    sources: List[DiscreteDistribution]
    validation: List[np.ndarray]
    test: np.ndarray


def assortment_run_data(config: AssortmentExperimentConfig, run: int) -> AssortmentRunData:
    """
    The new store in region J has no demand history. Training demands come
    from the stores in S and C, each with its own validation draw, and the
    chosen assortments are scored on a separate draw from J. With
    `validate_on_target` the validation draws come from J instead.
    """

    seeds = split_seeds(config.seed, run, 5)
    d = config.products

    sources = [
        DiscreteDistribution.from_samples(generate_demand(region, N, d, seed))
        for region, N, seed in zip(SOURCE_REGIONS, config.source_samples, seeds[:2])
    ]

    if config.validate_on_target:
        draw = generate_demand(Region.J, 2 * config.validation_samples, d, seeds[2])
        validation = [draw[: config.validation_samples], draw[config.validation_samples :]]
    else:
        validation = [
            generate_demand(region, config.validation_samples, d, seed)
            for region, seed in zip(SOURCE_REGIONS, seeds[2:4])
        ]

    test = generate_demand(Region.J, config.test_samples, d, seeds[4])

    return AssortmentRunData(sources=sources, validation=validation, test=test)


def run_assortment(config: AssortmentExperimentConfig, index: int) -> ReplicationResult:
    settings = resolve_settings(None, config.backend)
    data = assortment_run_data(config, index)
    prices = assortment_prices(config.products)
    first, second = data.sources
    both = np.vstack(data.validation)
    failures: List[GridFailure] = []

    def spec(centers: List[DiscreteDistribution], radii: Sequence[float]) -> AssortmentSpec:
        return AssortmentSpec(prices, config.capacity, AmbiguitySpec.of(centers, radii))

    def single(center: DiscreteDistribution) -> List[Candidate]:
        return [({"eps": eps}, spec([center], [eps])) for eps in config.eps_grid]

    def barycenter_candidates() -> List[Candidate]:
        try:
            centers = barycenter_centers(first, second, settings)
        except SolverError as error:
            failures.append(GridFailure("barycenter", error))
            return []
        return [
            ({"eps": eps, "center": number}, spec([center], [eps]))
            for number, center in enumerate(centers, start=1)
            for eps in config.eps_grid
        ]

    def multi_source_candidates() -> List[Candidate]:
        distance = l1_distance(first, second, settings)
        return [
            ({"lambda": lam, "m": m}, spec([first, second], radii_from_lambda_m(lam, m, distance)))
            for m in config.ms
            for lam in config.lambdas
        ]

    plans: Dict[str, Tuple[Callable[[], List[Candidate]], np.ndarray]] = {
        "source_1": (lambda: single(first), data.validation[0]),
        "source_2": (lambda: single(second), data.validation[1]),
        "pooled": (lambda: single(pooled([first, second])), both),
        "barycenter": (barycenter_candidates, both),
        "multi_source": (multi_source_candidates, both),
    }

    def solve(candidate: AssortmentSpec) -> np.ndarray:
        return assortment_solve(candidate, settings).theta

    outcomes = []
    for method in ASSORTMENT_METHODS:
        plan, validation = plans[method]

        def score(theta: np.ndarray, validation=validation) -> float:
            return float(np.mean(realized_revenue(theta, prices, validation)))

        theta, params = _select(method, plan(), solve, score, failures)
        if theta is None:
            metrics = RevenueMetrics(np.nan, np.nan)
            theta = np.full(config.products, np.nan)
        else:
            metrics = revenue_metrics(realized_revenue(theta, prices, data.test))
        outcomes.append(MethodOutcome(method, index, theta, metrics, params))

    logger.info(f"Finished assortment run {index} with {len(failures)} skipped grid points")

    return ReplicationResult(outcomes=outcomes, failures=failures)


def _run_assortment_indexed(args: Tuple[AssortmentExperimentConfig, int]) -> ReplicationResult:
    return run_assortment(*args)


def run_assortment_experiment(
    config: AssortmentExperimentConfig, run: RunningExperiment = None
) -> BacktestReport:
    jobs = [(config, index) for index in range(config.runs)]
    return _report(
        _map(_run_assortment_indexed, jobs, config.workers), ASSORTMENT_METHODS, REVENUE_METRICS, run
    )


@dataclass
class BiasResult:
    mean_variance: float
    true_variance: float
    statistic: float
    pvalue: float
    variances: np.ndarray = field(repr=False)


def barycenter_bias_demo(
    means: Tuple[float, float] = (0.0, 1.0),
    sigma: float = 1.0,
    N: int = 10,
    runs: int = 200,
    seed: int = 0,
) -> BiasResult:
    """
    Variance of the squared-Euclidean barycenter of two empirical Gaussian
    distributions with equal weights, averaged over independent draws, against
    the variance of the barycenter of the Gaussians themselves. The t-test is
    one-sided with the alternative that the empirical variance is smaller.
    """

    if sigma < 0.0 or N < 1 or runs < 2:
        raise InvalidParams("Need sigma >= 0, N >= 1 and at least two runs")

    rng = np.random.default_rng(seed)
    weights = [0.5, 0.5]
    variances = np.empty(runs)

    for run in range(runs):
        samples = [DiscreteDistribution.from_samples(rng.normal(mu, sigma, size=N)) for mu in means]
        result = barycenter(samples, weights, GroundCost.sq_euclidean())
        variances[run] = result.barycenter.total_variance()

    true_variance = gaussian_barycenter_variance([sigma, sigma], weights)

    if np.ptp(variances) == 0.0:
        gap = variances[0] - true_variance
        statistic = 0.0 if gap == 0.0 else np.copysign(np.inf, gap)
        pvalue = 0.0 if gap < 0.0 else 1.0
    else:
        test = scipy_stats.ttest_1samp(variances, true_variance, alternative="less")
        statistic, pvalue = float(test.statistic), float(test.pvalue)

    return BiasResult(
        mean_variance=float(variances.mean()),
        true_variance=true_variance,
        statistic=statistic,
        pvalue=pvalue,
        variances=variances,
    )
