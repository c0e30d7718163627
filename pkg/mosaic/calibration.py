import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import dacite  # type: ignore
import numpy as np
import pandas as pd  # type: ignore
from scipy import stats  # type: ignore

from mosaic.config import DACITE_CONFIG
from mosaic.exceptions import InvalidParams, PreconditionViolated, Unreachable
from mosaic.transport import DiscreteDistribution, Norm, w1_to_cdf, wasserstein_distance

logger = logging.getLogger("mosaic")

QUADRATURE_POINTS = 2001
MAX_DOUBLINGS = 60
BISECTION_STEPS = 200


@dataclass(frozen=True)
class ConcentrationParams:
    """
    Light-tail exponent `a` and bound `A` of the data-generating
    distributions, concentration constants c1, c2, dimension d and
    transport order p.
    """

    a: float
    c1: float
    c2: float
    d: int
    p: float = 1.0
    A: float = 1.0

    def __post_init__(self):
        if self.a <= self.p:
            raise InvalidParams(f"Tail exponent a={self.a} must exceed the order p={self.p}")
        if self.p == self.d / 2:
            raise InvalidParams(f"Concentration rates for p = d/2 = {self.p} are not supported")
        if self.c1 <= 0.0 or self.c2 <= 0.0 or self.A <= 0.0:
            raise InvalidParams("Constants c1, c2 and A must be positive")

    @property
    def small_exponent(self) -> float:
        return max(self.d / self.p, 2.0)

    @property
    def large_exponent(self) -> float:
        return self.a / self.p

    @classmethod
    def from_dict(cls, data: Dict) -> "ConcentrationParams":
        return dacite.from_dict(data_class=cls, data=data, config=DACITE_CONFIG)


def _beta_array(eps: np.ndarray, N: float, params: ConcentrationParams) -> np.ndarray:
    eps = np.maximum(np.asarray(eps, dtype=float), 0.0)
    exponent = np.where(eps <= 1.0, params.small_exponent, params.large_exponent)
    return np.minimum(params.c1 * np.exp(-params.c2 * N * eps**exponent), 1.0)


def beta(eps: float, N: int, params: ConcentrationParams) -> float:
    """
    Probability bound for W_p(P, P_N) > eps with N samples. Both branches
    equal c1 exp(-c2 N) at eps = 1.
    """

    if eps < 0.0 or N < 1:
        raise InvalidParams(f"Need eps >= 0 and N >= 1, got eps={eps}, N={N}")
    return float(_beta_array(eps, N, params))


def eps_for_beta(significance: float, N: int, params: ConcentrationParams) -> float:
    if not 0.0 < significance <= 1.0 or N < 1:
        raise InvalidParams(f"Need significance in (0, 1] and N >= 1, got {significance}, {N}")
    if significance >= params.c1:
        return 0.0

    scale = np.log(params.c1 / significance) / params.c2
    if N >= scale:
        return float((scale / N) ** (1.0 / params.small_exponent))
    return float((scale / N) ** (1.0 / params.large_exponent))


class PriorKind(Enum):
    DIRAC = "dirac"
    GAUSSIAN = "gaussian"
    TABLE = "table"
    NONE = "none"  # no information: F = 0 on the whole line


@dataclass(frozen=True)
class Prior:
    """
    Prior CDF F of the transport distance between the target and a source.
    """

    kind: PriorKind
    r: float = 0.0
    mean: float = 0.0
    sd: float = 1.0
    grid: Sequence[float] = field(default_factory=tuple)
    values: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind == PriorKind.DIRAC and self.r < 0.0:
            raise InvalidParams(f"Dirac prior location {self.r} must be nonnegative")
        if self.kind == PriorKind.GAUSSIAN and self.sd <= 0.0:
            raise InvalidParams(f"Gaussian prior needs a positive sd, got {self.sd}")
        if self.kind == PriorKind.TABLE:
            grid = np.asarray(self.grid, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if grid.size == 0 or grid.size != values.size:
                raise InvalidParams("A tabulated prior needs matching, nonempty grid and values")
            if np.any(grid < 0.0) or np.any(np.diff(grid) <= 0.0):
                raise InvalidParams("Prior grid must be nonnegative and increasing")
            if np.any(np.diff(values) < 0.0) or values[0] < 0.0 or values[-1] > 1.0:
                raise InvalidParams("Prior values must be nondecreasing within [0, 1]")

    @classmethod
    def dirac(cls, r: float) -> "Prior":
        return cls(PriorKind.DIRAC, r=r)

    @classmethod
    def gaussian(cls, mean: float, sd: float) -> "Prior":
        return cls(PriorKind.GAUSSIAN, mean=mean, sd=sd)

    @classmethod
    def table(cls, grid: Sequence[float], values: Sequence[float]) -> "Prior":
        return cls(PriorKind.TABLE, grid=tuple(grid), values=tuple(values))

    @classmethod
    def none(cls) -> "Prior":
        return cls(PriorKind.NONE)

    def _truncated(self):
        # N(mean, sd) conditioned on [0, inf)
        return stats.truncnorm((0.0 - self.mean) / self.sd, np.inf, loc=self.mean, scale=self.sd)

    def cdf(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == PriorKind.DIRAC:
            return (r >= self.r).astype(float)
        if self.kind == PriorKind.GAUSSIAN:
            return np.where(r < 0.0, 0.0, self._truncated().cdf(np.maximum(r, 0.0)))
        if self.kind == PriorKind.TABLE:
            values = np.interp(r, self.grid, self.values, left=0.0, right=1.0)
            return np.where(r < 0.0, 0.0, values)
        return np.zeros_like(r)

    def to_dict(self) -> Dict:
        data: Dict = {"kind": self.kind.value}
        if self.kind == PriorKind.DIRAC:
            data["r"] = self.r
        elif self.kind == PriorKind.GAUSSIAN:
            data.update(mean=self.mean, sd=self.sd)
        elif self.kind == PriorKind.TABLE:
            data.update(grid=list(self.grid), values=list(self.values))
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "Prior":
        schema = dacite.from_dict(data_class=PriorSchema, data=data, config=DACITE_CONFIG)
        return cls(
            PriorKind(schema.kind),
            r=schema.r,
            mean=schema.mean,
            sd=schema.sd,
            grid=tuple(schema.grid),
            values=tuple(schema.values),
        )


@dataclass
class PriorSchema:
    kind: str
    r: float = 0.0
    mean: float = 0.0
    sd: float = 1.0
    grid: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)


def _prior_integral(
    eps: float, N: int, prior: Prior, params: ConcentrationParams, points: int
) -> float:
    """
    int_0^eps beta(eps - r, N) dF(r) + 1 - F(eps), with the Stieltjes
    integral taken by the trapezoid rule on `points` nodes plus the mass F
    already holds at r = 0.
    """

    if prior.kind == PriorKind.DIRAC:
        if prior.r > eps:
            return 1.0
        return beta(eps - prior.r, N, params)

    nodes = np.linspace(0.0, eps, points)
    cdf = prior.cdf(nodes)
    integrand = _beta_array(eps - nodes, N, params)
    integral = integrand[0] * cdf[0] + float(
        np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(cdf))
    )

    return integral + 1.0 - float(cdf[-1])


def prior_tail_bound(
    eps: float,
    Nk: int,
    prior: Prior,
    params: ConcentrationParams,
    points: int = QUADRATURE_POINTS,
) -> float:
    """
    Bound on the prior probability that the target lies farther than eps
    from the k-th empirical distribution when no target data is observed.
    """

    if eps < 0.0 or Nk < 1:
        raise InvalidParams(f"Need eps >= 0 and Nk >= 1, got eps={eps}, Nk={Nk}")
    return min(_prior_integral(eps, Nk, prior, params, points), 1.0)


def bayesian_beta(
    eps: float,
    r_hat: float,
    N1: int,
    Nk: int,
    prior: Prior,
    params: ConcentrationParams,
    evidence: float = 1.0,
    points: int = QUADRATURE_POINTS,
) -> float:
    if not 0.0 < evidence <= 1.0:
        raise InvalidParams(f"Evidence {evidence} must lie in (0, 1]")
    if r_hat < 0.0:
        raise InvalidParams(f"Observed distance {r_hat} must be nonnegative")
    if eps < r_hat:
        raise PreconditionViolated(f"Radius {eps} is below the observed distance {r_hat}")
    if N1 < 1 or Nk < 1:
        raise InvalidParams("Sample sizes must be positive")

    likelihood = beta(eps - r_hat, N1, params)
    value = likelihood * _prior_integral(eps, Nk, prior, params, points) / evidence
    return min(value, 1.0)


def _invert_decreasing(fn: Callable[[float], float], target: float, lower: float) -> float:
    """
    Smallest radius (up to bisection accuracy) at or above `lower` where a
    non-increasing fn drops to `target`. Returns the upper bracket end, at
    which fn <= target holds.
    """

    if fn(lower) <= target:
        return lower

    step = 1.0
    for _ in range(MAX_DOUBLINGS):
        upper = lower + step
        if fn(upper) <= target:
            break
        step *= 2.0
    else:
        raise Unreachable(f"Significance {target} is not reached at radius {lower + step}")

    low = upper - step / 2.0 if step > 1.0 else lower
    for _ in range(BISECTION_STEPS):
        middle = 0.5 * (low + upper)
        if middle <= low or middle >= upper:
            break
        if fn(middle) <= target:
            upper = middle
        else:
            low = middle

    return upper


def eps_bayesian(
    significance: float,
    r_hat: float,
    N1: int,
    Nk: int,
    prior: Prior,
    params: ConcentrationParams,
    evidence: float = 1.0,
    points: int = QUADRATURE_POINTS,
) -> float:
    if not 0.0 < significance <= 1.0:
        raise InvalidParams(f"Significance {significance} must lie in (0, 1]")

    return _invert_decreasing(
        lambda eps: bayesian_beta(eps, r_hat, N1, Nk, prior, params, evidence, points),
        significance,
        r_hat,
    )


def eps_prior_only(
    significance: float,
    Nk: int,
    prior: Prior,
    params: ConcentrationParams,
    points: int = QUADRATURE_POINTS,
) -> float:
    if not 0.0 < significance <= 1.0:
        raise InvalidParams(f"Significance {significance} must lie in (0, 1]")

    return _invert_decreasing(
        lambda eps: prior_tail_bound(eps, Nk, prior, params, points), significance, 0.0
    )


@dataclass
class ScenarioInputs:
    """
    Inputs of the radius constructions; each scenario reads its own subset:

        1: distance bounds
        2: distance bounds, significances, sample sizes
        3: significances (first entry used), empirical distributions
        4: significances, sample sizes, priors, observed distances or
           empirical distributions, evidences
        5: significances, sample sizes, priors
    """

    distance_bounds: Optional[List[float]] = None
    significances: Optional[List[float]] = None
    sample_sizes: Optional[List[int]] = None
    distributions: Optional[List[DiscreteDistribution]] = None
    priors: Optional[List[Prior]] = None
    observed: Optional[List[float]] = None
    evidences: Optional[List[float]] = None


def _require(inputs: ScenarioInputs, scenario: int, *names: str):
    missing = [name for name in names if getattr(inputs, name) is None]
    if missing:
        raise PreconditionViolated(f"Scenario {scenario} needs {', '.join(missing)}")


def _observed_distances(inputs: ScenarioInputs, params: ConcentrationParams) -> List[float]:
    if inputs.observed is not None:
        return list(inputs.observed)
    target = inputs.distributions[0]
    return [
        wasserstein_distance(target, source, Norm.L1, params.p) for source in inputs.distributions
    ]


def scenario_radii(
    scenario: int, inputs: ScenarioInputs, params: ConcentrationParams
) -> np.ndarray:
    if scenario == 1:
        _require(inputs, 1, "distance_bounds")
        return np.array(inputs.distance_bounds, dtype=float)

    if scenario == 2:
        _require(inputs, 2, "distance_bounds", "significances", "sample_sizes")
        return np.array(
            [
                r + eps_for_beta(b, N, params)
                for r, b, N in zip(inputs.distance_bounds, inputs.significances, inputs.sample_sizes)
            ]
        )

    if scenario == 3:
        _require(inputs, 3, "significances", "distributions")
        target = inputs.distributions[0]
        slack = eps_for_beta(inputs.significances[0], target.size, params)
        return np.array(
            [
                wasserstein_distance(target, source, Norm.L1, params.p) + slack
                for source in inputs.distributions
            ]
        )

    if scenario == 4:
        _require(inputs, 4, "significances", "sample_sizes", "priors")
        if inputs.observed is None:
            _require(inputs, 4, "distributions")
        observed = _observed_distances(inputs, params)
        evidences = inputs.evidences or [1.0] * len(inputs.priors)
        N1 = inputs.sample_sizes[0]

        radii = [eps_for_beta(inputs.significances[0], N1, params)]
        for k in range(1, len(inputs.priors)):
            radii.append(
                eps_bayesian(
                    inputs.significances[k],
                    observed[k],
                    N1,
                    inputs.sample_sizes[k],
                    inputs.priors[k],
                    params,
                    evidences[k],
                )
            )
        return np.array(radii)

    if scenario == 5:
        _require(inputs, 5, "significances", "sample_sizes", "priors")
        return np.array(
            [
                eps_prior_only(b, N, prior, params)
                for b, N, prior in zip(inputs.significances, inputs.sample_sizes, inputs.priors)
            ]
        )

    raise InvalidParams(f"Unknown scenario {scenario}; use 1 to 5")


def bayesian_curves(
    params: ConcentrationParams,
    r_hat: float,
    N1: int,
    Nk: int,
    priors: Dict[str, Prior],
    normalized_radii: Sequence[float],
) -> pd.DataFrame:
    """
    Bayesian significance divided by its value at eps = r_hat, against the
    normalized radius c2^(p/a) (eps - r_hat). Both normalizations cancel c1,
    c2 and the evidence.
    """

    scale = params.c2 ** (-params.p / params.a)
    radii = np.asarray(normalized_radii, dtype=float)
    frame = pd.DataFrame({"radius": radii})

    for name, prior in priors.items():
        base = bayesian_beta(r_hat, r_hat, N1, Nk, prior, params)
        frame[name] = [
            bayesian_beta(r_hat + x * scale, r_hat, N1, Nk, prior, params) / base for x in radii
        ]

    return frame


@dataclass
class ConcentrationFit:
    params: ConcentrationParams
    frequencies: pd.DataFrame


def fit_concentration_constants(
    sampler: Callable[[int, np.random.Generator], float],
    sample_sizes: Sequence[int],
    radii: Sequence[float],
    base: ConcentrationParams,
    trials: int = 400,
    seed: int = 0,
) -> ConcentrationFit:
    """
    Fits c1, c2 from simulated exceedance frequencies of W_p(P, P_N) > eps.

    `sampler(N, rng)` returns one draw of the empirical distance with N
    samples. log(frequency) is regressed on N eps^exponent; c1 is then raised
    until the fitted bound dominates every observed frequency.
    """

    rng = np.random.default_rng(seed)
    radii = np.asarray(radii, dtype=float)
    records = []

    for N in sample_sizes:
        draws = np.array([sampler(N, rng) for _ in range(trials)])
        for eps in radii:
            exponent = base.small_exponent if eps <= 1.0 else base.large_exponent
            records.append(
                {
                    "N": N,
                    "eps": eps,
                    "x": N * eps**exponent,
                    "frequency": float(np.mean(draws > eps)),
                }
            )
        logger.info(f"Simulated {trials} empirical distances with N={N}")

    frame = pd.DataFrame(records)
    positive = frame[frame.frequency > 0.0]
    if len(positive) < 2:
        raise InvalidParams("Too few positive exceedance frequencies to fit c1 and c2")

    slope, _ = np.polyfit(positive.x, np.log(positive.frequency), 1)
    c2 = -float(slope)
    if c2 <= 0.0:
        raise InvalidParams(f"Fitted decay rate {c2} is not positive")

    c1 = float(np.max(positive.frequency * np.exp(c2 * positive.x)))

    params = ConcentrationParams(a=base.a, c1=c1, c2=c2, d=base.d, p=base.p, A=base.A)
    logger.info(f"Fitted concentration constants c1={c1:.4g}, c2={c2:.4g}")

    return ConcentrationFit(params=params, frequencies=frame)


def gaussian_w1_sampler(mean: float = 0.0, sd: float = 1.0):
    reference = stats.norm(loc=mean, scale=sd)

    def sample(N: int, rng: np.random.Generator) -> float:
        return w1_to_cdf(rng.normal(mean, sd, size=N), reference)

    return sample


@dataclass
class CoverageResult:
    coverage: float
    guarantee: float
    radii: np.ndarray
    trials: int


def simulate_coverage(
    params: ConcentrationParams,
    shifts: Sequence[float],
    sample_sizes: Sequence[int],
    significances: Sequence[float],
    trials: int = 500,
    sd: float = 1.0,
    seed: int = 0,
) -> CoverageResult:
    """
    Target N(0, sd^2) and sources N(shift_k, sd^2), so W_1(P, P_k) = |shift_k|.
    Radii follow the known-distance construction; the result is the
    fraction of trials in which the target lies in every ball.
    """

    rng = np.random.default_rng(seed)
    target = stats.norm(loc=0.0, scale=sd)
    shifts = np.abs(np.asarray(shifts, dtype=float))

    radii = scenario_radii(
        2,
        ScenarioInputs(
            distance_bounds=list(shifts),
            significances=list(significances),
            sample_sizes=list(sample_sizes),
        ),
        params,
    )

    covered = 0
    for _ in range(trials):
        inside = True
        for shift, N, eps in zip(shifts, sample_sizes, radii):
            samples = rng.normal(shift, sd, size=N)
            if w1_to_cdf(samples, target) > eps:
                inside = False
        covered += inside

    coverage = covered / trials
    guarantee = 1.0 - float(np.sum(significances))
    logger.info(f"Coverage {coverage:.3f} against the union bound {guarantee:.3f}")

    return CoverageResult(coverage=coverage, guarantee=guarantee, radii=radii, trials=trials)
