import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import dacite  # type: ignore
import numpy as np
from scipy import sparse  # type: ignore
from scipy.integrate import trapezoid  # type: ignore
from scipy.spatial.distance import cdist  # type: ignore

from mosaic.config import DACITE_CONFIG, SolverSettings
from mosaic.exceptions import DimensionMismatch, InvalidDistribution, InvalidParams, SolverError
from mosaic.lp import LpBuilder, RowSense, solve_lp

logger = logging.getLogger("mosaic")

PROB_SUM_TOL = 1e-12
MERGE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """
    Finitely supported distribution: `atoms` is an (N, d) array and `probs`
    holds N strictly positive weights summing to one.
    """

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float).ravel()

        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise InvalidDistribution("Atoms must form a non-empty (N, d) array")
        if atoms.shape[0] != probs.shape[0]:
            raise InvalidDistribution(
                f"{atoms.shape[0]} atoms but {probs.shape[0]} probabilities"
            )
        if not np.all(np.isfinite(atoms)):
            raise InvalidDistribution("Atoms must be finite")
        if np.any(probs <= 0.0):
            raise InvalidDistribution("Probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise InvalidDistribution(f"Probabilities sum to {probs.sum()!r}, not 1")

        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "DiscreteDistribution":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        n = samples.shape[0]
        return cls(samples, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, point) -> "DiscreteDistribution":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    @classmethod
    def from_weights(
        cls, atoms: np.ndarray, weights: np.ndarray, tol: float = 1e-12
    ) -> "DiscreteDistribution":
        """
        Builds a distribution from nonnegative weights that only approximately
        sum to one, as LP solutions do: weights at or below `tol` are dropped
        and the rest renormalized.
        """

        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        weights = np.asarray(weights, dtype=float)
        keep = weights > tol
        if not keep.any():
            raise InvalidDistribution("All weights vanish")

        kept = weights[keep]
        return cls(atoms[keep], kept / kept.sum())

    def merged(self, tol: float = MERGE_TOL) -> "DiscreteDistribution":
        """
        Merges atoms that agree coordinate-wise within `tol`, summing their
        masses. Atoms come back in lexicographic order.
        """

        order = np.lexsort(self.atoms.T[::-1])
        atoms = np.empty_like(self.atoms)
        probs = np.zeros(self.size)
        count = 0
        for index in order:
            atom = self.atoms[index]
            close = np.flatnonzero(np.all(np.abs(atoms[:count] - atom) <= tol, axis=1))
            if close.size:
                probs[close[0]] += self.probs[index]
            else:
                atoms[count] = atom
                probs[count] = self.probs[index]
                count += 1

        kept = probs[:count]
        return DiscreteDistribution(atoms[:count].copy(), kept / kept.sum())

    def mean(self) -> np.ndarray:
        return self.probs @ self.atoms

    def total_variance(self) -> float:
        centered = self.atoms - self.mean()
        return float(self.probs @ np.sum(centered**2, axis=1))

    def expectation(self, fn: Callable[[np.ndarray], float]) -> float:
        return float(sum(p * fn(atom) for atom, p in zip(self.atoms, self.probs)))

    def to_dict(self) -> Dict:
        return {"atoms": self.atoms.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "DiscreteDistribution":
        schema = dacite.from_dict(data_class=DistributionSchema, data=data, config=DACITE_CONFIG)
        return cls(np.array(schema.atoms, dtype=float), np.array(schema.probs, dtype=float))


@dataclass
class DistributionSchema:
    atoms: List[List[float]]
    probs: List[float]


class CostKind(Enum):
    NORM_POWER = "norm_power"
    SQ_EUCLIDEAN = "sq_euclidean"


class Norm(Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


_CDIST_METRIC = {Norm.L1: "cityblock", Norm.L2: "euclidean", Norm.LINF: "chebyshev"}


@dataclass(frozen=True)
class GroundCost:
    """
    c(x, y) = ||x - y||^p for a NormPower cost, ||x - y||_2^2 for SqEuclidean.
    """

    kind: CostKind = CostKind.NORM_POWER
    norm: Norm = Norm.L1
    p: float = 1

    def __post_init__(self):
        if self.kind == CostKind.NORM_POWER and self.p < 1:
            raise InvalidParams(f"Cost exponent must be at least 1, got {self.p}")

    @classmethod
    def sq_euclidean(cls) -> "GroundCost":
        return cls(kind=CostKind.SQ_EUCLIDEAN, norm=Norm.L2, p=2)

    @classmethod
    def l1(cls) -> "GroundCost":
        return cls(kind=CostKind.NORM_POWER, norm=Norm.L1, p=1)

    @property
    def dual_norm(self) -> Norm:
        return {Norm.L1: Norm.LINF, Norm.L2: Norm.L2, Norm.LINF: Norm.L1}[self.norm]

    def pairwise(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.kind == CostKind.SQ_EUCLIDEAN:
            return cdist(x, y, metric="sqeuclidean")
        return cdist(x, y, metric=_CDIST_METRIC[self.norm]) ** self.p

    def __call__(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(self.pairwise(x, y)[0, 0])

    def to_dict(self) -> Dict:
        if self.kind == CostKind.SQ_EUCLIDEAN:
            return {"kind": self.kind.value}
        return {"kind": self.kind.value, "norm": self.norm.value, "p": self.p}

    @classmethod
    def from_dict(cls, data: Dict) -> "GroundCost":
        schema = dacite.from_dict(data_class=CostSchema, data=data, config=DACITE_CONFIG)
        kind = CostKind(schema.kind)
        if kind == CostKind.SQ_EUCLIDEAN:
            return cls.sq_euclidean()
        return cls(kind=kind, norm=Norm(schema.norm), p=schema.p)


@dataclass
class CostSchema:
    norm: str = "l1"
    p: float = 1
    kind: str = CostKind.NORM_POWER.value


@dataclass
class TransportPlan:
    """
    Sparse coupling: `masses[i, j]` is the mass moved from source atom i to
    target atom j.
    """

    source: DiscreteDistribution
    target: DiscreteDistribution
    masses: sparse.csr_matrix = field(repr=False)

    def entries(self) -> List[Tuple[int, int, float]]:
        coo = self.masses.tocoo()
        return [(int(i), int(j), float(v)) for i, j, v in zip(coo.row, coo.col, coo.data)]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def marginal_error(self) -> float:
        rows = np.asarray(self.masses.sum(axis=1)).ravel() - self.source.probs
        cols = np.asarray(self.masses.sum(axis=0)).ravel() - self.target.probs
        return float(max(np.abs(rows).max(), np.abs(cols).max()))

    def cost(self, cost: GroundCost) -> float:
        coo = self.masses.tocoo()
        return float(
            sum(
                v * cost(self.source.atoms[i], self.target.atoms[j])
                for i, j, v in zip(coo.row, coo.col, coo.data)
            )
        )


def _check_dims(P: DiscreteDistribution, Q: DiscreteDistribution):
    if P.dim != Q.dim:
        raise DimensionMismatch(f"Distributions live in R^{P.dim} and R^{Q.dim}")


def monotone_coupling(P: DiscreteDistribution, Q: DiscreteDistribution) -> sparse.csr_matrix:
    """
    North-west corner coupling of two distributions on the line after sorting
    their atoms, i.e. the quantile coupling. It is optimal for any cost convex
    in the difference of its arguments.
    """

    p_order = np.argsort(P.atoms[:, 0], kind="stable")
    q_order = np.argsort(Q.atoms[:, 0], kind="stable")
    cp = np.cumsum(P.probs[p_order])
    cq = np.cumsum(Q.probs[q_order])
    cp[-1] = cq[-1] = 1.0

    breaks = np.unique(np.concatenate([[0.0], cp, cq]))
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    mass = np.diff(breaks)
    i = np.minimum(np.searchsorted(cp, mids), P.size - 1)
    j = np.minimum(np.searchsorted(cq, mids), Q.size - 1)

    keep = mass > 0.0
    return sparse.csr_matrix(
        (mass[keep], (p_order[i[keep]], q_order[j[keep]])), shape=(P.size, Q.size)
    )


def _lp_coupling(
    P: DiscreteDistribution,
    Q: DiscreteDistribution,
    costs: np.ndarray,
    settings: Optional[SolverSettings],
    backend: Optional[str],
) -> sparse.csr_matrix:
    n, m = costs.shape
    builder = LpBuilder()
    plan = builder.add_variables(n * m, cost=costs.ravel()).reshape(n, m)

    for i in range(n):
        builder.add_row(plan[i, :], np.ones(m), RowSense.EQ, P.probs[i])
    for j in range(m):
        builder.add_row(plan[:, j], np.ones(n), RowSense.EQ, Q.probs[j])

    solution = solve_lp(builder.build(), settings, backend)
    if not solution.is_optimal:
        raise SolverError(f"Transportation LP ended {solution.status.value}")

    masses = np.maximum(solution.primal.reshape(n, m), 0.0)
    masses[masses <= 1e-15] = 0.0

    return sparse.csr_matrix(masses)


def ot_cost(
    P: DiscreteDistribution,
    Q: DiscreteDistribution,
    cost: GroundCost,
    method: str = "auto",
    settings: SolverSettings = None,
    backend: str = None,
) -> Tuple[float, TransportPlan]:
    """
    Optimal transport cost between P and Q and an optimal plan.

    `method` is "lp" for the transportation LP, "monotone" for the sorted
    coupling on the line, or "auto" to pick the latter whenever d = 1.
    """

    _check_dims(P, Q)

    if method not in ("auto", "lp", "monotone"):
        raise InvalidParams(f"Unknown transport method '{method}'")
    if method == "monotone" and P.dim != 1:
        raise DimensionMismatch("The monotone coupling needs one-dimensional atoms")

    costs = cost.pairwise(P.atoms, Q.atoms)

    if method == "monotone" or (method == "auto" and P.dim == 1):
        masses = monotone_coupling(P, Q)
    else:
        masses = _lp_coupling(P, Q, costs, settings, backend)

    coo = masses.tocoo()
    value = float(np.sum(coo.data * costs[coo.row, coo.col]))

    return max(value, 0.0), TransportPlan(P, Q, masses)


def wasserstein_distance(
    P: DiscreteDistribution,
    Q: DiscreteDistribution,
    norm: Norm = Norm.L1,
    p: float = 1,
    method: str = "auto",
    settings: SolverSettings = None,
    backend: str = None,
) -> float:
    value, _ = ot_cost(P, Q, GroundCost(CostKind.NORM_POWER, norm, p), method, settings, backend)
    return value ** (1.0 / p)


def w1_to_cdf(samples: np.ndarray, reference, grid_size: int = 20001, tail: float = 1e-10) -> float:
    """
    1-Wasserstein distance between the empirical distribution of 1-D samples
    and a continuous reference (a frozen `scipy.stats` distribution), i.e.
    the integral of |F_N - F| over the line.
    """

    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    lo = min(samples[0], reference.ppf(tail))
    hi = max(samples[-1], reference.ppf(1.0 - tail))

    grid = np.linspace(lo, hi, grid_size)
    empirical = np.searchsorted(samples, grid, side="right") / samples.size
    gap = np.abs(empirical - reference.cdf(grid))

    return float(trapezoid(gap, grid))
