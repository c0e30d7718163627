from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import dacite  # type: ignore
import numpy as np

from mosaic.config import DACITE_CONFIG
from mosaic.exceptions import DimensionMismatch, InvalidInput
from mosaic.transport import DiscreteDistribution, GroundCost


@dataclass(frozen=True)
class Source:
    center: DiscreteDistribution
    radius: float


@dataclass(frozen=True)
class AmbiguitySpec:
    """
    Intersection of K transport balls, ball k centered at `sources[k].center`
    with radius `sources[k].radius`, all under the same ground cost.
    """

    sources: Tuple[Source, ...]
    cost: GroundCost = field(default_factory=GroundCost.l1)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) == 0:
            raise InvalidInput("An ambiguity set needs at least one source")
        dims = {source.center.dim for source in self.sources}
        if len(dims) != 1:
            raise DimensionMismatch(f"Source centers live in dimensions {sorted(dims)}")
        for source in self.sources:
            if not np.isfinite(source.radius) or source.radius < 0.0:
                raise InvalidInput(f"Radius {source.radius} must be finite and nonnegative")

    @classmethod
    def of(
        cls, centers: Sequence[DiscreteDistribution], radii: Sequence[float], cost: GroundCost = None
    ) -> "AmbiguitySpec":
        return cls(
            tuple(Source(center, float(radius)) for center, radius in zip(centers, radii)),
            cost or GroundCost.l1(),
        )

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def dim(self) -> int:
        return self.sources[0].center.dim

    @property
    def centers(self) -> List[DiscreteDistribution]:
        return [source.center for source in self.sources]

    @property
    def radii(self) -> np.ndarray:
        return np.array([source.radius for source in self.sources])

    @property
    def sizes(self) -> List[int]:
        return [source.center.size for source in self.sources]

    def with_radii(self, radii: Sequence[float]) -> "AmbiguitySpec":
        return AmbiguitySpec.of(self.centers, radii, self.cost)

    def permuted(self, order: Sequence[int]) -> "AmbiguitySpec":
        return AmbiguitySpec(tuple(self.sources[k] for k in order), self.cost)

    def to_dict(self) -> Dict:
        return {
            "cost": self.cost.to_dict(),
            "sources": [
                {"center": source.center.to_dict(), "radius": source.radius}
                for source in self.sources
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "AmbiguitySpec":
        schema = dacite.from_dict(data_class=AmbiguitySchema, data=data, config=DACITE_CONFIG)
        return cls(
            tuple(
                Source(DiscreteDistribution.from_dict(s.center), s.radius) for s in schema.sources
            ),
            GroundCost.from_dict(schema.cost),
        )


@dataclass
class SourceSchema:
    center: Dict
    radius: float


@dataclass
class AmbiguitySchema:
    sources: List[SourceSchema]
    cost: Dict = field(default_factory=lambda: {"norm": "l1", "p": 1})


@dataclass(frozen=True, eq=False)
class PiecewiseAffineLoss:
    """
    l(xi) = max_l  slopes[l] . xi + intercepts[l]
    """

    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        slopes = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        intercepts = np.asarray(self.intercepts, dtype=float).ravel()
        if slopes.shape[0] == 0:
            raise InvalidInput("A loss needs at least one affine piece")
        if slopes.shape[0] != intercepts.shape[0]:
            raise DimensionMismatch(f"{slopes.shape[0]} slopes but {intercepts.shape[0]} intercepts")
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercepts", intercepts)

    @classmethod
    def affine(cls, slope: Sequence[float], intercept: float = 0.0) -> "PiecewiseAffineLoss":
        return cls(np.array([slope], dtype=float), np.array([intercept]))

    @property
    def num_pieces(self) -> int:
        return self.slopes.shape[0]

    @property
    def dim(self) -> int:
        return self.slopes.shape[1]

    def piece_values(self, xi: np.ndarray) -> np.ndarray:
        return np.atleast_2d(xi) @ self.slopes.T + self.intercepts

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        values = self.piece_values(xi).max(axis=1)
        return values if np.ndim(xi) > 1 else float(values[0])

    def expectation(self, distribution: DiscreteDistribution) -> float:
        return float(distribution.probs @ self(distribution.atoms))

    def scaled(self, factor: float) -> "PiecewiseAffineLoss":
        return PiecewiseAffineLoss(self.slopes * factor, self.intercepts * factor)

    def to_dict(self) -> Dict:
        return {
            "pieces": [
                {"a": a.tolist(), "b": float(b)} for a, b in zip(self.slopes, self.intercepts)
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "PiecewiseAffineLoss":
        schema = dacite.from_dict(data_class=LossSchema, data=data, config=DACITE_CONFIG)
        return cls(
            np.array([piece.a for piece in schema.pieces], dtype=float),
            np.array([piece.b for piece in schema.pieces], dtype=float),
        )


@dataclass
class PieceSchema:
    a: List[float]
    b: float = 0.0


@dataclass
class LossSchema:
    pieces: List[PieceSchema]


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """
    {x : C x <= g}. With no rows it is the whole space of dimension `dim`.
    """

    C: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        g = np.asarray(self.g, dtype=float).ravel()
        if C.ndim != 2 or C.shape[0] != g.shape[0]:
            raise DimensionMismatch(f"C has shape {C.shape} but g has {g.shape[0]} entries")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(g))):
            raise InvalidInput("Polyhedron entries must be finite")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "g", g)

    @classmethod
    def free(cls, dim: int) -> "Polyhedron":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Polyhedron":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        rows, rhs = [], []
        for i in range(lower.size):
            unit = np.zeros(lower.size)
            unit[i] = 1.0
            if np.isfinite(upper[i]):
                rows.append(unit)
                rhs.append(upper[i])
            if np.isfinite(lower[i]):
                rows.append(-unit)
                rhs.append(-lower[i])
        if not rows:
            return cls.free(lower.size)
        return cls(np.array(rows), np.array(rhs))

    @classmethod
    def nonnegative_orthant(cls, dim: int) -> "Polyhedron":
        return cls(-np.eye(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def num_rows(self) -> int:
        return self.C.shape[0]

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.C @ x <= self.g + tol))

    def box_bounds(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """
        Coordinate bounds when every row involves a single coordinate,
        otherwise None.
        """

        lower = np.full(self.dim, -np.inf)
        upper = np.full(self.dim, np.inf)
        for row, rhs in zip(self.C, self.g):
            nonzero = np.flatnonzero(row)
            if nonzero.size == 0:
                if rhs < 0.0:
                    return None
                continue
            if nonzero.size > 1:
                return None
            i = nonzero[0]
            if row[i] > 0.0:
                upper[i] = min(upper[i], rhs / row[i])
            else:
                lower[i] = max(lower[i], rhs / row[i])
        return lower, upper

    def to_dict(self) -> Dict:
        return {"C": self.C.tolist(), "g": self.g.tolist()}

    @classmethod
    def from_dict(cls, data: Dict, dim: int = None) -> "Polyhedron":
        schema = dacite.from_dict(data_class=PolyhedronSchema, data=data, config=DACITE_CONFIG)
        if not schema.C:
            if dim is None:
                raise InvalidInput("An empty polyhedron needs its dimension")
            return cls.free(dim)
        return cls(np.array(schema.C, dtype=float), np.array(schema.g, dtype=float))


@dataclass
class PolyhedronSchema:
    C: List[List[float]] = field(default_factory=list)
    g: List[float] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class AffineDecisionLoss:
    """
    Loss pieces affine in a decision theta:

        l(theta, xi) = max_l  (A_l theta + a_l) . xi + beta_l . theta + b_l

    with `slope_maps` of shape (L, d, n), `slope_offsets` (L, d),
    `intercept_weights` (L, n) and `intercepts` (L,).
    """

    slope_maps: np.ndarray
    slope_offsets: np.ndarray
    intercept_weights: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        L, d, n = np.shape(self.slope_maps)
        if np.shape(self.slope_offsets) != (L, d):
            raise DimensionMismatch("Slope offsets must have shape (L, d)")
        if np.shape(self.intercept_weights) != (L, n):
            raise DimensionMismatch("Intercept weights must have shape (L, n)")
        if np.shape(self.intercepts) != (L,):
            raise DimensionMismatch("Intercepts must have shape (L,)")

    @property
    def num_pieces(self) -> int:
        return self.slope_maps.shape[0]

    @property
    def dim(self) -> int:
        return self.slope_maps.shape[1]

    @property
    def num_decisions(self) -> int:
        return self.slope_maps.shape[2]

    def at(self, theta: np.ndarray) -> PiecewiseAffineLoss:
        theta = np.asarray(theta, dtype=float)
        return PiecewiseAffineLoss(
            self.slope_maps @ theta + self.slope_offsets,
            self.intercept_weights @ theta + self.intercepts,
        )

    def to_dict(self) -> Dict:
        return {
            "pieces": [
                {
                    "A": A.tolist(),
                    "a": a.tolist(),
                    "beta": beta.tolist(),
                    "b": float(b),
                }
                for A, a, beta, b in zip(
                    self.slope_maps, self.slope_offsets, self.intercept_weights, self.intercepts
                )
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "AffineDecisionLoss":
        schema = dacite.from_dict(data_class=DecisionLossSchema, data=data, config=DACITE_CONFIG)
        return cls(
            slope_maps=np.array([piece.A for piece in schema.pieces], dtype=float),
            slope_offsets=np.array([piece.a for piece in schema.pieces], dtype=float),
            intercept_weights=np.array([piece.beta for piece in schema.pieces], dtype=float),
            intercepts=np.array([piece.b for piece in schema.pieces], dtype=float),
        )


@dataclass
class DecisionPieceSchema:
    A: List[List[float]]
    a: List[float]
    beta: List[float]
    b: float = 0.0


@dataclass
class DecisionLossSchema:
    pieces: List[DecisionPieceSchema]
