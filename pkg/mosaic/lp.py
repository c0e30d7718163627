import itertools
import logging
import math
import pathlib
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse  # type: ignore
from scipy.optimize import linprog  # type: ignore

from mosaic.config import SolverSettings, resolve_settings
from mosaic.exceptions import InvalidInput, InvalidParams, NumericalFailure, SizeExceeded
from mosaic.simplex import SimplexOutcome, solve_standard_form

logger = logging.getLogger("mosaic")

MAX_BINARY_VARS = 25


class Sense(Enum):
    MIN = "min"
    MAX = "max"


class RowSense(Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class LpModel:
    """
    Sparse linear program

        optimize  objective . x
        s.t.      matrix[i] . x  (row_senses[i])  rhs[i]
                  lower <= x <= upper

    The model is immutable once built: arrays are read-only and the matrix is
    a canonical CSR matrix with duplicate triplets summed.
    """

    sense: Sense
    objective: np.ndarray
    matrix: sparse.csr_matrix
    row_senses: Tuple[RowSense, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        num_rows, num_columns = self.matrix.shape

        if self.objective.shape != (num_columns,):
            raise InvalidInput(
                f"Objective has {self.objective.shape[0]} entries, expected {num_columns}"
            )
        if self.rhs.shape != (num_rows,) or len(self.row_senses) != num_rows:
            raise InvalidInput(f"Expected {num_rows} right-hand sides and row senses")
        if self.lower.shape != (num_columns,) or self.upper.shape != (num_columns,):
            raise InvalidInput(f"Expected {num_columns} lower and upper bounds")
        if not np.all(np.isfinite(self.objective)):
            raise InvalidInput("Objective coefficients must be finite")
        if not np.all(np.isfinite(self.rhs)):
            raise InvalidInput("Right-hand sides must be finite")
        if not np.all(np.isfinite(self.matrix.data)):
            raise InvalidInput("Constraint coefficients must be finite")
        if np.any(self.lower > self.upper):
            raise InvalidInput("Lower bound exceeds upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise InvalidInput("Bounds must admit a finite value")

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_columns(self) -> int:
        return self.matrix.shape[1]

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.objective @ x)

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LpModel":
        return replace(
            self,
            lower=_readonly(np.asarray(lower, dtype=float).copy()),
            upper=_readonly(np.asarray(upper, dtype=float).copy()),
        )

    def scaled_objective(self, factor: float) -> "LpModel":
        return replace(self, objective=_readonly(self.objective * factor))


class LpBuilder:
    """
    Incremental assembly of an `LpModel`. Columns and rows are appended and
    referred to by the integer indices the add methods return.
    """

    def __init__(self, sense: Sense = Sense.MIN):
        self.sense = sense
        self._cost: list = []
        self._lower: list = []
        self._upper: list = []
        self._rows: list = []
        self._cols: list = []
        self._vals: list = []
        self._senses: list = []
        self._rhs: list = []

    @property
    def num_columns(self) -> int:
        return len(self._cost)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    def add_variables(
        self,
        count: int,
        lower: Union[float, Sequence[float]] = 0.0,
        upper: Union[float, Sequence[float]] = np.inf,
        cost: Union[float, Sequence[float]] = 0.0,
    ) -> np.ndarray:
        start = self.num_columns
        self._cost.extend(np.broadcast_to(np.asarray(cost, dtype=float), (count,)))
        self._lower.extend(np.broadcast_to(np.asarray(lower, dtype=float), (count,)))
        self._upper.extend(np.broadcast_to(np.asarray(upper, dtype=float), (count,)))

        return np.arange(start, start + count)

    def add_variable(self, lower=0.0, upper=np.inf, cost=0.0) -> int:
        return int(self.add_variables(1, lower, upper, cost)[0])

    def set_cost(self, column: int, value: float):
        self._cost[column] = float(value)

    def add_row(
        self,
        cols: Iterable[int],
        vals: Iterable[float],
        sense: RowSense,
        rhs: float,
    ) -> int:
        cols = list(cols)
        vals = list(vals)
        if len(cols) != len(vals):
            raise InvalidInput("Row needs one coefficient per column index")

        row = self.num_rows
        for col, val in zip(cols, vals):
            if not 0 <= col < self.num_columns:
                raise InvalidInput(f"Column index {col} out of range")
            if val != 0.0:
                self._rows.append(row)
                self._cols.append(int(col))
                self._vals.append(float(val))

        self._senses.append(sense)
        self._rhs.append(float(rhs))

        return row

    def build(self) -> LpModel:
        shape = (self.num_rows, self.num_columns)
        matrix = sparse.coo_matrix(
            (self._vals, (self._rows, self._cols)), shape=shape, dtype=float
        ).tocsr()
        matrix.sum_duplicates()
        matrix.eliminate_zeros()

        return LpModel(
            sense=self.sense,
            objective=_readonly(np.array(self._cost, dtype=float)),
            matrix=matrix,
            row_senses=tuple(self._senses),
            rhs=_readonly(np.array(self._rhs, dtype=float)),
            lower=_readonly(np.array(self._lower, dtype=float)),
            upper=_readonly(np.array(self._upper, dtype=float)),
        )


@dataclass
class LpSolution:
    """
    `dual` holds one multiplier per row, the derivative of the optimal
    objective with respect to that row's right-hand side. For an unbounded
    problem `primal` is a feasible point and `ray` an improving direction;
    for an infeasible one `farkas` holds row multipliers certifying it.
    """

    status: LpStatus
    primal: Optional[np.ndarray]
    dual: Optional[np.ndarray]
    objective: float
    dual_objective: float
    ray: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None
    iterations: int = 0
    backend: str = "simplex"

    @property
    def is_optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


@dataclass
class BinarySolution:
    solution: LpSolution
    support: Tuple[int, ...]
    assignment: np.ndarray


class _StandardForm:
    """
    Rewrites an `LpModel` as  min c.x  s.t.  A x = b,  x >= 0,  b >= 0.

    Original variables map to standard columns through x = offset + T x_s:
    a finite lower bound shifts, an upper bound alone flips, a free variable
    splits, and a doubly bounded variable gets an extra row x_s + s = u - l.
    """

    def __init__(self, model: LpModel):
        self.model = model
        num_rows, num_columns = model.num_rows, model.num_columns

        offset = np.zeros(num_columns)
        t_rows, t_cols, t_vals = [], [], []
        boxed_cols, boxed_widths = [], []
        col = 0
        for j in range(num_columns):
            lo, up = model.lower[j], model.upper[j]
            if np.isfinite(lo):
                offset[j] = lo
                t_rows.append(j)
                t_cols.append(col)
                t_vals.append(1.0)
                if np.isfinite(up):
                    boxed_cols.append(col)
                    boxed_widths.append(up - lo)
                col += 1
            elif np.isfinite(up):
                offset[j] = up
                t_rows.append(j)
                t_cols.append(col)
                t_vals.append(-1.0)
                col += 1
            else:
                t_rows.extend([j, j])
                t_cols.extend([col, col + 1])
                t_vals.extend([1.0, -1.0])
                col += 2

        self.num_structural = col
        self.offset = offset
        self.transform = sparse.csr_matrix(
            (t_vals, (t_rows, t_cols)), shape=(num_columns, col)
        )

        reduced = (model.matrix @ self.transform).tocoo()
        rows = list(reduced.row)
        cols = list(reduced.col)
        vals = list(reduced.data)
        rhs = list(model.rhs - model.matrix @ offset)

        slack_of_row = {}
        slack_coefficient = {}
        next_col = col
        for i, row_sense in enumerate(model.row_senses):
            if row_sense == RowSense.EQ:
                continue
            rows.append(i)
            cols.append(next_col)
            vals.append(1.0 if row_sense == RowSense.LE else -1.0)
            slack_of_row[i] = next_col
            slack_coefficient[i] = vals[-1]
            next_col += 1

        for k, (struct_col, width) in enumerate(zip(boxed_cols, boxed_widths)):
            row = num_rows + k
            rows.extend([row, row])
            cols.extend([struct_col, next_col])
            vals.extend([1.0, 1.0])
            slack_of_row[row] = next_col
            slack_coefficient[row] = 1.0
            rhs.append(width)
            next_col += 1

        self.num_rows = num_rows + len(boxed_cols)
        self.num_columns = next_col

        rhs_array = np.array(rhs, dtype=float)
        self.row_sign = np.where(rhs_array < 0.0, -1.0, 1.0)
        self.rhs = rhs_array * self.row_sign

        signs = self.row_sign[np.array(rows, dtype=int)] if rows else np.array([])
        self.matrix = sparse.csc_matrix(
            (np.array(vals) * signs, (rows, cols)),
            shape=(self.num_rows, self.num_columns),
        )
        self.matrix.sum_duplicates()

        self.unit_basis = np.full(self.num_rows, -1, dtype=int)
        for row, slack_col in slack_of_row.items():
            if slack_coefficient[row] * self.row_sign[row] == 1.0:
                self.unit_basis[row] = slack_col

        self.objective_sign = 1.0 if model.sense == Sense.MIN else -1.0
        cost = np.zeros(self.num_columns)
        cost[:col] = self.objective_sign * (self.transform.T @ model.objective)
        self.cost = cost
        self.constant = float(model.objective @ offset)

    def primal(self, x_std: np.ndarray) -> np.ndarray:
        return self.offset + self.transform @ x_std[: self.num_structural]

    def ray(self, d_std: np.ndarray) -> np.ndarray:
        return self.transform @ d_std[: self.num_structural]

    def dual(self, y_std: np.ndarray) -> np.ndarray:
        m = self.model.num_rows
        return self.objective_sign * self.row_sign[:m] * y_std[:m]

    def farkas(self, y_std: np.ndarray) -> np.ndarray:
        m = self.model.num_rows
        return self.row_sign[:m] * y_std[:m]

    def objective(self, std_value: float) -> float:
        return self.objective_sign * std_value + self.constant


def _check_envelope(model: LpModel, settings: SolverSettings):
    if model.num_rows > settings.max_rows or model.num_columns > settings.max_columns:
        raise SizeExceeded(
            f"LP with {model.num_rows} rows and {model.num_columns} columns exceeds "
            f"the {settings.max_rows} x {settings.max_columns} envelope of the simplex backend"
        )


def _from_outcome(
    form: _StandardForm, outcome: SimplexOutcome, backend: str
) -> LpSolution:
    if outcome.status == "infeasible":
        return LpSolution(
            status=LpStatus.INFEASIBLE,
            primal=None,
            dual=None,
            objective=math.nan,
            dual_objective=math.nan,
            farkas=form.farkas(outcome.y),
            iterations=outcome.iterations,
            backend=backend,
        )

    primal = form.primal(outcome.x)

    if outcome.status == "unbounded":
        improving = -math.inf if form.model.sense == Sense.MIN else math.inf
        return LpSolution(
            status=LpStatus.UNBOUNDED,
            primal=primal,
            dual=None,
            objective=improving,
            dual_objective=math.nan,
            ray=form.ray(outcome.ray),
            iterations=outcome.iterations,
            backend=backend,
        )

    std_value = float(form.cost @ outcome.x)
    std_dual_value = float(form.rhs @ outcome.y)

    return LpSolution(
        status=LpStatus.OPTIMAL,
        primal=primal,
        dual=form.dual(outcome.y),
        objective=form.objective(std_value),
        dual_objective=form.objective(std_dual_value),
        iterations=outcome.iterations,
        backend=backend,
    )


def _highs_outcome(form: _StandardForm) -> SimplexOutcome:
    n = form.num_columns
    m = form.num_rows
    if m == 0:
        return solve_standard_form(form.matrix, form.rhs, form.cost, form.unit_basis)

    result = linprog(
        form.cost,
        A_eq=form.matrix,
        b_eq=form.rhs,
        bounds=(0, None),
        method="highs",
    )

    if result.status == 0:
        return SimplexOutcome(
            status="optimal",
            x=np.maximum(result.x, 0.0),
            y=np.asarray(result.eqlin.marginals, dtype=float),
            iterations=int(result.nit),
        )

    if result.status not in (2, 3):
        raise NumericalFailure(f"HiGHS failed with status {result.status}: {result.message}")

    feasible = linprog(
        np.zeros(n), A_eq=form.matrix, b_eq=form.rhs, bounds=(0, None), method="highs"
    )

    if feasible.status == 0:
        ray = linprog(
            np.ones(n),
            A_eq=sparse.vstack([form.matrix, sparse.csr_matrix(form.cost)]),
            b_eq=np.concatenate([np.zeros(m), [-1.0]]),
            bounds=(0, None),
            method="highs",
        )
        if ray.status != 0:
            raise NumericalFailure("HiGHS reported unboundedness but no ray was found")
        return SimplexOutcome(
            status="unbounded",
            x=np.maximum(feasible.x, 0.0),
            ray=ray.x,
            iterations=int(result.nit),
        )

    certificate = linprog(
        -form.rhs,
        A_ub=sparse.vstack([form.matrix.T, sparse.csr_matrix(form.rhs)]),
        b_ub=np.concatenate([np.zeros(n), [1.0]]),
        bounds=(None, None),
        method="highs",
    )
    if certificate.status != 0:
        raise NumericalFailure("HiGHS reported infeasibility but no certificate was found")

    return SimplexOutcome(
        status="infeasible", y=certificate.x, iterations=int(result.nit)
    )


def solve_lp(
    model: LpModel, settings: SolverSettings = None, backend: str = None
) -> LpSolution:
    settings = resolve_settings(settings, backend)

    form = _StandardForm(model)

    if settings.backend == "highs":
        outcome = _highs_outcome(form)
    else:
        _check_envelope(model, settings)
        outcome = solve_standard_form(
            form.matrix, form.rhs, form.cost, form.unit_basis, settings
        )

    solution = _from_outcome(form, outcome, settings.backend)

    logger.debug(
        f"LP {model.num_rows}x{model.num_columns} solved by {settings.backend}: "
        f"{solution.status.value} after {solution.iterations} iterations"
    )

    return solution


def _improves(candidate: LpSolution, best: Optional[LpSolution], sense: Sense, tol: float):
    if best is None or best.status != LpStatus.OPTIMAL:
        return True
    margin = tol * (1.0 + abs(best.objective))
    if sense == Sense.MIN:
        return candidate.objective < best.objective - margin
    return candidate.objective > best.objective + margin


def solve_binary_by_enumeration(
    model: LpModel,
    binary_vars: Sequence[int],
    cardinality_cap: int,
    settings: SolverSettings = None,
    backend: str = None,
) -> BinarySolution:
    """
    Enumerates every support of at most `cardinality_cap` binary variables,
    fixes those variables to one and the others to zero, and keeps the best
    restricted LP. Ties go to the support enumerated first: smaller supports
    before larger ones, lexicographic within a size.
    """

    settings = resolve_settings(settings, backend)
    binary_vars = [int(j) for j in binary_vars]

    if cardinality_cap < 0 or cardinality_cap > len(binary_vars):
        raise InvalidParams(
            f"Cardinality cap {cardinality_cap} must lie in [0, {len(binary_vars)}]"
        )
    if len(binary_vars) > MAX_BINARY_VARS:
        raise SizeExceeded(
            f"{len(binary_vars)} binary variables exceed the enumeration limit of {MAX_BINARY_VARS}"
        )

    num_subsets = sum(math.comb(len(binary_vars), k) for k in range(cardinality_cap + 1))
    if num_subsets > settings.max_subsets:
        raise SizeExceeded(
            f"{num_subsets} supports exceed the enumeration budget of {settings.max_subsets}"
        )

    logger.info(f"Enumerating {num_subsets} binary supports")

    best: Optional[BinarySolution] = None
    first: Optional[BinarySolution] = None

    for size in range(cardinality_cap + 1):
        for support in itertools.combinations(binary_vars, size):
            lower = np.array(model.lower, dtype=float)
            upper = np.array(model.upper, dtype=float)
            lower[binary_vars] = 0.0
            upper[binary_vars] = 0.0
            lower[list(support)] = 1.0
            upper[list(support)] = 1.0

            solution = solve_lp(model.with_bounds(lower, upper), settings)
            assignment = np.zeros(len(binary_vars))
            assignment[[binary_vars.index(j) for j in support]] = 1.0
            candidate = BinarySolution(solution, tuple(support), assignment)

            if first is None:
                first = candidate

            if solution.status == LpStatus.UNBOUNDED:
                return candidate

            if solution.status == LpStatus.OPTIMAL and _improves(
                solution,
                best.solution if best else None,
                model.sense,
                settings.opt_tol,
            ):
                best = candidate

    return best if best is not None else first


def format_triplets(model: LpModel) -> str:
    coo = model.matrix.tocoo()
    lines = [
        f"# sense {model.sense.value} rows {model.num_rows} cols {model.num_columns}",
        "# objective " + " ".join(repr(float(v)) for v in model.objective),
        "# lower " + " ".join(repr(float(v)) for v in model.lower),
        "# upper " + " ".join(repr(float(v)) for v in model.upper),
        "# senses " + " ".join(s.value for s in model.row_senses),
        "# rhs " + " ".join(repr(float(v)) for v in model.rhs),
    ]
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        lines.append(f"{coo.row[k]} {coo.col[k]} {float(coo.data[k])!r}")

    return "\n".join(lines) + "\n"


def write_triplets(model: LpModel, path: Union[str, pathlib.Path]):
    pathlib.Path(path).write_text(format_triplets(model))
    logger.info(f"Wrote LP triplets to {path}")
