import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse  # type: ignore
from scipy.linalg import lu_factor, lu_solve  # type: ignore
from scipy.sparse.linalg import splu  # type: ignore

from mosaic.config import SolverSettings
from mosaic.exceptions import NumericalFailure

logger = logging.getLogger("mosaic")

DENSE_LU_LIMIT = 400
SINGULAR_TOL = 1e-12
DRIVE_OUT_TOL = 1e-7


@dataclass
class SimplexOutcome:
    """
    Result on the standard form  min c.x  s.t.  A x = b,  x >= 0.

    `y` holds the row duals when optimal and the Farkas multipliers
    (A^T y <= 0, b.y > 0) when infeasible.
    """

    status: str
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    ray: Optional[np.ndarray] = None
    iterations: int = 0


class _Basis:
    """
    LU factorization of the basis matrix plus a product of eta matrices,
    refactored from scratch every `refactor_interval` pivots.
    """

    def __init__(self, matrix: sparse.csc_matrix, columns: np.ndarray, refactor_interval: int):
        self.matrix = matrix
        self.columns = np.array(columns, dtype=int)
        self.refactor_interval = refactor_interval
        self.refactor()

    def refactor(self):
        basis_matrix = self.matrix[:, self.columns]
        size = len(self.columns)

        if size <= DENSE_LU_LIMIT:
            dense = basis_matrix.toarray()
            self._lu = lu_factor(dense, check_finite=False)
            diagonal = np.abs(np.diag(self._lu[0]))
            if diagonal.min() <= SINGULAR_TOL * max(1.0, diagonal.max()):
                raise NumericalFailure("Basis matrix is numerically singular")
            self._sparse_lu = None
        else:
            try:
                self._sparse_lu = splu(sparse.csc_matrix(basis_matrix))
            except RuntimeError as e:
                raise NumericalFailure(f"Basis factorization failed: {e}") from e
            self._lu = None

        self._etas: list = []

    def _solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        if self._lu is not None:
            return lu_solve(self._lu, rhs, trans=1 if transpose else 0, check_finite=False)
        return self._sparse_lu.solve(rhs, trans="T" if transpose else "N")

    def ftran(self, column: np.ndarray) -> np.ndarray:
        x = self._solve(np.asarray(column, dtype=float))
        for r, eta in self._etas:
            pivot_value = x[r]
            if pivot_value != 0.0:
                x += eta * pivot_value
                x[r] = eta[r] * pivot_value
        return x

    def btran(self, row: np.ndarray) -> np.ndarray:
        v = np.array(row, dtype=float)
        for r, eta in reversed(self._etas):
            v[r] = v @ eta
        return self._solve(v, transpose=True)

    def replace(self, r: int, q: int, direction: np.ndarray) -> bool:
        """
        Column q enters at position r. Returns True when the basis was
        refactored, so the caller recomputes the basic solution.
        """

        eta = -direction / direction[r]
        eta[r] = 1.0 / direction[r]
        self._etas.append((r, eta))
        self.columns[r] = q

        if len(self._etas) >= self.refactor_interval:
            self.refactor()
            return True

        return False


def _column(matrix: sparse.csc_matrix, q: int) -> np.ndarray:
    column = np.zeros(matrix.shape[0])
    start, end = matrix.indptr[q], matrix.indptr[q + 1]
    column[matrix.indices[start:end]] = matrix.data[start:end]
    return column


class _Iteration:
    def __init__(self, settings: SolverSettings):
        self.settings = settings
        self.count = 0

    def run(
        self,
        matrix: sparse.csc_matrix,
        rhs: np.ndarray,
        cost: np.ndarray,
        basis: _Basis,
        eligible: np.ndarray,
    ):
        """
        Primal simplex from a feasible basis. Dantzig pricing, switching to
        Bland's rule after `stall_limit` consecutive degenerate pivots.
        """

        settings = self.settings
        x_basic = basis.ftran(rhs)
        stall = 0
        bland = False

        while True:
            if self.count >= settings.max_iterations:
                raise NumericalFailure(
                    f"Simplex made no progress within {settings.max_iterations} iterations"
                )

            y = basis.btran(cost[basis.columns])
            reduced = cost - matrix.T @ y
            candidates = eligible.copy()
            candidates[basis.columns] = False
            candidates &= reduced < -settings.pivot_tol

            if not candidates.any():
                return "optimal", x_basic, y, None

            indices = np.flatnonzero(candidates)
            if bland:
                q = int(indices[0])
            else:
                q = int(indices[np.argmin(reduced[indices])])

            direction = basis.ftran(_column(matrix, q))
            positive = np.flatnonzero(direction > settings.pivot_tol)

            if positive.size == 0:
                ray = np.zeros(matrix.shape[1])
                ray[q] = 1.0
                ray[basis.columns] -= direction
                return "unbounded", x_basic, y, ray

            ratios = x_basic[positive] / direction[positive]
            theta = ratios.min()
            ties = positive[ratios <= theta + 1e-12 * (1.0 + theta)]
            if bland:
                r = int(ties[np.argmin(basis.columns[ties])])
            else:
                r = int(ties[np.argmax(direction[ties])])

            theta = max(x_basic[r] / direction[r], 0.0)
            x_basic -= theta * direction
            x_basic[r] = theta
            x_basic[(x_basic < 0.0) & (x_basic > -settings.feas_tol)] = 0.0

            if theta <= settings.pivot_tol:
                stall += 1
                if stall >= settings.stall_limit and not bland:
                    bland = True
                    logger.warning(
                        f"{stall} degenerate pivots in a row, switching to Bland's rule"
                    )
            else:
                stall = 0
                bland = False

            if basis.replace(r, q, direction):
                x_basic = basis.ftran(rhs)

            self.count += 1


def _drive_out_artificials(
    matrix: sparse.csc_matrix, basis: _Basis, num_original: int
) -> np.ndarray:
    """
    Pivots zero-level artificial columns out of the basis. An artificial
    that cannot leave belongs to a redundant row and stays basic at zero.
    """

    size = len(basis.columns)
    for r in range(size):
        if basis.columns[r] < num_original:
            continue

        unit = np.zeros(size)
        unit[r] = 1.0
        row = basis.btran(unit)
        alpha = matrix[:, :num_original].T @ row
        alpha[basis.columns[basis.columns < num_original]] = 0.0

        q = int(np.argmax(np.abs(alpha))) if alpha.size else -1
        if q < 0 or abs(alpha[q]) <= DRIVE_OUT_TOL:
            logger.debug(f"Row {r} is redundant; its artificial stays basic")
            continue

        basis.replace(r, q, basis.ftran(_column(matrix, q)))

    return basis.columns


def solve_standard_form(
    matrix: sparse.csc_matrix,
    rhs: np.ndarray,
    cost: np.ndarray,
    unit_basis: np.ndarray,
    settings: SolverSettings = None,
) -> SimplexOutcome:
    """
    Two-phase revised simplex. `unit_basis[i]` names a column equal to the
    i-th unit vector, or -1 when row i needs an artificial.
    """

    settings = settings or SolverSettings()
    num_rows, num_columns = matrix.shape

    if num_rows == 0:
        x = np.zeros(num_columns)
        if num_columns and cost.min() < -settings.pivot_tol:
            ray = np.zeros(num_columns)
            ray[int(np.argmin(cost))] = 1.0
            return SimplexOutcome(status="unbounded", x=x, y=np.zeros(0), ray=ray)
        return SimplexOutcome(status="optimal", x=x, y=np.zeros(0))

    artificial_rows = np.flatnonzero(unit_basis < 0)
    num_artificial = artificial_rows.size
    extended = sparse.hstack(
        [
            matrix,
            sparse.csc_matrix(
                (np.ones(num_artificial), (artificial_rows, np.arange(num_artificial))),
                shape=(num_rows, num_artificial),
            ),
        ],
        format="csc",
    )
    total = num_columns + num_artificial

    columns = np.array(unit_basis, dtype=int)
    columns[artificial_rows] = num_columns + np.arange(num_artificial)
    basis = _Basis(extended, columns, settings.refactor_interval)
    iteration = _Iteration(settings)

    if num_artificial:
        phase_one_cost = np.zeros(total)
        phase_one_cost[num_columns:] = 1.0
        _, x_basic, y, _ = iteration.run(
            extended, rhs, phase_one_cost, basis, np.ones(total, dtype=bool)
        )
        infeasibility = float(phase_one_cost[basis.columns] @ x_basic)

        if infeasibility > settings.feas_tol * max(1.0, float(np.abs(rhs).max())):
            logger.debug(f"Phase one ended with infeasibility {infeasibility}")
            return SimplexOutcome(status="infeasible", y=y, iterations=iteration.count)

        _drive_out_artificials(extended, basis, num_columns)
        basis.refactor()

    phase_two_cost = np.zeros(total)
    phase_two_cost[:num_columns] = cost
    eligible = np.zeros(total, dtype=bool)
    eligible[:num_columns] = True

    status, x_basic, y, ray = iteration.run(extended, rhs, phase_two_cost, basis, eligible)

    x = np.zeros(total)
    x[basis.columns] = np.maximum(x_basic, 0.0)

    return SimplexOutcome(
        status=status,
        x=x[:num_columns],
        y=y,
        ray=ray[:num_columns] if ray is not None else None,
        iterations=iteration.count,
    )
