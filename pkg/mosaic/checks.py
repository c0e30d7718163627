import numpy as np

from mosaic.lp import LpModel, LpSolution, LpStatus, RowSense, Sense


def _row_violations(model: LpModel, activity: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    senses = np.array([s.value for s in model.row_senses])
    gap = activity - rhs
    return np.where(
        senses == RowSense.LE.value,
        np.maximum(gap, 0.0),
        np.where(senses == RowSense.GE.value, np.maximum(-gap, 0.0), np.abs(gap)),
    )


def primal_residual(model: LpModel, x: np.ndarray) -> float:
    """
    Largest violation of a row or a variable bound at x.
    """

    rows = _row_violations(model, model.matrix @ x, model.rhs)
    below = np.maximum(model.lower - x, 0.0)
    above = np.maximum(x - model.upper, 0.0)

    return float(max(rows.max(initial=0.0), below.max(initial=0.0), above.max(initial=0.0)))


def reduced_costs(model: LpModel, dual: np.ndarray) -> np.ndarray:
    return model.objective - model.matrix.T @ dual


def complementary_slackness_residual(model: LpModel, x: np.ndarray, dual: np.ndarray) -> float:
    """
    Largest product of a row multiplier with its row slack, or of a reduced
    cost with the distance of its variable to the nearest bound (capped at 1).
    """

    slack = np.abs(model.rhs - model.matrix @ x)
    rows = np.abs(dual) * slack

    distance = np.minimum(x - model.lower, model.upper - x)
    columns = np.abs(reduced_costs(model, dual)) * np.minimum(np.abs(distance), 1.0)

    return float(max(rows.max(initial=0.0), columns.max(initial=0.0)))


def is_recession_ray(model: LpModel, ray: np.ndarray, tol: float = 1e-7) -> bool:
    """
    Checks that the ray keeps every row and bound satisfied from any feasible
    point and strictly improves the objective.
    """

    scale = np.abs(ray).max(initial=0.0)
    if scale == 0.0:
        return False
    direction = ray / scale

    rows = _row_violations(model, model.matrix @ direction, np.zeros(model.num_rows))
    if rows.max(initial=0.0) > tol:
        return False
    if np.any(direction[np.isfinite(model.lower)] < -tol):
        return False
    if np.any(direction[np.isfinite(model.upper)] > tol):
        return False

    slope = model.objective @ direction
    return bool(slope < -tol) if model.sense == Sense.MIN else bool(slope > tol)


def farkas_margin(model: LpModel, y: np.ndarray, tol: float = 1e-9) -> float:
    """
    Returns y.b - sup { (A^T y).x : lower <= x <= upper }, or -inf when the
    multipliers have the wrong sign for their rows. A positive margin proves
    the model infeasible.
    """

    senses = np.array([s.value for s in model.row_senses])
    if np.any(y[senses == RowSense.LE.value] > tol) or np.any(
        y[senses == RowSense.GE.value] < -tol
    ):
        return -np.inf

    gradient = model.matrix.T @ y
    gradient[np.abs(gradient) <= tol * max(1.0, np.abs(y).max(initial=0.0))] = 0.0

    with np.errstate(invalid="ignore"):
        upper_part = np.where(gradient > 0.0, gradient * model.upper, 0.0)
        lower_part = np.where(gradient < 0.0, gradient * model.lower, 0.0)
    support = float(np.sum(upper_part) + np.sum(lower_part))

    return float(y @ model.rhs) - support


def verify_solution(model: LpModel, solution: LpSolution, tol: float = 1e-7) -> bool:
    if solution.status == LpStatus.OPTIMAL:
        scale = 1.0 + abs(solution.objective)
        return (
            primal_residual(model, solution.primal) <= tol * scale
            and complementary_slackness_residual(model, solution.primal, solution.dual)
            <= tol * scale
            and abs(solution.objective - solution.dual_objective) <= tol * scale
        )

    if solution.status == LpStatus.UNBOUNDED:
        return is_recession_ray(model, solution.ray, tol)

    return farkas_margin(model, solution.farkas) > 0.0
