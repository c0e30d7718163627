import itertools

import numpy as np
import pytest

from mosaic.checks import farkas_margin, is_recession_ray, verify_solution
from mosaic.config import SolverSettings
from mosaic.exceptions import InvalidInput, InvalidParams, SizeExceeded
from mosaic.lp import (
    LpBuilder,
    LpStatus,
    RowSense,
    Sense,
    format_triplets,
    solve_binary_by_enumeration,
    solve_lp,
    write_triplets,
)

BACKENDS = ["simplex", "highs"]


def _dense_model(objective, A, senses, b, sense=Sense.MIN, lower=0.0, upper=np.inf):
    builder = LpBuilder(sense)
    cols = builder.add_variables(len(objective), lower=lower, upper=upper, cost=objective)
    for row, row_sense, rhs in zip(A, senses, b):
        builder.add_row(cols, row, row_sense, rhs)
    return builder.build()


def _vertex_optimum(c, A, b):
    """
    max c.x over {A x <= b, x >= 0} by enumerating basic solutions.
    """

    n = len(c)
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = -np.inf
    for active in itertools.combinations(range(G.shape[0]), n):
        sub = G[list(active)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(active)])
        if np.all(G @ x <= h + 1e-9):
            best = max(best, c @ x)
    return best


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_variable_bound(backend):
    model = _dense_model([1.0], [[1.0]], [RowSense.GE], [3.0])
    solution = solve_lp(model, backend=backend)

    assert solution.status == LpStatus.OPTIMAL
    assert solution.primal[0] == pytest.approx(3.0)
    assert solution.objective == pytest.approx(3.0)
    assert solution.dual[0] == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_simplex_face(backend):
    model = _dense_model([1.0, 1.0], [[1.0, 1.0]], [RowSense.LE], [1.0], sense=Sense.MAX)
    solution = solve_lp(model, backend=backend)

    assert solution.status == LpStatus.OPTIMAL
    assert solution.objective == pytest.approx(1.0)
    assert solution.dual_objective == pytest.approx(1.0)
    assert verify_solution(model, solution)


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded_ray(backend):
    builder = LpBuilder()
    builder.add_variables(1, lower=0.0, cost=-1.0)
    model = builder.build()

    solution = solve_lp(model, backend=backend)

    assert solution.status == LpStatus.UNBOUNDED
    assert solution.ray[0] > 0.0
    assert is_recession_ray(model, solution.ray)
    assert solution.primal[0] >= 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_farkas(backend):
    model = _dense_model(
        [1.0, 0.0],
        [[1.0, 1.0], [1.0, 1.0]],
        [RowSense.GE, RowSense.LE],
        [2.0, 1.0],
    )
    solution = solve_lp(model, backend=backend)

    assert solution.status == LpStatus.INFEASIBLE
    assert farkas_margin(model, solution.farkas) > 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_against_box(backend):
    model = _dense_model([1.0], [[1.0]], [RowSense.GE], [2.0], upper=1.0)
    solution = solve_lp(model, backend=backend)

    assert solution.status == LpStatus.INFEASIBLE
    assert farkas_margin(model, solution.farkas) > 0.0


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("backend", BACKENDS)
def test_random_lps_match_vertex_enumeration(seed, backend):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.1, 1.0, size=(5, 8))
    b = rng.uniform(1.0, 2.0, size=5)
    c = rng.uniform(-1.0, 1.0, size=8)

    model = _dense_model(c, A, [RowSense.LE] * 5, b, sense=Sense.MAX)
    solution = solve_lp(model, backend=backend)

    assert solution.status == LpStatus.OPTIMAL
    assert solution.objective == pytest.approx(_vertex_optimum(c, A, b), abs=1e-8)
    assert verify_solution(model, solution)


def test_beale_cycling_example():
    model = _dense_model(
        [-0.75, 150.0, -0.02, 6.0],
        [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]],
        [RowSense.LE, RowSense.LE, RowSense.LE],
        [0.0, 0.0, 1.0],
    )
    solution = solve_lp(model, SolverSettings(stall_limit=2))

    assert solution.status == LpStatus.OPTIMAL
    assert solution.objective == pytest.approx(-0.05)


def test_redundant_equalities():
    model = _dense_model(
        [1.0, 2.0],
        [[1.0, 1.0], [2.0, 2.0]],
        [RowSense.EQ, RowSense.EQ],
        [1.0, 2.0],
    )
    solution = solve_lp(model)

    assert solution.status == LpStatus.OPTIMAL
    assert solution.objective == pytest.approx(1.0)
    assert np.allclose(solution.primal, [1.0, 0.0])


@pytest.mark.parametrize("backend", BACKENDS)
def test_free_and_upper_bounded_variables(backend):
    # min x - y  s.t.  x + y >= -3,  x free,  y <= 2
    builder = LpBuilder()
    x = builder.add_variable(lower=-np.inf, cost=1.0)
    y = builder.add_variable(lower=-np.inf, upper=2.0, cost=-1.0)
    builder.add_row([x, y], [1.0, 1.0], RowSense.GE, -3.0)
    model = builder.build()

    solution = solve_lp(model, backend=backend)

    assert solution.status == LpStatus.OPTIMAL
    assert solution.primal == pytest.approx([-5.0, 2.0])
    assert solution.objective == pytest.approx(-7.0)
    assert verify_solution(model, solution)


def test_duplicate_triplets_are_summed():
    builder = LpBuilder()
    x = builder.add_variable(cost=1.0)
    builder.add_row([x, x], [1.0, 1.0], RowSense.GE, 4.0)
    model = builder.build()

    assert model.matrix.nnz == 1
    assert solve_lp(model).primal[0] == pytest.approx(2.0)


def test_scale_invariance_and_determinism():
    rng = np.random.default_rng(7)
    A = rng.uniform(0.1, 1.0, size=(4, 6))
    b = rng.uniform(1.0, 2.0, size=4)
    c = rng.uniform(-1.0, 0.0, size=6)
    model = _dense_model(c, A, [RowSense.LE] * 4, b)

    first = solve_lp(model)
    second = solve_lp(model)
    scaled = solve_lp(model.scaled_objective(3.0))

    assert np.array_equal(first.primal, second.primal)
    assert np.array_equal(first.dual, second.dual)
    assert np.allclose(scaled.primal, first.primal)
    assert scaled.objective == pytest.approx(3.0 * first.objective)


def test_envelope_rejects_large_models():
    model = _dense_model([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], [RowSense.GE] * 2, [1.0, 1.0])

    with pytest.raises(SizeExceeded):
        solve_lp(model, SolverSettings(max_rows=1))

    assert solve_lp(model, SolverSettings(max_rows=1, backend="highs")).is_optimal


def test_model_rejects_non_finite_rhs():
    builder = LpBuilder()
    x = builder.add_variable()
    builder.add_row([x], [1.0], RowSense.LE, np.inf)

    with pytest.raises(InvalidInput):
        builder.build()


def _knapsack(values, weights, capacity):
    builder = LpBuilder(Sense.MAX)
    cols = builder.add_variables(len(values), lower=0.0, upper=1.0, cost=values)
    builder.add_row(cols, weights, RowSense.LE, capacity)
    return builder.build(), list(cols)


def test_enumeration_with_zero_cap():
    model, cols = _knapsack([3.0, 2.0, 4.0], [1.0, 1.0, 1.0], 2.0)

    result = solve_binary_by_enumeration(model, cols, 0)

    assert result.support == ()
    assert result.solution.objective == pytest.approx(0.0)
    assert np.array_equal(result.assignment, np.zeros(3))


def test_enumeration_matches_exhaustive_supports():
    values = [3.0, 2.0, 4.0]
    weights = [2.0, 1.0, 3.0]
    model, cols = _knapsack(values, weights, 4.0)

    result = solve_binary_by_enumeration(model, cols, 3)

    best = max(
        (
            sum(values[j] for j in support)
            for k in range(4)
            for support in itertools.combinations(range(3), k)
            if sum(weights[j] for j in support) <= 4.0
        )
    )
    assert result.solution.objective == pytest.approx(best)
    assert result.support == (1, 2)


def test_enumeration_guards():
    model, cols = _knapsack([1.0] * 3, [1.0] * 3, 1.0)

    with pytest.raises(InvalidParams):
        solve_binary_by_enumeration(model, cols, 4)

    with pytest.raises(SizeExceeded):
        solve_binary_by_enumeration(model, cols, 3, SolverSettings(max_subsets=7))


def test_triplet_dump(tmp_path):
    model = _dense_model([1.0, 2.0], [[1.0, 0.0], [3.0, 4.0]], [RowSense.LE, RowSense.EQ], [5.0, 6.0])

    text = format_triplets(model)

    assert text.splitlines()[0] == "# sense min rows 2 cols 2"
    assert "# senses <= =" in text
    assert text.splitlines()[-3:] == ["0 0 1.0", "1 0 3.0", "1 1 4.0"]

    path = tmp_path / "model.txt"
    write_triplets(model, path)
    assert path.read_text() == text
