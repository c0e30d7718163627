import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from mosaic.ambiguity import AffineDecisionLoss, AmbiguitySpec, PiecewiseAffineLoss, Polyhedron
from mosaic.config import SolverSettings, resolve_settings
from mosaic.exceptions import (
    DimensionMismatch,
    IntersectionEmpty,
    InvalidInput,
    RecoveryDegenerate,
    SizeExceeded,
    UnboundedObjective,
    UnsupportedCost,
)
from mosaic.lp import (
    LpBuilder,
    LpModel,
    LpSolution,
    LpStatus,
    RowSense,
    Sense,
    solve_binary_by_enumeration,
    solve_lp,
)
from mosaic.oracle import moreau_envelope
from mosaic.transport import CostKind, DiscreteDistribution, Norm, ot_cost

logger = logging.getLogger("mosaic")

MASS_TOL = 1e-9
RECOVERY_TOL = 1e-6


@dataclass
class DualLayout:
    """
    Column and row indices of the dual LP. Blocks are (alpha, l)-major:
    multi-indices alpha run in `itertools.product` order over the sources
    and, inside each, the loss pieces in order. `z[s, l]` are the support
    multipliers, `w[s, l, k]` the dual-norm vectors of source k,
    `robust_rows[s, l]` the row bounding the Moreau value of piece l and
    `equality_rows[s, l]` the d rows balancing its slope.
    """

    sizes: List[int]
    lam: np.ndarray
    gamma: List[np.ndarray]
    theta: np.ndarray
    alphas: np.ndarray
    z: np.ndarray
    w: np.ndarray
    robust_rows: np.ndarray
    equality_rows: np.ndarray

    @property
    def num_sources(self) -> int:
        return len(self.sizes)

    @property
    def num_blocks(self) -> int:
        return self.robust_rows.size


@dataclass
class DualSolution:
    lam: np.ndarray
    gammas: List[np.ndarray]
    value: float
    solution: Optional[LpSolution] = field(default=None, repr=False)
    layout: Optional[DualLayout] = field(default=None, repr=False)

    @property
    def point(self) -> np.ndarray:
        return np.concatenate([self.lam] + list(self.gammas))


@dataclass
class InfeasibilityCertificate:
    """
    Recession direction (lam_ray, gamma_rays) of the dual feasible set along
    which the dual objective decreases at rate `slope` < 0, together with a
    dual-feasible base point.
    """

    lam_ray: np.ndarray
    gamma_rays: List[np.ndarray]
    base_lam: np.ndarray
    base_gammas: List[np.ndarray]
    slope: float

    def objective_slope(self, amb: AmbiguitySpec) -> float:
        return float(
            amb.radii @ self.lam_ray
            + sum(center.probs @ ray for center, ray in zip(amb.centers, self.gamma_rays))
        )

    def validate(
        self,
        amb: AmbiguitySpec,
        loss: PiecewiseAffineLoss,
        support: Polyhedron = None,
        steps: Sequence[float] = (1.0, 10.0),
        tol: float = 1e-6,
        settings: SolverSettings = None,
    ) -> bool:
        support = support or Polyhedron.free(amb.dim)

        if self.objective_slope(amb) >= 0.0 or np.any(self.lam_ray < -tol):
            return False

        for t in steps:
            lam = np.maximum(self.base_lam + t * self.lam_ray, 0.0)
            gammas = [base + t * ray for base, ray in zip(self.base_gammas, self.gamma_rays)]
            for alpha in _alphas(amb.sizes):
                anchors = _anchors(amb, alpha)
                result = moreau_envelope(lam, anchors, loss, support, amb.cost, settings)
                budget = sum(gammas[k][alpha[k]] for k in range(amb.num_sources))
                if not result.is_finite or result.value > budget + tol * (1.0 + abs(budget)):
                    return False

        return True


@dataclass
class WorstCaseDistribution:
    distribution: DiscreteDistribution
    support_bound: int
    budgets: np.ndarray
    expected_loss: float
    dual: DualSolution = field(repr=False)


@dataclass
class MsdroSolution:
    theta: np.ndarray
    value: float
    dual: DualSolution = field(repr=False)


def _alphas(sizes: Sequence[int]) -> np.ndarray:
    count = int(np.prod(sizes))
    return np.array(np.unravel_index(np.arange(count), sizes)).T


def _anchors(amb: AmbiguitySpec, alpha: Sequence[int]) -> np.ndarray:
    return np.array([center.atoms[alpha[k]] for k, center in enumerate(amb.centers)])


def _check_cost(amb: AmbiguitySpec):
    cost = amb.cost
    if cost.kind != CostKind.NORM_POWER or cost.p != 1 or cost.norm == Norm.L2:
        raise UnsupportedCost(
            "The dual LP needs a transport cost ||xi - xi'|| with p = 1 and an L1 or Linf norm"
        )


def _as_family(loss: PiecewiseAffineLoss) -> AffineDecisionLoss:
    L, d = loss.slopes.shape
    return AffineDecisionLoss(
        slope_maps=np.zeros((L, d, 0)),
        slope_offsets=loss.slopes,
        intercept_weights=np.zeros((L, 0)),
        intercepts=loss.intercepts,
    )


def _assemble(
    amb: AmbiguitySpec,
    family: AffineDecisionLoss,
    support: Polyhedron,
    decisions: Optional[Polyhedron],
    settings: SolverSettings,
) -> Tuple[LpModel, DualLayout]:
    _check_cost(amb)

    K, d = amb.num_sources, amb.dim
    if family.dim != d or support.dim != d:
        raise DimensionMismatch(
            f"Loss in R^{family.dim} and support in R^{support.dim} for data in R^{d}"
        )

    L = family.num_pieces
    n = family.num_decisions
    m = support.num_rows
    sizes = amb.sizes
    alphas = _alphas(sizes)
    S = alphas.shape[0]

    if S * L > settings.max_scenarios:
        raise SizeExceeded(
            f"{S} multi-indices times {L} pieces exceed the cap of {settings.max_scenarios} blocks"
        )

    builder = LpBuilder(Sense.MIN)
    lam = builder.add_variables(K, lower=0.0, cost=amb.radii)
    gamma = [
        builder.add_variables(center.size, lower=-np.inf, cost=center.probs)
        for center in amb.centers
    ]
    theta = builder.add_variables(n, lower=-np.inf)

    if decisions is not None:
        if decisions.dim != n:
            raise DimensionMismatch(f"Decision set in R^{decisions.dim} for {n} decisions")
        for row, rhs in zip(decisions.C, decisions.g):
            builder.add_row(theta, row, RowSense.LE, rhs)

    z = np.zeros((S, L, m), dtype=int)
    w = np.zeros((S, L, K, d), dtype=int)
    robust_rows = np.zeros((S, L), dtype=int)
    equality_rows = np.zeros((S, L, d), dtype=int)
    atoms = [center.atoms for center in amb.centers]
    dual_l1 = amb.cost.norm == Norm.LINF

    for s, alpha in enumerate(alphas):
        anchors = np.array([atoms[k][alpha[k]] for k in range(K)])
        gamma_cols = [gamma[k][alpha[k]] for k in range(K)]

        for l in range(L):
            z[s, l] = builder.add_variables(m, lower=0.0)
            w[s, l] = builder.add_variables(K * d, lower=-np.inf).reshape(K, d)

            robust_rows[s, l] = builder.add_row(
                np.concatenate([w[s, l].ravel(), z[s, l], gamma_cols, theta]),
                np.concatenate(
                    [anchors.ravel(), support.g, -np.ones(K), family.intercept_weights[l]]
                ),
                RowSense.LE,
                -family.intercepts[l],
            )

            for i in range(d):
                equality_rows[s, l, i] = builder.add_row(
                    np.concatenate([w[s, l, :, i], z[s, l], theta]),
                    np.concatenate(
                        [np.ones(K), support.C[:, i], -family.slope_maps[l, i]]
                    ),
                    RowSense.EQ,
                    family.slope_offsets[l, i],
                )

            for k in range(K):
                if dual_l1:
                    bound = builder.add_variables(d, lower=0.0)
                    for i in range(d):
                        builder.add_row([w[s, l, k, i], bound[i]], [1.0, -1.0], RowSense.LE, 0.0)
                        builder.add_row([w[s, l, k, i], bound[i]], [-1.0, -1.0], RowSense.LE, 0.0)
                    builder.add_row(
                        np.concatenate([bound, [lam[k]]]),
                        np.concatenate([np.ones(d), [-1.0]]),
                        RowSense.LE,
                        0.0,
                    )
                else:
                    for i in range(d):
                        builder.add_row([w[s, l, k, i], lam[k]], [1.0, -1.0], RowSense.LE, 0.0)
                        builder.add_row([w[s, l, k, i], lam[k]], [-1.0, -1.0], RowSense.LE, 0.0)

    layout = DualLayout(
        sizes=sizes,
        lam=lam,
        gamma=gamma,
        theta=theta,
        alphas=alphas,
        z=z,
        w=w,
        robust_rows=robust_rows,
        equality_rows=equality_rows,
    )

    return builder.build(), layout


def build_dual_lp(
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    support: Polyhedron = None,
    settings: SolverSettings = None,
) -> Tuple[LpModel, DualLayout]:
    """
    The finite dual of the worst-case expectation problem:

        min  sum_k eps_k lam_k + sum_k sum_j p_kj gamma_kj
        s.t. for every alpha and piece l, with z >= 0 and ||w_k||_* <= lam_k:
             sum_k <w_k, xi_k,alpha_k> + <z, g> + b_l <= sum_k gamma_k,alpha_k
             sum_k w_k + C^T z = a_l
    """

    settings = resolve_settings(settings)
    support = support or Polyhedron.free(amb.dim)
    return _assemble(amb, _as_family(loss), support, None, settings)


def _certificate(solution: LpSolution, layout: DualLayout, amb: AmbiguitySpec):
    ray, base = solution.ray, solution.primal
    certificate = InfeasibilityCertificate(
        lam_ray=ray[layout.lam],
        gamma_rays=[ray[cols] for cols in layout.gamma],
        base_lam=np.maximum(base[layout.lam], 0.0),
        base_gammas=[base[cols] for cols in layout.gamma],
        slope=0.0,
    )
    certificate.slope = certificate.objective_slope(amb)
    return certificate


def _dual_solution(solution: LpSolution, layout: DualLayout, amb: AmbiguitySpec) -> DualSolution:
    lam = np.maximum(solution.primal[layout.lam], 0.0)
    gammas = [solution.primal[cols] for cols in layout.gamma]
    value = float(
        amb.radii @ lam + sum(center.probs @ g for center, g in zip(amb.centers, gammas))
    )
    return DualSolution(lam=lam, gammas=gammas, value=value, solution=solution, layout=layout)


def worst_case_value(
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    support: Polyhedron = None,
    settings: SolverSettings = None,
    backend: str = None,
) -> DualSolution:
    settings = resolve_settings(settings, backend)
    support = support or Polyhedron.free(amb.dim)

    model, layout = _assemble(amb, _as_family(loss), support, None, settings)
    logger.info(
        f"Solving dual LP with {model.num_rows} rows and {model.num_columns} columns "
        f"({layout.num_blocks} blocks)"
    )
    solution = solve_lp(model, settings)

    if solution.status == LpStatus.UNBOUNDED:
        certificate = _certificate(solution, layout, amb)
        raise IntersectionEmpty(
            f"The transport balls do not intersect (objective slope {certificate.slope:.3g})",
            certificate,
        )
    if solution.status == LpStatus.INFEASIBLE:
        raise InvalidInput("The dual LP is infeasible; check the support polyhedron")

    return _dual_solution(solution, layout, amb)


def _recover_atoms(
    dual: DualSolution,
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    support: Polyhedron,
    settings: SolverSettings,
):
    """
    Reads each positive-mass block's atom off the equality-row multipliers,
    which equal mass times atom, and checks it maximizes the block's piece.
    """

    layout = dual.layout
    row_duals = dual.solution.dual
    masses = np.maximum(-row_duals[layout.robust_rows], 0.0)
    moments = row_duals[layout.equality_rows]

    total = float(masses.sum())
    if total < 1.0 - RECOVERY_TOL:
        raise RecoveryDegenerate(
            f"Robust row multipliers sum to {total}; the LP basis is degenerate"
        )

    atoms, alphas, weights = [], [], []
    for s, l in zip(*np.nonzero(masses > MASS_TOL)):
        alpha = layout.alphas[s]
        anchors = _anchors(amb, alpha)
        atom = moments[s, l] / masses[s, l]

        piece = PiecewiseAffineLoss(loss.slopes[l : l + 1], loss.intercepts[l : l + 1])
        reference = moreau_envelope(dual.lam, anchors, piece, support, amb.cost, settings)
        attained = float(piece(atom)) - float(dual.lam @ amb.cost.pairwise(atom, anchors)[0])

        if not support.contains(atom, 1e-7) or attained < reference.value - 1e-7 * (
            1.0 + abs(reference.value)
        ):
            logger.warning(
                f"Multiplier atom of block {tuple(alpha)}, piece {l} is not optimal; "
                "using the oracle maximizer"
            )
            atom = reference.maximizer

        atoms.append(atom)
        alphas.append(alpha)
        weights.append(masses[s, l])

    return np.array(atoms), np.array(alphas), np.array(weights) / total


def _sparsify(
    atoms: np.ndarray,
    alphas: np.ndarray,
    weights: np.ndarray,
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    settings: SolverSettings,
) -> np.ndarray:
    """
    Re-solves the finite problem over the recovered (atom, alpha) pairs. A
    basic optimal solution has at most 1 + sum_k N_k positive entries: one
    normalization row, N_k - 1 marginal rows per source and one budget row
    per source.
    """

    costs = np.column_stack(
        [
            np.abs(atoms - center.atoms[alphas[:, k]]).sum(axis=1)
            if amb.cost.norm == Norm.L1
            else np.abs(atoms - center.atoms[alphas[:, k]]).max(axis=1)
            for k, center in enumerate(amb.centers)
        ]
    )
    used = weights @ costs

    builder = LpBuilder(Sense.MAX)
    q = builder.add_variables(len(weights), cost=loss(atoms))
    builder.add_row(q, np.ones(len(weights)), RowSense.EQ, 1.0)
    for k, center in enumerate(amb.centers):
        for j in range(center.size - 1):
            members = q[alphas[:, k] == j]
            builder.add_row(members, np.ones(members.size), RowSense.EQ, center.probs[j])
        builder.add_row(q, costs[:, k], RowSense.LE, max(amb.radii[k], used[k]))

    solution = solve_lp(builder.build(), settings.with_backend("simplex"))
    if not solution.is_optimal:
        logger.warning(f"Sparsification LP ended {solution.status.value}; keeping all atoms")
        return weights

    return np.maximum(solution.primal, 0.0)


def worst_case_distribution(
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    support: Polyhedron = None,
    settings: SolverSettings = None,
    backend: str = None,
) -> WorstCaseDistribution:
    settings = resolve_settings(settings, backend)
    support = support or Polyhedron.free(amb.dim)

    dual = worst_case_value(amb, loss, support, settings)
    atoms, alphas, weights = _recover_atoms(dual, amb, loss, support, settings)
    weights = _sparsify(atoms, alphas, weights, amb, loss, settings)

    distribution = DiscreteDistribution.from_weights(atoms, weights, MASS_TOL).merged()
    support_bound = 1 + sum(amb.sizes)

    budgets = np.array(
        [ot_cost(distribution, center, amb.cost, settings=settings)[0] for center in amb.centers]
    )
    expected = loss.expectation(distribution)

    if distribution.size > support_bound:
        raise RecoveryDegenerate(
            f"Recovered {distribution.size} atoms, more than the bound {support_bound}"
        )
    if np.any(budgets > amb.radii + RECOVERY_TOL):
        raise RecoveryDegenerate(f"Recovered budgets {budgets} exceed radii {amb.radii}")
    if abs(expected - dual.value) > RECOVERY_TOL * max(1.0, abs(dual.value)):
        raise RecoveryDegenerate(
            f"Recovered expected loss {expected} differs from the dual value {dual.value}"
        )

    logger.info(f"Recovered a worst case with {distribution.size} atoms")

    return WorstCaseDistribution(
        distribution=distribution,
        support_bound=support_bound,
        budgets=budgets,
        expected_loss=expected,
        dual=dual,
    )


def solve_msdro(
    amb: AmbiguitySpec,
    family: AffineDecisionLoss,
    decisions: Polyhedron,
    support: Polyhedron = None,
    binary: Sequence[int] = (),
    cardinality_cap: int = None,
    settings: SolverSettings = None,
    backend: str = None,
) -> MsdroSolution:
    """
    min over theta in `decisions` of the worst-case expected loss, as one
    joint LP over (theta, lambda, gamma, z, w). Decisions listed in `binary`
    are restricted to {0, 1} with at most `cardinality_cap` ones by
    enumerating their supports.
    """

    settings = resolve_settings(settings, backend)
    support = support or Polyhedron.free(amb.dim)

    model, layout = _assemble(amb, family, support, decisions, settings)
    logger.info(
        f"Solving joint LP with {model.num_rows} rows and {model.num_columns} columns"
    )

    if len(binary):
        cap = len(binary) if cardinality_cap is None else cardinality_cap
        solution = solve_binary_by_enumeration(
            model, layout.theta[list(binary)], cap, settings
        ).solution
    else:
        solution = solve_lp(model, settings)

    if solution.status == LpStatus.INFEASIBLE:
        raise InvalidInput("The decision set is empty")
    if solution.status == LpStatus.UNBOUNDED:
        if np.abs(solution.ray[layout.theta]).max(initial=0.0) > 1e-9:
            raise UnboundedObjective("The worst-case loss is unbounded below over the decisions")
        certificate = _certificate(solution, layout, amb)
        raise IntersectionEmpty("The transport balls do not intersect", certificate)

    dual = _dual_solution(solution, layout, amb)
    theta = solution.primal[layout.theta]

    return MsdroSolution(theta=theta, value=dual.value, dual=dual)


def ellipsoid_radius(dual: DualSolution, factor: float = 10.0) -> float:
    """
    Trust radius for the ellipsoid method: `factor` times the largest
    magnitude among the LP optimum's weights, and at least `factor`.
    """

    return factor * max(1.0, float(np.abs(dual.point).max()))


def grid_primal_value(
    amb: AmbiguitySpec,
    loss: PiecewiseAffineLoss,
    support: Polyhedron,
    step: float,
    settings: SolverSettings = None,
    backend: str = "highs",
) -> float:
    """
    Worst-case expected loss over distributions supported on a uniform grid
    of the box `support`: an LP over masses nu[alpha, g] coupling each grid
    point g with the centers' atoms alpha. It lower-bounds the dual value and
    grows as nested grids are refined.
    """

    settings = resolve_settings(settings, backend)
    bounds = support.box_bounds()
    if bounds is None or not (np.all(np.isfinite(bounds[0])) and np.all(np.isfinite(bounds[1]))):
        raise InvalidInput("The grid primal needs a bounded box support")

    lower, upper = bounds
    axes = [
        np.linspace(lo, hi, int(round((hi - lo) / step)) + 1) for lo, hi in zip(lower, upper)
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, amb.dim)
    values = loss(grid)

    alphas = _alphas(amb.sizes)
    S, G = alphas.shape[0], grid.shape[0]

    builder = LpBuilder(Sense.MAX)
    nu = builder.add_variables(S * G, cost=np.tile(values, S)).reshape(S, G)

    for k, center in enumerate(amb.centers):
        for j in range(center.size):
            members = nu[alphas[:, k] == j].ravel()
            builder.add_row(members, np.ones(members.size), RowSense.EQ, center.probs[j])

    for k, center in enumerate(amb.centers):
        costs = amb.cost.pairwise(grid, center.atoms)
        builder.add_row(
            nu.ravel(), np.concatenate([costs[:, alphas[s, k]] for s in range(S)]), RowSense.LE, amb.radii[k]
        )

    logger.info(f"Solving grid primal over {G} grid points and {S} multi-indices")
    solution = solve_lp(builder.build(), settings)

    if solution.status == LpStatus.INFEASIBLE:
        logger.warning(f"No grid distribution with step {step} lies in every ball")
        return -np.inf

    return float(solution.objective)
