import argparse
import json
import logging
import pathlib
import sys
from dataclasses import asdict
from typing import Dict, List, Optional

import dacite  # type: ignore
import numpy as np
import pandas as pd  # type: ignore

from mosaic.alerts import AlertTarget, AlertWebhookTarget, SlackAlertTarget
from mosaic.ambiguity import AffineDecisionLoss, AmbiguitySpec, PiecewiseAffineLoss, Polyhedron
from mosaic.assortment import AssortmentSpec, assortment_prices, assortment_solve
from mosaic.barycenter import barycenter
from mosaic.calibration import (
    ConcentrationParams,
    Prior,
    ScenarioInputs,
    bayesian_curves,
    scenario_radii,
)
from mosaic.config import resolve_settings
from mosaic.db import connect_db
from mosaic.dro import grid_primal_value, solve_msdro, worst_case_distribution, worst_case_value
from mosaic.exceptions import InvalidInput, MosaicError
from mosaic.experiments import (
    REGIONAL_TARGET_SIZES,
    SOURCE_REGIONS,
    AssortmentExperimentConfig,
    ExperimentConfig,
    barycenter_bias_demo,
    run_assortment_experiment,
    run_backtest,
    run_regional_study,
)
from mosaic.generators import MARKETS, DataModel, generate_demand, generate_synthetic, split_seeds
from mosaic.portfolio import (
    PortfolioSpec,
    SensitivityConfig,
    l1_distance,
    portfolio_solve,
    radii_from_lambda_m,
    sensitivity_sweep,
)
from mosaic.reports import format_table, generate_experiment_summary_report, write_csv
from mosaic.run import RunningExperiment
from mosaic.transport import DiscreteDistribution, GroundCost, ot_cost

logger = logging.getLogger("mosaic")

DEFAULT_CURVE_GRID = [0.05 * i for i in range(61)]
DEFAULT_ASSORTMENT_SAMPLES = 20


def _load_input(args: argparse.Namespace, required: bool = True) -> Dict:
    if args.input is None:
        if required:
            raise InvalidInput(f"'{args.command}' needs --input <json>")
        return {}
    return json.loads(pathlib.Path(args.input).read_text())


def _emit(args: argparse.Namespace, result: Dict, frame: pd.DataFrame = None):
    print(json.dumps(result, sort_keys=True))
    if frame is not None:
        if args.out:
            write_csv(frame, args.out)
            logger.info(f"Wrote {len(frame)} rows to {args.out}")
        elif args.verbose:
            print(format_table(frame))


def _atoms_frame(distribution: DiscreteDistribution) -> pd.DataFrame:
    frame = pd.DataFrame(
        distribution.atoms, columns=[f"x{i + 1}" for i in range(distribution.dim)]
    )
    frame.insert(0, "prob", distribution.probs)
    return frame


def _ambiguity(data: Dict, args: argparse.Namespace) -> AmbiguitySpec:
    amb = AmbiguitySpec.from_dict(data["ambiguity"])
    if args.eps is not None:
        amb = amb.with_radii(args.eps)
    return amb


def _support(data: Dict, dim: int) -> Optional[Polyhedron]:
    if "support" not in data:
        return None
    return Polyhedron.from_dict(data["support"], dim)


def cmd_ot(args: argparse.Namespace) -> int:
    """
    Input: {"P": distribution, "Q": distribution, "cost": cost}
    """

    data = _load_input(args)
    settings = resolve_settings(None, args.backend)
    P = DiscreteDistribution.from_dict(data["P"])
    Q = DiscreteDistribution.from_dict(data["Q"])
    cost = GroundCost.from_dict(data.get("cost", {}))

    value, plan = ot_cost(P, Q, cost, method=data.get("method", "auto"), settings=settings)
    frame = pd.DataFrame(plan.entries(), columns=["i", "j", "mass"])

    _emit(args, {"value": value}, frame)
    return 0


def cmd_barycenter(args: argparse.Namespace) -> int:
    """
    Input: {"distributions": [distribution, ...], "weights": [...], "cost": cost}
    """

    data = _load_input(args)
    settings = resolve_settings(None, args.backend)
    distributions = [DiscreteDistribution.from_dict(item) for item in data["distributions"]]
    cost = GroundCost.from_dict(data.get("cost", {}))

    result = barycenter(
        distributions, data["weights"], cost, method=data.get("method", "auto"), settings=settings
    )

    _emit(
        args,
        {"objective": result.objective, "barycenter": result.barycenter.to_dict()},
        _atoms_frame(result.barycenter),
    )
    return 0


def cmd_dro_value(args: argparse.Namespace) -> int:
    """
    Input: {"ambiguity": ..., "loss": ..., "support": optional polyhedron}.
    Each --grid step also reports the grid-restricted primal value, which
    needs a box support.
    """

    data = _load_input(args)
    settings = resolve_settings(None, args.backend)
    amb = _ambiguity(data, args)
    loss = PiecewiseAffineLoss.from_dict(data["loss"])
    support = _support(data, amb.dim)

    dual = worst_case_value(amb, loss, support, settings)
    result: Dict = {"value": dual.value, "lambda": dual.lam.tolist()}

    if args.grid:
        if support is None:
            raise InvalidInput("Grid primal values need a box support")
        rows = [
            {"step": step, "value": grid_primal_value(amb, loss, support, step, settings)}
            for step in args.grid
        ]
        _emit(args, result, pd.DataFrame(rows, columns=["step", "value"]))
    else:
        _emit(args, result)
    return 0


def cmd_dro_worstcase(args: argparse.Namespace) -> int:
    data = _load_input(args)
    settings = resolve_settings(None, args.backend)
    amb = _ambiguity(data, args)
    loss = PiecewiseAffineLoss.from_dict(data["loss"])

    worst = worst_case_distribution(amb, loss, _support(data, amb.dim), settings)

    _emit(
        args,
        {
            "value": worst.dual.value,
            "expected_loss": worst.expected_loss,
            "budgets": worst.budgets.tolist(),
            "atoms": worst.distribution.size,
            "support_bound": worst.support_bound,
        },
        _atoms_frame(worst.distribution),
    )
    return 0


def cmd_dro_solve(args: argparse.Namespace) -> int:
    """
    Input: {"ambiguity": ..., "family": decision loss, "decisions": polyhedron,
    "support": optional, "binary": optional indices, "cardinality_cap": optional}
    """

    data = _load_input(args)
    settings = resolve_settings(None, args.backend)
    amb = _ambiguity(data, args)
    family = AffineDecisionLoss.from_dict(data["family"])
    decisions = Polyhedron.from_dict(data.get("decisions", {}), family.num_decisions)

    solution = solve_msdro(
        amb,
        family,
        decisions,
        support=_support(data, amb.dim),
        binary=data.get("binary", []),
        cardinality_cap=data.get("cardinality_cap"),
        settings=settings,
    )

    _emit(args, {"value": solution.value, "theta": solution.theta.tolist()})
    return 0


def _scenario_inputs(data: Dict) -> ScenarioInputs:
    distributions = data.get("distributions")
    priors = data.get("priors")
    return ScenarioInputs(
        distance_bounds=data.get("distance_bounds"),
        significances=data.get("significances"),
        sample_sizes=data.get("sample_sizes"),
        distributions=(
            [DiscreteDistribution.from_dict(item) for item in distributions]
            if distributions is not None
            else None
        ),
        priors=[Prior.from_dict(item) for item in priors] if priors is not None else None,
        observed=data.get("observed"),
        evidences=data.get("evidences"),
    )


def cmd_calibrate(args: argparse.Namespace) -> int:
    """
    Input: {"params": concentration params, "scenario": 1-5, "inputs": {...}}
    for radii, or {"params": ..., "curves": {"r_hat", "N1", "Nk", "priors":
    {name: prior}}} for the normalized Bayesian significance curves over the
    --grid radii.
    """

    data = _load_input(args)
    params = ConcentrationParams.from_dict(data["params"])

    if "curves" in data:
        curves = data["curves"]
        frame = bayesian_curves(
            params,
            float(curves["r_hat"]),
            int(curves["N1"]),
            int(curves["Nk"]),
            {name: Prior.from_dict(prior) for name, prior in curves["priors"].items()},
            args.grid or DEFAULT_CURVE_GRID,
        )
        _emit(args, {"curves": [name for name in frame.columns if name != "radius"]}, frame)
        return 0

    radii = scenario_radii(int(data["scenario"]), _scenario_inputs(data.get("inputs", {})), params)
    _emit(args, {"radii": radii.tolist()})
    return 0


def _single(values: Optional[List[float]], default: float) -> float:
    return values[0] if values else default


def cmd_portfolio(args: argparse.Namespace) -> int:
    """
    Input: {"ambiguity": ..., "rho": ..., "eta": ...}. Without --input, the
    two sensitivity sources are drawn with --seed and --samples and the radii
    follow from --lambda and --m.
    """

    data = _load_input(args, required=False)
    settings = resolve_settings(None, args.backend or "highs")

    if data:
        amb = _ambiguity(data, args)
    else:
        target_seed, source_seed = split_seeds(args.seed, 0, 2)
        target = DiscreteDistribution.from_samples(
            generate_synthetic(DataModel.SENSITIVITY_TARGET, args.samples, target_seed)
        )
        source = DiscreteDistribution.from_samples(
            generate_synthetic(DataModel.SENSITIVITY_SOURCE, args.samples, source_seed)
        )
        radii = radii_from_lambda_m(
            _single(args.lam, 0.5), _single(args.m, 0.01), l1_distance(target, source, settings)
        )
        amb = AmbiguitySpec.of([target, source], radii)

    spec = PortfolioSpec(amb, rho=data.get("rho", args.rho), eta=data.get("eta", args.eta))
    solution = portfolio_solve(spec, settings)
    frame = pd.DataFrame(
        {"asset": np.arange(1, spec.dim + 1), "weight": solution.weights}
    )

    _emit(args, {"value": solution.value, "tau": solution.tau}, frame)
    return 0


def cmd_assortment(args: argparse.Namespace) -> int:
    """
    Input: {"ambiguity": ..., "prices": [...], "capacity": B}. Without
    --input, demand samples from the two existing stores in regions S and C
    form the sources and product i sells at 0.01 i. With --experiment the
    input is an AssortmentExperimentConfig and the full comparison runs.
    """

    if args.experiment:
        return _assortment_experiment(args)

    data = _load_input(args, required=False)
    settings = resolve_settings(None, args.backend or "highs")

    if data:
        amb = _ambiguity(data, args)
        prices = np.array(data["prices"], dtype=float)
        capacity = int(data["capacity"])
    else:
        samples = args.samples or DEFAULT_ASSORTMENT_SAMPLES
        sources = [
            DiscreteDistribution.from_samples(generate_demand(region, samples, args.products, seed))
            for region, seed in zip(SOURCE_REGIONS, split_seeds(args.seed, 0, 2))
        ]
        radii = radii_from_lambda_m(
            _single(args.lam, 0.5), _single(args.m, 0.01), l1_distance(*sources, settings)
        )
        amb = AmbiguitySpec.of(sources, radii)
        prices = assortment_prices(args.products)
        capacity = args.capacity

    solution = assortment_solve(AssortmentSpec(prices, capacity, amb), settings)
    _emit(
        args,
        {"selection": [i + 1 for i in solution.selection], "revenue": solution.revenue},
    )
    return 0


def _override_grids(data: Dict, args: argparse.Namespace):
    data.setdefault("seed", args.seed)
    data.setdefault("backend", args.backend or "highs")
    for key, values in (("eps_grid", args.eps), ("lambdas", args.lam), ("ms", args.m)):
        if values is not None:
            data[key] = values
    if args.workers is not None:
        data["workers"] = args.workers


def _assortment_experiment(args: argparse.Namespace) -> int:
    data = _load_input(args, required=False)
    _override_grids(data, args)
    data.setdefault("products", args.products)
    data.setdefault("capacity", args.capacity)
    if args.samples is not None:
        data["source_samples"] = [args.samples, args.samples]
    if args.runs is not None:
        data["runs"] = args.runs
    if args.test_samples is not None:
        data["test_samples"] = args.test_samples

    config = AssortmentExperimentConfig.from_dict(data)

    if args.record:
        connect_db()

    with RunningExperiment(
        config.name, config.to_dict(), _alert_targets(args), record=args.record
    ) as run:
        report = run_assortment_experiment(config, run)

    _emit(args, {"experiment": config.name, "version": run.version}, report.table())
    if not args.out:
        print(format_table(report.summary))
    return 0


def _alert_targets(args: argparse.Namespace) -> List[AlertTarget]:
    targets: List[AlertTarget] = []
    if args.notify_webhook:
        targets.append(AlertWebhookTarget(args.notify_webhook))
    if args.notify_slack:
        targets.append(SlackAlertTarget(args.notify_slack))
    return targets


def cmd_backtest(args: argparse.Namespace) -> int:
    """
    Input: an ExperimentConfig. With --regional TARGET SOURCE the sector
    index study runs once per --target-samples size instead, each size
    recorded as its own experiment.
    """

    data = _load_input(args, required=False)
    _override_grids(data, args)
    if args.replications is not None:
        data["replications"] = args.replications

    config = ExperimentConfig.from_dict(data)

    if args.record:
        connect_db()

    if args.regional:
        target, source = args.regional
        sizes = args.target_samples or list(REGIONAL_TARGET_SIZES)
        table = run_regional_study(
            target, source, sizes, config, _alert_targets(args), record=args.record
        )
        _emit(args, {"experiment": f"regional-{source}-{target}", "target_samples": sizes}, table)
        if not args.out:
            print(format_table(table))
        return 0

    with RunningExperiment(
        config.name, config.to_dict(), _alert_targets(args), record=args.record
    ) as run:
        report = run_backtest(config, run)

    _emit(args, {"experiment": config.name, "version": run.version}, report.table())
    if not args.out:
        print(format_table(report.summary))
    return 0


def cmd_bias_demo(args: argparse.Namespace) -> int:
    result = barycenter_bias_demo(
        means=tuple(args.means), sigma=args.sigma, N=args.samples, runs=args.runs, seed=args.seed
    )
    frame = pd.DataFrame({"run": np.arange(len(result.variances)), "variance": result.variances})

    summary = asdict(result)
    summary.pop("variances")
    _emit(args, summary, frame)
    return 0


def cmd_sensitivity(args: argparse.Namespace) -> int:
    data = _load_input(args, required=False)
    data.setdefault("seed", args.seed)
    data.setdefault("samples", args.samples)
    data.setdefault("backend", args.backend or "highs")
    if args.lam is not None:
        data["lambdas"] = args.lam
    if args.m is not None:
        data["ms"] = args.m

    config = SensitivityConfig.from_dict(data)
    frame = sensitivity_sweep(config)

    _emit(args, {"rows": len(frame)}, frame)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    connect_db()
    print(generate_experiment_summary_report(args.name, args.version))
    return 0


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=str, default=None, help="JSON input file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=str, default=None, help="CSV output path")
    common.add_argument("--eps", type=float, nargs="+", default=None, help="Radii override")
    common.add_argument("--lambda", dest="lam", type=float, nargs="+", default=None)
    common.add_argument("--m", type=float, nargs="+", default=None)
    common.add_argument("--grid", type=float, nargs="+", default=None)
    common.add_argument("--backend", type=str, choices=["simplex", "highs"], default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def _add_recording(command: argparse.ArgumentParser):
    command.add_argument("--workers", type=int, default=None)
    command.add_argument("--record", action="store_true", help="Store results in mosaic.db")
    command.add_argument("--notify-webhook", type=str, default=None)
    command.add_argument("--notify-slack", type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="mosaic", description="Multi-source Wasserstein distributionally robust optimization."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        command = sub.add_parser(name, parents=[common], help=help)
        command.set_defaults(func=func)
        return command

    add("ot", cmd_ot, "Optimal transport cost and plan.")
    add("barycenter", cmd_barycenter, "Optimal transport barycenter.")
    add("dro-value", cmd_dro_value, "Worst-case expected loss over intersecting balls.")
    add("dro-worstcase", cmd_dro_worstcase, "Worst-case distribution.")
    add("dro-solve", cmd_dro_solve, "Minimize the worst-case expected loss over decisions.")
    add("calibrate", cmd_calibrate, "Ball radii or Bayesian significance curves.")

    portfolio = add("portfolio", cmd_portfolio, "Mean-CVaR portfolio over intersecting balls.")
    portfolio.add_argument("--samples", type=int, default=30)
    portfolio.add_argument("--rho", type=float, default=10.0)
    portfolio.add_argument("--eta", type=float, default=0.2)

    assortment = add("assortment", cmd_assortment, "Robust assortment selection.")
    assortment.add_argument("--samples", type=int, default=None, help="Samples per source")
    assortment.add_argument("--products", type=int, default=10)
    assortment.add_argument("--capacity", type=int, default=3)
    assortment.add_argument("--experiment", action="store_true", help="Run the out-of-sample comparison")
    assortment.add_argument("--runs", type=int, default=None)
    assortment.add_argument("--test-samples", type=int, default=None)
    _add_recording(assortment)

    backtest = add("backtest", cmd_backtest, "Synthetic out-of-sample backtest.")
    backtest.add_argument("--replications", type=int, default=None)
    backtest.add_argument(
        "--regional", nargs=2, metavar=("TARGET", "SOURCE"), choices=MARKETS, default=None
    )
    backtest.add_argument("--target-samples", type=int, nargs="+", default=None)
    _add_recording(backtest)

    bias = add("bias-demo", cmd_bias_demo, "Variance bias of empirical barycenters.")
    bias.add_argument("--means", type=float, nargs=2, default=[0.0, 1.0])
    bias.add_argument("--sigma", type=float, default=1.0)
    bias.add_argument("--samples", type=int, default=10)
    bias.add_argument("--runs", type=int, default=200)

    sensitivity = add("sensitivity", cmd_sensitivity, "Portfolio weights over (lambda, m).")
    sensitivity.add_argument("--samples", type=int, default=30)

    report = add("report", cmd_report, "Summary of a recorded backtest.")
    report.add_argument("--name", type=str, default="backtest")
    report.add_argument("--version", type=int, default=None)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except (MosaicError, OSError, ValueError, KeyError, dacite.DaciteError) as error:
        print(f"mosaic {args.command}: {type(error).__name__}: {error}", file=sys.stderr)
        return 1
