import functools
import io
import operator
import pathlib
from typing import Union

import pandas as pd  # type: ignore

from mosaic.db import Experiment, MethodResult, SolverAlertRecord

FLOAT_FORMAT = "%.12g"


def generate_experiment_summary_report(name: str, version: int = None) -> str:
    clauses = [(Experiment.name == name)]
    if version:
        clauses.append((Experiment.version == version))

    experiment = (
        Experiment.select()
        .where(functools.reduce(operator.and_, clauses))
        .order_by(Experiment.version.desc())
        .limit(1)
        .prefetch(MethodResult, SolverAlertRecord)
    )[0]

    output_message = (
        f"\nSummary for version '{experiment.version}' of the '{experiment.name}' experiment:\n"
        + f"\n    Runtime: {experiment.runtime}"
        + f"\n    Config: {experiment.config}\n"
    )

    methods = sorted({result.method for result in experiment.results})
    for method in methods:
        results = [result for result in experiment.results if result.method == method]
        sharpes = [result.sharpe for result in results if result.sharpe is not None]
        means = [result.expected_return for result in results if result.expected_return is not None]

        output_message += (
            f"\n    Method: {method}"
            + f"\n    Replications: {len(results)}"
            + f"\n    Mean Return (%): {sum(means) / len(means) if means else None}"
            + f"\n    Mean Sharpe: {sum(sharpes) / len(sharpes) if sharpes else None}\n"
        )

    if experiment.alerts:
        output_message += f"\n    Solver Alerts: {len(experiment.alerts)}\n"
        for alert in experiment.alerts:
            output_message += f"\n        {alert.method} [{alert.kind}]: {alert.message}"
        output_message += "\n"

    return output_message


def to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def write_csv(frame: pd.DataFrame, path: Union[str, pathlib.Path]):
    """
    Writes without the index and with a fixed float format, so reading the
    file back and writing it again reproduces it byte for byte.
    """

    pathlib.Path(path).write_text(to_csv(frame))


def read_csv(path: Union[str, pathlib.Path]) -> pd.DataFrame:
    return pd.read_csv(path, sep=",")


def format_table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, float_format=lambda value: f"{value:.6g}")
