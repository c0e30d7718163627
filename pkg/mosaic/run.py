import json
import logging
import traceback
from time import perf_counter
from typing import Dict, List, Optional, Sequence

import numpy as np

from mosaic.alerts import Alert, AlertTarget, ExperimentException, SolverAlert, alert_kind
from mosaic.db import Experiment, MethodResult, SolverAlertRecord, version_or_create_experiment
from mosaic.stats import MethodOutcome

logger = logging.getLogger("mosaic")


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


class RunningExperiment(object):
    """
    Times an experiment, versions it in the database when `record` is set,
    collects solver alerts and method results, and on exit sends one alert
    to every target if anything was raised or collected.
    """

    name: str
    experiment: Optional[Experiment]
    alerts: List[SolverAlert]
    targets: Sequence[AlertTarget]

    def __init__(
        self,
        name: str,
        config: Dict,
        targets: Sequence[AlertTarget] = (),
        record: bool = True,
    ):
        self.name = name
        self.config = config
        self.targets = targets
        self.record = record
        self.alerts = []
        self.runtime: Optional[float] = None

        if self.record:
            self.experiment = version_or_create_experiment(name, config)
            logger.info(f"Recording experiment '{name}' as version {self.experiment.version}.")
        else:
            self.experiment = None

    @property
    def version(self) -> int:
        return int(self.experiment.version) if self.experiment else 0

    def add_alert(self, method: str, error: Exception) -> SolverAlert:
        solver_alert = SolverAlert(kind=alert_kind(error).value, method=method, message=str(error))
        self.alerts.append(solver_alert)
        logger.warning(f"{method}: {solver_alert.kind} ({solver_alert.message})")

        if self.experiment:
            SolverAlertRecord.create(
                experiment=self.experiment,
                kind=solver_alert.kind,
                method=method,
                message=solver_alert.message,
            )

        return solver_alert

    def record_result(self, outcome: MethodOutcome):
        if not self.experiment:
            return

        values = {key: _finite_or_none(value) for key, value in outcome.metrics.as_record().items()}
        MethodResult.create(
            experiment=self.experiment,
            replication=outcome.replication,
            method=outcome.method,
            **values,
            hyperparameters=json.dumps(outcome.hyperparameters, sort_keys=True),
        )

    def __enter__(self):
        self.time_start = perf_counter()
        return self

    def __exit__(self, type, value, tb):
        time_end = perf_counter()
        self.runtime = time_end - self.time_start

        if self.experiment:
            self.experiment.runtime = self.runtime
            self.experiment.save()

        logger.info(f"Elapsed experiment time in seconds: {self.runtime}")

        experiment_exception = None

        if type is not None:
            logger.exception(f"Exception occurred during the experiment: {value}")
            experiment_exception = ExperimentException(
                message=str(value),
                traceback="\n".join(traceback.format_exception(type, value, tb)),
            )

        alert = Alert(self.name, self.version, self.alerts, experiment_exception)

        if len(alert.alerts) > 0 or alert.exception is not None:
            for target in self.targets:
                target.send_alert(alert)

        return False
