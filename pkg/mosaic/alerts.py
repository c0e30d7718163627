import json
import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Union

import requests  # type: ignore

from mosaic.exceptions import (
    IntersectionEmpty,
    IterationBudgetExceeded,
    NumericalFailure,
    RecoveryDegenerate,
    SizeExceeded,
)

logger = logging.getLogger("mosaic")


class SolverAlertKind(Enum):
    INFEASIBLE = "infeasible"  # the transport balls do not intersect
    DEGENERATE = "degenerate"  # worst-case recovery failed
    NUMERICAL = "numerical"  # singular basis or iteration cap
    BUDGET = "budget"  # size or iteration budget exceeded


ALERT_KINDS = {
    IntersectionEmpty: SolverAlertKind.INFEASIBLE,
    RecoveryDegenerate: SolverAlertKind.DEGENERATE,
    NumericalFailure: SolverAlertKind.NUMERICAL,
    SizeExceeded: SolverAlertKind.BUDGET,
    IterationBudgetExceeded: SolverAlertKind.BUDGET,
}


def alert_kind(error: Exception) -> SolverAlertKind:
    for error_type, kind in ALERT_KINDS.items():
        if isinstance(error, error_type):
            return kind
    return SolverAlertKind.NUMERICAL


@dataclass
class SolverAlert:
    kind: str
    method: str
    message: str


@dataclass
class ExperimentException:
    message: str
    traceback: str


@dataclass
class Alert:
    experiment_name: str
    experiment_version: int
    alerts: List[SolverAlert] = field(default_factory=list)
    exception: Optional[ExperimentException] = None


@dataclass
class AlertOut:
    experiment_name: str
    experiment_version: int
    alerts: List[Dict[str, str]]
    exception: Optional[str]


def _alert_out(alert: Alert) -> AlertOut:
    return AlertOut(
        experiment_name=alert.experiment_name,
        experiment_version=alert.experiment_version,
        alerts=[asdict(solver_alert) for solver_alert in alert.alerts],
        exception=str(alert.exception.message) if alert.exception else None,
    )


class AlertTarget(ABC):
    @abstractmethod
    def _alert_webhook_url(self) -> str:
        pass

    @abstractmethod
    def _format_alert(self, alert: Alert) -> Union[str, Dict]:
        pass

    def send_alert(self, alert: Alert):
        pass


class AlertWebhookTarget(AlertTarget):
    def __init__(self, webhook_url: str):
        self.webhook_url = webhook_url

    def _alert_webhook_url(self) -> str:
        return self.webhook_url

    def _format_alert(self, alert: Alert) -> Dict:
        return asdict(_alert_out(alert))

    def send_alert(self, alert: Alert):
        if (alert.exception is None) and (len(alert.alerts) == 0):
            logger.error("Alert has no exception/solver alerts. Not sending")
            return

        formatted_alert = self._format_alert(alert)
        logger.info(formatted_alert)

        resp = requests.post(self._alert_webhook_url(), json=formatted_alert)

        if resp.ok:
            logger.info(f"Sent alert to {type(self).__name__}")
        else:
            logger.error(
                f"Failed to send alert to {type(self).__name__}. "
                + f"Code: {resp.status_code}. Body: {resp.text}"
            )


class TerminalAlertTarget(AlertTarget):
    """
    Output alert to the terminal
    """

    def _alert_webhook_url(self) -> str:
        return ""

    def _format_alert(self, alert: Alert) -> str:
        message = (
            f"\nSolver Alerts for version '{alert.experiment_version}' "
            f"of the '{alert.experiment_name}' experiment:\n"
        )

        for solver_alert in alert.alerts:
            message += (
                f"\n    Method: {solver_alert.method}"
                + f"\n    Alert Kind: {solver_alert.kind}"
                + f"\n    Message: {solver_alert.message}\n"
            )

        if alert.exception is not None:
            message += f"\n    Exception: {alert.exception.message}\n"

        return message

    def send_alert(self, alert: Alert):
        print(self._format_alert(alert))


class SlackAlertTarget(AlertWebhookTarget):
    """
    Output alert to a Slack Channel via a Slack Webhook

        Parameters:
            slack_webhook_path (str):
                - Slack Webhook path, the part after https://hooks.slack.com/services
                - FORMAT: /XXXXX/XXXXXX/XXXXXXXXXXXXXXXXXXXX
    """

    def __init__(self, slack_webhook_path: str):
        self.slack_webhook_path = slack_webhook_path

    def _alert_webhook_url(self) -> str:
        return f"https://hooks.slack.com/services{self.slack_webhook_path}"

    def _format_alert(self, alert: Alert) -> Dict[str, str]:
        return {"text": json.dumps(asdict(_alert_out(alert)))}
