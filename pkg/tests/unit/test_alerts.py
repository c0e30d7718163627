import json

import pytest

from mosaic import alerts
from mosaic.alerts import (
    Alert,
    AlertWebhookTarget,
    ExperimentException,
    SlackAlertTarget,
    SolverAlert,
    SolverAlertKind,
    TerminalAlertTarget,
    alert_kind,
)
from mosaic.exceptions import (
    IntersectionEmpty,
    IterationBudgetExceeded,
    NumericalFailure,
    RecoveryDegenerate,
    SizeExceeded,
)


class FakeResponse:
    ok = True
    status_code = 200
    text = ""


@pytest.fixture
def posts(monkeypatch):
    sent = []

    def post(url, json=None):
        sent.append((url, json))
        return FakeResponse()

    monkeypatch.setattr(alerts.requests, "post", post)
    return sent


@pytest.fixture
def alert():
    return Alert(
        "backtest",
        2,
        [SolverAlert(kind="infeasible", method="multi_source", message="balls apart")],
    )


@pytest.mark.parametrize(
    "error, kind",
    [
        (IntersectionEmpty("x"), SolverAlertKind.INFEASIBLE),
        (RecoveryDegenerate("x"), SolverAlertKind.DEGENERATE),
        (NumericalFailure("x"), SolverAlertKind.NUMERICAL),
        (SizeExceeded("x"), SolverAlertKind.BUDGET),
        (IterationBudgetExceeded("x"), SolverAlertKind.BUDGET),
    ],
)
def test_alert_kind(error, kind):
    assert alert_kind(error) == kind


def test_webhook_target(posts, alert):
    AlertWebhookTarget("https://example.com/hook").send_alert(alert)

    url, payload = posts[0]
    assert url == "https://example.com/hook"
    assert payload["experiment_version"] == 2
    assert payload["alerts"][0]["method"] == "multi_source"
    assert payload["exception"] is None


def test_webhook_skips_empty_alerts(posts):
    AlertWebhookTarget("https://example.com/hook").send_alert(Alert("backtest", 1))

    assert posts == []


def test_slack_target(posts, alert):
    SlackAlertTarget("/T000/B000/XXXX").send_alert(alert)

    url, payload = posts[0]
    assert url == "https://hooks.slack.com/services/T000/B000/XXXX"
    assert json.loads(payload["text"])["experiment_name"] == "backtest"


def test_terminal_target(capsys, alert):
    alert.exception = ExperimentException(message="worker died", traceback="")

    TerminalAlertTarget().send_alert(alert)

    out = capsys.readouterr().out
    assert "Method: multi_source" in out
    assert "Exception: worker died" in out
