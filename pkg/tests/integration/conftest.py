import json
import os

import pytest

from mosaic.alerts import Alert, AlertTarget
from mosaic.db import connect_db
from mosaic.experiments import AssortmentExperimentConfig, ExperimentConfig


class RecordingAlertTarget(AlertTarget):
    def __init__(self):
        self.alerts = []

    def _alert_webhook_url(self) -> str:
        return ""

    def _format_alert(self, alert: Alert) -> str:
        return alert.experiment_name

    def send_alert(self, alert: Alert):
        self.alerts.append(alert)


@pytest.fixture(scope="function")
def db():
    os.environ["TESTING"] = "1"
    connect_db()


@pytest.fixture(scope="function")
def alert_target():
    return RecordingAlertTarget()


@pytest.fixture(scope="module")
def small_config():
    return ExperimentConfig(
        name="smoke",
        replications=3,
        lambdas=[0.0, 0.5, 1.0],
        ms=[0.01],
        eps_grid=[0.01, 1.0],
    )


@pytest.fixture(scope="module")
def small_assortment_config():
    return AssortmentExperimentConfig(
        name="assortment-smoke",
        runs=2,
        products=4,
        capacity=2,
        source_samples=[3, 4],
        validation_samples=3,
        test_samples=200,
        lambdas=[0.0, 0.5, 1.0],
        ms=[0.01],
        eps_grid=[0.1, 10.0],
    )


@pytest.fixture(scope="function")
def write_json(tmp_path):
    def write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return str(path)

    return write


@pytest.fixture(scope="module")
def crossing_pair_input():
    return {
        "distributions": [
            {"atoms": [[1, 1], [0, 0]], "probs": [0.5, 0.5]},
            {"atoms": [[0, 1], [1, 0]], "probs": [0.5, 0.5]},
        ],
        "weights": [1, 1],
        "cost": {"kind": "sq_euclidean"},
    }


@pytest.fixture(scope="module")
def midpoint_input():
    return {
        "ambiguity": {
            "sources": [
                {"center": {"atoms": [[0]], "probs": [1]}, "radius": 0.5},
                {"center": {"atoms": [[1]], "probs": [1]}, "radius": 0.5},
            ],
            "cost": {"norm": "l1", "p": 1},
        },
        "loss": {"pieces": [{"a": [1], "b": 0}]},
        "support": {"C": [[1], [-1]], "g": [1, 0]},
    }
