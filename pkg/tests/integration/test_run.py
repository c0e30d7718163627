import numpy as np
import pytest

from mosaic.db import Experiment, MethodResult, SolverAlertRecord, get_method_results
from mosaic.exceptions import IntersectionEmpty, SizeExceeded
from mosaic.run import RunningExperiment
from mosaic.stats import MethodOutcome, PortfolioMetrics


def test_experiments_are_versioned(db):
    with RunningExperiment("backtest", {"seed": 0}) as first:
        pass
    with RunningExperiment("backtest", {"seed": 1}) as second:
        pass

    assert Experiment.select().count() == 2
    assert (first.version, second.version) == (1, 2)
    assert second.experiment.runtime is not None
    assert second.experiment.config == '{"seed": 1}'


def test_unrecorded_run_stays_out_of_the_database(db):
    with RunningExperiment("backtest", {}, record=False) as run:
        run.add_alert("target", SizeExceeded("too many blocks"))
        run.record_result(MethodOutcome("target", 0, np.ones(1), PortfolioMetrics(1.0, 1.0, 1.0)))

    assert run.version == 0
    assert Experiment.select().count() == 0
    assert MethodResult.select().count() == 0
    assert len(run.alerts) == 1


def test_results_and_alerts_are_stored(db, alert_target):
    with RunningExperiment("backtest", {}, [alert_target]) as run:
        run.add_alert("multi_source", IntersectionEmpty("balls apart"))
        run.record_result(
            MethodOutcome("pooled", 0, np.ones(2) / 2, PortfolioMetrics(0.5, 2.0, 0.25), {"eps": 0.1})
        )
        run.record_result(
            MethodOutcome("pooled", 1, np.full(2, np.nan), PortfolioMetrics(np.nan, np.nan, np.nan))
        )

    results = get_method_results(run.experiment)
    assert [result.replication for result in results] == [0, 1]
    assert results[0].hyperparameters == '{"eps": 0.1}'
    assert results[1].expected_return is None

    record = SolverAlertRecord.get()
    assert (record.kind, record.method) == ("infeasible", "multi_source")

    assert len(alert_target.alerts) == 1
    assert alert_target.alerts[0].alerts[0].kind == "infeasible"
    assert alert_target.alerts[0].exception is None


def test_quiet_run_sends_nothing(db, alert_target):
    with RunningExperiment("backtest", {}, [alert_target]):
        pass

    assert alert_target.alerts == []


def test_exceptions_are_reported_and_raised(db, alert_target):
    with pytest.raises(RuntimeError):
        with RunningExperiment("backtest", {}, [alert_target]):
            raise RuntimeError("worker died")

    alert = alert_target.alerts[0]
    assert alert.exception.message == "worker died"
    assert "RuntimeError" in alert.exception.traceback
