import datetime
import json
import logging
import os
import pathlib
from typing import Dict, List, Union

from peewee import (  # type: ignore
    CharField,
    DatabaseProxy,
    DateTimeField,
    FloatField,
    ForeignKeyField,
    IntegerField,
    Model,
    SqliteDatabase,
    TextField,
)

logger = logging.getLogger("mosaic")


db = DatabaseProxy()


class Experiment(Model):
    name = CharField()
    version = IntegerField()
    config = TextField(default="{}")
    runtime = FloatField(null=True)
    created_at = DateTimeField(default=datetime.datetime.now)

    class Meta:
        database = db
        table_name = "experiment"


class MethodResult(Model):
    experiment = ForeignKeyField(Experiment, backref="results")
    replication = IntegerField()
    method = CharField()
    expected_return = FloatField(null=True)
    std_dev = FloatField(null=True)
    sharpe = FloatField(null=True)
    hyperparameters = TextField(default="{}")
    created_at = DateTimeField(default=datetime.datetime.now)

    class Meta:
        database = db
        table_name = "method_result"


class SolverAlertRecord(Model):
    experiment = ForeignKeyField(Experiment, backref="alerts")
    kind = CharField()
    method = CharField()
    message = TextField()
    created_at = DateTimeField(default=datetime.datetime.now)

    class Meta:
        database = db
        table_name = "solver_alert"


TABLES = [Experiment, MethodResult, SolverAlertRecord]


def connect_db():
    db = init_db()
    db.connect(reuse_if_open=True)

    if not all(db.table_exists(table._meta.table_name) for table in TABLES):
        db.create_tables(TABLES)


def get_current_experiment(name: str) -> Union[Experiment, None]:
    experiment = (
        Experiment.select()
        .where(Experiment.name == name)
        .order_by(Experiment.version.desc())
        .limit(1)
    )

    if experiment:
        return experiment[0]

    return None


def get_method_results(experiment: Experiment) -> List[MethodResult]:
    return list(
        MethodResult.select()
        .where(MethodResult.experiment == experiment)
        .order_by(MethodResult.replication, MethodResult.method)
    )


def init_db() -> SqliteDatabase:
    test_mode = int(os.getenv("TESTING", "0"))

    if test_mode:
        database = SqliteDatabase(":memory:")
        logger.info("Using in-memory SQLite")
    else:
        BASE = pathlib.Path.cwd()
        database = SqliteDatabase(BASE / "mosaic.db")
        logger.info("Using disk-based SQLite")

    db.initialize(database)

    return db


def version_or_create_experiment(name: str, config: Dict = None) -> Experiment:
    current_experiment = get_current_experiment(name)

    if current_experiment:
        version = int(current_experiment.version) + 1
        logger.info(f"Experiment found. Creating new version: {version}.")
    else:
        version = 1
        logger.info("Experiment not found. Creating new experiment.")

    experiment = Experiment(
        name=name, version=version, config=json.dumps(config or {}, sort_keys=True)
    )
    experiment.save()

    return experiment
