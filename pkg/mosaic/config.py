import logging
import os
from dataclasses import dataclass, replace

import dacite  # type: ignore

logger = logging.getLogger("mosaic")

MOSAIC_LP_BACKEND_VAR = "MOSAIC_LP_BACKEND"
MOSAIC_LP_MAX_ROWS_VAR = "MOSAIC_LP_MAX_ROWS"
MOSAIC_LP_MAX_COLUMNS_VAR = "MOSAIC_LP_MAX_COLUMNS"
MOSAIC_LP_MAX_ITERATIONS_VAR = "MOSAIC_LP_MAX_ITERATIONS"

BACKENDS = ("simplex", "highs")


@dataclass(frozen=True)
class SolverSettings:
    pivot_tol: float = 1e-9
    feas_tol: float = 1e-7
    opt_tol: float = 1e-7
    stall_limit: int = 50  # degenerate pivots before Bland's rule
    refactor_interval: int = 64
    max_iterations: int = 200_000
    max_rows: int = 5_000
    max_columns: int = 20_000
    max_subsets: int = 100_000
    max_scenarios: int = 100_000
    backend: str = "simplex"

    def with_backend(self, backend: str) -> "SolverSettings":
        if backend not in BACKENDS:
            raise ValueError(f"Unknown LP backend '{backend}'. Use one of {BACKENDS}")
        return replace(self, backend=backend)


def load_settings() -> SolverSettings:
    settings = SolverSettings()

    backend = os.getenv(MOSAIC_LP_BACKEND_VAR)
    if backend:
        settings = settings.with_backend(backend)
        logger.info(f"Using LP backend '{backend}' from {MOSAIC_LP_BACKEND_VAR}")

    overrides = {}
    for var, field_name in [
        (MOSAIC_LP_MAX_ROWS_VAR, "max_rows"),
        (MOSAIC_LP_MAX_COLUMNS_VAR, "max_columns"),
        (MOSAIC_LP_MAX_ITERATIONS_VAR, "max_iterations"),
    ]:
        value = os.getenv(var)
        if value:
            overrides[field_name] = int(value)

    if overrides:
        settings = replace(settings, **overrides)

    return settings


def resolve_settings(settings: SolverSettings = None, backend: str = None):
    settings = settings or load_settings()
    if backend:
        settings = settings.with_backend(backend)
    return settings


# JSON numbers such as `1` hydrate float fields
DACITE_CONFIG = dacite.Config(type_hooks={float: float})
