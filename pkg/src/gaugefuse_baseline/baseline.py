from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from gaugefuse_core.errors import ConfigError, ContractViolation
from gaugefuse_ingest.channels import PRECIP_CHANNEL
from gaugefuse_window.windowing import Example

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24
_ONE_HOUR = timedelta(hours=1)


def persistence_forecast(X: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last input hour's precipitation for every lead -> ``(horizon, rows, cols, 1)``."""
    if X.ndim != 4:
        raise ContractViolation(f"input shape {X.shape} is not (k, rows, cols, channels)")
    last = X[-1, :, :, PRECIP_CHANNEL]
    return np.repeat(last[None, :, :, None], horizon, axis=0).astype(np.float32)


@dataclass(frozen=True, eq=False)
class ClimatologyTable:
    """Mean precipitation per hour of day (UTC) and cell, ``means[hour][row][col]``."""

    means: np.ndarray
    samples: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.means.shape[1], self.means.shape[2]

    def lookup(self, t: datetime) -> np.ndarray:
        return self.means[t.hour]


def fit_climatology(train: Sequence[Example]) -> ClimatologyTable:
    """Average training targets by the hour of day they verify at.

    Hours never seen in training fall back to the cell's all-hour mean.
    """
    if not train:
        raise ConfigError("empty training set: climatology needs at least one example")
    rows, cols = train[0].Y.shape[1:3]
    sums = np.zeros((HOURS_PER_DAY, rows, cols))
    counts = np.zeros(HOURS_PER_DAY, dtype=np.int64)
    for example in train:
        if example.Y.shape[1:3] != (rows, cols):
            raise ContractViolation(
                f"shape mismatch: training targets {example.Y.shape} vs grid {(rows, cols)}"
            )
        for lead, grid in enumerate(example.Y[..., 0], start=1):
            hour = (example.t0 + lead * _ONE_HOUR).hour
            sums[hour] += grid
            counts[hour] += 1
    overall = sums.sum(axis=0) / counts.sum()
    means = np.empty_like(sums)
    for hour in range(HOURS_PER_DAY):
        means[hour] = sums[hour] / counts[hour] if counts[hour] else overall
    missing = int((counts == 0).sum())
    if missing:
        logger.debug("climatology: %d hours of day unseen in training, using cell means", missing)
    return ClimatologyTable(means=np.maximum(means, 0.0), samples=counts)


def climatology_forecast(table: ClimatologyTable, t0: datetime, horizon: int) -> np.ndarray:
    """Table lookup at the hour of day of every lead -> ``(horizon, rows, cols, 1)``."""
    grids = [table.lookup(t0 + lead * _ONE_HOUR) for lead in range(1, horizon + 1)]
    return np.stack(grids)[..., None].astype(np.float32)


def forecast_examples(
    method: str,
    examples: Sequence[Example],
    horizon: int,
    table: ClimatologyTable | None = None,
) -> np.ndarray:
    """Stacked forecasts ``(n, horizon, rows, cols, 1)`` for ``examples``."""
    if not examples:
        raise ContractViolation("no examples to forecast")
    if method == "persistence":
        forecasts = [persistence_forecast(example.X, horizon) for example in examples]
    elif method == "climatology":
        if table is None:
            raise ConfigError("climatology forecasts need a fitted table")
        forecasts = [climatology_forecast(table, example.t0, horizon) for example in examples]
    else:
        raise ConfigError(f"unknown baseline method '{method}'", hint="use persistence or climatology")
    return np.stack(forecasts)
