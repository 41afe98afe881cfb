"""Cross-source comparisons used to sanity check inputs before fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime

import numpy as np
import pandas as pd

from gaugefuse_core.errors import ConfigError, DataFormatError
from gaugefuse_core.grid import (
    DEFAULT_SNAP_TOLERANCE_DEG,
    CornerLattice,
    GridSpec,
    cell_center,
    iter_cells,
)
from gaugefuse_fusion.fusion import FusedGrid
from gaugefuse_ingest.gridpack import GridSource, format_utc
from gaugefuse_ingest.stations import StationNetwork
from gaugefuse_verify.metrics import spearman

logger = logging.getLogger(__name__)


def overlap_hours(
    a: GridSource, b: GridSource, start: datetime | None = None, end: datetime | None = None
) -> list[datetime]:
    """Hours present in both sources, clipped to ``[start, end]`` when given."""
    hours = sorted(set(a.times()) & set(b.times()))
    if start is not None:
        hours = [t for t in hours if t >= start]
    if end is not None:
        hours = [t for t in hours if t <= end]
    if not hours:
        raise DataFormatError(
            f"no overlapping hours between [{format_utc(a.t0)}, {format_utc(a.end)}) "
            f"and [{format_utc(b.t0)}, {format_utc(b.end)})"
        )
    return hours


def corner_max_series(
    source: GridSource,
    spec: GridSpec,
    hours: list[datetime],
    *,
    tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> np.ndarray:
    """``(len(hours), rows, cols)`` corner-max precipitation of ``source``."""
    lattice = CornerLattice.build(spec, source.lattice, tolerance)
    return np.stack([lattice.corner_max(source.precip(t)) for t in hours]).astype(np.float64)


@dataclass(frozen=True, eq=False)
class SpearmanGrid:
    hours: list[datetime]
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        rows, cols = np.indices(self.values.shape)
        return pd.DataFrame(
            {
                "row": rows.ravel(),
                "col": cols.ravel(),
                "spearman": self.values.ravel(),
            }
        )


def spearman_grid(
    a: GridSource,
    b: GridSource,
    spec: GridSpec,
    start: datetime | None = None,
    end: datetime | None = None,
    *,
    tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> SpearmanGrid:
    """Per-cell Spearman correlation of two sources over their common hours.

    Cells where the correlation is undefined hold NaN.
    """
    hours = overlap_hours(a, b, start, end)
    left = corner_max_series(a, spec, hours, tolerance=tolerance)
    right = corner_max_series(b, spec, hours, tolerance=tolerance)
    values = np.full(spec.shape, np.nan)
    for cell in iter_cells(spec):
        rho = spearman(left[:, cell.row, cell.col], right[:, cell.row, cell.col])
        if rho is not None:
            values[cell.row, cell.col] = rho
    logger.info("spearman grid over %d common hours", len(hours))
    return SpearmanGrid(hours=hours, values=values)


def station_vs_grid(
    station_id: str,
    network: StationNetwork,
    source: GridSource,
    spec: GridSpec,
    *,
    tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> pd.DataFrame:
    """Hourly station readings beside the corner max of the station's cell."""
    if station_id not in network.catalog:
        raise ConfigError(f"station '{station_id}' not found in the catalog")
    cell = network.cells.get(station_id)
    if cell is None:
        raise ConfigError(f"station '{station_id}' lies outside the region")
    station = network.catalog[station_id]
    readings = network.hourly.station_series(station.system, station_id)
    hours = source.times()
    grid = corner_max_series(source, spec, hours, tolerance=tolerance)[:, cell.row, cell.col]
    return pd.DataFrame(
        {
            "timestamp": [format_utc(t) for t in hours],
            "station_mm": [readings.get(t, np.nan) for t in hours],
            "grid_mm": grid,
        }
    )


def heatmap_frame(fused: FusedGrid, spec: GridSpec) -> pd.DataFrame:
    """Plot-ready table of one fused precipitation grid."""
    records = []
    for cell in iter_cells(spec):
        center = cell_center(cell, spec)
        records.append(
            {
                "timestamp": format_utc(fused.timestamp),
                "row": cell.row,
                "col": cell.col,
                "lat_center": center.lat,
                "lon_center": center.lon,
                "precip_mm_h": float(fused.precip[cell.row, cell.col]),
                "provenance": fused.provenance(cell).value,
            }
        )
    return pd.DataFrame.from_records(records)
