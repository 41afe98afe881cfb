from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum

import numpy as np

from gaugefuse_core.errors import ContractViolation
from gaugefuse_core.grid import (
    DEFAULT_SNAP_TOLERANCE_DEG,
    CellIndex,
    CornerLattice,
    GridSpec,
    cell_corners,
)
from gaugefuse_fusion.versions import DatasetVersion
from gaugefuse_ingest.channels import PRECIP_CHANNEL
from gaugefuse_ingest.gridpack import GridSource
from gaugefuse_ingest.stations import StationNetwork, get_stations
from gaugefuse_ingest.systems import StationSystem

logger = logging.getLogger(__name__)

_ONE_HOUR = timedelta(hours=1)


class Provenance(Enum):
    STATION_FUSED = "station-fused"
    BACKGROUND_FALLBACK = "background-fallback"


@dataclass(frozen=True, eq=False)
class FusedGrid:
    timestamp: datetime
    precip: np.ndarray
    station_fused: np.ndarray

    def provenance(self, cell: CellIndex) -> Provenance:
        if self.station_fused[cell.row, cell.col]:
            return Provenance.STATION_FUSED
        return Provenance.BACKGROUND_FALLBACK


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    timestamp: datetime
    values: np.ndarray


def find_max_precip(
    cell: CellIndex, system: StationSystem, t: datetime, network: StationNetwork
) -> float | None:
    readings = network.hourly.at(system.name, t)
    stations = get_stations(system, cell, t, network)
    if not stations:
        return None
    return max(readings[station_id] for station_id in stations)


def find_max_precip_across_systems(
    cell: CellIndex, t: datetime, version: DatasetVersion, network: StationNetwork | None
) -> float | None:
    if network is None:
        return None
    found = [
        value
        for system in version.enabled_systems
        if (value := find_max_precip(cell, system, t, network)) is not None
    ]
    return max(found) if found else None


def _corners(
    spec: GridSpec, bg: GridSource, corners: CornerLattice | None, tolerance: float
) -> CornerLattice:
    if corners is not None:
        return corners
    return CornerLattice.build(spec, bg.lattice, tolerance)


def fallback_corner_max(
    cell: CellIndex,
    t: datetime,
    bg: GridSource,
    spec: GridSpec,
    *,
    tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> float:
    """Max background precipitation over the four corner nodes of ``cell``."""
    cell_corners(cell, spec)
    lattice = CornerLattice.build(spec, bg.lattice, tolerance)
    field = bg.precip(t)
    rows = lattice.lat_index[[cell.row, cell.row + 1]]
    cols = lattice.lon_index[[cell.col, cell.col + 1]]
    return float(field[np.ix_(rows, cols)].max())


def _station_max_grid(
    t: datetime, version: DatasetVersion, network: StationNetwork | None, shape: tuple[int, int]
) -> np.ndarray:
    out = np.full(shape, -np.inf)
    if network is None:
        return out
    for system in version.enabled_systems:
        for station_id, value in network.hourly.at(system.name, t).items():
            cell = network.cells.get(station_id)
            if cell is not None and value > out[cell.row, cell.col]:
                out[cell.row, cell.col] = value
    return out


def fuse_precip_grid(
    t: datetime,
    version: DatasetVersion,
    bg: GridSource,
    network: StationNetwork | None,
    spec: GridSpec,
    *,
    corners: CornerLattice | None = None,
    tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> FusedGrid:
    """Per cell: max of operating in-cell stations, else max of the background corners."""
    if t.minute or t.second or t.microsecond:
        raise ContractViolation(f"timestamp {t.isoformat()} is not on the hour")
    lattice = _corners(spec, bg, corners, tolerance)
    fallback = lattice.corner_max(bg.precip(t)).astype(np.float64)
    stations = _station_max_grid(t, version, network, spec.shape)
    fused = np.isfinite(stations)
    precip = np.where(fused, stations, fallback)
    return FusedGrid(timestamp=t, precip=precip, station_fused=fused)


def _feature_values(fused: FusedGrid, bg: GridSource, lattice: CornerLattice) -> np.ndarray:
    # channels 1..18 sampled at each cell's NW node
    sampled = lattice.northwest(bg.step(fused.timestamp))
    values = np.moveaxis(sampled, 0, -1).astype(np.float32)
    values[..., PRECIP_CHANNEL] = fused.precip
    return values


def assemble_feature_grid(
    t: datetime,
    version: DatasetVersion,
    bg: GridSource,
    network: StationNetwork | None,
    spec: GridSpec,
    *,
    corners: CornerLattice | None = None,
    tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> FeatureGrid:
    lattice = _corners(spec, bg, corners, tolerance)
    fused = fuse_precip_grid(t, version, bg, network, spec, corners=lattice)
    return FeatureGrid(timestamp=t, values=_feature_values(fused, bg, lattice))


def build_fused_series(
    start: datetime,
    hours: int,
    version: DatasetVersion,
    bg: GridSource,
    network: StationNetwork | None,
    spec: GridSpec,
    *,
    keep: Callable[[datetime], bool] | None = None,
    tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG,
) -> list[tuple[FeatureGrid, FusedGrid]]:
    """Fuse every hour of ``[start, start + hours)`` in chronological order.

    Hours rejected by ``keep`` are skipped without being fused.
    """
    if hours <= 0:
        return []
    bg.index_of(start)
    bg.index_of(start + (hours - 1) * _ONE_HOUR)
    lattice = _corners(spec, bg, None, tolerance)
    out: list[tuple[FeatureGrid, FusedGrid]] = []
    for i in range(hours):
        t = start + i * _ONE_HOUR
        if keep is not None and not keep(t):
            continue
        fused = fuse_precip_grid(t, version, bg, network, spec, corners=lattice)
        out.append((FeatureGrid(t, _feature_values(fused, bg, lattice)), fused))
    logger.info("fused %d hours of %s from %s", len(out), version.label, start.isoformat())
    return out


@dataclass(frozen=True, eq=False)
class ProvenanceSummary:
    hours: int
    station_fused_fraction: float
    per_cell: np.ndarray

    @property
    def background_fallback_fraction(self) -> float:
        return 1.0 - self.station_fused_fraction if self.hours else 0.0

    def to_dict(self) -> dict:
        return {
            "hours": self.hours,
            "station_fused_fraction": round(self.station_fused_fraction, 6),
            "background_fallback_fraction": round(self.background_fallback_fraction, 6),
            "per_cell_station_fused_fraction": np.round(self.per_cell, 6).tolist(),
        }


def provenance_summary(grids: Sequence[FusedGrid], spec: GridSpec) -> ProvenanceSummary:
    if not grids:
        return ProvenanceSummary(0, 0.0, np.zeros(spec.shape))
    stacked = np.stack([grid.station_fused for grid in grids])
    per_cell = stacked.mean(axis=0)
    return ProvenanceSummary(len(grids), float(stacked.mean()), per_cell)
