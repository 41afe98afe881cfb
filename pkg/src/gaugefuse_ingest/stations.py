from __future__ import annotations

import csv
import io
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from gaugefuse_core.errors import ConfigError, ContractViolation, DataFormatError
from gaugefuse_core.grid import CellIndex, GridSpec, cell_of
from gaugefuse_core.origin import Origin
from gaugefuse_ingest.systems import DEFAULT_REGISTRY, StationSystem, SystemRegistry

logger = logging.getLogger(__name__)

CATALOG_COLUMNS = ["station_id", "system", "lat", "lon", "tz_offset_minutes"]
OBSERVATION_COLUMNS = ["station_id", "timestamp_iso8601_local", "precipitation_mm"]

_EXPLICIT_OFFSET = r"(?:Z|[+-]\d{2}:?\d{2})$"
_ONE_HOUR = pd.Timedelta(hours=1)


@dataclass(frozen=True)
class Station:
    station_id: str
    system: str
    lat: float
    lon: float
    tz_offset_minutes: int


@dataclass(frozen=True)
class StationObservation:
    station_id: str
    system: StationSystem
    lat: float
    lon: float
    timestamp: datetime
    precipitation: float


@dataclass(frozen=True)
class RowError:
    line: int
    message: str

    def format(self, source: str) -> str:
        return f"{Origin(source, self.line).format()}: {self.message}"


@dataclass
class StationCatalog:
    stations: dict[str, Station] = field(default_factory=dict)

    def __contains__(self, station_id: str) -> bool:
        return station_id in self.stations

    def __getitem__(self, station_id: str) -> Station:
        return self.stations[station_id]

    def __len__(self) -> int:
        return len(self.stations)

    def of_system(self, system: str) -> list[Station]:
        return [s for s in self.stations.values() if s.system == system]

    def systems(self) -> set[str]:
        return {s.system for s in self.stations.values()}


def _read_csv(
    path: Path, expected: list[str], ragged: list[RowError] | None = None
) -> pd.DataFrame:
    """Read ``path`` as strings, indexed by source line number.

    Rows with the wrong field count go to ``ragged`` when given, else raise.
    """
    try:
        reader = csv.reader(io.StringIO(path.read_text(encoding="utf-8")))
        rows = [(reader.line_num, row) for row in reader]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DataFormatError(f"unable to read CSV: {exc}", origin=Origin(str(path))) from exc
    rows = [(line, row) for line, row in rows if any(cell.strip() for cell in row)]
    if not rows:
        raise DataFormatError(
            f"missing header, expected {','.join(expected)}", origin=Origin(str(path), 1)
        )
    header_line, header = rows[0]
    columns = [c.strip() for c in header]
    if columns != expected:
        raise DataFormatError(
            f"malformed header: got {','.join(columns)}",
            origin=Origin(str(path), header_line),
            hint=f"expected {','.join(expected)}",
        )
    lines: list[int] = []
    body: list[list[str]] = []
    for line, row in rows[1:]:
        if len(row) == len(expected):
            lines.append(line)
            body.append([cell.strip() for cell in row])
            continue
        message = f"expected {len(expected)} fields, got {len(row)}"
        if ragged is None:
            raise DataFormatError(message, origin=Origin(str(path), line))
        ragged.append(RowError(line, message))
    return pd.DataFrame(body, columns=expected, index=pd.Index(lines, dtype="int64"), dtype=str)


def load_station_catalog(path: Path, registry: SystemRegistry = DEFAULT_REGISTRY) -> StationCatalog:
    frame = _read_csv(path, CATALOG_COLUMNS)
    catalog = StationCatalog()
    for line, row in zip(frame.index, frame.itertuples(index=False), strict=True):
        origin = Origin(str(path), int(line))
        if row.system not in registry:
            known = ", ".join(system.name for system in registry)
            raise ConfigError(
                f"unknown station system '{row.system}'", origin=origin, hint=f"known: {known}"
            )
        try:
            lat = float(row.lat)
            lon = float(row.lon)
            tz = int(row.tz_offset_minutes)
        except ValueError as exc:
            raise DataFormatError(f"bad catalog row: {exc}", origin=origin) from exc
        if not (np.isfinite(lat) and np.isfinite(lon)):
            raise DataFormatError("non-finite station coordinates", origin=origin)
        if row.station_id in catalog.stations:
            raise DataFormatError(f"duplicate station id '{row.station_id}'", origin=origin)
        catalog.stations[row.station_id] = Station(row.station_id, row.system, lat, lon, tz)
    logger.info("loaded %d stations from %s", len(catalog), path)
    return catalog


@dataclass
class ObservationTable:
    """Readings of one system in frame form: ``station_id``, ``timestamp`` (UTC), ``precipitation``."""

    system: StationSystem
    catalog: StationCatalog
    frame: pd.DataFrame
    errors: list[RowError] = field(default_factory=list)
    source: str = "<input>"

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def observations(self) -> list[StationObservation]:
        out: list[StationObservation] = []
        for row in self.frame.itertuples(index=False):
            station = self.catalog[row.station_id]
            out.append(
                StationObservation(
                    station_id=row.station_id,
                    system=self.system,
                    lat=station.lat,
                    lon=station.lon,
                    timestamp=row.timestamp.to_pydatetime(),
                    precipitation=float(row.precipitation),
                )
            )
        return out


def _empty_frame() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "station_id": pd.Series(dtype=str),
            "timestamp": pd.Series(dtype="datetime64[ns, UTC]"),
            "precipitation": pd.Series(dtype=float),
        }
    )


def _to_utc(local: pd.Series, offsets: pd.Series) -> pd.Series:
    explicit = local.str.contains(_EXPLICIT_OFFSET, regex=True).astype(bool)
    out = pd.Series(pd.NaT, index=local.index, dtype="datetime64[ns, UTC]")
    if explicit.any():
        out[explicit] = pd.to_datetime(
            local[explicit], utc=True, errors="coerce", format="ISO8601"
        )
    naive = ~explicit
    if naive.any():
        wall = pd.to_datetime(local[naive], errors="coerce", format="ISO8601")
        shifted = wall - pd.to_timedelta(offsets[naive], unit="min")
        out[naive] = shifted.dt.tz_localize("UTC")
    return out


def parse_station_observations(
    path: Path,
    system: StationSystem,
    catalog: StationCatalog,
) -> ObservationTable:
    """Parse one observation CSV of ``system``.

    Timestamps without an explicit offset are read as station-local wall time and
    shifted to UTC with the catalog offset. Bad rows are collected, not raised.
    """
    ragged: list[RowError] = []
    frame = _read_csv(path, OBSERVATION_COLUMNS, ragged)
    problems = pd.Series("", index=frame.index, dtype=object)

    def flag(mask: pd.Series, message: str) -> None:
        fresh = mask & (problems == "")
        problems[fresh] = message

    ids = frame["station_id"]
    known = ids.map(lambda sid: sid in catalog).astype(bool)
    flag(~known, "unknown station")
    foreign = ids.map(lambda sid: sid in catalog and catalog[sid].system != system.name).astype(bool)
    flag(foreign, f"station does not belong to system {system.name}")

    precip = pd.to_numeric(frame["precipitation_mm"], errors="coerce").astype(float)
    flag(~np.isfinite(precip), "non-numeric precipitation")
    flag(precip < 0, "negative precipitation")

    offsets = ids.map(
        lambda sid: catalog[sid].tz_offset_minutes if sid in catalog else system.timezone_offset
    ).astype("int64")
    stamps = _to_utc(frame["timestamp_iso8601_local"], offsets)
    flag(stamps.isna(), "unparseable timestamp")
    cadence = pd.Timedelta(minutes=system.native_resolution)
    aligned = stamps.notna() & (stamps.dt.floor(cadence) == stamps)
    flag(stamps.notna() & ~aligned, f"timestamp not aligned to {system.native_resolution}-minute cadence")

    duplicated = pd.DataFrame({"id": ids, "t": stamps}).duplicated(keep="first")
    flag(duplicated & stamps.notna(), "duplicate reading for station and timestamp")

    bad = problems != ""
    flagged = [RowError(int(i), str(problems[i])) for i in frame.index[bad.to_numpy()]]
    errors = sorted(ragged + flagged, key=lambda err: err.line)
    for err in errors:
        logger.warning("%s", err.format(str(path)))

    good = ~bad
    parsed = pd.DataFrame(
        {
            "station_id": ids[good].astype(str),
            "timestamp": stamps[good],
            "precipitation": precip[good].astype(float),
        }
    ).reset_index(drop=True)
    if parsed.empty:
        parsed = _empty_frame()
    logger.info("parsed %d %s readings from %s (%d rejected)", len(parsed), system.name, path, len(errors))
    return ObservationTable(system=system, catalog=catalog, frame=parsed, errors=errors, source=str(path))


def _hourly_sums(frame: pd.DataFrame, system: StationSystem) -> pd.DataFrame:
    if frame.empty:
        return _empty_frame()
    if system.readings_per_hour == 1:
        on_hour = frame[frame["timestamp"].dt.floor(_ONE_HOUR) == frame["timestamp"]]
        return on_hour.sort_values(["station_id", "timestamp"]).reset_index(drop=True)
    # a reading stamped H-45m..H accumulates into hour H
    hours = frame["timestamp"].dt.ceil(_ONE_HOUR)
    grouped = frame.assign(hour=hours).groupby(["station_id", "hour"], sort=True)
    summary = grouped.agg(
        precipitation=("precipitation", "sum"),
        readings=("timestamp", "nunique"),
    ).reset_index()
    complete = summary["readings"] == system.readings_per_hour
    dropped = int((~complete).sum())
    if dropped:
        logger.warning("%s: dropped %d incomplete station-hours", system.name, dropped)
    out = summary[complete].rename(columns={"hour": "timestamp"})
    return out[["station_id", "timestamp", "precipitation"]].reset_index(drop=True)


def aggregate_to_hourly(obs: Sequence[StationObservation]) -> list[StationObservation]:
    """Sum one station's native readings into complete on-the-hour accumulations.

    An hour missing any sub-interval reading produces no output.
    """
    if not obs:
        return []
    first = obs[0]
    for item in obs:
        if item.station_id != first.station_id or item.system != first.system:
            raise ContractViolation(
                f"mixed stations in input: '{first.station_id}' and '{item.station_id}'"
            )
    frame = pd.DataFrame(
        {
            "station_id": [o.station_id for o in obs],
            "timestamp": pd.to_datetime([o.timestamp for o in obs], utc=True),
            "precipitation": [o.precipitation for o in obs],
        }
    )
    hourly = _hourly_sums(frame, first.system)
    return [
        StationObservation(
            station_id=first.station_id,
            system=first.system,
            lat=first.lat,
            lon=first.lon,
            timestamp=row.timestamp.to_pydatetime(),
            precipitation=float(row.precipitation),
        )
        for row in hourly.itertuples(index=False)
    ]


def hourly_table(table: ObservationTable) -> ObservationTable:
    return ObservationTable(
        system=table.system,
        catalog=table.catalog,
        frame=_hourly_sums(table.frame, table.system),
        errors=list(table.errors),
        source=table.source,
    )


class HourlyObservations:
    """Hourly readings indexed by system name, then hour, then station id."""

    def __init__(self) -> None:
        self._index: dict[str, dict[datetime, dict[str, float]]] = {}

    def add_table(self, table: ObservationTable) -> None:
        by_hour = self._index.setdefault(table.system.name, {})
        for row in table.frame.itertuples(index=False):
            stamp = row.timestamp.to_pydatetime()
            readings = by_hour.setdefault(stamp, {})
            if row.station_id in readings:
                raise DataFormatError(
                    f"overlapping hourly readings for station '{row.station_id}' at {stamp.isoformat()}",
                    origin=Origin(table.source),
                )
            readings[row.station_id] = float(row.precipitation)

    def add(self, system: str, station_id: str, timestamp: datetime, value: float) -> None:
        self._index.setdefault(system, {}).setdefault(timestamp, {})[station_id] = value

    def at(self, system: str, timestamp: datetime) -> Mapping[str, float]:
        return self._index.get(system, {}).get(timestamp, {})

    def station_series(self, system: str, station_id: str) -> dict[datetime, float]:
        return {
            stamp: readings[station_id]
            for stamp, readings in sorted(self._index.get(system, {}).items())
            if station_id in readings
        }

    def systems(self) -> set[str]:
        return set(self._index)


@dataclass
class StationNetwork:
    """Catalog, hourly readings and the cell of every in-region station."""

    spec: GridSpec
    catalog: StationCatalog
    hourly: HourlyObservations
    cells: dict[str, CellIndex] = field(init=False)

    def __post_init__(self) -> None:
        self.cells = {}
        outside = 0
        for station in self.catalog.stations.values():
            cell = cell_of(station.lat, station.lon, self.spec)
            if cell is None:
                outside += 1
                continue
            self.cells[station.station_id] = cell
        if outside:
            logger.info("%d catalog stations lie outside the region", outside)

    @classmethod
    def from_tables(
        cls, spec: GridSpec, catalog: StationCatalog, tables: Iterable[ObservationTable]
    ) -> StationNetwork:
        hourly = HourlyObservations()
        for table in tables:
            hourly.add_table(hourly_table(table))
        return cls(spec=spec, catalog=catalog, hourly=hourly)


def _require_on_hour(t: datetime) -> None:
    if t.minute or t.second or t.microsecond:
        raise ContractViolation(f"timestamp {t.isoformat()} is not on the hour")


def get_stations(
    system: StationSystem, cell: CellIndex, t: datetime, network: StationNetwork
) -> set[str]:
    """Stations of ``system`` inside ``cell`` with an hourly reading exactly at ``t``."""
    _require_on_hour(t)
    return {
        station_id
        for station_id in network.hourly.at(system.name, t)
        if network.cells.get(station_id) == cell
    }


def hour_range(start: datetime, hours: int) -> list[datetime]:
    return [start + timedelta(hours=i) for i in range(hours)]
