from __future__ import annotations

from datetime import UTC, datetime, timedelta
from pathlib import Path

import numpy as np

from gaugefuse_core.grid import GridSpec, Lattice
from gaugefuse_ingest.channels import N_CHANNELS, PRECIP_CHANNEL
from gaugefuse_ingest.gridpack import GridSource, format_utc, write_grid_pack
from gaugefuse_ingest.stations import (
    HourlyObservations,
    Station,
    StationCatalog,
    StationNetwork,
    hour_range,
)

# 9x11 cells of 0.25 degrees; the lattice adds one node of margin on every side
SPEC = GridSpec(lat_north=-22.0, lat_south=-24.25, lon_east=-41.25, lon_west=-44.0, n_rows=9, n_cols=11)
LATTICE = Lattice(lat0=-21.75, lon0=-44.25, dlat=-0.25, dlon=0.25, nlat=12, nlon=14)
REGION_SPEC = GridSpec(
    lat_north=-21.6998, lat_south=-23.8019, lon_east=-42.3568, lon_west=-45.0529, n_rows=9, n_cols=11
)
T0 = datetime(2020, 1, 1, tzinfo=UTC)
ONE_HOUR = timedelta(hours=1)

# (lat, lon) inside cell (4, 5) of SPEC
CELL_4_5 = (-23.1, -42.6)


def utc(*args: int) -> datetime:
    return datetime(*args, tzinfo=UTC)


def make_source(
    nt: int,
    *,
    t0: datetime = T0,
    lattice: Lattice = LATTICE,
    precip: float | np.ndarray = 0.0,
    role: str = "reanalysis",
    seed: int = 0,
) -> GridSource:
    """Random non-precip channels, ``precip`` broadcast into channel 0."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(-1.0, 1.0, size=(nt, N_CHANNELS, lattice.nlat, lattice.nlon)).astype(np.float32)
    values[:, PRECIP_CHANNEL] = precip
    units = ("mm/h",) + ("1",) * (N_CHANNELS - 1)
    return GridSource(lattice=lattice, t0=t0, values=values, units=units, role=role)


def write_pack(directory: Path, name: str, source: GridSource) -> Path:
    meta_path, _ = write_grid_pack(directory / name, source)
    return meta_path


def write_catalog(path: Path, rows: list[tuple[str, str, float, float, int]]) -> Path:
    lines = ["station_id,system,lat,lon,tz_offset_minutes"]
    lines += [f"{sid},{system},{lat},{lon},{tz}" for sid, system, lat, lon, tz in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_observations(path: Path, rows: list[tuple[str, str, float]]) -> Path:
    lines = ["station_id,timestamp_iso8601_local,precipitation_mm"]
    lines += [f"{sid},{stamp},{value}" for sid, stamp, value in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def quarter_hour_rows(station_id: str, hour: datetime, values: list[float]) -> list[tuple[str, str, float]]:
    """Four UTC-stamped readings accumulating into ``hour``."""
    stamps = [hour - timedelta(minutes=45 - 15 * i) for i in range(4)]
    return [(station_id, format_utc(t), v) for t, v in zip(stamps, values, strict=True)]


def network_of(
    spec: GridSpec,
    stations: list[tuple[str, str, float, float]],
    readings: list[tuple[str, str, datetime, float]],
) -> StationNetwork:
    """In-memory network from (id, system, lat, lon) and (system, id, hour, mm)."""
    catalog = StationCatalog(
        {sid: Station(sid, system, lat, lon, -180) for sid, system, lat, lon in stations}
    )
    hourly = HourlyObservations()
    for system, sid, t, value in readings:
        hourly.add(system, sid, t, value)
    return StationNetwork(spec=spec, catalog=catalog, hourly=hourly)


def write_project(
    root: Path,
    *,
    hours: int = 48,
    t0: datetime = T0,
    version: str = "ERA5+A",
    station_mm: float = 60.0,
    background_mm: float = 1.0,
    extra: str = "",
) -> Path:
    """A complete project: pack, catalog, AlertaRio readings and ``gaugefuse.toml``."""
    data = root / "data"
    data.mkdir(parents=True, exist_ok=True)
    write_pack(data, "era5", make_source(hours, t0=t0, precip=background_mm))
    write_pack(data, "gfs", make_source(hours, t0=t0, precip=background_mm, role="nwp", seed=1))
    write_catalog(data / "catalog.csv", [("A1", "AlertaRio", CELL_4_5[0], CELL_4_5[1], -180)])
    rows: list[tuple[str, str, float]] = []
    for t in hour_range(t0 + ONE_HOUR, hours - 1):
        rows += quarter_hour_rows("A1", t, [station_mm / 4] * 4)
    write_observations(data / "alertario.csv", rows)
    manifest = root / "gaugefuse.toml"
    manifest.write_text(
        f"""[grid]
lat_north = {SPEC.lat_north}
lat_south = {SPEC.lat_south}
lon_east = {SPEC.lon_east}
lon_west = {SPEC.lon_west}
n_rows = 9
n_cols = 11

[stations]
catalog = "data/catalog.csv"

[stations.observations]
AlertaRio = ["data/alertario.csv"]

[background]
train = ["data/era5.json"]
inference = ["data/gfs.json"]

[dataset]
version = "{version}"

[evaluation]
mask = [[4, 5], [4, 6], [5, 5]]

[output]
dir = "out"
{extra}""",
        encoding="utf-8",
    )
    return manifest
