from __future__ import annotations

from datetime import timedelta
from itertools import combinations

import numpy as np
import pytest

from gaugefuse_core.errors import ContractViolation, GridRangeError
from gaugefuse_core.grid import CellIndex, GridSpec, Lattice, cell_corners, cell_of, iter_cells
from gaugefuse_fusion.fusion import (
    Provenance,
    assemble_feature_grid,
    build_fused_series,
    fallback_corner_max,
    find_max_precip,
    find_max_precip_across_systems,
    fuse_precip_grid,
    provenance_summary,
)
from gaugefuse_fusion.versions import ALL_TRAINING_VERSIONS, BackgroundRole, DatasetVersion
from gaugefuse_ingest.channels import N_CHANNELS, PRECIP_CHANNEL
from gaugefuse_ingest.gridpack import GridSource
from gaugefuse_ingest.systems import INMET, SIRENES

from .fixtures import CELL_4_5, LATTICE, SPEC, T0, make_source, network_of

CELL = CellIndex(4, 5)
SIA = DatasetVersion.parse("ERA5+SIA")
ERA5 = DatasetVersion.parse("ERA5")


def _cell_network(readings: dict[str, list[float]]):
    """Stations of each system inside CELL reporting at T0."""
    stations = []
    hourly = []
    for system, values in readings.items():
        for i, value in enumerate(values):
            sid = f"{system}-{i}"
            stations.append((sid, system, CELL_4_5[0], CELL_4_5[1]))
            hourly.append((system, sid, T0, value))
    return network_of(SPEC, stations, hourly)


def _corner_source(values: tuple[float, float, float, float]):
    precip = np.zeros((LATTICE.nlat, LATTICE.nlon), dtype=np.float32)
    # CELL (4, 5) has corner nodes at lattice rows 5..6 and columns 6..7
    precip[5, 6], precip[5, 7], precip[6, 6], precip[6, 7] = values
    return make_source(2, precip=precip)


def test_find_max_precip_within_system() -> None:
    network = _cell_network({"Sirenes": [1.2, 7.5, 0.0]})
    assert find_max_precip(CELL, SIRENES, T0, network) == 7.5
    assert find_max_precip(CELL, SIRENES, T0 + timedelta(hours=1), network) is None
    assert find_max_precip(CellIndex(0, 0), SIRENES, T0, network) is None
    single = _cell_network({"INMET": [4.4]})
    assert find_max_precip(CELL, INMET, T0, single) == 4.4


def test_find_max_precip_across_systems() -> None:
    network = _cell_network({"Sirenes": [3.0], "INMET": [10.2], "AlertaRio": [8.8]})
    assert find_max_precip_across_systems(CELL, T0, SIA, network) == 10.2
    only_a = _cell_network({"AlertaRio": [2.1]})
    assert find_max_precip_across_systems(CELL, T0, SIA, only_a) == 2.1
    assert find_max_precip_across_systems(CELL, T0, ERA5, network) is None
    assert find_max_precip_across_systems(CELL, T0, SIA, None) is None


@pytest.mark.parametrize(
    ("corners", "expected"),
    [((0.1, 0.4, 0.2, 0.3), 0.4), ((0.0, 0.0, 0.0, 0.0), 0.0), ((2.0, 2.0, 2.0, 2.0), 2.0)],
)
def test_fallback_corner_max(corners, expected) -> None:
    bg = _corner_source(corners)
    assert fallback_corner_max(CELL, T0, bg, SPEC) == pytest.approx(expected)


def test_fallback_outside_time_axis() -> None:
    bg = make_source(2)
    with pytest.raises(GridRangeError):
        fallback_corner_max(CELL, T0 + timedelta(hours=2), bg, SPEC)


@pytest.mark.parametrize("cell", [CellIndex(-1, 0), CellIndex(0, -1), CellIndex(9, 0), CellIndex(0, 11)])
def test_fallback_rejects_cells_outside_grid(cell: CellIndex) -> None:
    bg = make_source(1)
    with pytest.raises(GridRangeError) as exc:
        fallback_corner_max(cell, T0, bg, SPEC)
    assert "out of range" in str(exc.value)


def test_fuse_station_dominates_and_falls_back() -> None:
    bg = _corner_source((0.7, 0.2, 0.1, 1.0))
    network = _cell_network({"AlertaRio": [62.0]})
    fused = fuse_precip_grid(T0, DatasetVersion.parse("ERA5+A"), bg, network, SPEC)
    assert fused.precip[CELL.row, CELL.col] == 62.0
    assert fused.provenance(CELL) is Provenance.STATION_FUSED

    quiet = fuse_precip_grid(T0, ERA5, bg, network, SPEC)
    assert quiet.precip[CELL.row, CELL.col] == pytest.approx(1.0)
    assert not quiet.station_fused.any()
    assert quiet.provenance(CellIndex(0, 0)) is Provenance.BACKGROUND_FALLBACK


def test_fuse_rejects_off_hour() -> None:
    with pytest.raises(ContractViolation):
        fuse_precip_grid(T0 + timedelta(minutes=30), ERA5, make_source(2), None, SPEC)


def test_feature_grid_channels() -> None:
    bg = make_source(2, precip=0.3)
    values = bg.values.copy()
    values[:, 7] = 5.5
    bg = GridSource(lattice=bg.lattice, t0=bg.t0, values=values, units=bg.units)
    network = _cell_network({"AlertaRio": [40.0]})
    version = DatasetVersion.parse("ERA5+A")
    feature = assemble_feature_grid(T0, version, bg, network, SPEC)
    fused = fuse_precip_grid(T0, version, bg, network, SPEC)
    assert feature.values.shape == (SPEC.n_rows, SPEC.n_cols, N_CHANNELS)
    np.testing.assert_array_equal(feature.values[..., PRECIP_CHANNEL], fused.precip.astype(np.float32))
    assert feature.values[CELL.row, CELL.col, PRECIP_CHANNEL] == 40.0
    assert (feature.values[..., 7] == np.float32(5.5)).all()
    # non-precip channels come from each cell's north-west node
    assert feature.values[0, 0, 3] == bg.values[0, 3, 1, 1]


def test_build_fused_series_order_and_determinism() -> None:
    bg = make_source(5, seed=4)
    network = _cell_network({"AlertaRio": [9.0]})
    version = DatasetVersion.parse("ERA5+A")
    first = build_fused_series(T0, 3, version, bg, network, SPEC)
    assert [fused.timestamp for _, fused in first] == [T0 + timedelta(hours=h) for h in range(3)]
    again = build_fused_series(T0, 3, version, bg, network, SPEC)
    for (f1, g1), (f2, g2) in zip(first, again, strict=True):
        assert f1.values.tobytes() == f2.values.tobytes()
        assert g1.precip.tobytes() == g2.precip.tobytes()
    assert build_fused_series(T0, 0, version, bg, network, SPEC) == []
    with pytest.raises(GridRangeError):
        build_fused_series(T0, 6, version, bg, network, SPEC)


def test_background_only_summary_is_all_fallback() -> None:
    bg = make_source(4)
    pairs = build_fused_series(T0, 4, ERA5, bg, _cell_network({"AlertaRio": [9.0]}), SPEC)
    summary = provenance_summary([fused for _, fused in pairs], SPEC)
    assert summary.hours == 4
    assert summary.station_fused_fraction == 0.0
    assert summary.background_fallback_fraction == 1.0


def test_training_versions_follow_table_order() -> None:
    labels = [version.label for version in ALL_TRAINING_VERSIONS]
    assert labels == [
        "ERA5",
        "ERA5+S",
        "ERA5+I",
        "ERA5+A",
        "ERA5+SI",
        "ERA5+SA",
        "ERA5+IA",
        "ERA5+SIA",
    ]
    assert DatasetVersion.parse("GFS+A").background is BackgroundRole.NWP
    assert DatasetVersion.parse("ERA5+AS").label == "ERA5+SA"


def _random_instance(rng: np.random.Generator, station_low: float = 0.0):
    rows, cols = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    spec = GridSpec(
        lat_north=0.0, lat_south=-0.25 * rows, lon_east=0.25 * cols, lon_west=0.0, n_rows=rows, n_cols=cols
    )
    lattice = Lattice(lat0=0.25, lon0=-0.25, dlat=-0.25, dlon=0.25, nlat=rows + 3, nlon=cols + 3)
    hours = int(rng.integers(1, 49))
    precip = rng.uniform(0.0, 5.0, size=(hours, lattice.nlat, lattice.nlon)).astype(np.float32)
    bg = make_source(hours, lattice=lattice, precip=precip)
    systems = ["Sirenes", "INMET", "AlertaRio"]
    stations = []
    for i in range(int(rng.integers(0, 21))):
        # eighth-degree positions land on cell edges now and then
        lat = -0.125 * int(rng.integers(-1, 2 * rows + 2))
        lon = 0.125 * int(rng.integers(-1, 2 * cols + 2))
        stations.append((f"s{i}", systems[int(rng.integers(0, 3))], lat, lon))
    readings = [
        (system, sid, T0 + timedelta(hours=h), float(rng.uniform(station_low, station_low + 60.0)))
        for sid, system, _, _ in stations
        for h in range(hours)
        if rng.random() < 0.7
    ]
    return spec, lattice, bg, stations, readings, hours


def _oracle(t, version, bg, lattice, stations, readings, spec):
    enabled = set(version.system_names())
    reported = {(sid, when): value for _, sid, when, value in readings}
    out = np.zeros(spec.shape)
    fused = np.zeros(spec.shape, dtype=bool)
    field = bg.precip(t)
    for cell in iter_cells(spec):
        values = [
            reported[(sid, t)]
            for sid, system, lat, lon in stations
            if system in enabled and cell_of(lat, lon, spec) == cell and (sid, t) in reported
        ]
        if values:
            out[cell.row, cell.col] = max(values)
            fused[cell.row, cell.col] = True
            continue
        corners = []
        for node in cell_corners(cell, spec):
            i = round((node.lat - lattice.lat0) / lattice.dlat)
            j = round((node.lon - lattice.lon0) / lattice.dlon)
            corners.append(float(field[i, j]))
        out[cell.row, cell.col] = max(corners)
    return out, fused


def test_fusion_matches_brute_force_oracle() -> None:
    rng = np.random.default_rng(2024)
    for _ in range(200):
        spec, lattice, bg, stations, readings, hours = _random_instance(rng)
        network = network_of(spec, stations, readings)
        version = ALL_TRAINING_VERSIONS[int(rng.integers(0, len(ALL_TRAINING_VERSIONS)))]
        for h in rng.choice(hours, size=min(hours, 6), replace=False):
            t = T0 + timedelta(hours=int(h))
            got = fuse_precip_grid(t, version, bg, network, spec)
            expected, fused = _oracle(t, version, bg, lattice, stations, readings, spec)
            np.testing.assert_array_equal(got.precip, expected)
            np.testing.assert_array_equal(got.station_fused, fused)


def test_fusion_monotone_in_enabled_systems() -> None:
    rng = np.random.default_rng(99)
    # station readings sit above every background value, as in heavy-rain cells
    spec, _, bg, stations, readings, hours = _random_instance(rng, station_low=5.0)
    network = network_of(spec, stations, readings)
    for h in range(hours):
        t = T0 + timedelta(hours=h)
        grids = {v.label: fuse_precip_grid(t, v, bg, network, spec) for v in ALL_TRAINING_VERSIONS}
        for small, large in combinations(ALL_TRAINING_VERSIONS, 2):
            if set(small.system_names()) <= set(large.system_names()):
                a, b = grids[small.label], grids[large.label]
                assert (a.precip <= b.precip).all()
                assert (a.station_fused <= b.station_fused).all()


def test_dominance_over_in_cell_readings() -> None:
    rng = np.random.default_rng(5)
    spec, _, bg, stations, readings, hours = _random_instance(rng)
    network = network_of(spec, stations, readings)
    for system, sid, t, value in readings:
        cell = network.cells.get(sid)
        if cell is None:
            continue
        fused = fuse_precip_grid(t, SIA, bg, network, spec)
        assert fused.precip[cell.row, cell.col] >= value
        assert fused.provenance(cell) is Provenance.STATION_FUSED
