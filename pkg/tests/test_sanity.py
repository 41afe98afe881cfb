from __future__ import annotations

import numpy as np
import pytest

from gaugefuse_core.errors import ConfigError, DataFormatError
from gaugefuse_fusion.fusion import fuse_precip_grid
from gaugefuse_fusion.versions import DatasetVersion
from gaugefuse_verify.sanity import heatmap_frame, overlap_hours, spearman_grid, station_vs_grid

from .fixtures import CELL_4_5, LATTICE, ONE_HOUR, SPEC, T0, make_source, network_of


def _random_precip(nt: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 20.0, size=(nt, LATTICE.nlat, LATTICE.nlon)).astype(np.float32)


def test_source_against_itself_is_perfectly_correlated() -> None:
    source = make_source(24, precip=_random_precip(24, 1))
    grid = spearman_grid(source, source, SPEC)
    assert len(grid.hours) == 24
    assert grid.values.shape == SPEC.shape
    np.testing.assert_allclose(grid.values, 1.0, atol=1e-12)


def test_monotone_transform_keeps_rank_correlation() -> None:
    precip = _random_precip(30, 2)
    a = make_source(30, precip=precip)
    b = make_source(30, precip=np.sqrt(precip) * 3.0 + 0.5, role="nwp", seed=5)
    grid = spearman_grid(a, b, SPEC)
    np.testing.assert_allclose(grid.values, 1.0, atol=1e-12)

    frame = grid.to_frame()
    assert list(frame.columns) == ["row", "col", "spearman"]
    assert len(frame) == SPEC.n_rows * SPEC.n_cols


def test_partial_overlap_and_window_clipping() -> None:
    a = make_source(10, precip=_random_precip(10, 3))
    b = make_source(10, t0=T0 + 4 * ONE_HOUR, precip=_random_precip(10, 4))
    assert overlap_hours(a, b) == [T0 + h * ONE_HOUR for h in range(4, 10)]
    assert overlap_hours(a, b, start=T0 + 6 * ONE_HOUR, end=T0 + 7 * ONE_HOUR) == [
        T0 + 6 * ONE_HOUR,
        T0 + 7 * ONE_HOUR,
    ]
    assert len(spearman_grid(a, b, SPEC).hours) == 6


def test_disjoint_sources_are_an_error() -> None:
    a = make_source(3)
    b = make_source(3, t0=T0 + 3 * ONE_HOUR)
    with pytest.raises(DataFormatError) as exc:
        overlap_hours(a, b)
    assert "no overlapping hours" in str(exc.value)


def test_constant_cells_are_undefined() -> None:
    a = make_source(6, precip=2.0)
    b = make_source(6, precip=_random_precip(6, 5))
    assert np.isnan(spearman_grid(a, b, SPEC).values).all()


def test_station_beside_its_cell() -> None:
    source = make_source(3, precip=1.5)
    network = network_of(
        SPEC,
        [("A1", "AlertaRio", CELL_4_5[0], CELL_4_5[1]), ("A9", "AlertaRio", -30.0, -42.0)],
        [("AlertaRio", "A1", T0 + ONE_HOUR, 12.0)],
    )
    frame = station_vs_grid("A1", network, source, SPEC)
    assert list(frame.columns) == ["timestamp", "station_mm", "grid_mm"]
    assert frame["timestamp"].tolist() == ["2020-01-01T00:00:00Z", "2020-01-01T01:00:00Z", "2020-01-01T02:00:00Z"]
    assert frame["station_mm"].isna().tolist() == [True, False, True]
    assert frame["station_mm"][1] == 12.0
    assert frame["grid_mm"].tolist() == pytest.approx([1.5, 1.5, 1.5])

    with pytest.raises(ConfigError) as exc:
        station_vs_grid("ZZ", network, source, SPEC)
    assert "not found in the catalog" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        station_vs_grid("A9", network, source, SPEC)
    assert "outside the region" in str(exc.value)


def test_heatmap_frame_marks_provenance() -> None:
    network = network_of(
        SPEC,
        [("A1", "AlertaRio", CELL_4_5[0], CELL_4_5[1])],
        [("AlertaRio", "A1", T0, 33.0)],
    )
    fused = fuse_precip_grid(T0, DatasetVersion.parse("ERA5+A"), make_source(1, precip=0.5), network, SPEC)
    frame = heatmap_frame(fused, SPEC)
    assert len(frame) == 99
    row = frame[(frame["row"] == 4) & (frame["col"] == 5)].iloc[0]
    assert row["precip_mm_h"] == 33.0
    assert row["provenance"] == "station-fused"
    assert (frame["provenance"] == "background-fallback").sum() == 98
    assert frame["lat_center"].between(SPEC.lat_south, SPEC.lat_north).all()
