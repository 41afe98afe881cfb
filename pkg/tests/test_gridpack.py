from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from gaugefuse_core.errors import DataFormatError, GridRangeError
from gaugefuse_core.grid import Lattice
from gaugefuse_ingest.channels import CANONICAL_CHANNELS, N_CHANNELS, PRECIP_CHANNEL
from gaugefuse_ingest.gridpack import MAGIC, GridSource, load_grid_pack, pack_paths

from .fixtures import T0, make_source, utc, write_pack

SMALL = Lattice(lat0=-22.0, lon0=-44.0, dlat=-0.25, dlon=0.25, nlat=9, nlon=11)


def _rewrite_meta(meta_path, **changes) -> None:
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta.update(changes)
    meta_path.write_text(json.dumps(meta), encoding="utf-8")


def test_load_well_formed_pack(tmp_path) -> None:
    meta_path = write_pack(tmp_path, "era5", make_source(2, lattice=SMALL, precip=0.5))
    source = load_grid_pack(meta_path)
    assert source.nt == 2
    assert source.values.shape == (2, N_CHANNELS, 9, 11)
    assert source.times() == [T0, utc(2020, 1, 1, 1)]
    assert source.units[PRECIP_CHANNEL] == "mm/h"
    assert source.channels == CANONICAL_CHANNELS


def test_write_then_load_is_bit_exact(tmp_path) -> None:
    original = make_source(3, lattice=SMALL, precip=np.float32(1.25), seed=11)
    loaded = load_grid_pack(write_pack(tmp_path, "pack", original))
    assert loaded.values.tobytes() == original.values.tobytes()
    assert loaded.lattice == original.lattice
    assert loaded.t0 == original.t0


def test_pack_paths_accepts_either_file() -> None:
    assert pack_paths(Path("d/era5.gpk")) == (Path("d/era5.json"), Path("d/era5.gpk"))
    assert pack_paths(Path("d/era5")) == (Path("d/era5.json"), Path("d/era5.gpk"))


def test_short_payload_is_format_error(tmp_path) -> None:
    meta_path = write_pack(tmp_path, "era5", make_source(2, lattice=SMALL))
    _, payload = pack_paths(meta_path)
    payload.write_bytes(payload.read_bytes()[:-4])
    with pytest.raises(DataFormatError) as exc:
        load_grid_pack(meta_path)
    assert "sidecar declares" in str(exc.value)
    assert "error[GF3202]" in str(exc.value)


def test_bad_magic_is_format_error(tmp_path) -> None:
    meta_path = write_pack(tmp_path, "era5", make_source(1, lattice=SMALL))
    _, payload = pack_paths(meta_path)
    payload.write_bytes(b"XXXX" + payload.read_bytes()[len(MAGIC) :])
    with pytest.raises(DataFormatError) as exc:
        load_grid_pack(meta_path)
    assert "bad magic" in str(exc.value)


def test_non_finite_value_is_format_error(tmp_path) -> None:
    source = make_source(1, lattice=SMALL)
    values = source.values.copy()
    values[0, 3, 2, 2] = np.nan
    meta_path = write_pack(
        tmp_path,
        "era5",
        GridSource(lattice=source.lattice, t0=source.t0, values=values, units=source.units),
    )
    with pytest.raises(DataFormatError) as exc:
        load_grid_pack(meta_path)
    assert CANONICAL_CHANNELS[3].label in str(exc.value)


def test_precip_in_meters_becomes_mm(tmp_path) -> None:
    meta_path = write_pack(tmp_path, "era5", make_source(1, lattice=SMALL, precip=0.003))
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta["channels"][PRECIP_CHANNEL]["unit"] = "m"
    meta_path.write_text(json.dumps(meta), encoding="utf-8")
    source = load_grid_pack(meta_path)
    assert source.precip(T0)[0, 0] == pytest.approx(3.0, rel=1e-6)


def test_unsupported_precip_unit(tmp_path) -> None:
    meta_path = write_pack(tmp_path, "era5", make_source(1, lattice=SMALL))
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta["channels"][PRECIP_CHANNEL]["unit"] = "inch"
    meta_path.write_text(json.dumps(meta), encoding="utf-8")
    with pytest.raises(DataFormatError) as exc:
        load_grid_pack(meta_path)
    assert "unsupported precipitation unit 'inch'" in str(exc.value)


def test_channels_are_reordered_to_canonical(tmp_path) -> None:
    source = make_source(1, lattice=SMALL, precip=2.0)
    meta_path = write_pack(tmp_path, "era5", source)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    _, payload = pack_paths(meta_path)
    raw = np.frombuffer(payload.read_bytes()[len(MAGIC) :], dtype="<f4").reshape(1, N_CHANNELS, 9, 11)
    reversed_order = list(range(N_CHANNELS))[::-1]
    payload.write_bytes(MAGIC + np.ascontiguousarray(raw[:, reversed_order]).tobytes())
    meta["channels"] = [meta["channels"][i] for i in reversed_order]
    meta_path.write_text(json.dumps(meta), encoding="utf-8")

    loaded = load_grid_pack(meta_path)
    assert loaded.values.tobytes() == source.values.tobytes()


def test_missing_channel_and_sub_hourly_packs(tmp_path) -> None:
    meta_path = write_pack(tmp_path, "era5", make_source(1, lattice=SMALL))
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    _rewrite_meta(meta_path, channels=meta["channels"][:-1])
    with pytest.raises(DataFormatError) as exc:
        load_grid_pack(meta_path)
    assert "missing channel(s)" in str(exc.value)

    meta_path = write_pack(tmp_path, "gfs", make_source(1, lattice=SMALL))
    _rewrite_meta(meta_path, dt_hours=6)
    with pytest.raises(DataFormatError) as exc:
        load_grid_pack(meta_path)
    assert "only hourly packs" in str(exc.value)


def test_index_outside_time_axis() -> None:
    source = make_source(2, lattice=SMALL)
    assert source.index_of(utc(2020, 1, 1, 1)) == 1
    with pytest.raises(GridRangeError) as exc:
        source.index_of(utc(2020, 1, 1, 2))
    assert "outside the time axis" in str(exc.value)
