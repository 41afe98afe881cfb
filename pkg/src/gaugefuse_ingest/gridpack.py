from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import UTC, datetime, timedelta
from pathlib import Path

import numpy as np

from gaugefuse_core.atomic import write_bytes_atomic, write_text_atomic
from gaugefuse_core.errors import DataFormatError, GridRangeError
from gaugefuse_core.grid import Lattice
from gaugefuse_core.origin import Origin
from gaugefuse_ingest.channels import (
    CANONICAL_CHANNELS,
    N_CHANNELS,
    PRECIP_CHANNEL,
    PRECIP_UNIT_FACTORS,
    ChannelKey,
)

logger = logging.getLogger(__name__)

MAGIC = b"GPK1"
_PAYLOAD_DTYPE = np.dtype("<f4")
_ONE_HOUR = timedelta(hours=1)


def pack_paths(path: Path) -> tuple[Path, Path]:
    """Return the (sidecar, payload) pair for a pack given either file or the bare stem."""
    base = path.with_suffix("") if path.suffix in {".json", ".gpk"} else path
    return base.with_suffix(".json"), base.with_suffix(".gpk")


def parse_utc(text: str) -> datetime:
    stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        return stamp.replace(tzinfo=UTC)
    return stamp.astimezone(UTC)


def format_utc(stamp: datetime) -> str:
    return stamp.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True, eq=False)
class GridSource:
    """Dense hourly stack of background fields, ``values[time][channel][lat][lon]``.

    Channels are held in canonical order; precipitation is in mm/h.
    """

    lattice: Lattice
    t0: datetime
    values: np.ndarray
    units: tuple[str, ...]
    role: str = "reanalysis"
    channels: tuple[ChannelKey, ...] = field(default=CANONICAL_CHANNELS)

    def __post_init__(self) -> None:
        expected = (self.nt, N_CHANNELS, self.lattice.nlat, self.lattice.nlon)
        if self.values.shape != expected:
            raise DataFormatError(
                f"grid values shape {self.values.shape} does not match {expected}"
            )

    @property
    def nt(self) -> int:
        return int(self.values.shape[0])

    @property
    def end(self) -> datetime:
        """Exclusive end of the time axis."""
        return self.t0 + self.nt * _ONE_HOUR

    def times(self) -> list[datetime]:
        return [self.t0 + i * _ONE_HOUR for i in range(self.nt)]

    def contains(self, t: datetime) -> bool:
        offset = t - self.t0
        return offset % _ONE_HOUR == timedelta(0) and 0 <= offset // _ONE_HOUR < self.nt

    def index_of(self, t: datetime) -> int:
        if not self.contains(t):
            raise GridRangeError(
                f"timestamp {format_utc(t)} is outside the time axis "
                f"[{format_utc(self.t0)}, {format_utc(self.end)})"
            )
        return (t - self.t0) // _ONE_HOUR

    def precip(self, t: datetime) -> np.ndarray:
        return self.values[self.index_of(t), PRECIP_CHANNEL]

    def step(self, t: datetime) -> np.ndarray:
        return self.values[self.index_of(t)]


def _require(meta: dict, key: str, kind: type, origin: Origin):
    if key not in meta:
        raise DataFormatError(f"sidecar missing key '{key}'", origin=origin)
    value = meta[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DataFormatError(f"sidecar key '{key}' must be {kind.__name__}", origin=origin)
    return value


def _channel_order(raw: list, origin: Origin) -> tuple[list[int], list[str]]:
    positions: dict[ChannelKey, int] = {}
    units: dict[ChannelKey, str] = {}
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "name" not in entry or "unit" not in entry:
            raise DataFormatError(f"channel entry {i} needs 'name' and 'unit'", origin=origin)
        key = ChannelKey(str(entry["name"]), entry.get("level_hpa"))
        if key in positions:
            raise DataFormatError(f"duplicate channel '{key.label}'", origin=origin)
        positions[key] = i
        units[key] = str(entry["unit"])
    missing = [key.label for key in CANONICAL_CHANNELS if key not in positions]
    if missing:
        raise DataFormatError(f"missing channel(s): {', '.join(missing)}", origin=origin)
    extra = [key.label for key in positions if key not in CANONICAL_CHANNELS]
    if extra:
        raise DataFormatError(f"unexpected channel(s): {', '.join(extra)}", origin=origin)
    order = [positions[key] for key in CANONICAL_CHANNELS]
    return order, [units[key] for key in CANONICAL_CHANNELS]


def load_grid_pack(path: Path) -> GridSource:
    meta_path, payload_path = pack_paths(path)
    origin = Origin(str(meta_path))
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"unable to read sidecar: {exc}", origin=origin) from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid sidecar JSON: {exc}", origin=origin) from exc
    if not isinstance(meta, dict):
        raise DataFormatError("sidecar must be a JSON object", origin=origin)

    lattice = Lattice(
        lat0=_require(meta, "lat0", float, origin),
        lon0=_require(meta, "lon0", float, origin),
        dlat=_require(meta, "dlat", float, origin),
        dlon=_require(meta, "dlon", float, origin),
        nlat=_require(meta, "nlat", int, origin),
        nlon=_require(meta, "nlon", int, origin),
    )
    nt = _require(meta, "nt", int, origin)
    dt_hours = _require(meta, "dt_hours", int, origin)
    if dt_hours != 1:
        raise DataFormatError(
            f"only hourly packs are supported, got dt_hours={dt_hours}",
            origin=origin,
            hint="select hourly forecast steps upstream before packing",
        )
    try:
        t0 = parse_utc(_require(meta, "t0_iso8601_utc", str, origin))
    except ValueError as exc:
        raise DataFormatError(f"bad t0_iso8601_utc: {exc}", origin=origin) from exc
    if lattice.dlat == 0 or lattice.dlon == 0 or lattice.nlat < 1 or lattice.nlon < 1 or nt < 0:
        raise DataFormatError("degenerate lattice or time axis in sidecar", origin=origin)
    order, units = _channel_order(_require(meta, "channels", list, origin), origin)

    payload_origin = Origin(str(payload_path))
    try:
        blob = payload_path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"unable to read payload: {exc}", origin=payload_origin) from exc
    if blob[: len(MAGIC)] != MAGIC:
        raise DataFormatError("bad magic bytes, expected GPK1", origin=payload_origin)
    body = blob[len(MAGIC) :]
    expected = nt * len(order) * lattice.nlat * lattice.nlon
    if len(body) != expected * _PAYLOAD_DTYPE.itemsize:
        raise DataFormatError(
            f"payload holds {len(body) / _PAYLOAD_DTYPE.itemsize:g} values, sidecar declares {expected}",
            origin=payload_origin,
        )
    raw = np.frombuffer(body, dtype=_PAYLOAD_DTYPE).reshape(
        nt, len(order), lattice.nlat, lattice.nlon
    )
    values = raw[:, order].astype(np.float32)
    if not np.isfinite(values).all():
        bad = sorted({CANONICAL_CHANNELS[c].label for c in np.argwhere(~np.isfinite(values))[:, 1]})
        raise DataFormatError(f"non-finite value in channel(s) {', '.join(bad)}", origin=payload_origin)

    unit = units[PRECIP_CHANNEL]
    if unit not in PRECIP_UNIT_FACTORS:
        raise DataFormatError(
            f"unsupported precipitation unit '{unit}'",
            origin=origin,
            hint=f"use one of {', '.join(PRECIP_UNIT_FACTORS)}",
        )
    factor = PRECIP_UNIT_FACTORS[unit]
    if factor != 1.0:
        values[:, PRECIP_CHANNEL] = values[:, PRECIP_CHANNEL].astype(np.float64) * factor
    negative = int((values[:, PRECIP_CHANNEL] < 0).sum())
    if negative:
        logger.debug("%s: clipped %d negative precipitation values", meta_path, negative)
        np.maximum(values[:, PRECIP_CHANNEL], 0.0, out=values[:, PRECIP_CHANNEL])
    units[PRECIP_CHANNEL] = "mm/h"
    values.flags.writeable = False

    logger.info("loaded grid pack %s: %d hours from %s", meta_path, nt, format_utc(t0))
    return GridSource(
        lattice=lattice,
        t0=t0,
        values=values,
        units=tuple(units),
        role=str(meta.get("role", "reanalysis")),
    )


def write_grid_pack(path: Path, source: GridSource) -> tuple[Path, Path]:
    meta_path, payload_path = pack_paths(path)
    lattice = source.lattice
    meta = {
        "lat0": lattice.lat0,
        "lon0": lattice.lon0,
        "dlat": lattice.dlat,
        "dlon": lattice.dlon,
        "nlat": lattice.nlat,
        "nlon": lattice.nlon,
        "t0_iso8601_utc": format_utc(source.t0),
        "dt_hours": 1,
        "nt": source.nt,
        "role": source.role,
        "channels": [
            {"name": key.name, "level_hpa": key.level_hpa, "unit": unit}
            for key, unit in zip(source.channels, source.units, strict=True)
        ],
    }
    payload = MAGIC + np.ascontiguousarray(source.values, dtype=_PAYLOAD_DTYPE).tobytes()
    write_bytes_atomic(payload_path, payload)
    write_text_atomic(meta_path, json.dumps(meta, indent=2) + "\n")
    return meta_path, payload_path
