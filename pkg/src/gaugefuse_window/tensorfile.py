"""Binary tensor interchange format.

Layout of a ``.stft`` file (all integers little-endian)::

    magic   4 bytes  b"STFT"
    version u32      1
    ndims   u32
    dims    ndims x u64
    payload prod(dims) x float32, row-major

Every tensor file has a JSON sidecar ``<file>.json`` with channel names, the
grid spec, the time origin and the ``t0`` of every example along axis 0.
"""

from __future__ import annotations

import json
import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gaugefuse_core.atomic import write_bytes_atomic, write_text_atomic
from gaugefuse_core.errors import ContractViolation, DataFormatError
from gaugefuse_core.origin import Origin
from gaugefuse_ingest.channels import PRECIP, channel_labels
from gaugefuse_ingest.gridpack import format_utc, parse_utc
from gaugefuse_window.windowing import Example

MAGIC = b"STFT"
FORMAT_VERSION = 1
_PAYLOAD_DTYPE = np.dtype("<f4")
_PREFIX = struct.Struct("<4sII")
_DIM = struct.Struct("<Q")


@dataclass(frozen=True, eq=False)
class TensorFile:
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.data.shape)


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def tensor_paths(stem: Path) -> tuple[Path, Path]:
    return stem.with_name(stem.name + ".X.stft"), stem.with_name(stem.name + ".Y.stft")


def encode_tensor(array: np.ndarray) -> bytes:
    header = _PREFIX.pack(MAGIC, FORMAT_VERSION, array.ndim)
    header += b"".join(_DIM.pack(d) for d in array.shape)
    return header + np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPE).tobytes()


def decode_tensor(blob: bytes, origin: Origin) -> np.ndarray:
    if len(blob) < _PREFIX.size:
        raise DataFormatError("truncated header", origin=origin)
    magic, version, ndims = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise DataFormatError("bad magic bytes, expected STFT", origin=origin)
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported tensor format version {version}", origin=origin)
    offset = _PREFIX.size
    if len(blob) < offset + ndims * _DIM.size:
        raise DataFormatError("truncated header: dimension table cut short", origin=origin)
    dims = tuple(_DIM.unpack_from(blob, offset + i * _DIM.size)[0] for i in range(ndims))
    offset += ndims * _DIM.size
    count = math.prod(dims)
    expected = count * _PAYLOAD_DTYPE.itemsize
    actual = len(blob) - offset
    if actual < expected:
        raise DataFormatError(
            f"truncated payload: {actual} bytes for dims {list(dims)}, need {expected}",
            origin=origin,
        )
    if actual > expected:
        raise DataFormatError(f"payload has {actual - expected} trailing bytes", origin=origin)
    return np.frombuffer(blob, dtype=_PAYLOAD_DTYPE, offset=offset, count=count).reshape(dims)


def write_tensor_file(path: Path, array: np.ndarray, meta: dict | None = None) -> Path:
    if not np.isfinite(array).all():
        raise ContractViolation(f"refusing to write non-finite values to {path}")
    sidecar = dict(meta or {})
    sidecar["dims"] = [int(d) for d in array.shape]
    write_bytes_atomic(path, encode_tensor(array))
    write_text_atomic(sidecar_path(path), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_tensor_file(path: Path) -> TensorFile:
    origin = Origin(str(path))
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"unable to read tensor file: {exc}", origin=origin) from exc
    data = decode_tensor(blob, origin)
    meta: dict = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid sidecar JSON: {exc}", origin=Origin(str(side))) from exc
        declared = meta.get("dims")
        if declared is not None and list(declared) != list(data.shape):
            raise DataFormatError(
                f"sidecar dims {declared} disagree with header {list(data.shape)}",
                origin=Origin(str(side)),
            )
    return TensorFile(data=data, meta=meta)


def _stack(examples: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    if not examples:
        raise ContractViolation("cannot write an empty example sequence")
    x_shape, y_shape = examples[0].X.shape, examples[0].Y.shape
    for i, example in enumerate(examples):
        if example.X.shape != x_shape or example.Y.shape != y_shape:
            raise ContractViolation(
                f"shape mismatch at example {i}: X{example.X.shape} Y{example.Y.shape}, "
                f"expected X{x_shape} Y{y_shape}"
            )
    return np.stack([e.X for e in examples]), np.stack([e.Y for e in examples])


def write_tensor(
    examples: Sequence[Example], stem: Path, meta: dict | None = None
) -> tuple[Path, Path]:
    """Write X to ``<stem>.X.stft`` and Y to ``<stem>.Y.stft`` with sidecars."""
    x, y = _stack(examples)
    common = dict(meta or {})
    common["time_origin"] = format_utc(examples[0].t0)
    common["t0"] = [format_utc(e.t0) for e in examples]
    x_path, y_path = tensor_paths(stem)
    x_channels = common.pop("x_channels", channel_labels())
    write_tensor_file(x_path, x, {**common, "kind": "features", "channels": x_channels})
    write_tensor_file(y_path, y, {**common, "kind": "targets", "channels": [PRECIP]})
    return x_path, y_path


def read_t0(meta: dict, count: int, origin: Origin) -> list:
    raw = meta.get("t0")
    if not isinstance(raw, list) or len(raw) != count:
        raise DataFormatError("sidecar must list one t0 per example", origin=origin)
    try:
        return [parse_utc(text) for text in raw]
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"bad t0 entry in sidecar: {exc}", origin=origin) from exc


def read_tensor(stem: Path) -> list[Example]:
    x_path, y_path = tensor_paths(stem)
    x_file = read_tensor_file(x_path)
    y_file = read_tensor_file(y_path)
    if x_file.data.ndim != 5 or y_file.data.ndim != 5 or x_file.dims[0] != y_file.dims[0]:
        raise DataFormatError(
            f"X dims {list(x_file.dims)} and Y dims {list(y_file.dims)} do not pair up",
            origin=Origin(str(stem)),
        )
    stamps = read_t0(x_file.meta, x_file.dims[0], Origin(str(sidecar_path(x_path))))
    return [
        Example(X=x_file.data[i], Y=y_file.data[i], t0=stamps[i]) for i in range(len(stamps))
    ]
