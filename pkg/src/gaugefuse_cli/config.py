"""The ``gaugefuse.toml`` pipeline manifest.

Example::

    [grid]
    lat_north = -22.75
    lat_south = -23.10
    lon_west = -43.80
    lon_east = -43.15
    n_rows = 9
    n_cols = 11

    [stations]
    catalog = "data/catalog.csv"

    [stations.observations]
    AlertaRio = ["data/alertario.csv"]

    [background]
    train = ["data/era5_2019.json"]
    inference = ["data/gfs_2024.json"]

    [dataset]
    version = "ERA5+A"

    [evaluation]
    mask = [[4, 5], [4, 6], [5, 5]]
"""

from __future__ import annotations

import dataclasses
import tomllib
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

from gaugefuse_core.errors import ConfigError
from gaugefuse_core.grid import DEFAULT_SNAP_TOLERANCE_DEG, GridSpec
from gaugefuse_core.origin import Origin
from gaugefuse_fusion.versions import DatasetVersion
from gaugefuse_ingest.gridpack import parse_utc
from gaugefuse_ingest.systems import DEFAULT_TZ_OFFSET_MINUTES, StationSystem, SystemRegistry
from gaugefuse_verify.metrics import DEFAULT_WEIGHTS, EvaluationMask, check_weights
from gaugefuse_window.windowing import DEFAULT_FRACTIONS, DRY_MONTHS, WindowConfig

MANIFEST_NAME = "gaugefuse.toml"


@dataclass(frozen=True)
class PipelineConfig:
    manifest: Path
    grid: GridSpec
    registry: SystemRegistry
    version: DatasetVersion
    catalog: Path | None = None
    observations: dict[str, list[Path]] = field(default_factory=dict)
    background_train: list[Path] = field(default_factory=list)
    background_inference: list[Path] = field(default_factory=list)
    snap_tolerance: float = DEFAULT_SNAP_TOLERANCE_DEG
    window: WindowConfig = field(default_factory=WindowConfig)
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    mask: EvaluationMask | None = None
    use_mask: bool = True
    leads: tuple[int, ...] | None = None
    weights: tuple[float, ...] = DEFAULT_WEIGHTS
    clamp_negative: bool = True
    out_dir: Path = Path("out")
    sanity_station: str | None = None
    sanity_start: datetime | None = None
    sanity_end: datetime | None = None

    @property
    def root(self) -> Path:
        return self.manifest.parent

    @property
    def active_mask(self) -> EvaluationMask | None:
        return self.mask if self.use_mask else None

    def observation_paths(self, system: str) -> list[Path]:
        return self.observations.get(system, [])

    def with_overrides(
        self,
        *,
        version: str | None = None,
        out: str | None = None,
        leads: Sequence[int] | None = None,
        no_mask: bool = False,
    ) -> PipelineConfig:
        changes: dict[str, Any] = {}
        if version is not None:
            changes["version"] = DatasetVersion.parse(version, self.registry)
        if out is not None:
            changes["out_dir"] = Path(out).expanduser().resolve()
        if leads is not None:
            changes["leads"] = _leads(list(leads), self.window.horizon, self.manifest)
        if no_mask:
            changes["use_mask"] = False
        updated = dataclasses.replace(self, **changes)
        _check_version_inputs(updated)
        return updated


def find_manifest(start: Path) -> Path | None:
    current = start.expanduser().resolve()
    if current.is_file():
        current = current.parent
    while True:
        if (current / MANIFEST_NAME).exists():
            return current / MANIFEST_NAME
        if current.parent == current:
            return None
        current = current.parent


def _error(path: Path, message: str, hint: str | None = None) -> ConfigError:
    return ConfigError(message, origin=Origin(str(path)), hint=hint)


def _table(data: dict, key: str, path: Path) -> dict:
    raw = data.get(key)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise _error(path, f"[{key}] must be a table")
    return raw


def _number(table: dict, key: str, section: str, path: Path, default: float | None = None) -> float:
    value = table.get(key, default)
    if value is None:
        raise _error(path, f"missing [{section}].{key}")
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise _error(path, f"[{section}].{key} must be a number")
    return float(value)


def _integer(table: dict, key: str, section: str, path: Path, default: int | None = None) -> int:
    value = table.get(key, default)
    if value is None:
        raise _error(path, f"missing [{section}].{key}")
    if isinstance(value, bool) or not isinstance(value, int):
        raise _error(path, f"[{section}].{key} must be an integer")
    return value


def _paths(value: Any, label: str, root: Path, path: Path) -> list[Path]:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise _error(path, f"{label} must be a path or a list of paths")
    resolved = [(root / v).expanduser().resolve() for v in value]
    for original, full in zip(value, resolved, strict=True):
        if not full.exists():
            raise _error(path, f"{label} file not found: {original}")
    return resolved


def _leads(value: Any, horizon: int, path: Path) -> tuple[int, ...]:
    if not isinstance(value, list) or not value or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        raise _error(path, "leads must be a non-empty list of integers")
    bad = [v for v in value if not 1 <= v <= horizon]
    if bad:
        raise _error(path, f"leads {bad} must be between 1 and the horizon {horizon}")
    return tuple(sorted(set(value)))


def _grid(data: dict, path: Path) -> tuple[GridSpec, float]:
    table = _table(data, "grid", path)
    if not table:
        raise _error(path, "missing [grid] table")
    spec = GridSpec(
        lat_north=_number(table, "lat_north", "grid", path),
        lat_south=_number(table, "lat_south", "grid", path),
        lon_east=_number(table, "lon_east", "grid", path),
        lon_west=_number(table, "lon_west", "grid", path),
        n_rows=_integer(table, "n_rows", "grid", path, 9),
        n_cols=_integer(table, "n_cols", "grid", path, 11),
    )
    tolerance = _number(table, "snap_tolerance_deg", "grid", path, DEFAULT_SNAP_TOLERANCE_DEG)
    if tolerance < 0:
        raise _error(path, "[grid].snap_tolerance_deg must be non-negative")
    return spec, tolerance


def _registry(data: dict, path: Path) -> SystemRegistry:
    registry = SystemRegistry()
    raw = data.get("systems", [])
    if not isinstance(raw, list):
        raise _error(path, "[[systems]] must be an array of tables")
    for entry in raw:
        if not isinstance(entry, dict):
            raise _error(path, "[[systems]] entries must be tables")
        name = entry.get("name")
        code = entry.get("code")
        if not isinstance(name, str) or not isinstance(code, str):
            raise _error(path, "[[systems]] entries must have string 'name' and 'code'")
        registry.register(
            StationSystem(
                name=name,
                code=code,
                native_resolution=_integer(entry, "native_resolution", "systems", path, 60),
                timezone_offset=_integer(
                    entry, "tz_offset_minutes", "systems", path, DEFAULT_TZ_OFFSET_MINUTES
                ),
            )
        )
    return registry


def _window(data: dict, path: Path) -> WindowConfig:
    table = _table(data, "window", path)
    months = table.get("excluded_months", sorted(DRY_MONTHS))
    if not isinstance(months, list) or not all(isinstance(m, int) for m in months):
        raise _error(path, "[window].excluded_months must be a list of month numbers")
    return WindowConfig(
        lookback=_integer(table, "lookback", "window", path, 5),
        horizon=_integer(table, "horizon", "window", path, 5),
        excluded_months=frozenset(months),
    )


def _fractions(data: dict, path: Path) -> tuple[float, ...]:
    raw = _table(data, "split", path).get("fractions", list(DEFAULT_FRACTIONS))
    if not isinstance(raw, list) or not all(
        isinstance(v, int | float) and not isinstance(v, bool) for v in raw
    ):
        raise _error(path, "[split].fractions must be a list of numbers")
    fractions = tuple(float(v) for v in raw)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise _error(path, f"[split].fractions must be three non-negative numbers summing to 1, got {raw}")
    return fractions


def _evaluation(data: dict, spec: GridSpec, horizon: int, path: Path) -> dict[str, Any]:
    table = _table(data, "evaluation", path)
    out: dict[str, Any] = {}
    raw_mask = table.get("mask")
    if raw_mask is not None:
        if not isinstance(raw_mask, list) or not all(
            isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, int) for v in pair)
            for pair in raw_mask
        ):
            raise _error(path, "[evaluation].mask must be a list of [row, col] pairs")
        mask = EvaluationMask.of(raw_mask)
        mask.validate(spec)
        out["mask"] = mask
    use_mask = table.get("use_mask", True)
    if not isinstance(use_mask, bool):
        raise _error(path, "[evaluation].use_mask must be true or false")
    out["use_mask"] = use_mask
    if "leads" in table:
        out["leads"] = _leads(table["leads"], horizon, path)
    weights = table.get("weights", list(DEFAULT_WEIGHTS))
    if not isinstance(weights, list) or not all(
        isinstance(w, int | float) and not isinstance(w, bool) for w in weights
    ):
        raise _error(path, "[evaluation].weights must be a list of numbers")
    out["weights"] = check_weights(weights)
    clamp = table.get("clamp_negative", True)
    if not isinstance(clamp, bool):
        raise _error(path, "[evaluation].clamp_negative must be true or false")
    out["clamp_negative"] = clamp
    return out


def _sanity(data: dict, path: Path) -> dict[str, Any]:
    table = _table(data, "sanity", path)
    out: dict[str, Any] = {}
    station = table.get("station")
    if station is not None and not isinstance(station, str):
        raise _error(path, "[sanity].station must be a station id string")
    out["sanity_station"] = station
    for key in ("start", "end"):
        raw = table.get(key)
        if raw is None:
            out[f"sanity_{key}"] = None
            continue
        out[f"sanity_{key}"] = _timestamp(raw, f"[sanity].{key}", path)
    return out


def _timestamp(raw: Any, label: str, path: Path) -> datetime:
    if isinstance(raw, datetime):
        return parse_utc(raw.isoformat())
    if not isinstance(raw, str):
        raise _error(path, f"{label} must be an ISO 8601 timestamp")
    try:
        return parse_utc(raw)
    except ValueError as exc:
        raise _error(path, f"{label} must be an ISO 8601 timestamp: {exc}") from exc


def _check_version_inputs(config: PipelineConfig) -> None:
    if config.version.is_background_only:
        return
    if config.catalog is None:
        raise _error(
            config.manifest,
            f"dataset version {config.version.label} needs [stations].catalog",
        )
    missing = [name for name in config.version.system_names() if not config.observation_paths(name)]
    if missing:
        raise _error(
            config.manifest,
            f"dataset version {config.version.label} is missing observations for {', '.join(missing)}",
            hint="list CSV files under [stations.observations]",
        )


def load_config(path: Path) -> PipelineConfig:
    manifest = path.expanduser().resolve()
    try:
        data = tomllib.loads(manifest.read_text(encoding="utf-8"))
    except OSError as exc:
        raise _error(manifest, f"unable to read {manifest.name}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise _error(manifest, f"invalid {manifest.name}: {exc}") from exc

    root = manifest.parent
    spec, tolerance = _grid(data, manifest)
    registry = _registry(data, manifest)

    stations = _table(data, "stations", manifest)
    catalog = None
    if "catalog" in stations:
        catalog = _paths(stations["catalog"], "[stations].catalog", root, manifest)[0]
    observations: dict[str, list[Path]] = {}
    raw_obs = stations.get("observations", {})
    if not isinstance(raw_obs, dict):
        raise _error(manifest, "[stations.observations] must be a table")
    for name in sorted(raw_obs):
        registry.by_name(name)
        observations[name] = _paths(raw_obs[name], f"[stations.observations].{name}", root, manifest)

    background = _table(data, "background", manifest)
    train = _paths(background.get("train", []), "[background].train", root, manifest)
    inference = _paths(background.get("inference", []), "[background].inference", root, manifest)

    label = _table(data, "dataset", manifest).get("version", "ERA5")
    if not isinstance(label, str):
        raise _error(manifest, "[dataset].version must be a string such as ERA5+SIA")
    window = _window(data, manifest)

    output = _table(data, "output", manifest)
    out_dir = output.get("dir", "out")
    if not isinstance(out_dir, str):
        raise _error(manifest, "[output].dir must be a string path")

    config = PipelineConfig(
        manifest=manifest,
        grid=spec,
        registry=registry,
        version=DatasetVersion.parse(label, registry),
        catalog=catalog,
        observations=observations,
        background_train=train,
        background_inference=inference,
        snap_tolerance=tolerance,
        window=window,
        fractions=_fractions(data, manifest),
        out_dir=(root / out_dir).resolve(),
        **_evaluation(data, spec, window.horizon, manifest),
        **_sanity(data, manifest),
    )
    _check_version_inputs(config)
    return config


def resolve_config(path: Path | None) -> PipelineConfig:
    if path is not None:
        return load_config(path)
    found = find_manifest(Path.cwd())
    if found is None:
        raise _error(
            Path.cwd(),
            f"no --config given and no {MANIFEST_NAME} found",
            hint=f"pass --config or run inside a directory containing {MANIFEST_NAME}",
        )
    return load_config(found)
