from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from gaugefuse_baseline.baseline import fit_climatology, forecast_examples
from gaugefuse_cli.config import PipelineConfig
from gaugefuse_core.atomic import write_text_atomic
from gaugefuse_core.errors import ConfigError, ContractViolation, DataFormatError
from gaugefuse_core.origin import Origin
from gaugefuse_fusion.fusion import FeatureGrid, FusedGrid, build_fused_series, provenance_summary
from gaugefuse_fusion.versions import BackgroundRole, DatasetVersion
from gaugefuse_ingest.channels import channel_labels
from gaugefuse_ingest.gridpack import GridSource, format_utc, load_grid_pack
from gaugefuse_ingest.stations import (
    ObservationTable,
    StationNetwork,
    load_station_catalog,
    parse_station_observations,
)
from gaugefuse_verify.metrics import level_distribution
from gaugefuse_verify.report import evaluation_report, write_report
from gaugefuse_verify.sanity import heatmap_frame, spearman_grid, station_vs_grid
from gaugefuse_window.tensorfile import (
    read_tensor,
    read_tensor_file,
    sidecar_path,
    tensor_paths,
    write_tensor,
    write_tensor_file,
)
from gaugefuse_window.windowing import (
    FusedSeries,
    build_examples,
    chronological_split,
    count_examples,
    split_manifest,
    windows_in,
)

logger = logging.getLogger(__name__)

DATASET_STEM = "dataset"
SPLITS = ("train", "val", "test")
_ONE_HOUR = timedelta(hours=1)
REJECTED_SAMPLE = 10

Pair = tuple[FeatureGrid, FusedGrid]


@dataclass(frozen=True)
class BuildResult:
    x_path: Path
    y_path: Path
    manifest_path: Path
    n_examples: int
    heatmap_path: Path | None = None


@dataclass(frozen=True)
class InferenceResult:
    x_path: Path
    manifest_path: Path
    version: str
    heatmap_path: Path | None = None


@dataclass(frozen=True)
class BaselineResult:
    pred_path: Path
    obs_path: Path
    n_examples: int


def _write_json(path: Path, payload: dict) -> Path:
    return write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _relative(path: Path, root: Path) -> str:
    try:
        return path.relative_to(root).as_posix()
    except ValueError:
        return path.as_posix()


def load_network(
    config: PipelineConfig, systems: list[str]
) -> tuple[StationNetwork | None, list[ObservationTable]]:
    """Catalog plus hourly readings of ``systems``; no network when no system is enabled."""
    if not systems:
        return None, []
    if config.catalog is None:
        raise ConfigError("missing [stations].catalog", origin=Origin(str(config.manifest)))
    catalog = load_station_catalog(config.catalog, config.registry)
    tables = []
    for name in systems:
        system = config.registry.by_name(name)
        for path in config.observation_paths(name):
            tables.append(parse_station_observations(path, system, catalog))
    return StationNetwork.from_tables(config.grid, catalog, tables), tables


def rejected_rows(tables: list[ObservationTable], root: Path) -> dict[str, dict]:
    """Per-file count of rejected observation rows with the first few reasons."""
    return {
        _relative(Path(table.source), root): {
            "rejected": len(table.errors),
            "first": [f"line {err.line}: {err.message}" for err in table.errors[:REJECTED_SAMPLE]],
        }
        for table in tables
        if table.errors
    }


def load_backgrounds(paths: list[Path], role: BackgroundRole) -> list[GridSource]:
    """Load grid packs sorted by start time, rejecting overlapping time axes."""
    packs = sorted((load_grid_pack(path) for path in paths), key=lambda pack: pack.t0)
    for prev, cur in zip(packs, packs[1:], strict=False):
        if cur.t0 < prev.end:
            raise DataFormatError(
                f"overlapping {role.value} packs: [{format_utc(prev.t0)}, {format_utc(prev.end)}) "
                f"and [{format_utc(cur.t0)}, {format_utc(cur.end)})"
            )
    return packs


def _background_paths(config: PipelineConfig, role: BackgroundRole) -> list[Path]:
    paths = config.background_train if role is BackgroundRole.REANALYSIS else config.background_inference
    if not paths:
        key = "train" if role is BackgroundRole.REANALYSIS else "inference"
        raise ConfigError(
            f"missing [background].{key} grid packs for {role.value}",
            origin=Origin(str(config.manifest)),
        )
    return paths


def fuse_packs(
    packs: list[GridSource],
    version: DatasetVersion,
    network: StationNetwork | None,
    config: PipelineConfig,
    keep: Callable[[datetime], bool] | None = None,
) -> list[Pair]:
    pairs: list[Pair] = []
    for pack in packs:
        pairs.extend(
            build_fused_series(
                pack.t0,
                pack.nt,
                version,
                pack,
                network,
                config.grid,
                keep=keep,
                tolerance=config.snap_tolerance,
            )
        )
    return pairs


def _export_heatmap(pairs: list[Pair], at: datetime, config: PipelineConfig, prefix: str) -> Path:
    for _, fused in pairs:
        if fused.timestamp == at:
            stamp = fused.timestamp.strftime("%Y%m%dT%H%MZ")
            path = config.out_dir / f"{prefix}_heatmap_{stamp}.csv"
            write_text_atomic(path, heatmap_frame(fused, config.grid).to_csv(index=False))
            return path
    raise ConfigError(f"--export-heatmap hour {format_utc(at)} not found among the fused hours")


def cmd_build_dataset(config: PipelineConfig, heatmap_at: datetime | None = None) -> BuildResult:
    version = config.version
    packs = load_backgrounds(_background_paths(config, version.background), version.background)
    network, tables = load_network(config, version.system_names())
    pairs = fuse_packs(packs, version, network, config, keep=config.window.keeps)
    series = FusedSeries.from_pairs(pairs)
    segments, examples = build_examples(series, config.window)
    if not examples:
        raise DataFormatError(
            f"no complete windows: {len(series)} usable hours never form "
            f"{config.window.span} consecutive hours",
        )

    stem = config.out_dir / DATASET_STEM
    meta = {"version": version.label, "grid": config.grid.to_dict()}
    x_path, y_path = write_tensor(examples, stem, meta)

    summary = provenance_summary([fused for _, fused in pairs], config.grid)
    manifest = {
        "version": version.label,
        "grid": config.grid.to_dict(),
        "window": {
            "lookback": config.window.lookback,
            "horizon": config.window.horizon,
            "excluded_months": sorted(config.window.excluded_months),
        },
        "channels": channel_labels(),
        "inputs": {
            "background": [_relative(p, config.root) for p in _background_paths(config, version.background)],
            "observations": {
                name: [_relative(p, config.root) for p in config.observation_paths(name)]
                for name in version.system_names()
            },
            "rejected_rows": rejected_rows(tables, config.root),
        },
        "segments": [
            {
                "start": format_utc(segment.start),
                "end": format_utc(segment.end),
                "timesteps": segment.timesteps,
                "examples": windows_in(segment.timesteps, config.window),
            }
            for segment in segments
        ],
        "n_examples": count_examples(segments, config.window),
        "tensors": {"X": x_path.name, "Y": y_path.name},
        "split": {"fractions": list(config.fractions), **split_manifest(examples, config.fractions)},
        "provenance": summary.to_dict(),
        "target_levels": level_distribution(np.stack([e.Y for e in examples])),
    }
    manifest_path = _write_json(config.out_dir / f"{DATASET_STEM}.manifest.json", manifest)
    heatmap = _export_heatmap(pairs, heatmap_at, config, DATASET_STEM) if heatmap_at else None
    logger.info("wrote %d examples of %s to %s", len(examples), version.label, config.out_dir)
    return BuildResult(x_path, y_path, manifest_path, len(examples), heatmap)


def _describe_gap(missing: list[datetime]) -> str:
    runs: list[tuple[datetime, datetime]] = []
    for t in missing:
        if runs and t - runs[-1][1] == _ONE_HOUR:
            runs[-1] = (runs[-1][0], t)
        else:
            runs.append((t, t))
    return ", ".join(
        format_utc(a) if a == b else f"{format_utc(a)}..{format_utc(b)}" for a, b in runs
    )


def cmd_fuse_inference(
    config: PipelineConfig, t0: datetime, heatmap_at: datetime | None = None
) -> InferenceResult:
    """Fuse the ``k`` hours ending at ``t0`` over the NWP background into one input tensor."""
    if t0.minute or t0.second or t0.microsecond:
        raise ContractViolation(f"inference time {format_utc(t0)} is not on the hour")
    version = config.version.with_background(BackgroundRole.NWP)
    packs = load_backgrounds(_background_paths(config, BackgroundRole.NWP), BackgroundRole.NWP)
    hours = [t0 - (config.window.lookback - 1 - i) * _ONE_HOUR for i in range(config.window.lookback)]
    covering = {t: next((pack for pack in packs if pack.contains(t)), None) for t in hours}
    missing = [t for t, pack in covering.items() if pack is None]
    if missing:
        raise DataFormatError(
            f"NWP background gap: no hourly grid for {_describe_gap(missing)}",
            hint="the inference packs must hold hourly steps for every input hour",
        )

    network, tables = load_network(config, version.system_names())
    pairs: list[Pair] = []
    for t in hours:
        pack = covering[t]
        pairs.extend(
            build_fused_series(t, 1, version, pack, network, config.grid, tolerance=config.snap_tolerance)
        )
    x = np.stack([feature.values for feature, _ in pairs])[None]

    stamp = t0.strftime("%Y%m%dT%H%MZ")
    x_path = config.out_dir / f"inference_{stamp}.X.stft"
    meta = {
        "version": version.label,
        "grid": config.grid.to_dict(),
        "kind": "features",
        "channels": channel_labels(),
        "time_origin": format_utc(t0),
        "t0": [format_utc(t0)],
        "hours": [format_utc(t) for t in hours],
    }
    write_tensor_file(x_path, x, meta)
    summary = provenance_summary([fused for _, fused in pairs], config.grid)
    manifest_path = _write_json(
        config.out_dir / f"inference_{stamp}.manifest.json",
        {
            **meta,
            "tensor": x_path.name,
            "provenance": summary.to_dict(),
            "rejected_rows": rejected_rows(tables, config.root),
        },
    )
    heatmap = _export_heatmap(pairs, heatmap_at, config, "inference") if heatmap_at else None
    logger.info("fused %s inference window ending %s", version.label, format_utc(t0))
    return InferenceResult(x_path, manifest_path, version.label, heatmap)


def cmd_evaluate(pred_path: Path, obs_path: Path, config: PipelineConfig) -> tuple[Path, Path]:
    pred = read_tensor_file(pred_path)
    obs = read_tensor_file(obs_path)
    if pred.dims != obs.dims:
        raise ContractViolation(
            f"shape mismatch: predictions {list(pred.dims)} vs observations {list(obs.dims)}",
            origin=Origin(str(pred_path)),
        )
    label = str(pred.meta.get("version") or obs.meta.get("version") or config.version.label)
    report = evaluation_report(
        pred.data,
        obs.data,
        config.active_mask,
        label,
        config.leads,
        weights=config.weights,
        clamp_negative=config.clamp_negative,
    )
    stem = pred_path.name.split(".")[0] or "evaluation"
    return write_report(report, config.out_dir, f"{stem}.evaluation")


def cmd_baseline(
    config: PipelineConfig, method: str, split: str, dataset: Path | None = None
) -> BaselineResult:
    """Forecast one split of a built dataset and write the matching observations beside it."""
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {', '.join(SPLITS)}, got '{split}'")
    stem = dataset if dataset is not None else config.out_dir / DATASET_STEM
    examples = read_tensor(stem)
    parts = dict(zip(SPLITS, chronological_split(examples, config.fractions), strict=True))
    chosen = parts[split]
    if not chosen:
        raise ContractViolation(f"the {split} split of {stem.name} holds no examples")
    horizon = int(chosen[0].Y.shape[0])
    table = fit_climatology(parts["train"]) if method == "climatology" else None
    pred = forecast_examples(method, chosen, horizon, table)
    obs = np.stack([example.Y for example in chosen])

    x_meta = json.loads(sidecar_path(tensor_paths(stem)[0]).read_text(encoding="utf-8"))
    sidecar = {
        "version": x_meta.get("version", config.version.label),
        "grid": x_meta.get("grid"),
        "split": split,
        "time_origin": format_utc(chosen[0].t0),
        "t0": [format_utc(example.t0) for example in chosen],
        "channels": ["precip"],
    }
    pred_path = write_tensor_file(
        config.out_dir / f"{method}.pred.stft", pred, {**sidecar, "kind": "predictions", "method": method}
    )
    obs_path = write_tensor_file(config.out_dir / f"{method}.obs.stft", obs, {**sidecar, "kind": "targets"})
    logger.info("%s baseline over %d %s examples", method, len(chosen), split)
    return BaselineResult(pred_path, obs_path, len(chosen))


def cmd_sanity_check(
    config: PipelineConfig,
    a: Path | None = None,
    b: Path | None = None,
    station: str | None = None,
) -> list[Path]:
    """Per-cell Spearman grid of two grid packs plus an optional station-vs-grid table."""
    left_path = a if a is not None else _first(config.background_train, "train")
    right_path = b if b is not None else _first(config.background_inference, "inference")
    left = load_grid_pack(left_path)
    right = load_grid_pack(right_path)
    grid = spearman_grid(
        left, right, config.grid, config.sanity_start, config.sanity_end, tolerance=config.snap_tolerance
    )
    outputs = [config.out_dir / "sanity_spearman.csv"]
    write_text_atomic(outputs[0], grid.to_frame().to_csv(index=False, na_rep="nan"))

    station_id = station or config.sanity_station
    if station_id:
        systems = [name for name in config.observations if config.observation_paths(name)]
        network, _ = load_network(config, systems)
        if network is None:
            raise ConfigError("station comparison needs [stations.observations]")
        table = station_vs_grid(station_id, network, left, config.grid, tolerance=config.snap_tolerance)
        path = config.out_dir / f"sanity_station_{station_id}.csv"
        write_text_atomic(path, table.to_csv(index=False, na_rep="nan"))
        outputs.append(path)
    _write_json(
        config.out_dir / "sanity.json",
        {
            "a": _relative(left_path, config.root),
            "b": _relative(right_path, config.root),
            "hours": len(grid.hours),
            "first_hour": format_utc(grid.hours[0]),
            "last_hour": format_utc(grid.hours[-1]),
            "cells": int(grid.values.size),
            "undefined_cells": int(np.isnan(grid.values).sum()),
            "outputs": [p.name for p in outputs],
        },
    )
    return outputs


def _first(paths: list[Path], key: str) -> Path:
    if not paths:
        raise ConfigError(f"missing [background].{key}: sanity check compares two grid sources")
    return paths[0]
