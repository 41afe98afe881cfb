from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import TypeVar

import numpy as np

from gaugefuse_core.errors import ConfigError, ContractViolation
from gaugefuse_fusion.fusion import FeatureGrid, FusedGrid
from gaugefuse_ingest.gridpack import format_utc

logger = logging.getLogger(__name__)

_ONE_HOUR = timedelta(hours=1)
DEFAULT_FRACTIONS = (0.6, 0.2, 0.2)
DRY_MONTHS = frozenset({6, 7, 8})

T = TypeVar("T")


@dataclass(frozen=True)
class WindowConfig:
    lookback: int = 5
    horizon: int = 5
    excluded_months: frozenset[int] = field(default=DRY_MONTHS)

    def __post_init__(self) -> None:
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigError(
                f"window lookback and horizon must be >= 1, got {self.lookback} and {self.horizon}"
            )
        bad = sorted(m for m in self.excluded_months if not 1 <= m <= 12)
        if bad:
            raise ConfigError(f"excluded months must be in 1..12, got {bad}")

    @property
    def span(self) -> int:
        return self.lookback + self.horizon

    def keeps(self, t: datetime) -> bool:
        return t.month not in self.excluded_months


@dataclass(frozen=True)
class Segment:
    start: datetime
    timesteps: int

    @property
    def end(self) -> datetime:
        """Last hour of the segment."""
        return self.start + (self.timesteps - 1) * _ONE_HOUR

    def times(self) -> list[datetime]:
        return [self.start + i * _ONE_HOUR for i in range(self.timesteps)]


@dataclass(frozen=True, eq=False)
class Example:
    """``X`` is ``(k, rows, cols, 19)``, ``Y`` is ``(k', rows, cols, 1)``; ``t0`` is X's last hour."""

    X: np.ndarray
    Y: np.ndarray
    t0: datetime


@dataclass(frozen=True, eq=False)
class FusedSeries:
    timestamps: list[datetime]
    features: np.ndarray
    precip: np.ndarray
    station_fused: np.ndarray
    positions: dict[datetime, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "positions", {t: i for i, t in enumerate(self.timestamps)})

    def __len__(self) -> int:
        return len(self.timestamps)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[FeatureGrid, FusedGrid]]) -> FusedSeries:
        if not pairs:
            empty = np.zeros((0, 0, 0), dtype=np.float32)
            return cls([], empty[..., None], empty, empty.astype(bool))
        ordered = sorted(pairs, key=lambda pair: pair[1].timestamp)
        return cls(
            timestamps=[fused.timestamp for _, fused in ordered],
            features=np.stack([feature.values for feature, _ in ordered]).astype(np.float32),
            precip=np.stack([fused.precip for _, fused in ordered]).astype(np.float32),
            station_fused=np.stack([fused.station_fused for _, fused in ordered]),
        )


def segment_timeline(timestamps: Sequence[datetime], config: WindowConfig) -> list[Segment]:
    """Maximal hourly-contiguous runs after dropping excluded-month hours."""
    for prev, cur in zip(timestamps, timestamps[1:], strict=False):
        if cur <= prev:
            raise ContractViolation(
                f"unsorted timestamps: {cur.isoformat()} follows {prev.isoformat()}"
            )
    segments: list[Segment] = []
    start: datetime | None = None
    last: datetime | None = None
    length = 0
    for t in timestamps:
        if not config.keeps(t):
            continue
        if last is not None and t - last == _ONE_HOUR:
            length += 1
        else:
            if start is not None:
                segments.append(Segment(start, length))
            start, length = t, 1
        last = t
    if start is not None:
        segments.append(Segment(start, length))
    return segments


def windows_in(length: int, config: WindowConfig) -> int:
    return max(0, length - config.span + 1)


def slide_windows(segment: Segment, series: FusedSeries, config: WindowConfig) -> list[Example]:
    first = series.positions.get(segment.start)
    if first is None or first + segment.timesteps > len(series):
        raise ContractViolation(f"segment starting {segment.start.isoformat()} is not covered by the series")
    if series.timestamps[first + segment.timesteps - 1] != segment.end:
        raise ContractViolation(f"segment starting {segment.start.isoformat()} has gaps in the series")
    k, horizon = config.lookback, config.horizon
    out: list[Example] = []
    for offset in range(windows_in(segment.timesteps, config)):
        i = first + offset
        out.append(
            Example(
                X=series.features[i : i + k],
                Y=series.precip[i + k : i + k + horizon][..., None],
                t0=series.timestamps[i + k - 1],
            )
        )
    return out


def count_examples(segments: Sequence[Segment], config: WindowConfig) -> int:
    return sum(windows_in(segment.timesteps, config) for segment in segments)


def build_examples(series: FusedSeries, config: WindowConfig) -> tuple[list[Segment], list[Example]]:
    segments = segment_timeline(series.timestamps, config)
    examples: list[Example] = []
    for segment in segments:
        examples.extend(slide_windows(segment, series, config))
    logger.info("built %d examples from %d segments", len(examples), len(segments))
    return segments, examples


def split_sizes(n: int, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> tuple[int, int, int]:
    if len(fractions) != 3:
        raise ConfigError(f"split fractions need three values, got {len(fractions)}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be non-negative and sum to 1, got {list(fractions)}")
    val = math.floor(n * fractions[1] + 1e-9)
    test = math.floor(n * fractions[2] + 1e-9)
    return n - val - test, val, test


def chronological_split(
    examples: Sequence[T], fractions: Sequence[float] = DEFAULT_FRACTIONS
) -> tuple[list[T], list[T], list[T]]:
    """Contiguous train/val/test slices; the rounding remainder goes to train."""
    train, val, _ = split_sizes(len(examples), fractions)
    items = list(examples)
    return items[:train], items[train : train + val], items[train + val :]


def split_manifest(
    examples: Sequence[Example], fractions: Sequence[float] = DEFAULT_FRACTIONS
) -> dict[str, dict]:
    train, val, test = split_sizes(len(examples), fractions)
    bounds = {"train": (0, train), "val": (train, train + val), "test": (train + val, train + val + test)}
    out: dict[str, dict] = {}
    for name, (lo, hi) in bounds.items():
        entry: dict = {"start_index": lo, "stop_index": hi, "count": hi - lo}
        if hi > lo:
            entry["first_t0"] = format_utc(examples[lo].t0)
            entry["last_t0"] = format_utc(examples[hi - 1].t0)
        out[name] = entry
    return out
