from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.stats import rankdata

from gaugefuse_core.errors import ConfigError, ContractViolation
from gaugefuse_core.grid import CellIndex, GridSpec, iter_cells

LEVEL_EDGES: tuple[float, ...] = (5.0, 25.0, 50.0)
DEFAULT_WEIGHTS: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0)


class PrecipLevel(IntEnum):
    WEAK = 0
    MODERATE = 1
    HEAVY = 2
    EXTREME = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @property
    def bounds(self) -> tuple[float, float]:
        edges = (0.0, *LEVEL_EDGES, math.inf)
        return edges[self.value], edges[self.value + 1]

    @property
    def interval(self) -> str:
        low, high = self.bounds
        high_text = "inf" if math.isinf(high) else f"{high:g}"
        return f"[{low:g}-{high_text})"


LEVELS: tuple[PrecipLevel, ...] = tuple(PrecipLevel)
N_LEVELS = len(LEVELS)


def classify_level(v: float) -> PrecipLevel:
    if not math.isfinite(v) or v < 0:
        raise ContractViolation(f"cannot classify precipitation value {v!r}: negative or non-finite")
    for level, edge in zip(LEVELS, LEVEL_EDGES, strict=False):
        if v < edge:
            return level
    return PrecipLevel.EXTREME


def classify_levels(values: np.ndarray) -> np.ndarray:
    return np.digitize(values, LEVEL_EDGES, right=False)


def level_distribution(values: np.ndarray) -> dict[str, int]:
    counts = np.bincount(classify_levels(np.ravel(values)), minlength=N_LEVELS)
    return {level.label: int(counts[level]) for level in LEVELS}


@dataclass(frozen=True)
class EvaluationMask:
    """Cells over which verification runs."""

    cells: frozenset[CellIndex]

    def __post_init__(self) -> None:
        if not self.cells:
            raise ConfigError("evaluation mask must contain at least one cell")

    @classmethod
    def of(cls, pairs: Iterable[Sequence[int]]) -> EvaluationMask:
        return cls(frozenset(CellIndex(int(r), int(c)) for r, c in pairs))

    @classmethod
    def full(cls, spec: GridSpec) -> EvaluationMask:
        return cls(frozenset(iter_cells(spec)))

    def sorted_cells(self) -> list[CellIndex]:
        return sorted(self.cells)

    def validate(self, spec: GridSpec) -> None:
        outside = [c for c in self.sorted_cells() if not (0 <= c.row < spec.n_rows and 0 <= c.col < spec.n_cols)]
        if outside:
            raise ConfigError(
                f"evaluation mask cells outside the {spec.n_rows}x{spec.n_cols} grid: "
                + ", ".join(f"({c.row}, {c.col})" for c in outside)
            )

    def to_list(self) -> list[list[int]]:
        return [[c.row, c.col] for c in self.sorted_cells()]


@dataclass(frozen=True, eq=False)
class Samples:
    """Flattened (prediction, observation) pairs in (example, lead, cell) order."""

    pred: np.ndarray
    obs: np.ndarray

    def __len__(self) -> int:
        return int(self.obs.size)


def _as_grid(array: np.ndarray, name: str) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 5 and array.shape[-1] == 1:
        return array[..., 0]
    if array.ndim == 4:
        return array
    raise ContractViolation(
        f"{name} shape {array.shape} is not (n, leads, rows, cols, 1)"
    )


def select_samples(
    pred: np.ndarray,
    obs: np.ndarray,
    mask: EvaluationMask | None,
    leads: Sequence[int] | None = None,
    *,
    clamp_negative: bool = True,
) -> Samples:
    """Pick the masked cells at the given 1-based leads and validate the values."""
    if np.shape(pred) != np.shape(obs):
        raise ContractViolation(f"shape mismatch: predictions {np.shape(pred)} vs observations {np.shape(obs)}")
    p = _as_grid(pred, "predictions")
    o = _as_grid(obs, "observations")
    horizon = p.shape[1]
    chosen = list(range(1, horizon + 1)) if leads is None else sorted(set(leads))
    if not chosen or any(not 1 <= lead <= horizon for lead in chosen):
        raise ContractViolation(f"leads {list(leads or [])} must be a non-empty subset of 1..{horizon}")
    if mask is None:
        rows, cols = np.indices(p.shape[2:]).reshape(2, -1)
    else:
        cells = mask.sorted_cells()
        if any(not (0 <= c.row < p.shape[2] and 0 <= c.col < p.shape[3]) for c in cells):
            raise ContractViolation(f"evaluation mask does not fit a {p.shape[2]}x{p.shape[3]} grid")
        rows = np.array([c.row for c in cells])
        cols = np.array([c.col for c in cells])
    lead_index = np.array(chosen) - 1
    p_sel = p[:, lead_index][:, :, rows, cols].ravel()
    o_sel = o[:, lead_index][:, :, rows, cols].ravel()
    if not (np.isfinite(p_sel).all() and np.isfinite(o_sel).all()):
        raise ContractViolation("non-finite values in predictions or observations")
    if (o_sel < 0).any():
        raise ContractViolation("negative observed precipitation")
    if clamp_negative:
        p_sel = np.maximum(p_sel, 0.0)
    elif (p_sel < 0).any():
        raise ContractViolation("negative predicted precipitation and clamping is disabled")
    return Samples(pred=p_sel, obs=o_sel)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed ``[observed level][predicted level]``."""

    counts: np.ndarray

    @classmethod
    def empty(cls) -> ConfusionMatrix:
        return cls(np.zeros((N_LEVELS, N_LEVELS), dtype=np.int64))

    @classmethod
    def from_counts(cls, rows: Sequence[Sequence[int]]) -> ConfusionMatrix:
        counts = np.asarray(rows, dtype=np.int64)
        if counts.shape != (N_LEVELS, N_LEVELS) or (counts < 0).any():
            raise ContractViolation(f"confusion matrix must be 4x4 non-negative counts, got {counts.shape}")
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def row_shares(self, level: PrecipLevel) -> np.ndarray:
        """Percentage of ``level`` observations falling in each predicted level."""
        row = self.counts[level].astype(np.float64)
        total = row.sum()
        if total == 0:
            return np.zeros(N_LEVELS)
        return 100.0 * row / total

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)

    def to_list(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion_from_samples(samples: Samples) -> ConfusionMatrix:
    obs_level = classify_levels(samples.obs)
    pred_level = classify_levels(samples.pred)
    flat = np.bincount(obs_level * N_LEVELS + pred_level, minlength=N_LEVELS * N_LEVELS)
    return ConfusionMatrix(flat.reshape(N_LEVELS, N_LEVELS).astype(np.int64))


def confusion_matrix(
    pred: np.ndarray,
    obs: np.ndarray,
    mask: EvaluationMask | None,
    leads: Sequence[int] | None = None,
    *,
    clamp_negative: bool = True,
) -> ConfusionMatrix:
    return confusion_from_samples(select_samples(pred, obs, mask, leads, clamp_negative=clamp_negative))


def f1_per_level(cm: ConfusionMatrix) -> tuple[float, ...]:
    """One-vs-rest F1 per level; a zero denominator scores 0."""
    diag = np.diag(cm.counts).astype(np.float64)
    rows = cm.row_sums().astype(np.float64)
    cols = cm.col_sums().astype(np.float64)
    scores = []
    for level in LEVELS:
        # 2PR/(P+R) reduces to 2*diag/(row+col)
        denominator = rows[level] + cols[level]
        scores.append(0.0 if denominator == 0 else float(2.0 * diag[level] / denominator))
    return tuple(scores)


@dataclass(frozen=True)
class LevelErrors:
    """Per observed level; ``None`` where no observation fell in the level."""

    mae: tuple[float | None, ...]
    bias: tuple[float | None, ...]
    counts: tuple[int, ...]


def errors_from_samples(samples: Samples) -> LevelErrors:
    levels = classify_levels(samples.obs)
    error = samples.pred - samples.obs
    mae: list[float | None] = []
    bias: list[float | None] = []
    counts: list[int] = []
    for level in LEVELS:
        chosen = error[levels == level]
        counts.append(int(chosen.size))
        if chosen.size == 0:
            mae.append(None)
            bias.append(None)
            continue
        mae.append(float(np.abs(chosen).mean()))
        bias.append(float(chosen.mean()))
    return LevelErrors(tuple(mae), tuple(bias), tuple(counts))


def mae_bias_per_level(
    pred: np.ndarray,
    obs: np.ndarray,
    mask: EvaluationMask | None,
    leads: Sequence[int] | None = None,
    *,
    clamp_negative: bool = True,
) -> LevelErrors:
    return errors_from_samples(select_samples(pred, obs, mask, leads, clamp_negative=clamp_negative))


def check_weights(weights: Sequence[float]) -> tuple[float, ...]:
    if len(weights) != N_LEVELS:
        raise ConfigError(f"weighted MAE needs {N_LEVELS} weights, got {len(weights)}")
    if any(not math.isfinite(w) or w <= 0 for w in weights):
        raise ConfigError(f"weighted MAE weights must be positive, got {list(weights)}")
    return tuple(float(w) for w in weights)


def weighted_mae(
    pred: np.ndarray, obs: np.ndarray, weights: Sequence[float] = DEFAULT_WEIGHTS
) -> float:
    """Mean of ``w(level(obs)) * |pred - obs|`` over the mean sample weight.

    Equal weights reduce to plain MAE.
    """
    table = np.asarray(check_weights(weights))
    p = np.ravel(np.asarray(pred, dtype=np.float64))
    o = np.ravel(np.asarray(obs, dtype=np.float64))
    if p.shape != o.shape:
        raise ContractViolation(f"shape mismatch: predictions {np.shape(pred)} vs observations {np.shape(obs)}")
    if o.size == 0:
        return math.nan
    w = table[classify_levels(o)]
    return float(np.sum(w * np.abs(p - o)) / np.sum(w))


def spearman(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float | None:
    """Spearman correlation with average ranks for ties; ``None`` when undefined."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractViolation(f"spearman needs two equal-length series, got {x.shape} and {y.shape}")
    if x.size < 2:
        return None
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    ssx = float(np.dot(rx, rx))
    ssy = float(np.dot(ry, ry))
    if ssx == 0.0 or ssy == 0.0:
        return None
    r = float(np.dot(rx, ry)) / math.sqrt(ssx * ssy)
    return max(-1.0, min(1.0, r))
