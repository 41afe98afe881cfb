from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from gaugefuse_core.atomic import write_text_atomic
from gaugefuse_verify.metrics import (
    DEFAULT_WEIGHTS,
    LEVELS,
    ConfusionMatrix,
    EvaluationMask,
    LevelErrors,
    Samples,
    check_weights,
    confusion_from_samples,
    errors_from_samples,
    f1_per_level,
    select_samples,
    weighted_mae,
)

logger = logging.getLogger(__name__)

POOLED = "pooled"


@dataclass(frozen=True, eq=False)
class LevelScores:
    """Scores over one set of (example, lead, cell) samples."""

    confusion: ConfusionMatrix
    f1: tuple[float, ...]
    errors: LevelErrors
    weighted_mae: float

    @classmethod
    def from_samples(cls, samples: Samples, weights: Sequence[float]) -> LevelScores:
        confusion = confusion_from_samples(samples)
        return cls(
            confusion=confusion,
            f1=f1_per_level(confusion),
            errors=errors_from_samples(samples),
            weighted_mae=weighted_mae(samples.pred, samples.obs, weights),
        )

    def to_dict(self) -> dict:
        return {
            "confusion_matrix": self.confusion.to_list(),
            "total": self.confusion.total,
            "weighted_mae": _finite_or_none(self.weighted_mae),
            "levels": {
                level.label: {
                    "interval": level.interval,
                    "f1": self.f1[level],
                    "mae": self.errors.mae[level],
                    "bias": self.errors.bias[level],
                    "observed_count": self.errors.counts[level],
                    "predicted_count": int(self.confusion.col_sums()[level]),
                }
                for level in LEVELS
            },
        }


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    version: str
    leads: tuple[int, ...]
    n_examples: int
    mask: EvaluationMask | None
    weights: tuple[float, ...]
    clamp_negative: bool
    per_lead: dict[int, LevelScores]
    pooled: LevelScores

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "leads": list(self.leads),
            "n_examples": self.n_examples,
            "mask": None if self.mask is None else self.mask.to_list(),
            "weights": list(self.weights),
            "clamp_negative": self.clamp_negative,
            "per_lead": {f"T+{lead}": scores.to_dict() for lead, scores in self.per_lead.items()},
            POOLED: self.pooled.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_frame(self) -> pd.DataFrame:
        """One row per level per lead, then the pooled rows."""
        rows = []
        sections: list[tuple[str, LevelScores]] = [
            (f"T+{lead}", scores) for lead, scores in self.per_lead.items()
        ]
        sections.append((POOLED, self.pooled))
        for lead, scores in sections:
            predicted = scores.confusion.col_sums()
            for level in LEVELS:
                rows.append(
                    {
                        "version": self.version,
                        "lead": lead,
                        "level": level.label,
                        "interval": level.interval,
                        "f1": scores.f1[level],
                        "mae": _nan_if_none(scores.errors.mae[level]),
                        "bias": _nan_if_none(scores.errors.bias[level]),
                        "observed_count": scores.errors.counts[level],
                        "predicted_count": int(predicted[level]),
                    }
                )
        return pd.DataFrame(rows)

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, na_rep="nan", float_format="%.6f")


def _nan_if_none(value: float | None) -> float:
    return math.nan if value is None else value


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def evaluation_report(
    pred: np.ndarray,
    obs: np.ndarray,
    mask: EvaluationMask | None,
    version_label: str,
    leads: Sequence[int] | None = None,
    *,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
    clamp_negative: bool = True,
) -> EvaluationReport:
    """Scores at every requested lead plus the pooled scores over all of them."""
    weights = check_weights(weights)
    pooled_samples = select_samples(pred, obs, mask, leads, clamp_negative=clamp_negative)
    chosen = tuple(range(1, np.shape(obs)[1] + 1)) if leads is None else tuple(sorted(set(leads)))
    per_lead = {
        lead: LevelScores.from_samples(
            select_samples(pred, obs, mask, [lead], clamp_negative=clamp_negative), weights
        )
        for lead in chosen
    }
    report = EvaluationReport(
        version=version_label,
        leads=chosen,
        n_examples=int(np.shape(obs)[0]),
        mask=mask,
        weights=weights,
        clamp_negative=clamp_negative,
        per_lead=per_lead,
        pooled=LevelScores.from_samples(pooled_samples, weights),
    )
    logger.info(
        "evaluated %s: %d samples over leads %s", version_label, report.pooled.confusion.total, list(chosen)
    )
    return report


def write_report(report: EvaluationReport, out_dir: Path, stem: str = "evaluation") -> tuple[Path, Path]:
    json_path = out_dir / f"{stem}.json"
    csv_path = out_dir / f"{stem}.csv"
    write_text_atomic(json_path, report.to_json())
    write_text_atomic(csv_path, report.to_csv())
    return json_path, csv_path
