"""Comparison predictors: leave-one-out cross-validation and the
Davies-Bouldin index with a linear calibration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .core import ErrorEstimate, FewShotTask, ncm_predict


def loo_cross_validation(task: FewShotTask) -> ErrorEstimate:
    """Exhaustive leave-one-out: each support sample is classified after
    removing it from its own class mean; other means keep all samples."""
    if task.k_shots < 2:
        raise ValueError("cross-validation undefined for 1-shot")
    blocks = list(task.support_by_class.values())
    means = np.stack([b.mean(axis=0) for b in blocks])
    errors = 0
    events = 0
    for c, block in enumerate(blocks):
        for i in range(block.shape[0]):
            centers = means.copy()
            centers[c] = np.delete(block, i, axis=0).mean(axis=0)
            errors += int(ncm_predict(block[i], centers)[0] != c)
            events += 1
    return ErrorEstimate(errors / events, "cv", m_used=events)


def davies_bouldin_index(task: FewShotTask) -> float:
    blocks = list(task.support_by_class.values())
    means = np.stack([b.mean(axis=0) for b in blocks])
    scatter = np.array([np.mean(np.linalg.norm(b - mu, axis=1)) for b, mu in zip(blocks, means)])
    n = len(blocks)
    worst = np.empty(n)
    for c in range(n):
        ratios = []
        for o in range(n):
            if o == c:
                continue
            sep = np.linalg.norm(means[c] - means[o])
            if sep == 0:
                raise ValueError("degenerate DB denominator")
            ratios.append((scatter[c] + scatter[o]) / sep)
        worst[c] = max(ratios)
    return float(worst.mean())


@dataclass(frozen=True)
class DbCalibration:
    slope: float
    intercept: float
    n_calibration_tasks: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DbCalibration":
        d = json.loads(text)
        try:
            return cls(float(d["slope"]), float(d["intercept"]), int(d["n_calibration_tasks"]))
        except KeyError as exc:
            raise ValueError(f"calibration file lacks {exc}") from None


def calibrate_db_regression(points: Iterable) -> DbCalibration:
    """Least-squares line accuracy ~ slope * DB + intercept from
    (DB score, true accuracy) pairs."""
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if pts.shape[0] < 2:
        raise ValueError("need at least two calibration tasks")
    x, y = pts[:, 0], pts[:, 1]
    if np.all(x == x[0]):
        raise ValueError("constant DB scores cannot be calibrated")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return DbCalibration(float(slope), float(intercept), int(pts.shape[0]))


def predict_accuracy_db(db: float, cal: DbCalibration, n: int) -> float:
    return float(np.clip(cal.slope * db + cal.intercept, 1.0 / n, 1.0))
