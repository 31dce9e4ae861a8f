"""Detection metrics and uncertainty calibration summaries.

Accuracy and binary F1 (bot = positive class) come straight from the
confusion counts.  Calibration buckets nodes into equal-width
uncertainty bins and reports the rank correlation between a bin's mean
uncertainty and its error rate; a well-calibrated detector errs more
where it is less certain, giving a positive correlation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ContractError, DegenerateDataError


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    n: int


def evaluate_metrics(y_true, y_pred) -> Metrics:
    """Accuracy and binary F1 = 2TP / (2TP + FP + FN) over one split."""
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.size == 0:
        raise ContractError("cannot score an empty split")
    if y_true.shape != y_pred.shape:
        raise ContractError(
            f"label/prediction length mismatch: {y_true.size} vs {y_pred.size}"
        )
    bad = ~np.isin(y_true, (0, 1)) | ~np.isin(y_pred, (0, 1))
    if bad.any():
        raise ContractError("labels and predictions must be 0 (human) or 1 (bot)")
    if np.unique(y_true).size < 2:
        raise DegenerateDataError(
            "F1 is undefined: the split holds a single label class "
            "(need at least one bot and one human)"
        )
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    accuracy = float(np.mean(y_pred == y_true))
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if tp + fp + fn else 0.0
    return Metrics(accuracy=accuracy, f1=float(f1), n=int(y_true.size))


@dataclass(frozen=True)
class CalibrationReport:
    bin_edges: tuple          # bins + 1 floats spanning [0, 1]
    counts: tuple             # nodes per bin; sums to the evaluated count
    accuracy: tuple           # per-bin accuracy, None where a bin is empty
    rank_correlation: float | None  # None when < 2 bins are populated

    def to_json_dict(self) -> dict:
        return {
            "bin_edges": list(self.bin_edges),
            "counts": list(self.counts),
            "accuracy": list(self.accuracy),
            "rank_correlation": self.rank_correlation,
        }


def calibration_report(uncertainty, correct, bins: int = 10) -> CalibrationReport:
    """Equal-width uncertainty bins over [0, 1] with per-bin accuracy."""
    u = np.asarray(uncertainty, dtype=np.float64).reshape(-1)
    ok = np.asarray(correct, dtype=bool).reshape(-1)
    if u.shape != ok.shape:
        raise ContractError(f"length mismatch: {u.size} uncertainties, {ok.size} outcomes")
    if u.size == 0:
        raise ContractError("cannot calibrate zero predictions")
    if bins < 2:
        raise ContractError(f"need at least 2 bins, got {bins}")
    if np.any(~np.isfinite(u)) or np.any(u <= 0.0) or np.any(u > 1.0):
        raise ContractError("uncertainty values must lie in (0, 1]")

    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.minimum((u * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    accuracy: list[float | None] = []
    mean_u, err_rate = [], []
    for b in range(bins):
        members = idx == b
        if counts[b] == 0:
            accuracy.append(None)
            continue
        acc = float(ok[members].mean())
        accuracy.append(acc)
        mean_u.append(float(u[members].mean()))
        err_rate.append(1.0 - acc)

    if len(mean_u) < 2:
        corr = None
    else:
        with warnings.catch_warnings():
            # constant error rates give NaN; reported as None, not a warning
            warnings.simplefilter("ignore", stats.ConstantInputWarning)
            rho = stats.spearmanr(mean_u, err_rate).statistic
        corr = None if np.isnan(rho) else float(rho)
    return CalibrationReport(
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        accuracy=tuple(accuracy),
        rank_correlation=corr,
    )
