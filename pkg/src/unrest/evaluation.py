"""Scoring evaluation: AUROC, confusion counts and labeled manifests.

AUROC uses the rank (Mann-Whitney) estimator with half credit for ties,
which equals P(score_pos > score_neg) + 0.5 P(tie) exactly.  When a test
set has only one class the AUROC is undefined; callers fall back to
counting false positives at the calibrated threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

LABEL_NORMAL = "normal"
LABEL_ANOMALY = "anomaly"
SPLITS = ("train", "test")


class EvalError(Exception):
    """Bad manifest or evaluation input."""


class UndefinedAurocError(EvalError):
    """AUROC requested for a single-class sample set."""


@dataclass(frozen=True)
class LabeledScore:
    score: float
    label: str
    id: str = ""

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"score for {self.id!r} is not finite")
        if self.label not in (LABEL_NORMAL, LABEL_ANOMALY):
            raise ValueError(f"label must be normal|anomaly, got {self.label!r}")


def auroc(samples) -> float:
    """Probability a random anomaly outscores a random normal (ties half)."""
    samples = list(samples)
    scores = np.asarray([s.score for s in samples], dtype=np.float64)
    is_pos = np.asarray([s.label == LABEL_ANOMALY for s in samples], dtype=bool)
    n_pos = int(is_pos.sum())
    n_neg = len(samples) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAurocError(
            f"AUROC undefined: {n_pos} positives and {n_neg} negatives"
        )
    ranks = rankdata(scores)  # average ranks on ties
    u = ranks[is_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_at_threshold(samples, threshold: float) -> dict:
    """TP/FP/TN/FN counts with anomaly predicted iff score > threshold."""
    counts = {"TP": 0, "FP": 0, "TN": 0, "FN": 0}
    for s in samples:
        predicted_anomaly = s.score > threshold
        actual_anomaly = s.label == LABEL_ANOMALY
        if predicted_anomaly and actual_anomaly:
            counts["TP"] += 1
        elif predicted_anomaly:
            counts["FP"] += 1
        elif actual_anomaly:
            counts["FN"] += 1
        else:
            counts["TN"] += 1
    return counts


def roc_points(samples) -> tuple:
    """(fpr, tpr) arrays swept over all score thresholds, for plotting."""
    samples = sorted(samples, key=lambda s: -s.score)
    n_pos = sum(1 for s in samples if s.label == LABEL_ANOMALY)
    n_neg = len(samples) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAurocError("ROC curve undefined for single-class input")
    fpr, tpr = [0.0], [0.0]
    tp = fp = 0
    i = 0
    while i < len(samples):
        j = i
        while j < len(samples) and samples[j].score == samples[i].score:
            if samples[j].label == LABEL_ANOMALY:
                tp += 1
            else:
                fp += 1
            j += 1
        fpr.append(fp / n_neg)
        tpr.append(tp / n_pos)
        i = j
    return np.asarray(fpr), np.asarray(tpr)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    split: str
    label: str


def read_manifest(path) -> list:
    """Parse a tab-separated manifest: ``<path>\\t<split>\\t<label>`` per line.

    Relative raster paths are resolved against the manifest's directory.
    """
    path = Path(path)
    entries = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise EvalError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise EvalError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        raster, split, label = (p.strip() for p in parts)
        if split not in SPLITS:
            raise EvalError(f"{path}:{lineno}: split must be train|test, got {split!r}")
        if label not in (LABEL_NORMAL, LABEL_ANOMALY):
            raise EvalError(f"{path}:{lineno}: label must be normal|anomaly, got {label!r}")
        resolved = Path(raster)
        if not resolved.is_absolute():
            resolved = path.parent / resolved
        entries.append(ManifestEntry(path=str(resolved), split=split, label=label))
    if not entries:
        raise EvalError(f"{path}: manifest is empty")
    return entries


def write_manifest(entries, path) -> None:
    """Atomically write manifest entries in the tab-separated format."""
    import os

    path = Path(path)
    lines = [f"{e.path}\t{e.split}\t{e.label}" for e in entries]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)
