"""Weighted late fusion of per-modality scores, decisions and metrics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import netpbm
from .branches.scores import ScoreMatrix
from .errors import LabelOutOfRange, LengthMismatch, SampleMismatch, ShapeMismatch

DEFAULT_WEIGHTS = {"J": 2.0, "B": 2.0, "JM": 1.0, "BM": 1.0, "P": 2.0}


@dataclass(frozen=True)
class EnsembleWeights:
    items: tuple  # ((modality, weight), ...)

    def __post_init__(self):
        items = tuple((str(m), float(w)) for m, w in self.items)
        if any(w < 0 for _, w in items):
            raise ValueError("ensemble weights must be nonnegative")
        if not any(w > 0 for _, w in items):
            raise ValueError("at least one ensemble weight must be positive")
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, mapping) -> "EnsembleWeights":
        return cls(tuple(mapping.items()))

    @property
    def values(self) -> tuple:
        return tuple(w for _, w in self.items)


@dataclass(frozen=True, eq=False)
class Metrics:
    top1: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray  # (K, K), rows = truth, cols = prediction


def late_fuse(scores: Sequence[ScoreMatrix], weights) -> ScoreMatrix:
    """sum_m w_m * scores_m, row by row."""
    w = weights.values if isinstance(weights, EnsembleWeights) else tuple(float(v) for v in weights)
    if len(w) != len(scores) or not scores:
        raise ShapeMismatch(f"{len(w)} weights for {len(scores)} score matrices")
    first = scores[0]
    for sm in scores[1:]:
        if sm.sample_ids != first.sample_ids:
            raise SampleMismatch(f"{sm.modality or 'scores'} rows differ from {first.modality or 'first'}")
        if sm.scores.shape != first.scores.shape:
            raise ShapeMismatch(f"score shapes {sm.scores.shape} vs {first.scores.shape}")
    fused = np.zeros(first.scores.shape, dtype=np.float64)
    for wm, sm in zip(w, scores):
        if wm != 0:
            fused += wm * sm.scores.astype(np.float64)
    name = "+".join(sm.modality for wm, sm in zip(w, scores) if wm != 0)
    return ScoreMatrix(first.sample_ids, fused, name, first.labels)


def decide(fused) -> np.ndarray:
    """Predicted class per row; ties resolve to the smallest index.

    Softmax is monotone, so the arg-max of the raw scores is the decision.
    """
    scores = fused.scores if isinstance(fused, ScoreMatrix) else np.asarray(fused)
    return np.argmax(scores, axis=1)


def compute_metrics(pred, truth, K: int) -> Metrics:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.size} predictions for {truth.size} labels")
    for arr in (pred, truth):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            raise LabelOutOfRange(f"labels must be in [0, {K})")
    conf = np.zeros((K, K), dtype=np.int64)
    np.add.at(conf, (truth, pred), 1)
    rows = conf.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, np.diag(conf) / np.maximum(rows, 1), np.nan)
    top1 = float(np.trace(conf) / truth.size) if truth.size else float("nan")
    return Metrics(top1, per_class, conf)


def grid_search_weights(scores: Sequence[ScoreMatrix], truth, grid: Sequence[Sequence[float]]):
    """Exhaustive search; equal accuracy keeps the lexicographically smallest weights."""
    if len(grid) != len(scores) or any(len(g) == 0 for g in grid):
        raise ValueError("need a nonempty candidate list per modality")
    K = scores[0].num_classes
    best_w, best_acc = None, -1.0
    for combo in itertools.product(*grid):
        if not any(w > 0 for w in combo):
            continue
        acc = compute_metrics(decide(late_fuse(scores, combo)), truth, K).top1
        if acc > best_acc or (acc == best_acc and tuple(combo) < best_w):
            best_w, best_acc = tuple(combo), acc
    if best_w is None:
        raise ValueError("every weight combination is all-zero")
    return best_w, best_acc


def confusion_to_csv(conf: np.ndarray) -> str:
    K = conf.shape[0]
    lines = ["truth\\pred," + ",".join(str(k) for k in range(K))]
    for k in range(K):
        lines.append(f"{k}," + ",".join(str(int(v)) for v in conf[k]))
    return "\n".join(lines) + "\n"


def confusion_heatmap(conf: np.ndarray) -> np.ndarray:
    """Counts scaled linearly so the largest maps to 255."""
    peak = conf.max() if conf.size else 0
    if peak == 0:
        return np.zeros(conf.shape, dtype=np.uint8)
    return np.rint(conf * (255.0 / peak)).astype(np.uint8)


def write_confusion(stem, conf: np.ndarray) -> list:
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    pgm_path = stem.with_suffix(".pgm")
    csv_path.write_text(confusion_to_csv(conf))
    netpbm.write_pgm(pgm_path, confusion_heatmap(conf))
    return [csv_path, pgm_path]
