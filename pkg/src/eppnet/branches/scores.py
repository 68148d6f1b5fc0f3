"""Per-sample class scores and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeMismatch


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    sample_ids: tuple
    scores: np.ndarray  # (samples, K) pre-softmax
    modality: str = ""
    labels: np.ndarray | None = None  # ground truth when known, else None

    def __post_init__(self):
        ids = tuple(str(s) for s in self.sample_ids)
        scores = np.asarray(self.scores)
        if scores.ndim != 2 or scores.shape[0] != len(ids):
            raise ShapeMismatch(f"{len(ids)} sample ids for scores of shape {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "scores", scores)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (len(ids),):
                raise ShapeMismatch("one label per sample required")
            object.__setattr__(self, "labels", labels)

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]

    def __len__(self):
        return len(self.sample_ids)


def to_csv(sm: ScoreMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "label"] + [f"score_{k}" for k in range(sm.num_classes)])
    for i, sid in enumerate(sm.sample_ids):
        label = "" if sm.labels is None else str(int(sm.labels[i]))
        w.writerow([sid, label] + [f"{v:.9g}" for v in sm.scores[i]])
    return buf.getvalue()


def from_csv(text: str, modality: str = "", dtype=np.float32) -> ScoreMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:2] != ["sample_id", "label"]:
        raise FormatError("score CSV must start with 'sample_id,label'")
    K = len(rows[0]) - 2
    if rows[0][2:] != [f"score_{k}" for k in range(K)]:
        raise FormatError("score columns must be score_0..score_{K-1}")
    ids, labels, scores = [], [], []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != K + 2:
            raise FormatError(f"line {lineno}: expected {K + 2} fields, got {len(row)}")
        ids.append(row[0])
        labels.append(row[1])
        try:
            scores.append([float(v) for v in row[2:]])
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric score") from None
    if any(l == "" for l in labels):
        lab = None
    else:
        lab = np.array([int(l) for l in labels], dtype=np.int64)
    arr = np.array(scores, dtype=dtype).reshape(len(ids), K)
    return ScoreMatrix(tuple(ids), arr, modality, lab)


def write_scores(path, sm: ScoreMatrix) -> None:
    Path(path).write_text(to_csv(sm), encoding="utf-8")


def read_scores(path, modality: str = "") -> ScoreMatrix:
    return from_csv(Path(path).read_text(encoding="utf-8"), modality)
