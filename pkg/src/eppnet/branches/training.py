"""Datasets, the minibatch SGD loop and deterministic evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import autodiff as ad
from .. import parsemap as pm
from ..errors import EmptyDataset, LabelOutOfRange
from ..optim import OptimizerConfig, sgd_step
from ..rng import Rng, derive_seed
from .cnn import images_to_input
from .scores import ScoreMatrix


class ArrayDataset:
    """Fixed input tensors, e.g. pose modalities of shape (N, 3, T, V, M)."""

    def __init__(self, inputs: np.ndarray, labels, sample_ids: Sequence[str] | None = None):
        self.inputs = np.asarray(inputs)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} inputs for {len(self.labels)} labels")
        self.sample_ids = tuple(sample_ids) if sample_ids is not None else tuple(
            str(i) for i in range(len(self.labels)))

    def __len__(self):
        return len(self.labels)

    def batch(self, indices, epoch: int = 0, train: bool = False) -> np.ndarray:
        return self.inputs[indices]


@dataclass
class FeatureMapDataset:
    """Builds parsing feature maps on demand from per-frame label maps.

    Training batches draw random frames (and photometric jitter when
    ``augment_delta`` > 0) from a seed keyed on (epoch, sample); evaluation
    uses equal-interval frames and no jitter.
    """

    label_maps: list  # per sample: list of (H, W) label arrays
    boxes: list  # per sample: list of Optional[BBox]
    labels: np.ndarray
    sample_ids: tuple
    palette: np.ndarray
    frames: int = 9
    tile_size: int = 160
    grid: tuple = (3, 3)
    input_size: Optional[int] = 96
    train_random: bool = True
    augment_delta: float = 0.2
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sample_ids = tuple(self.sample_ids)

    def __len__(self):
        return len(self.labels)

    def image(self, i: int, epoch: int = 0, train: bool = False) -> np.ndarray:
        random_frames = train and self.train_random
        if not random_frames and not (train and self.augment_delta > 0) and i in self._cache:
            return self._cache[i]
        key = f"{self.sample_ids[i]}/{epoch}"
        sel = pm.FrameSelection(
            pm.TRAIN_RANDOM if random_frames else pm.TEST_UNIFORM, self.frames,
            derive_seed(self.seed, "frames/" + key))
        img = pm.build_feature_map(self.label_maps[i], self.boxes[i], sel, self.palette,
                                   self.tile_size, self.grid).pixels
        if self.input_size:
            img = pm.resize_nearest(img, self.input_size, self.input_size)
        if train and self.augment_delta > 0:
            d = self.augment_delta
            img = pm.augment(img, (d, d, d), derive_seed(self.seed, "augment/" + key))
        elif not random_frames:
            self._cache[i] = img
        return img

    def batch(self, indices, epoch: int = 0, train: bool = False) -> np.ndarray:
        return images_to_input(np.stack([self.image(int(i), epoch, train) for i in indices]))


def clip_gradients(params, max_norm: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params)))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad *= scale
    return total


def train_branch(model, dataset, opt: OptimizerConfig, epochs: int, seed: int = 0,
                 batch_size: int = 64, stop_at_accuracy: float | None = None,
                 clip_norm: float | None = None) -> list:
    """Minibatch SGD on cross-entropy; returns per-epoch history dicts.

    With ``stop_at_accuracy`` training ends after the first epoch whose
    running accuracy reaches it and whose clean re-evaluation on the same
    samples (no augmentation, equal-interval frames) does too. ``clip_norm`` caps the global
    gradient norm before each step.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    K = model.cfg.classes
    labels = np.asarray(dataset.labels)
    if labels.min() < 0 or labels.max() >= K:
        raise LabelOutOfRange(f"labels must be in [0, {K})")
    params = model.parameters()
    history = []
    for epoch in range(epochs):
        order = Rng(derive_seed(seed, f"shuffle/{epoch}")).permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x = dataset.batch(idx, epoch, train=True)
            logits = model.forward(x)
            loss = ad.cross_entropy(logits, labels[idx])
            loss.backward()
            if clip_norm is not None:
                clip_gradients(params, clip_norm)
            sgd_step(params, opt, epoch)
            loss_sum += float(loss.data) * len(idx)
            correct += int(np.sum(np.argmax(logits.data, axis=1) == labels[idx]))
        row = {"epoch": epoch, "loss": loss_sum / n, "accuracy": correct / n, "lr": opt.lr_at(epoch)}
        history.append(row)
        if stop_at_accuracy is not None and correct / n >= stop_at_accuracy:
            row["clean_accuracy"] = accuracy(model, dataset, batch_size)
            if row["clean_accuracy"] >= stop_at_accuracy:
                break
    return history


def evaluate_branch(model, dataset, modality: str = "", batch_size: int = 64) -> ScoreMatrix:
    rows = []
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        rows.append(model.forward(dataset.batch(idx, 0, train=False)).data)
    K = model.cfg.classes
    scores = np.concatenate(rows) if rows else np.zeros((0, K), dtype=np.float32)
    return ScoreMatrix(dataset.sample_ids, scores, modality, dataset.labels)


def accuracy(model, dataset, batch_size: int = 64) -> float:
    sm = evaluate_branch(model, dataset, batch_size=batch_size)
    return float(np.mean(np.argmax(sm.scores, axis=1) == sm.labels))
