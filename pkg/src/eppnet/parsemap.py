"""Human-parsing feature maps.

A sample's per-frame parsing label maps are cropped to the detected
person, resized with nearest neighbour, colorized through a palette and
tiled chronologically into one RGB image that the CNN branch consumes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import netpbm
from .errors import (
    EmptyIntersection,
    FormatError,
    FrameSizeMismatch,
    GridTooSmall,
    LabelOutOfRange,
)
from .rng import Rng
from .sampling import center_indices

LIP_LABELS = 20
TRAIN_RANDOM = "train_random"
TEST_UNIFORM = "test_uniform"


@dataclass(frozen=True)
class BBox:
    """Pixel box, min inclusive, max exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")

    def union(self, other: "BBox") -> "BBox":
        return BBox(min(self.x_min, other.x_min), min(self.y_min, other.y_min),
                    max(self.x_max, other.x_max), max(self.y_max, other.y_max))


@dataclass(frozen=True)
class FrameSelection:
    mode: str = TEST_UNIFORM
    t: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (TRAIN_RANDOM, TEST_UNIFORM):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.t < 1:
            raise ValueError("t must be >= 1")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    pixels: np.ndarray  # (H_m, W_m, 3) uint8
    grid: tuple
    tile_size: tuple

    def block(self, k: int) -> np.ndarray:
        rows, cols = self.grid
        hs, ws = self.tile_size
        r, c = divmod(k, cols)
        return self.pixels[r * hs:(r + 1) * hs, c * ws:(c + 1) * ws]


def crop_to_bbox(labels: np.ndarray, box: BBox) -> np.ndarray:
    h, w = labels.shape
    x0, y0 = max(box.x_min, 0), max(box.y_min, 0)
    x1, y1 = min(box.x_max, w), min(box.y_max, h)
    if x0 >= x1 or y0 >= y1:
        raise EmptyIntersection(f"{box} does not intersect a {w}x{h} map")
    return labels[y0:y1, x0:x1]


def resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest neighbour with the pixel-center convention; works on (H, W[, C])."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    rows = center_indices(img.shape[0], out_h)
    cols = center_indices(img.shape[1], out_w)
    return img[rows[:, None], cols[None, :]]


def make_palette(num_labels: int) -> np.ndarray:
    """VOC bit-interleaved palette, shape (L, 3) uint8."""
    if not 1 <= num_labels <= 256:
        raise ValueError("palette size must be in 1..256")
    pal = np.zeros((num_labels, 3), dtype=np.uint8)
    for i in range(num_labels):
        r = g = b = 0
        cid = i
        for j in range(8):
            r |= ((cid >> 0) & 1) << (7 - j)
            g |= ((cid >> 1) & 1) << (7 - j)
            b |= ((cid >> 2) & 1) << (7 - j)
            cid >>= 3
        pal[i] = (r, g, b)
    return pal


def colorize(labels: np.ndarray, palette: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and int(labels.max()) >= len(palette):
        raise LabelOutOfRange(f"label {int(labels.max())} but palette has {len(palette)} colors")
    return palette[labels]


def select_frames(n: int, sel: FrameSelection) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one frame")
    if sel.mode == TEST_UNIFORM:
        return center_indices(n, sel.t)
    return np.sort(Rng(sel.seed).integers(n, sel.t))


def tile(frames: Sequence[np.ndarray], rows: int, cols: int) -> FeatureMap:
    if not frames:
        raise ValueError("no frames to tile")
    if len(frames) > rows * cols:
        raise GridTooSmall(f"{len(frames)} frames do not fit a {rows}x{cols} grid")
    hs, ws = frames[0].shape[:2]
    out = np.zeros((rows * hs, cols * ws, 3), dtype=np.uint8)
    for k, f in enumerate(frames):
        if f.shape != (hs, ws, 3):
            raise FrameSizeMismatch(f"frame {k} is {f.shape}, expected {(hs, ws, 3)}")
        r, c = divmod(k, cols)
        out[r * hs:(r + 1) * hs, c * ws:(c + 1) * ws] = f
    return FeatureMap(out, (rows, cols), (hs, ws))


def untile(fmap: FeatureMap, count: int | None = None) -> list:
    rows, cols = fmap.grid
    n = rows * cols if count is None else count
    return [fmap.block(k).copy() for k in range(n)]


_GRAY = np.array([0.299, 0.587, 0.114])


def apply_photometric(img: np.ndarray, brightness: float, contrast: float, saturation: float) -> np.ndarray:
    """Brightness scale, then contrast and saturation blends, clamped to uint8."""
    x = img.astype(np.float64) * brightness
    mean = float(np.mean(x @ _GRAY))
    x = contrast * x + (1.0 - contrast) * mean
    gray = (x @ _GRAY)[..., None]
    x = saturation * x + (1.0 - saturation) * gray
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def augment(img: np.ndarray, deltas=(0.2, 0.2, 0.2), seed: int = 0) -> np.ndarray:
    """Random photometric jitter; each factor is drawn from [1 - d, 1 + d]."""
    if any(d < 0 for d in deltas):
        raise ValueError("augmentation ranges must be nonnegative")
    rng = Rng(seed)
    b, c, s = (rng.uniform(1.0 - d, 1.0 + d) for d in deltas)
    return apply_photometric(img, b, c, s)


def build_feature_map(
    maps: Sequence[np.ndarray],
    boxes: Sequence[Optional[BBox]],
    sel: FrameSelection,
    palette: np.ndarray,
    tile_size: int | tuple = 160,
    grid: tuple = (3, 3),
) -> FeatureMap:
    if not maps:
        raise ValueError("no label maps")
    if len(boxes) != len(maps):
        raise ValueError(f"{len(boxes)} boxes for {len(maps)} maps")
    hs, ws = (tile_size, tile_size) if np.isscalar(tile_size) else tile_size
    frames = []
    for i in select_frames(len(maps), sel):
        labels = maps[i]
        if boxes[i] is not None:
            labels = crop_to_bbox(labels, boxes[i])
        frames.append(colorize(resize_nearest(labels, hs, ws), palette))
    return tile(frames, *grid)


# -- files -------------------------------------------------------------------

_FRAME_RE = re.compile(r"_f(\d+)\.pgm$")


def frame_filename(sample_id: str, index: int) -> str:
    return f"{sample_id}_f{index}.pgm"


def read_label_maps(directory, sample_id: str) -> list:
    """All ``<sample_id>_f<k>.pgm`` maps in a directory ordered by k."""
    found = []
    for p in Path(directory).glob(f"{sample_id}_f*.pgm"):
        m = _FRAME_RE.search(p.name)
        if m and p.name == frame_filename(sample_id, int(m.group(1))):
            found.append((int(m.group(1)), p))
    found.sort()
    idx = [k for k, _ in found]
    if idx != list(range(len(idx))):
        raise FormatError(f"{directory}: frame indices for {sample_id} are not 0..N-1")
    return [netpbm.read_pgm(p) for _, p in found]


def parse_bboxes(text: str, num_frames: int) -> list:
    """One ``frame x0 y0 x1 y1`` or ``frame -`` per line; repeated frames union."""
    boxes: list = [None] * num_frames
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        try:
            k = int(parts[0])
            if len(parts) == 2 and parts[1] == "-":
                continue
            if len(parts) != 5:
                raise ValueError
            box = BBox(*(int(v) for v in parts[1:]))
        except ValueError:
            raise FormatError(f"bbox line {lineno}: cannot parse {line!r}") from None
        if not 0 <= k < num_frames:
            raise FormatError(f"bbox line {lineno}: frame {k} outside 0..{num_frames - 1}")
        boxes[k] = box if boxes[k] is None else boxes[k].union(box)
    return boxes


def format_bboxes(boxes: Sequence[Optional[BBox]]) -> str:
    lines = []
    for k, b in enumerate(boxes):
        lines.append(f"{k} -" if b is None else f"{k} {b.x_min} {b.y_min} {b.x_max} {b.y_max}")
    return "\n".join(lines) + "\n"
