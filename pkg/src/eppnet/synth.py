"""Synthetic skeleton + parsing datasets for desk-scale runs.

``motion`` mode gives every class its own limb trajectory and its own
clothing/arm layout, so both branches can learn it. ``complementary`` mode
has four classes indexed by two bits: skeletons only see bit 0 (label % 2)
and parsing maps only see bit 1 (label // 2). Samples that agree on a bit
share the random stream of that modality, so the two classes of a pair are
indistinguishable to a single modality.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import netpbm
from .errors import EppNetError
from .parsemap import BBox, format_bboxes, frame_filename
from .rng import Rng, derive_seed
from .skeleton_io import BodyFrame, SkeletonSequence, serialize_skeleton

MOTION = "motion"
COMPLEMENTARY = "complementary"

# rest pose of the 25 Kinect joints, meters (x right, y up, z depth offset)
REST_POSE = np.array([
    [0.00, 0.00, 0.00], [0.00, 0.30, 0.00], [0.00, 0.62, 0.00], [0.00, 0.75, 0.00],
    [-0.18, 0.52, 0.00], [-0.22, 0.27, 0.02], [-0.24, 0.05, 0.03], [-0.25, -0.02, 0.03],
    [0.18, 0.52, 0.00], [0.22, 0.27, 0.02], [0.24, 0.05, 0.03], [0.25, -0.02, 0.03],
    [-0.10, -0.05, 0.00], [-0.11, -0.45, 0.02], [-0.12, -0.85, 0.00], [-0.12, -0.90, -0.10],
    [0.10, -0.05, 0.00], [0.11, -0.45, 0.02], [0.12, -0.85, 0.00], [0.12, -0.90, -0.10],
    [0.00, 0.55, 0.00], [-0.26, -0.08, 0.03], [-0.22, -0.03, 0.05], [0.26, -0.08, 0.03],
    [0.22, -0.03, 0.05],
])

# (joint indices, lever weight per joint) for the limbs a template can move
LIMBS = [
    ([5, 6, 7, 21, 22], [0.5, 1.0, 1.1, 1.2, 1.1]),   # left arm
    ([9, 10, 11, 23, 24], [0.5, 1.0, 1.1, 1.2, 1.1]),  # right arm
    ([13, 14, 15], [0.5, 1.0, 1.1]),                   # left leg
    ([17, 18, 19], [0.5, 1.0, 1.1]),                   # right leg
    ([1, 20, 2, 3, 4, 8], [0.3, 0.6, 0.7, 0.8, 0.6, 0.6]),  # torso bend
]
DIRECTIONS = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.7, 0.7, 0.0]])

FRAME_H, FRAME_W = 72, 96
# LIP-style category ids used by the rasterizer
FACE, HAIR, PANTS, L_ARM, R_ARM, L_LEG, R_LEG, L_SHOE, R_SHOE = 13, 2, 9, 14, 15, 16, 17, 18, 19
CLOTHES = [5, 7, 6, 10, 12, 1, 3, 4]


def _template(c: int):
    # limbs mirror each other in the graph, so direction and tempo vary too
    limb = c % len(LIMBS)
    direction = DIRECTIONS[c % len(DIRECTIONS)]
    cycles = 1 + c % 3
    return limb, direction, cycles


def skeleton_xyz(template: int, n_frames: int, rng: Rng) -> np.ndarray:
    """(n_frames, 25, 3) joint trajectory for one motion template."""
    limb, direction, cycles = _template(template)
    joints, lever = LIMBS[limb]
    amp = rng.uniform(0.25, 0.35)
    phase = rng.uniform(0.0, 2 * np.pi)
    origin = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1), rng.uniform(2.6, 3.4)])
    t = np.arange(n_frames) / n_frames
    wave = amp * np.sin(2 * np.pi * cycles * t + phase)
    xyz = np.repeat((REST_POSE + origin)[None], n_frames, axis=0)
    xyz[:, joints] += wave[:, None, None] * np.asarray(lever)[None, :, None] * direction
    sway = rng.normal((n_frames, 1, 3), 0.005).cumsum(axis=0)
    xyz += sway + rng.normal(xyz.shape, 0.01)
    return np.round(xyz, 6)


def _body(body_id: int, xyz: np.ndarray) -> BodyFrame:
    joints = np.zeros((xyz.shape[0], 12))
    joints[:, :3] = xyz
    # plausible depth/color projections and an identity orientation
    joints[:, 3] = np.round(256 + 280 * xyz[:, 0] / xyz[:, 2], 4)
    joints[:, 4] = np.round(212 - 280 * xyz[:, 1] / xyz[:, 2], 4)
    joints[:, 5] = np.round(960 + 1060 * xyz[:, 0] / xyz[:, 2], 4)
    joints[:, 6] = np.round(540 - 1060 * xyz[:, 1] / xyz[:, 2], 4)
    joints[:, 7] = 1.0
    joints[:, 11] = 2
    return BodyFrame(body_id, (0, 1, 1, 1, 1, 0, 0.01, -0.02, 2), joints)


def skeleton_sequence(sample_id, xyz: np.ndarray, body_id: int, extra=None) -> SkeletonSequence:
    frames = []
    for t in range(xyz.shape[0]):
        bodies = [_body(body_id, xyz[t])]
        if extra is not None:
            bodies.append(_body(extra[0], extra[1][t]))
        frames.append(tuple(bodies))
    return SkeletonSequence(sample_id, tuple(frames), 25)


def _rect(img, y0, y1, x0, x1, label):
    h, w = img.shape
    y0, y1 = max(int(round(y0)), 0), min(int(round(y1)), h)
    x0, x1 = max(int(round(x0)), 0), min(int(round(x1)), w)
    if y0 < y1 and x0 < x1:
        img[y0:y1, x0:x1] = label


def parsing_frames(clothes: int, arm_pose: int, n_frames: int, rng: Rng):
    """Label maps and person boxes for one sample.

    ``arm_pose`` picks how the arms move: 0 hanging, 1 raised, 2 waving,
    3 held out sideways.
    """
    height = rng.uniform(52, 64)
    width = height * 0.5
    x_left = rng.uniform(4, FRAME_W - width - 4)
    top = rng.uniform(2, FRAME_H - height - 2)
    drift = rng.uniform(-0.15, 0.15)
    phase = rng.uniform(0, 2 * np.pi)
    misses = rng.random(n_frames) < 0.1
    maps, boxes = [], []
    for k in range(n_frames):
        img = np.zeros((FRAME_H, FRAME_W), dtype=np.uint8)
        x0 = x_left + drift * k
        u = height / 10.0
        cx = x0 + width / 2
        _rect(img, top, top + 0.6 * u, cx - 0.9 * u, cx + 0.9 * u, HAIR)
        _rect(img, top + 0.6 * u, top + 1.6 * u, cx - 0.8 * u, cx + 0.8 * u, FACE)
        _rect(img, top + 1.7 * u, top + 5.2 * u, cx - 1.4 * u, cx + 1.4 * u, clothes)
        _rect(img, top + 5.2 * u, top + 9.0 * u, cx - 1.3 * u, cx - 0.1 * u, L_LEG)
        _rect(img, top + 5.2 * u, top + 9.0 * u, cx + 0.1 * u, cx + 1.3 * u, R_LEG)
        _rect(img, top + 5.2 * u, top + 6.6 * u, cx - 1.3 * u, cx + 1.3 * u, PANTS)
        _rect(img, top + 9.0 * u, top + 10 * u, cx - 1.5 * u, cx - 0.1 * u, L_SHOE)
        _rect(img, top + 9.0 * u, top + 10 * u, cx + 0.1 * u, cx + 1.5 * u, R_SHOE)
        s = np.sin(2 * np.pi * k / max(n_frames, 1) * 2 + phase)
        for side, label in ((-1, L_ARM), (1, R_ARM)):
            ax = cx + side * 1.9 * u
            if arm_pose == 0:
                _rect(img, top + 1.8 * u, top + 5.4 * u, ax - 0.4 * u, ax + 0.4 * u, label)
            elif arm_pose == 1:
                _rect(img, top - 1.0 * u, top + 2.2 * u, ax - 0.4 * u, ax + 0.4 * u, label)
            elif arm_pose == 2:
                y = top + (0.5 - 1.5 * s * (side > 0)) * u
                _rect(img, y, y + 3.2 * u, ax - 0.4 * u, ax + 0.4 * u, label)
            else:
                _rect(img, top + 1.8 * u, top + 2.6 * u, min(ax, ax + side * 1.8 * u),
                      max(ax, ax + side * 1.8 * u), label)
        noise = rng.random(img.size) < 0.01
        img.reshape(-1)[noise] = rng.integers(20, int(noise.sum()))
        maps.append(img)
        if misses[k]:
            boxes.append(None)
        else:
            boxes.append(BBox(max(int(np.floor(x0 - 0.7 * u)), 0), max(int(np.floor(top - 1.2 * u)), 0),
                              min(int(np.ceil(x0 + width + 0.7 * u)), FRAME_W),
                              min(int(np.ceil(top + height + 0.5)), FRAME_H)))
    return maps, boxes


def sample_name(index: int, label: int) -> str:
    return f"S001C001P{index + 1:03d}R001A{label + 1:03d}"


def is_test(index: int) -> bool:
    return index % 5 == 4


def synthesize(out_dir, classes: int = 4, samples_per_class: int = 16, seed: int = 0,
               mode: str = MOTION, write_config: bool = True) -> dict:
    """Write skeletons, parsing maps, boxes and a manifest; returns the manifest."""
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if mode not in (MOTION, COMPLEMENTARY):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == COMPLEMENTARY and classes != 4:
        raise ValueError("complementary mode has exactly 4 classes")
    if samples_per_class > 999:
        raise ValueError("at most 999 samples per class fit the naming scheme")
    out = Path(out_dir)
    try:
        for sub in ("skeletons", "parsing", "bboxes"):
            (out / sub).mkdir(parents=True, exist_ok=True)
        entries = []
        for label in range(classes):
            for j in range(samples_per_class):
                entries.append(_write_sample(out, mode, label, j, seed))
        manifest = {"classes": classes, "mode": mode, "seed": seed, "entries": entries}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        if write_config:
            (out / "config.json").write_text(json.dumps(desk_config(classes), indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise EppNetError(f"cannot write synthetic data to {out}: {exc}") from exc
    return manifest


def _write_sample(out: Path, mode: str, label: int, j: int, seed: int) -> dict:
    sid = sample_name(j, label)
    n_frames = 30 + int(Rng(derive_seed(seed, f"len/{j}")).integers(21, 1)[0])
    if mode == MOTION:
        skel_rng = Rng(derive_seed(seed, f"skel/{label}/{j}"))
        parse_rng = Rng(derive_seed(seed, f"parse/{label}/{j}"))
        template, clothes, arms = label, CLOTHES[label % len(CLOTHES)], (label // len(CLOTHES)) % 4
    else:
        bit0, bit1 = label % 2, label // 2
        skel_rng = Rng(derive_seed(seed, f"skel/bit{bit0}/{j}"))
        parse_rng = Rng(derive_seed(seed, f"parse/bit{bit1}/{j}"))
        template, clothes, arms = bit0, CLOTHES[bit1], 0
    xyz = skeleton_xyz(template, n_frames, skel_rng)
    body_id = 72057594037927936 + 1000 * j + 1
    extra = None
    if mode == MOTION and j % 4 == 3:
        # a spurious near-static body the energy ranking should discard
        still = np.repeat((REST_POSE + [1.2, 0.0, 4.0])[None], n_frames, axis=0)
        extra = (body_id + 1, np.round(still + skel_rng.normal(still.shape, 0.001), 6))
    seq = skeleton_sequence(sid, xyz, body_id, extra)
    (out / "skeletons" / f"{sid}.skeleton").write_text(serialize_skeleton(seq), encoding="ascii")
    maps, boxes = parsing_frames(clothes, arms, n_frames, parse_rng)
    pdir = out / "parsing" / sid
    pdir.mkdir(exist_ok=True)
    for k, m in enumerate(maps):
        netpbm.write_pgm(pdir / frame_filename(sid, k), m)
    (out / "bboxes" / f"{sid}.txt").write_text(format_bboxes(boxes))
    return {
        "sample_id": sid,
        "skeleton_path": f"skeletons/{sid}.skeleton",
        "parsing_dir": f"parsing/{sid}",
        "bbox_path": f"bboxes/{sid}.txt",
        "label": label,
        "split": "test" if is_test(j) else "train",
    }


def desk_config(classes: int) -> dict:
    """Pipeline config sized for a laptop CPU; paths are relative to the config file."""
    return {
        "manifest": "manifest.json",
        "workspace": "workspace",
        "classes": classes,
        "joint_count": 25,
        "max_bodies": 1,
        "T_fixed": 20,
        "seed": 0,
        "modalities": ["J", "B", "JM", "BM", "P"],
        "weights": {"J": 2, "B": 2, "JM": 1, "BM": 1, "P": 2},
        "parsemap": {"frames": 9, "tile_size": 160, "grid": [3, 3], "labels": 20,
                     "input_size": 48, "train_random": True, "augment_delta": 0.2},
        "gcn": {"blocks": 10, "channels": [16, 32], "temporal_kernel": 9},
        "cnn": {"blocks": 4, "channels": [8, 16, 32, 32]},
        "train": {
            "gcn": {"learning_rate": 0.02, "momentum": 0.9, "weight_decay": 0.0004,
                    "schedule": [], "epochs": 200, "batch_size": 16,
                    "clip_norm": 1.0, "stop_at_accuracy": 0.95},
            "cnn": {"learning_rate": 0.05, "momentum": 0.9, "weight_decay": 0.0004,
                    "schedule": [], "epochs": 200, "batch_size": 16,
                    "clip_norm": 1.0, "stop_at_accuracy": 0.95},
        },
    }
