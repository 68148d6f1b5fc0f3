"""Reading, writing and shaping Kinect ``.skeleton`` sequences.

File layout (whitespace separated, ASCII)::

    frame_count
    per frame:  body_count
    per body:   body_id + 9 metadata values
                joint_count
                joint_count lines of 12 values
                (x y z depthX depthY colorX colorY oriW oriX oriY oriZ trackingState)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptySequence,
    JointCountMismatch,
    MalformedNumber,
    NonFiniteValue,
    SkeletonParseError,
    TruncatedFile,
)
from .sampling import center_indices

JOINT_FIELDS = (
    "x", "y", "z", "depth_x", "depth_y", "color_x", "color_y",
    "orientation_w", "orientation_x", "orientation_y", "orientation_z",
    "tracking_state",
)
BODY_META_FIELDS = (
    "cliped_edges", "hand_left_confidence", "hand_left_state",
    "hand_right_confidence", "hand_right_state", "is_restricted",
    "lean_x", "lean_y", "tracking_state",
)
NTU_JOINTS = 25

_SAMPLE_RE = re.compile(r"S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})")


@dataclass(frozen=True)
class Joint3D:
    x: float
    y: float
    z: float
    depth_x: float
    depth_y: float
    color_x: float
    color_y: float
    orientation_w: float
    orientation_x: float
    orientation_y: float
    orientation_z: float
    tracking_state: int


@dataclass(frozen=True, eq=False)
class BodyFrame:
    """One tracked body in one frame.

    ``joints`` is a read-only float64 array of shape (joint_count, 12) whose
    columns follow ``JOINT_FIELDS``.
    """

    body_id: int
    meta: tuple
    joints: np.ndarray

    def __post_init__(self):
        arr = np.array(self.joints, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[1] != len(JOINT_FIELDS):
            raise ValueError(f"joints must be (J, 12), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "joints", arr)
        object.__setattr__(self, "meta", tuple(float(v) for v in self.meta))
        if len(self.meta) != len(BODY_META_FIELDS):
            raise ValueError(f"meta must hold {len(BODY_META_FIELDS)} values")

    @property
    def xyz(self) -> np.ndarray:
        return self.joints[:, :3]

    def joint(self, i: int) -> Joint3D:
        row = self.joints[i]
        return Joint3D(*(float(v) for v in row[:11]), int(row[11]))

    def with_xyz(self, xyz: np.ndarray) -> "BodyFrame":
        arr = self.joints.copy()
        arr[:, :3] = xyz
        return BodyFrame(self.body_id, self.meta, arr)

    def __eq__(self, other):
        if not isinstance(other, BodyFrame):
            return NotImplemented
        return (
            self.body_id == other.body_id
            and self.meta == other.meta
            and self.joints.shape == other.joints.shape
            and bool(np.array_equal(self.joints, other.joints))
        )

    __hash__ = None


@dataclass(frozen=True)
class SkeletonSequence:
    sample_id: str
    frames: tuple  # tuple[tuple[BodyFrame, ...], ...]
    joint_count: int

    def __post_init__(self):
        frames = tuple(tuple(f) for f in self.frames)
        for t, bodies in enumerate(frames):
            for b in bodies:
                if b.joints.shape[0] != self.joint_count:
                    raise JointCountMismatch(
                        f"frame {t}, body {b.body_id}: {b.joints.shape[0]} joints, "
                        f"expected {self.joint_count}"
                    )
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def body_ids(self) -> list:
        seen = []
        for bodies in self.frames:
            for b in bodies:
                if b.body_id not in seen:
                    seen.append(b.body_id)
        return seen


def parse_sample_name(name: str) -> dict | None:
    """Split an ``SsssCcccPpppRrrrAaaa`` stem into its fields.

    ``label`` is the zero-based action class. Returns None when the name
    does not follow the convention.
    """
    m = _SAMPLE_RE.search(name)
    if m is None:
        return None
    s, c, p, r, a = (int(g) for g in m.groups())
    return {"setup": s, "camera": c, "performer": p, "replication": r,
            "action": a, "label": a - 1}


class _Tokens:
    def __init__(self, tokens: list):
        self.tokens = tokens
        self.pos = 0

    def _next(self, what: str) -> str:
        if self.pos >= len(self.tokens):
            raise TruncatedFile(f"stream ended while reading {what} (token {self.pos})")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def count(self, what: str) -> int:
        tok = self._next(what)
        try:
            value = int(tok)
        except ValueError:
            raise MalformedNumber(f"{what}: {tok!r} is not an integer (token {self.pos - 1})") from None
        if value < 0:
            raise MalformedNumber(f"{what}: negative count {value}")
        return value

    def identifier(self, what: str) -> int:
        tok = self._next(what)
        try:
            return int(tok)
        except ValueError:
            raise MalformedNumber(f"{what}: {tok!r} is not an integer (token {self.pos - 1})") from None

    def floats(self, n: int, what: str) -> np.ndarray:
        start = self.pos
        if start + n > len(self.tokens):
            raise TruncatedFile(
                f"stream ended while reading {what}: need {n} values, "
                f"{len(self.tokens) - start} left"
            )
        chunk = self.tokens[start:start + n]
        self.pos += n
        try:
            arr = np.array([float(tok) for tok in chunk], dtype=np.float64)
        except ValueError:
            for k, tok in enumerate(chunk):
                try:
                    float(tok)
                except ValueError:
                    raise MalformedNumber(
                        f"{what}: {tok!r} is not a number (token {start + k})"
                    ) from None
            raise  # pragma: no cover
        if not np.all(np.isfinite(arr)):
            k = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise NonFiniteValue(f"{what}: non-finite value {chunk[k]!r} (token {start + k})")
        return arr


def parse_skeleton_file(text, sample_id: str = "", joint_count: int | None = None) -> SkeletonSequence:
    """Parse the text of a ``.skeleton`` file.

    ``joint_count`` fixes the expected per-body joint count; when None the
    first body seen sets it and all later bodies must agree.
    """
    if isinstance(text, (bytes, bytearray, memoryview)):
        try:
            text = bytes(text).decode("ascii")
        except UnicodeDecodeError as exc:
            raise MalformedNumber(f"non-ASCII byte at offset {exc.start}") from None
    toks = _Tokens(text.split())
    n_frames = toks.count("frame_count")
    expected = joint_count
    frames = []
    for t in range(n_frames):
        n_bodies = toks.count(f"body_count of frame {t}")
        bodies = []
        for m in range(n_bodies):
            body_id = toks.identifier(f"body_id (frame {t}, body {m})")
            meta = toks.floats(len(BODY_META_FIELDS), f"body metadata (frame {t}, body {m})")
            n_joints = toks.count(f"joint_count (frame {t}, body {m})")
            if expected is None:
                expected = n_joints
            elif n_joints != expected:
                raise JointCountMismatch(
                    f"frame {t}, body {m}: declares {n_joints} joints, expected {expected}"
                )
            vals = toks.floats(n_joints * len(JOINT_FIELDS), f"joints (frame {t}, body {m})")
            bodies.append(BodyFrame(body_id, tuple(meta), vals.reshape(n_joints, len(JOINT_FIELDS))))
        frames.append(tuple(bodies))
    if toks.pos != len(toks.tokens):
        raise SkeletonParseError(
            f"{len(toks.tokens) - toks.pos} unexpected tokens after the last declared frame"
        )
    if expected is None:
        expected = joint_count if joint_count is not None else NTU_JOINTS
    return SkeletonSequence(sample_id, tuple(frames), expected)


def read_skeleton(path, joint_count: int | None = None) -> SkeletonSequence:
    path = Path(path)
    return parse_skeleton_file(path.read_bytes(), sample_id=path.stem, joint_count=joint_count)


def _fmt(v: float) -> str:
    if v.is_integer() and abs(v) < 2 ** 53 and math.copysign(1.0, v) > 0:
        return str(int(v))
    return repr(v)


def serialize_skeleton(seq: SkeletonSequence) -> str:
    """Canonical text form; parse(serialize(s)) reproduces s exactly."""
    out = [str(len(seq.frames))]
    for bodies in seq.frames:
        out.append(str(len(bodies)))
        for b in bodies:
            out.append(" ".join([str(b.body_id)] + [_fmt(v) for v in b.meta]))
            out.append(str(b.joints.shape[0]))
            for row in b.joints:
                out.append(" ".join(_fmt(float(v)) for v in row))
    return "\n".join(out) + "\n"


def write_skeleton(path, seq: SkeletonSequence) -> None:
    Path(path).write_text(serialize_skeleton(seq), encoding="ascii")


def motion_energy(seq: SkeletonSequence) -> dict:
    """Sum of squared frame-to-frame xyz differences per body_id."""
    energy = {bid: 0.0 for bid in seq.body_ids()}
    prev = {}
    for bodies in seq.frames:
        cur = {}
        for b in bodies:
            cur.setdefault(b.body_id, b.xyz)
        for bid, xyz in cur.items():
            if bid in prev:
                energy[bid] += float(np.sum((xyz - prev[bid]) ** 2))
        prev = cur
    return energy


def select_primary_bodies(seq: SkeletonSequence, max_bodies: int) -> SkeletonSequence:
    """Keep the ``max_bodies`` most active bodies, ordered by descending energy."""
    if max_bodies < 1:
        raise ValueError("max_bodies must be >= 1")
    energy = motion_energy(seq)
    if not energy:
        return seq
    ranked = sorted(energy, key=lambda bid: (-energy[bid], bid))[:max_bodies]
    rank = {bid: r for r, bid in enumerate(ranked)}
    frames = []
    for bodies in seq.frames:
        kept = [b for b in bodies if b.body_id in rank]
        kept.sort(key=lambda b: rank[b.body_id])
        frames.append(tuple(kept))
    return SkeletonSequence(seq.sample_id, tuple(frames), seq.joint_count)


def normalize_sequence(seq: SkeletonSequence) -> SkeletonSequence:
    """Translate so the first body's joint 0 in the first non-empty frame sits at the origin."""
    anchor = None
    for bodies in seq.frames:
        if bodies:
            anchor = bodies[0].xyz[0].copy()
            break
    if anchor is None:
        raise EmptySequence(f"{seq.sample_id or 'sequence'} has no bodies to anchor on")
    frames = tuple(
        tuple(b.with_xyz(b.xyz - anchor) for b in bodies) for bodies in seq.frames
    )
    return SkeletonSequence(seq.sample_id, frames, seq.joint_count)


def to_pose_tensor(seq: SkeletonSequence, T_fixed: int, M: int) -> np.ndarray:
    """Dense float32 array of shape (3, T_fixed, V, M).

    Longer sequences are subsampled with the center rule, shorter ones are
    zero padded at the tail. Body slot m is the m-th body listed in a frame.
    """
    if T_fixed < 1 or M < 1:
        raise ValueError("T_fixed and M must be >= 1")
    V = seq.joint_count
    out = np.zeros((3, T_fixed, V, M), dtype=np.float32)
    n = seq.num_frames
    if n == 0:
        return out
    src = center_indices(n, T_fixed) if n > T_fixed else np.arange(n)
    for t, s in enumerate(src):
        for m, body in enumerate(seq.frames[s][:M]):
            out[:, t, :, m] = body.xyz.T
    return out


def load_pose(path, T_fixed: int, M: int, joint_count: int | None = None) -> np.ndarray:
    """read -> select_primary_bodies -> normalize -> to_pose_tensor."""
    seq = read_skeleton(path, joint_count=joint_count)
    seq = select_primary_bodies(seq, M)
    if any(seq.frames):
        seq = normalize_sequence(seq)
    return to_pose_tensor(seq, T_fixed, M)


def make_sequence(xyz: np.ndarray, body_ids: Sequence[int] | None = None, sample_id: str = "") -> SkeletonSequence:
    """Build a sequence from an xyz array of shape (T, M, V, 3); other fields zero."""
    xyz = np.asarray(xyz, dtype=np.float64)
    T, M, V, _ = xyz.shape
    ids: Iterable[int] = body_ids if body_ids is not None else range(M)
    ids = list(ids)
    frames = []
    for t in range(T):
        bodies = []
        for m in range(M):
            joints = np.zeros((V, len(JOINT_FIELDS)))
            joints[:, :3] = xyz[t, m]
            joints[:, 11] = 2
            bodies.append(BodyFrame(ids[m], (0,) * len(BODY_META_FIELDS), joints))
        frames.append(tuple(bodies))
    return SkeletonSequence(sample_id, tuple(frames), V)
