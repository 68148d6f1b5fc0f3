"""Joint, bone, joint-motion and bone-motion views of a pose tensor.

All tensors use the layout (3, T, V, M). Leading batch axes are allowed:
every function works on the last four axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import FormatError, IndexOutOfRange, TopologyShapeMismatch


class ModalityKind(str, Enum):
    J = "J"
    B = "B"
    JM = "JM"
    BM = "BM"


SKELETON_MODALITIES = ("J", "B", "JM", "BM")


@dataclass(frozen=True)
class BoneTopology:
    """Child -> parent pairs, one per vertex in vertex order; roots map to themselves."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(c), int(p)) for c, p in self.pairs)
        V = len(pairs)
        for i, (c, p) in enumerate(pairs):
            if c != i:
                raise FormatError(f"pair {i} names child {c}; pairs must follow vertex order")
            if not 0 <= p < V:
                raise IndexOutOfRange(f"parent {p} of vertex {c} outside [0, {V})")
        for start in range(V):
            seen, v = set(), start
            while pairs[v][1] != v:
                if v in seen:
                    raise FormatError(f"cycle in parent relation through vertex {v}")
                seen.add(v)
                v = pairs[v][1]
        object.__setattr__(self, "pairs", pairs)

    @property
    def num_vertices(self) -> int:
        return len(self.pairs)

    @property
    def parents(self) -> np.ndarray:
        return np.array([p for _, p in self.pairs], dtype=np.int64)

    def edges(self) -> list:
        """Undirected bone list without the root self-pairs."""
        return [(c, p) for c, p in self.pairs if c != p]


def read_topology(path) -> BoneTopology:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'child parent', got {line!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer entry {line!r}") from None
    return BoneTopology(tuple(pairs))


def ntu_topology() -> BoneTopology:
    """The 25-joint Kinect v2 tree rooted at the spine base."""
    with resources.as_file(resources.files("eppnet") / "data" / "ntu25_topology.txt") as p:
        return read_topology(p)


def derive_bone(pose: np.ndarray, topo: BoneTopology) -> np.ndarray:
    pose = np.asarray(pose)
    if pose.shape[-2] != topo.num_vertices:
        raise TopologyShapeMismatch(
            f"pose has {pose.shape[-2]} vertices, topology has {topo.num_vertices}"
        )
    return pose - pose[..., topo.parents, :]


def derive_motion(x: np.ndarray) -> np.ndarray:
    """Frame differences x[t+1] - x[t]; the last frame is zero."""
    x = np.asarray(x)
    out = np.zeros_like(x)
    out[..., :-1, :, :] = x[..., 1:, :, :] - x[..., :-1, :, :]
    return out


def derive_all(pose: np.ndarray, topo: BoneTopology) -> dict:
    bone = derive_bone(pose, topo)
    return {"J": pose, "B": bone, "JM": derive_motion(pose), "BM": derive_motion(bone)}
