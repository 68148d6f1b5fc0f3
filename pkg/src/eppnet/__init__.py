"""Skeleton + human-parsing action recognition with weighted late fusion.

Submodules:

- ``skeleton_io``: ``.skeleton`` parsing, body selection, normalization
- ``modalities``: joint / bone / motion tensors
- ``parsemap``: parsing label maps -> tiled RGB feature maps
- ``autodiff``, ``optim``, ``checkpoint``: numerical substrate
- ``branches``: GCN and CNN classifiers, training and evaluation
- ``fusion``: late fusion, metrics and confusion exports
- ``pipeline``, ``synth``, ``cli``: orchestration and synthetic data
"""

from . import autodiff, branches, checkpoint, fusion, modalities, optim, parsemap, skeleton_io
from .errors import EppNetError
from .fusion import EnsembleWeights, compute_metrics, decide, late_fuse
from .modalities import derive_all, derive_bone, derive_motion, ntu_topology
from .rng import Rng, derive_seed
from .skeleton_io import load_pose, parse_skeleton_file, read_skeleton

__version__ = "0.1.0"

__all__ = [
    "EnsembleWeights", "EppNetError", "Rng", "autodiff", "branches", "checkpoint",
    "compute_metrics", "decide", "derive_all", "derive_bone", "derive_motion",
    "derive_seed", "fusion", "late_fuse", "load_pose", "modalities", "ntu_topology",
    "optim", "parsemap", "parse_skeleton_file", "read_skeleton", "skeleton_io",
]
