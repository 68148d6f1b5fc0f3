"""Convolutional branch over colorized parsing feature maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Parameter, Tensor
from ..errors import ShapeMismatch
from ..rng import Rng


@dataclass(frozen=True)
class CnnConfig:
    classes: int
    blocks: int = 4
    channels: tuple = (8, 16, 32, 32)
    kernel: int = 3

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if len(self.channels) != self.blocks:
            raise ValueError(f"{len(self.channels)} channel widths for {self.blocks} blocks")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))


def images_to_input(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(N, H, W, 3) uint8 -> (N, 3, H, W) floats in [0, 1]."""
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[-1] != 3:
        raise ShapeMismatch(f"expected (N, H, W, 3) images, got {images.shape}")
    return (images.transpose(0, 3, 1, 2).astype(dtype) / dtype(255.0)).astype(dtype)


class CnnModel:
    """blocks x (conv -> relu -> max_pool2) -> global average -> linear."""

    def __init__(self, cfg: CnnConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = Rng(seed)
        k = cfg.kernel
        p = {}
        cin = 3
        for l, cout in enumerate(cfg.channels):
            p[f"block{l}.conv.weight"] = Parameter(
                rng.normal((cout, cin, k, k), np.sqrt(2.0 / (cin * k * k))).astype(self.dtype))
            p[f"block{l}.conv.bias"] = Parameter(np.zeros(cout, dtype=self.dtype))
            cin = cout
        p["fc.weight"] = Parameter(rng.normal((cin, cfg.classes), np.sqrt(1.0 / cin)).astype(self.dtype))
        p["fc.bias"] = Parameter(np.zeros(cfg.classes, dtype=self.dtype))
        for name, prm in p.items():
            prm.name = name
        self.params = p

    def parameters(self) -> list:
        return list(self.params.values())

    def forward(self, x, params: dict | None = None) -> Tensor:
        """``x`` is (N, 3, H, W) in [0, 1]; H and W must survive ``blocks`` halvings."""
        p = self.params if params is None else {**self.params, **params}
        x = ad.as_tensor(x)
        if x.data.ndim != 4 or x.shape[1] != 3:
            raise ShapeMismatch(f"expected (N, 3, H, W), got {x.shape}")
        if min(x.shape[2:]) < 2 ** self.cfg.blocks:
            raise ShapeMismatch(f"{x.shape[2]}x{x.shape[3]} too small for {self.cfg.blocks} pooling stages")
        h = x
        pad = self.cfg.kernel // 2
        for l in range(self.cfg.blocks):
            h = ad.conv2d(h, p[f"block{l}.conv.weight"], p[f"block{l}.conv.bias"], stride=1, pad=pad)
            h = ad.max_pool2(ad.relu(h))
        h = ad.global_avg_pool(h)
        return ad.add(ad.matmul(h, p["fc.weight"]), p["fc.bias"])

    def state_dict(self) -> dict:
        return {name: prm.data for name, prm in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        for name, prm in self.params.items():
            if name not in state or state[name].shape != prm.shape:
                raise ShapeMismatch(f"checkpoint tensor {name!r} missing or mis-shaped")
            prm.data[...] = state[name]
