"""Graph-convolution branch over pose tensors.

Each block mixes channels, aggregates over the normalized skeleton graph
plus a learned adjacency offset shared by all blocks, then convolves along
time with a residual path::

    h = relu((A_hat + offset) . x . W_s + b_s)
    y = relu(tconv(h) + b_t + residual(x))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Parameter, Tensor
from ..errors import IndexOutOfRange, ShapeMismatch
from ..rng import Rng


@dataclass(frozen=True, eq=False)
class AdjacencySpec:
    V: int
    edges: tuple
    normalized: np.ndarray

    def learned_offset(self, dtype=np.float32) -> Parameter:
        return Parameter(np.zeros((self.V, self.V), dtype=dtype), name="adj_offset")


def build_adjacency(edges, V: int) -> AdjacencySpec:
    """D^-1/2 (A + I) D^-1/2 for an undirected edge list."""
    A = np.eye(V, dtype=np.float64)
    clean = []
    for i, j in edges:
        if not (0 <= i < V and 0 <= j < V):
            raise IndexOutOfRange(f"edge ({i}, {j}) outside [0, {V})")
        if i != j:
            A[i, j] = A[j, i] = 1.0
        clean.append((int(i), int(j)))
    deg = A.sum(axis=1)
    return AdjacencySpec(V, tuple(clean), A / np.sqrt(np.outer(deg, deg)))


@dataclass(frozen=True)
class GcnConfig:
    classes: int
    blocks: int = 10
    channels: tuple = (16, 32)  # stage widths, spread evenly over the blocks
    temporal_kernel: int = 9
    in_channels: int = 3

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ValueError("temporal_kernel must be a positive odd integer")
        if not self.channels or min(self.channels) < 1:
            raise ValueError("channels must be positive")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    def block_widths(self) -> list:
        s = len(self.channels)
        return [self.channels[l * s // self.blocks] for l in range(self.blocks)]


class GcnModel:
    """Parameters and forward pass of the pose branch.

    Input batches have shape (N, 3, T, V, M); scores have shape (N, K).
    """

    def __init__(self, cfg: GcnConfig, adjacency: AdjacencySpec, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.adjacency = adjacency
        self.dtype = np.dtype(dtype)
        self.input_scale = np.ones(cfg.in_channels, dtype=self.dtype)
        rng = Rng(seed)
        k = cfg.temporal_kernel
        p = {"adj_offset": adjacency.learned_offset(self.dtype)}
        cin = cfg.in_channels
        for l, cout in enumerate(cfg.block_widths()):
            pre = f"block{l}"
            p[f"{pre}.spatial.weight"] = self._init(rng, (cin, cout), np.sqrt(2.0 / cin))
            p[f"{pre}.spatial.bias"] = self._zeros(cout)
            # kept small so ten residual blocks start close to identity
            p[f"{pre}.temporal.weight"] = self._init(rng, (k, cout, cout), 0.5 / np.sqrt(k * cout))
            p[f"{pre}.temporal.bias"] = self._zeros(cout)
            if cin != cout:
                p[f"{pre}.residual.weight"] = self._init(rng, (cin, cout), np.sqrt(1.0 / cin))
            cin = cout
        p["fc.weight"] = self._init(rng, (cin, cfg.classes), np.sqrt(1.0 / cin))
        p["fc.bias"] = self._zeros(cfg.classes)
        for name, param in p.items():
            param.name = name
        self.params = p

    def _init(self, rng, shape, std):
        return Parameter(rng.normal(shape, std).astype(self.dtype))

    def _zeros(self, n):
        return Parameter(np.zeros(n, dtype=self.dtype))

    def parameters(self) -> list:
        return list(self.params.values())

    def fit_input_scale(self, x: np.ndarray) -> None:
        """Per-channel RMS of the training inputs; inputs are divided by it."""
        x = np.asarray(x, dtype=np.float64)
        rms = np.sqrt(np.mean(x ** 2, axis=tuple(a for a in range(x.ndim) if a != 1)))
        self.input_scale = np.where(rms > 0, rms, 1.0).astype(self.dtype)

    def forward(self, x, params: dict | None = None) -> Tensor:
        p = self.params if params is None else {**self.params, **params}
        x = ad.as_tensor(x)
        if x.data.ndim != 5:
            raise ShapeMismatch(f"expected (N, C, T, V, M), got {x.shape}")
        N, C, T, V, M = x.shape
        if V != self.adjacency.V or C != self.cfg.in_channels:
            raise ShapeMismatch(
                f"input has C={C}, V={V}; model expects C={self.cfg.in_channels}, V={self.adjacency.V}"
            )
        h = ad.mul(x, (1.0 / self.input_scale).astype(self.dtype)[None, :, None, None, None])
        h = ad.reshape(ad.transpose(h, (0, 4, 2, 3, 1)), (N * M, T, V, C))
        adj = ad.add(self.adjacency.normalized.astype(self.dtype), p["adj_offset"])
        pad = self.cfg.temporal_kernel // 2
        for l in range(self.cfg.blocks):
            pre = f"block{l}"
            s = ad.vertex_mix(ad.matmul(h, p[f"{pre}.spatial.weight"]), adj)
            s = ad.relu(ad.add(s, p[f"{pre}.spatial.bias"]))
            res = h if f"{pre}.residual.weight" not in p else ad.matmul(h, p[f"{pre}.residual.weight"])
            y = ad.add(ad.temporal_conv(s, p[f"{pre}.temporal.weight"], pad), p[f"{pre}.temporal.bias"])
            h = ad.relu(ad.add(y, res))
        pooled = ad.mean(h, (1, 2))  # (N*M, C)
        pooled = ad.max_axis(ad.reshape(pooled, (N, M, pooled.shape[-1])), 1)
        return ad.add(ad.matmul(pooled, p["fc.weight"]), p["fc.bias"])

    def state_dict(self) -> dict:
        state = {name: prm.data for name, prm in self.params.items()}
        state["input_scale"] = self.input_scale
        return state

    def load_state_dict(self, state: dict) -> None:
        for name, prm in self.params.items():
            if name not in state or state[name].shape != prm.shape:
                raise ShapeMismatch(f"checkpoint tensor {name!r} missing or mis-shaped")
            prm.data[...] = state[name]
        if "input_scale" in state:
            self.input_scale = np.asarray(state["input_scale"], dtype=self.dtype)
