"""Small reverse-mode autodiff over numpy arrays.

Each op returns a :class:`Tensor` that remembers its inputs and a closure
pushing the output gradient back to them. ``Tensor.backward`` walks the
graph in reverse topological order. Only the ops the two branches need are
provided; broadcasting is limited to ``add``/``mul``.
"""

from __future__ import annotations

import numpy as np

from .errors import LabelOutOfRange, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "name")

    def __init__(self, data, _prev=(), requires_grad=False, name=""):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._prev = _prev
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{', grad' if self.requires_grad else ''})"

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Trainable tensor with persistent gradient and momentum buffers."""

    __slots__ = ("velocity",)

    def __init__(self, value, name=""):
        super().__init__(np.array(value, copy=True), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)
        self.velocity = np.zeros_like(self.data)

    @property
    def value(self):
        return self.data

    def _accumulate(self, g):
        self.grad += g

    def zero_grad(self):
        self.grad[...] = 0


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, tuple(parents) if needs else (), requires_grad=needs)
    if needs:
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """a[..., k] @ b[k, n]."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    k, n = b.shape
    a2 = a.data.reshape(-1, k)
    out = (a2 @ b.data).reshape(a.shape[:-1] + (n,))

    def backward(g):
        g2 = g.reshape(-1, n)
        if a.requires_grad:
            a._accumulate((g2 @ b.data.T).reshape(a.shape))
        if b.requires_grad:
            b._accumulate(a2.T @ g2)

    return _make(out, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0)

    def backward(g):
        x._accumulate(g * (out > 0))

    return _make(out, (x,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _make(x.data.reshape(shape), (x,), backward)


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)

    def backward(g):
        x._accumulate(g.transpose(inv))

    return _make(x.data.transpose(axes), (x,), backward)


def sum_all(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape).astype(x.dtype))

    return _make(np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype), (x,), backward)


def mean(x, axis) -> Tensor:
    """Mean over ``axis`` (int or tuple), accumulated in float64."""
    x = as_tensor(x)
    axes = (axis,) if np.isscalar(axis) else tuple(axis)
    axes = tuple(a % x.data.ndim for a in axes)
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes, dtype=np.float64).astype(x.dtype)

    def backward(g):
        g = np.expand_dims(g, axes) / count
        x._accumulate(np.broadcast_to(g, x.shape).astype(x.dtype))

    return _make(out, (x,), backward)


def max_axis(x, axis: int) -> Tensor:
    """Max over one axis; the gradient goes to the first maximal entry."""
    x = as_tensor(x)
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        x._accumulate(gx)

    return _make(out, (x,), backward)


def vertex_mix(x, adj) -> Tensor:
    """out[b, t, v, c] = sum_u adj[v, u] * x[b, t, u, c]."""
    x, adj = as_tensor(x), as_tensor(adj)
    V = adj.shape[0]
    if adj.shape != (V, V) or x.data.ndim != 4 or x.shape[2] != V:
        raise ShapeMismatch(f"vertex_mix {x.shape} with adjacency {adj.shape}")
    out = np.moveaxis(np.tensordot(adj.data, x.data, axes=([1], [2])), 0, 2)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.moveaxis(np.tensordot(adj.data, g, axes=([0], [2])), 0, 2))
        if adj.requires_grad:
            adj._accumulate(np.tensordot(g, x.data, axes=([0, 1, 3], [0, 1, 3])))

    return _make(np.ascontiguousarray(out), (x, adj), backward)


def temporal_conv(x, kernel, pad: int) -> Tensor:
    """Convolution along axis 1 of x[B, T, V, C_in] with kernel[k, C_in, C_out], stride 1."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    k, cin, cout = kernel.shape
    if x.data.ndim != 4 or x.shape[3] != cin:
        raise ShapeMismatch(f"temporal_conv {x.shape} with kernel {kernel.shape}")
    B, T, V, _ = x.shape
    t_out = T + 2 * pad - k + 1
    if t_out < 1:
        raise ShapeMismatch(f"kernel {k} longer than padded sequence {T + 2 * pad}")
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0), (0, 0)))
    cols = np.concatenate([xp[:, j:j + t_out] for j in range(k)], axis=-1).reshape(-1, k * cin)
    kmat = kernel.data.reshape(k * cin, cout)
    out = (cols @ kmat).reshape(B, t_out, V, cout)

    def backward(g):
        g2 = g.reshape(-1, cout)
        if kernel.requires_grad:
            kernel._accumulate((cols.T @ g2).reshape(kernel.shape))
        if x.requires_grad:
            gcols = (g2 @ kmat.T).reshape(B, t_out, V, k * cin)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j:j + t_out] += gcols[..., j * cin:(j + 1) * cin]
            x._accumulate(gxp[:, pad:pad + T])

    return _make(out, (x, kernel), backward)


def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


def conv2d(x, kernel, bias=None, stride=1, pad=0) -> Tensor:
    """Cross-correlation of x[N, C_in, H, W] (or [C_in, H, W]) with kernel[C_out, C_in, kh, kw]."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernel.data.ndim != 4 or xd.shape[1] != kernel.shape[1]:
        raise ShapeMismatch(f"conv2d {x.shape} with kernel {kernel.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    N, C, H, W = xd.shape
    cout, _, kh, kw = kernel.shape
    if kh > H + 2 * ph or kw > W + 2 * pw:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than padded input {H + 2 * ph}x{W + 2 * pw}")
    ho = (H + 2 * ph - kh) // sh + 1
    wo = (W + 2 * pw - kw) // sw + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw][:, :, :ho, :wo]  # N, C, ho, wo, kh, kw
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(N * ho * wo, C * kh * kw)
    kmat = kernel.data.reshape(cout, -1)
    out = (cols @ kmat.T).reshape(N, ho, wo, cout).transpose(0, 3, 1, 2)
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    out = np.ascontiguousarray(out)
    if squeeze:
        out = out[0]

    def backward(g):
        g4 = g[None] if squeeze else g
        g2 = g4.transpose(0, 2, 3, 1).reshape(-1, cout)
        if kernel.requires_grad:
            kernel._accumulate((g2.T @ cols).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g4.sum(axis=(0, 2, 3), dtype=np.float64).astype(bias.dtype))
        if x.requires_grad:
            gcols = (g2 @ kmat).reshape(N, ho, wo, C, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += (
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, ph:ph + H, pw:pw + W]
            x._accumulate(gx[0] if squeeze else gx)

    return _make(out, parents, backward)


def max_pool2(x) -> Tensor:
    """2x2 stride-2 max pool over the last two axes; odd trailing rows/cols are dropped."""
    x = as_tensor(x)
    *lead, H, W = x.shape
    h2, w2 = H // 2, W // 2
    if h2 == 0 or w2 == 0:
        raise ShapeMismatch(f"max_pool2 needs at least 2x2, got {H}x{W}")
    xc = x.data[..., :2 * h2, :2 * w2]
    blocks = xc.reshape(*lead, h2, 2, w2, 2)
    blocks = np.moveaxis(blocks, -3, -2).reshape(*lead, h2, w2, 4)
    arg = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = np.moveaxis(gb.reshape(*lead, h2, w2, 2, 2), -2, -3).reshape(*lead, 2 * h2, 2 * w2)
        gx = np.zeros_like(x.data)
        gx[..., :2 * h2, :2 * w2] = gb
        x._accumulate(gx)

    return _make(out, (x,), backward)


def global_avg_pool(x) -> Tensor:
    return mean(x, (-2, -1))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple:
    """Mean cross-entropy and its gradient w.r.t. the logits (float64 inside)."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, K = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"{labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if n and (labels.min() < 0 or labels.max() >= K):
        raise LabelOutOfRange(f"labels must be in [0, {K})")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - z[rows, labels]))
    grad = np.exp(z - lse[:, None])
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype if np.issubdtype(logits.dtype, np.floating) else np.float64)


def cross_entropy(logits, labels) -> Tensor:
    logits = as_tensor(logits)
    loss, grad = softmax_cross_entropy(logits.data, labels)

    def backward(g):
        logits._accumulate(grad * g)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def grad_check(f, x, eps: float = 1e-3) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor. Per coordinate the error is
    |a - n| / max(1e-8, |a| + |n|).
    """
    x = np.array(x, copy=True)
    t = Tensor(x.copy(), requires_grad=True)
    f(t).backward()
    analytic = np.zeros_like(x) if t.grad is None else np.asarray(t.grad)
    worst = 0.0
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        fp = float(f(Tensor(xp)).data)
        fm = float(f(Tensor(xm)).data)
        num = (fp - fm) / (2 * eps)
        a = float(analytic[idx])
        worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst
