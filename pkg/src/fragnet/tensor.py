"""Minimal dense tensors with reverse-mode automatic differentiation.

Every operation needed to train the block classifiers lives here:
1-D/2-D valid convolution, max pooling, global average pooling, dense
layers, leaky ReLU, byte-table embedding, inverted dropout and the
softmax cross-entropy loss. Each op computes its forward value with
numpy and attaches a closure that routes gradients to its inputs; a
scalar loss drives the whole graph via :meth:`Tensor.backward`.

Ops accept the documented per-sample rank or that rank plus one with a
leading batch axis; per-sample semantics are identical either way.
"""

from __future__ import annotations

import enum
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Precision",
    "InvalidArchitectureError",
    "Tensor",
    "leaky_relu",
    "conv1d",
    "conv2d",
    "max_pool1d",
    "global_avg_pool",
    "dense",
    "flatten",
    "embedding",
    "dropout",
    "total",
    "softmax",
    "softmax_cross_entropy",
]

_FLOAT_DTYPES = (np.float32, np.float64)


class Precision(enum.Enum):
    """Numeric width: 32-bit floats for training/inference, 64-bit for
    gradient verification."""

    STANDARD = "standard"
    VERIFICATION = "verification"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.STANDARD else np.float64)


class InvalidArchitectureError(ValueError):
    """A layer's geometry cannot produce an output (kernel wider than the
    input, pooled length collapsing to zero, ...)."""


class Tensor:
    """Dense n-dimensional float array with an optional gradient buffer.

    ``data`` is a row-major numpy array whose shape is fixed at creation;
    ``grad`` is allocated lazily on the first accumulation and matches
    ``data`` elementwise. Graph edges are held in ``_parents`` and the
    per-op ``_backward`` closure; a built graph belongs to a single
    backward pass.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] = _noop

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            node._backward()


def _noop() -> None:
    return None


def _attach(out: Tensor, parents: Sequence[Tensor], bw: Callable[[], None]) -> Tensor:
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = bw
    return out


def leaky_relu(x: Tensor, alpha: float) -> Tensor:
    """Elementwise ``y = x if x >= 0 else alpha * x``.

    The derivative at exactly zero is taken as 1 (the ``x >= 0`` branch).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    xd = x.data
    out = Tensor(np.where(xd >= 0, xd, xd * xd.dtype.type(alpha)))

    def bw() -> None:
        slope = np.where(xd >= 0, xd.dtype.type(1.0), xd.dtype.type(alpha))
        x.accumulate_grad(out.grad * slope)

    return _attach(out, (x,), bw)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid (no padding) 1-D convolution.

    ``x`` is ``[time, channels]`` (or ``[batch, time, channels]``),
    ``kernels`` is ``[filters, width, channels]``, ``bias`` is
    ``[filters]``. Output length is ``(time - width) // stride + 1``.
    """
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    xd = x.data
    batched = xd.ndim == 3
    if not batched:
        if xd.ndim != 2:
            raise ValueError(f"conv1d input must be rank 2 or 3, got rank {xd.ndim}")
        xd = xd[None]
    n_filters, width, kc = kernels.data.shape
    b, time, channels = xd.shape
    if kc != channels:
        raise ValueError(f"kernel channels {kc} != input channels {channels}")
    if bias.data.shape != (n_filters,):
        raise ValueError(f"bias shape {bias.data.shape} != ({n_filters},)")
    if width > time:
        raise InvalidArchitectureError(
            f"conv1d kernel width {width} exceeds input length {time}"
        )
    out_t = (time - width) // stride + 1
    span = (out_t - 1) * stride + 1

    kd = kernels.data
    yd = np.empty((b, out_t, n_filters), dtype=xd.dtype)
    yd[:] = bias.data
    for w in range(width):
        yd += xd[:, w : w + span : stride, :] @ kd[:, w, :].T
    out = Tensor(yd if batched else yd[0])

    def bw() -> None:
        gy = out.grad if batched else out.grad[None]
        if bias.requires_grad:
            bias.accumulate_grad(gy.sum(axis=(0, 1)))
        if kernels.requires_grad:
            gk = np.empty_like(kd)
            gy_t = gy.transpose(0, 2, 1)
            for w in range(width):
                xs = xd[:, w : w + span : stride, :]
                gk[:, w, :] = np.matmul(gy_t, xs).sum(axis=0)
            kernels.accumulate_grad(gk)
        if x.requires_grad:
            gx = np.zeros_like(xd)
            for w in range(width):
                gx[:, w : w + span : stride, :] += gy @ kd[:, w, :]
            x.accumulate_grad(gx if batched else gx[0])

    return _attach(out, (x, kernels, bias), bw)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid 2-D convolution mirroring :func:`conv1d` over two spatial axes.

    ``x`` is ``[height, width, channels]`` (optionally batched),
    ``kernels`` is ``[filters, kh, kw, channels]``.
    """
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    xd = x.data
    batched = xd.ndim == 4
    if not batched:
        if xd.ndim != 3:
            raise ValueError(f"conv2d input must be rank 3 or 4, got rank {xd.ndim}")
        xd = xd[None]
    n_filters, kh, kw, kc = kernels.data.shape
    b, height, width, channels = xd.shape
    if kc != channels:
        raise ValueError(f"kernel channels {kc} != input channels {channels}")
    if kh > height or kw > width:
        raise InvalidArchitectureError(
            f"conv2d kernel {kh}x{kw} exceeds input {height}x{width}"
        )
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    span_h = (out_h - 1) * stride + 1
    span_w = (out_w - 1) * stride + 1

    kd = kernels.data
    yd = np.empty((b, out_h, out_w, n_filters), dtype=xd.dtype)
    yd[:] = bias.data
    for i in range(kh):
        for j in range(kw):
            xs = xd[:, i : i + span_h : stride, j : j + span_w : stride, :]
            yd += xs @ kd[:, i, j, :].T
    out = Tensor(yd if batched else yd[0])

    def bw() -> None:
        gy = out.grad if batched else out.grad[None]
        if bias.requires_grad:
            bias.accumulate_grad(gy.sum(axis=(0, 1, 2)))
        if kernels.requires_grad:
            gk = np.empty_like(kd)
            gy2 = gy.reshape(-1, n_filters)
            for i in range(kh):
                for j in range(kw):
                    xs = xd[:, i : i + span_h : stride, j : j + span_w : stride, :]
                    gk[:, i, j, :] = gy2.T @ xs.reshape(-1, channels)
            kernels.accumulate_grad(gk)
        if x.requires_grad:
            gx = np.zeros_like(xd)
            for i in range(kh):
                for j in range(kw):
                    gx[:, i : i + span_h : stride, j : j + span_w : stride, :] += (
                        gy @ kd[:, i, j, :]
                    )
            x.accumulate_grad(gx if batched else gx[0])

    return _attach(out, (x, kernels, bias), bw)


def max_pool1d(x: Tensor, size: int) -> Tensor:
    """Disjoint-window max over the time axis; a trailing remainder of
    length ``time mod size`` is dropped. Gradient flows to the first
    occurrence of each window maximum.
    """
    if size < 1:
        raise ValueError(f"pool size must be positive, got {size}")
    xd = x.data
    batched = xd.ndim == 3
    if not batched:
        if xd.ndim != 2:
            raise ValueError(f"max_pool1d input must be rank 2 or 3, got rank {xd.ndim}")
        xd = xd[None]
    b, time, channels = xd.shape
    if time < size:
        raise InvalidArchitectureError(
            f"max_pool1d window {size} exceeds input length {time}"
        )
    out_t = time // size
    win = xd[:, : out_t * size, :].reshape(b, out_t, size, channels)
    arg = win.argmax(axis=2)
    yd = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]
    out = Tensor(yd if batched else yd[0])

    def bw() -> None:
        gy = out.grad if batched else out.grad[None]
        gx = np.zeros_like(xd)
        gwin = gx[:, : out_t * size, :].reshape(b, out_t, size, channels)
        np.put_along_axis(gwin, arg[:, :, None, :], gy[:, :, None, :], axis=2)
        x.accumulate_grad(gx if batched else gx[0])

    return _attach(out, (x,), bw)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the time axis: ``[time, channels] -> [channels]``."""
    xd = x.data
    batched = xd.ndim == 3
    if not batched:
        if xd.ndim != 2:
            raise ValueError(
                f"global_avg_pool input must be rank 2 or 3, got rank {xd.ndim}"
            )
    time = xd.shape[-2]
    out = Tensor(xd.mean(axis=-2))

    def bw() -> None:
        scale = xd.dtype.type(1.0 / time)
        g = out.grad[..., None, :] * scale
        x.accumulate_grad(np.broadcast_to(g, xd.shape).copy())

    return _attach(out, (x,), bw)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``y = weights @ x + bias`` with ``weights[out, in]``."""
    xd = x.data
    batched = xd.ndim == 2
    if not batched and xd.ndim != 1:
        raise ValueError(f"dense input must be rank 1 or 2, got rank {xd.ndim}")
    out_dim, in_dim = weights.data.shape
    if xd.shape[-1] != in_dim:
        raise ValueError(f"dense input width {xd.shape[-1]} != weight fan-in {in_dim}")
    if bias.data.shape != (out_dim,):
        raise ValueError(f"bias shape {bias.data.shape} != ({out_dim},)")
    out = Tensor(xd @ weights.data.T + bias.data)

    def bw() -> None:
        gy = out.grad
        if bias.requires_grad:
            bias.accumulate_grad(gy.sum(axis=0) if batched else gy)
        if weights.requires_grad:
            gw = gy.T @ xd if batched else np.outer(gy, xd)
            weights.accumulate_grad(gw)
        if x.requires_grad:
            x.accumulate_grad(gy @ weights.data)

    return _attach(out, (x, weights, bias), bw)


def flatten(x: Tensor, batched: bool = False) -> Tensor:
    """Collapse to a vector (or to ``[batch, n]`` when ``batched``)."""
    xd = x.data
    new_shape = (xd.shape[0], -1) if batched else (-1,)
    out = Tensor(xd.reshape(new_shape))

    def bw() -> None:
        x.accumulate_grad(out.grad.reshape(xd.shape))

    return _attach(out, (x,), bw)


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup: ``table[256, dim]`` gathered at integer ``indices``.

    The backward rule scatter-adds output gradients into the looked-up
    rows, so unused byte values receive zero gradient.
    """
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError(f"embedding indices must be integers, got {idx.dtype}")
    out = Tensor(table.data[idx])

    def bw() -> None:
        g = np.zeros_like(table.data)
        np.add.at(g, idx.reshape(-1), out.grad.reshape(-1, table.data.shape[1]))
        table.accumulate_grad(g)

    return _attach(out, (table,), bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale kept values by
    ``1 / (1 - p)`` so inference needs no rescaling. Callers apply this
    only in training mode.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    xd = x.data
    keep = (rng.random(xd.shape) >= p).astype(xd.dtype)
    scale = xd.dtype.type(1.0 / (1.0 - p))
    out = Tensor(xd * keep * scale)

    def bw() -> None:
        x.accumulate_grad(out.grad * keep * scale)

    return _attach(out, (x,), bw)


def total(x: Tensor, weights: Optional[np.ndarray] = None) -> Tensor:
    """Sum of all elements, optionally weighted elementwise.

    Reduces any tensor to the scalar required by :meth:`Tensor.backward`;
    gradient verification projects op outputs through fixed weights.
    """
    xd = x.data
    if weights is None:
        out = Tensor(np.asarray(xd.sum(), dtype=xd.dtype))
    else:
        w = np.asarray(weights, dtype=xd.dtype)
        if w.shape != xd.shape:
            raise ValueError(f"weights shape {w.shape} != input shape {xd.shape}")
        out = Tensor(np.asarray((xd * w).sum(), dtype=xd.dtype))

    def bw() -> None:
        if weights is None:
            g = np.broadcast_to(out.grad, xd.shape).copy()
        else:
            g = out.grad * np.asarray(weights, dtype=xd.dtype)
        x.accumulate_grad(g.astype(xd.dtype, copy=False))

    return _attach(out, (x,), bw)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Shifted-exponential normalization along the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, label) -> tuple[Tensor, Tensor]:
    """Cross-entropy of softmax probabilities against integer labels.

    ``logits`` is ``[classes]`` with a scalar label, or ``[batch, classes]``
    with a label per row (loss is then the batch mean). Returns
    ``(loss, probs)``; ``probs`` is detached from the graph.
    """
    ld = logits.data
    batched = ld.ndim == 2
    if not batched and ld.ndim != 1:
        raise ValueError(f"logits must be rank 1 or 2, got rank {ld.ndim}")
    n_classes = ld.shape[-1]
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    labels = np.asarray(label)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(
            f"label out of range: {labels.min() if labels.ndim else int(labels)} "
            f"not in [0, {n_classes})"
        )
    probs = softmax(ld)
    if batched:
        picked = probs[np.arange(ld.shape[0]), labels]
        loss_val = -np.log(picked).mean()
    else:
        loss_val = -np.log(probs[int(labels)])
    out = Tensor(np.asarray(loss_val, dtype=ld.dtype))

    def bw() -> None:
        g = probs.copy()
        if batched:
            g[np.arange(ld.shape[0]), labels] -= 1.0
            g *= out.grad / ld.shape[0]
        else:
            g[int(labels)] -= 1.0
            g *= out.grad
        logits.accumulate_grad(g.astype(ld.dtype, copy=False))

    _attach(out, (logits,), bw)
    return out, Tensor(probs)
