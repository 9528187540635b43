"""Small convolutional motion regressor with hand-derived backpropagation.

The net maps a stacked occupancy sequence (H, W, T*C) to a per-cell 2D
displacement map (H, W, 2) through same-padded convolutions. Gradients are
computed in closed form so they can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BevSequence, MotionField


@dataclass(frozen=True)
class PredictorConfig:
    in_channels: int
    hidden: tuple[int, ...] = (16, 16)
    kernels: tuple[int, ...] = (3, 3, 1)
    out_channels: int = 2

    def __post_init__(self):
        if len(self.kernels) != len(self.hidden) + 1:
            raise ValueError("need one kernel size per layer")
        if any(k % 2 == 0 for k in self.kernels):
            raise ValueError("kernel sizes must be odd for same padding")


class ParamVector:
    """Flat parameter storage with a named (offset, shape) layout."""

    def __init__(self, values: np.ndarray, layout: tuple[tuple[str, tuple[int, ...]], ...]):
        self.values = np.asarray(values, dtype=np.float64)
        self.layout = tuple((name, tuple(shape)) for name, shape in layout)
        expected = sum(int(np.prod(s)) for _, s in self.layout)
        if self.values.shape != (expected,):
            raise ValueError("parameter vector length does not match layout")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameters must be finite")

    def view(self, name: str) -> np.ndarray:
        offset = 0
        for n, shape in self.layout:
            size = int(np.prod(shape))
            if n == name:
                return self.values[offset:offset + size].reshape(shape)
            offset += size
        raise KeyError(name)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.layout)

    def __len__(self) -> int:
        return len(self.values)


def layer_sizes(cfg: PredictorConfig) -> list[tuple[int, int, int]]:
    """(kernel, c_in, c_out) per layer."""
    widths = (cfg.in_channels, *cfg.hidden, cfg.out_channels)
    return [(cfg.kernels[i], widths[i], widths[i + 1]) for i in range(len(cfg.kernels))]


def make_layout(cfg: PredictorConfig) -> tuple[tuple[str, tuple[int, ...]], ...]:
    layout = []
    for i, (k, cin, cout) in enumerate(layer_sizes(cfg)):
        layout.append((f"conv{i}.weight", (k, k, cin, cout)))
        layout.append((f"conv{i}.bias", (cout,)))
    return tuple(layout)


def init_params(cfg: PredictorConfig, seed: int = 0) -> ParamVector:
    """He-style initialization; biases start at zero."""
    rng = np.random.default_rng(seed)
    chunks = []
    for k, cin, cout in layer_sizes(cfg):
        fan_in = k * k * cin
        chunks.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=k * k * cin * cout))
        chunks.append(np.zeros(cout))
    return ParamVector(np.concatenate(chunks), make_layout(cfg))


def n_params(cfg: PredictorConfig) -> int:
    return sum(k * k * cin * cout + cout for k, cin, cout in layer_sizes(cfg))


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(H*W, k*k*C) patch matrix of a same-padded (H, W, C) input."""
    if k == 1:
        return x.reshape(-1, x.shape[2])
    pad = k // 2
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(0, 1))
    # win: (H, W, C, k, k) -> (H*W, k*k*C) matching weight layout (k, k, C)
    h, w, c = x.shape
    return win.transpose(0, 1, 3, 4, 2).reshape(h * w, k * k * c)


def _col2im(dpatches: np.ndarray, k: int, shape: tuple[int, int, int]) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to the input."""
    h, w, c = shape
    if k == 1:
        return dpatches.reshape(h, w, c)
    pad = k // 2
    dxp = np.zeros((h + 2 * pad, w + 2 * pad, c))
    dp = dpatches.reshape(h, w, k, k, c)
    for i in range(k):
        for j in range(k):
            dxp[i:i + h, j:j + w] += dp[:, :, i, j, :]
    return dxp[pad:pad + h, pad:pad + w]


def forward(params: ParamVector, x: np.ndarray, cfg: PredictorConfig):
    """Forward pass; returns (output (H, W, 2), cache for backward)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.in_channels:
        raise ValueError(f"input must be (H, W, {cfg.in_channels})")
    h, w = x.shape[:2]
    sizes = layer_sizes(cfg)
    cache = []
    act = x
    for i, (k, cin, cout) in enumerate(sizes):
        wt = params.view(f"conv{i}.weight").reshape(k * k * cin, cout)
        b = params.view(f"conv{i}.bias")
        patches = _im2col(act, k)
        pre = patches @ wt + b
        last = i == len(sizes) - 1
        out = pre if last else np.maximum(pre, 0.0)
        cache.append((patches, pre, act.shape))
        act = out.reshape(h, w, cout)
    return act, cache


def backward(params: ParamVector, cache, dy: np.ndarray, cfg: PredictorConfig) -> ParamVector:
    """Reverse-mode gradient of a scalar loss w.r.t. every parameter."""
    grad = params.zeros_like()
    sizes = layer_sizes(cfg)
    d = np.asarray(dy, dtype=np.float64).reshape(-1, cfg.out_channels)
    for i in reversed(range(len(sizes))):
        k, cin, cout = sizes[i]
        patches, pre, in_shape = cache[i]
        if i != len(sizes) - 1:
            d = d * (pre > 0.0)
        wt = params.view(f"conv{i}.weight").reshape(k * k * cin, cout)
        grad.view(f"conv{i}.weight").reshape(k * k * cin, cout)[:] = patches.T @ d
        grad.view(f"conv{i}.bias")[:] = d.sum(axis=0)
        if i > 0:
            d = _col2im(d @ wt.T, k, in_shape).reshape(-1, cin)
    return grad


def sequence_features(seq: BevSequence) -> np.ndarray:
    """Stack frame occupancies along the channel axis as float features."""
    return np.concatenate([f.occupancy for f in seq.frames], axis=2).astype(np.float64)


def predict(params: ParamVector, seq: BevSequence, cfg: PredictorConfig) -> MotionField:
    """Motion field for a sequence; validity from the current frame's pillars."""
    out, _ = forward(params, sequence_features(seq), cfg)
    return MotionField(out, seq.current.pillar_mask)


def smooth_l1(pred: np.ndarray, target: np.ndarray, idx: np.ndarray,
              delta: float = 1.0):
    """Smooth-L1 loss of a predicted grid against labels at indexed cells.

    Quadratic below ``delta``, linear above, averaged over indexed cells times
    two components. Returns (loss, gradient grid, empty flag); an empty index
    set yields zero loss and gradient with the flag set.
    """
    pred = np.asarray(pred, dtype=np.float64)
    dgrid = np.zeros_like(pred)
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 2)
    if len(idx) == 0:
        return 0.0, dgrid, True
    target = np.asarray(target, dtype=np.float64).reshape(-1, 2)
    r = pred[idx[:, 0], idx[:, 1]] - target
    absr = np.abs(r)
    quad = absr < delta
    losses = np.where(quad, 0.5 * r * r / delta, absr - 0.5 * delta)
    n = r.size
    dgrid[idx[:, 0], idx[:, 1]] = np.where(quad, r / delta, np.sign(r)) / n
    return float(losses.sum() / n), dgrid, False
