"""Deterministic convolutional feature extractor with an analytic backward pass.

Stands in for a pretrained encoder: three 3x3 stride-2 convolutions with
ReLU, filters drawn orthogonal from a seed. Feature maps can also be
imported from the flat binary format in ``splatstyle.io.featfile``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import TooSmallImage


@dataclass
class FeatureMap:
    grid: np.ndarray  # (h_f, w_f, c)
    layer: str = "conv3"

    @property
    def channels(self) -> int:
        return self.grid.shape[-1]

    def flat(self) -> np.ndarray:
        return self.grid.reshape(-1, self.grid.shape[-1])


def _conv_forward(x, w, b, stride=2):
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))[::stride, ::stride]  # (Ho, Wo, C, 3, 3)
    ho, wo = win.shape[:2]
    cols = win.reshape(ho * wo, -1)
    return (cols @ w + b).reshape(ho, wo, -1)


def _conv_backward(grad_out, x_shape, w, stride=2):
    h, wd, c = x_shape
    ho, wo, _ = grad_out.shape
    dcols = (grad_out.reshape(ho * wo, -1) @ w.T).reshape(ho, wo, c, 3, 3)
    dxp = np.zeros((h + 2, wd + 2, c))
    for kh in range(3):
        for kw in range(3):
            dxp[kh:kh + stride * ho:stride, kw:kw + stride * wo:stride] += dcols[..., kh, kw]
    return dxp[1:-1, 1:-1]


class FeatureExtractor:
    min_size = 8  # three stride-2 layers

    def __init__(self, seed: int = 0, channels=(16, 32, 32), bias: bool = False):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.weights = []
        self.biases = []
        c_in = 3
        for c_out in channels:
            fan_in = 9 * c_in
            a = rng.normal(size=(max(fan_in, c_out), min(fan_in, c_out)))
            q, r = np.linalg.qr(a)
            q *= np.sign(np.diag(r))
            w = q if fan_in >= c_out else q.T
            self.weights.append(np.sqrt(2.0) * w.reshape(fan_in, c_out))
            self.biases.append(rng.normal(scale=0.1, size=c_out) if bias else np.zeros(c_out))
            c_in = c_out

    @property
    def channels(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, img):
        img = np.asarray(img, dtype=np.float64)
        if img.shape[0] < self.min_size or img.shape[1] < self.min_size:
            raise TooSmallImage(f"image {img.shape[1]}x{img.shape[0]} is below {self.min_size}x{self.min_size}")
        cache = []
        x = img
        for w, b in zip(self.weights, self.biases):
            pre = _conv_forward(x, w, b)
            cache.append((x.shape, pre))
            x = np.maximum(pre, 0.0)
        return FeatureMap(x, "conv3"), cache

    def extract(self, img) -> FeatureMap:
        return self.forward(img)[0]

    def backward(self, cache, grad_features) -> np.ndarray:
        """dL/dimage given dL/dfeatures for the pass that produced ``cache``."""
        g = np.asarray(grad_features, dtype=np.float64)
        for (x_shape, pre), w in zip(reversed(cache), reversed(self.weights)):
            g = _conv_backward(np.where(pre > 0.0, g, 0.0), x_shape, w)
        return g

    def descriptor(self, img) -> np.ndarray:
        """Mean-pooled final-layer features."""
        return self.extract(img).flat().mean(axis=0)


class ImportedFeatures:
    """Feature source backed by precomputed maps keyed by an image name."""

    def __init__(self, maps: dict[str, FeatureMap]):
        self.maps = maps

    def extract(self, key: str) -> FeatureMap:
        return self.maps[key]
