"""Finetuning objectives: L1 RGB, nearest-neighbor feature matching, and their sum."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, ShapeMismatch
from .features import FeatureExtractor, FeatureMap

log = logging.getLogger(__name__)


@dataclass
class NNFMResult:
    value: float
    grad: np.ndarray  # dL/dF_r, shaped like the render feature grid
    matches: np.ndarray  # flat style index matched by each render position
    zero_vectors: int


def _unit_rows(f):
    norms = np.linalg.norm(f, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return f / safe[:, None], norms


def nnfm_loss(f_r: FeatureMap, f_s: FeatureMap) -> NNFMResult:
    """Mean over render positions of the cosine distance to the nearest style vector.

    Matching is frozen for the gradient; ties resolve to the lowest flat style
    index. All-zero vectors have cosine distance 1 to everything and carry no
    gradient; they are counted in ``zero_vectors``.
    """
    if f_r.channels != f_s.channels:
        raise ChannelMismatch(f"render features have {f_r.channels} channels, style {f_s.channels}")
    r, s = f_r.flat(), f_s.flat()
    if len(r) == 0 or len(s) == 0:
        raise ShapeMismatch("feature maps must be non-empty")
    r_hat, r_norm = _unit_rows(r)
    s_hat, s_norm = _unit_rows(s)
    dist = 1.0 - r_hat @ s_hat.T
    match = np.argmin(dist, axis=1)
    rows = np.arange(len(r))
    best = dist[rows, match]
    value = float(np.mean(best))

    matched = s_hat[match]
    cos = 1.0 - best
    live = r_norm > 0.0
    grad = np.zeros_like(r)
    grad[live] = -(matched[live] - cos[live, None] * r_hat[live]) / r_norm[live, None]
    grad /= len(r)

    zeros = int(np.sum(~live) + np.sum(s_norm == 0.0))
    if zeros:
        log.warning("nnfm_loss: %d all-zero feature vectors", zeros)
    return NNFMResult(value, grad.reshape(f_r.grid.shape), match, zeros)


def l1_rgb_loss(render, target) -> tuple[float, np.ndarray]:
    render = np.asarray(render, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if render.shape != target.shape:
        raise ShapeMismatch(f"render {render.shape} vs target {target.shape}")
    diff = render - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


@dataclass(frozen=True)
class LossWeights:
    rgb: float = 1.0
    nnfm: float = 1.0


@dataclass
class LossResult:
    total: float
    l1: float
    nnfm: float
    grad: np.ndarray  # dL/drender


def finetune_loss(render, target, style, ext: FeatureExtractor, weights: LossWeights = LossWeights()) -> LossResult:
    """``w_rgb * L1(render, target) + w_nnfm * NNFM(feat(render), feat(style))``.

    ``style`` is either the style image or its precomputed ``FeatureMap``.
    """
    l1, grad = l1_rgb_loss(render, target)
    grad = weights.rgb * grad
    nnfm = 0.0
    if weights.nnfm != 0.0:
        f_s = style if isinstance(style, FeatureMap) else ext.extract(style)
        f_r, cache = ext.forward(render)
        res = nnfm_loss(f_r, f_s)
        nnfm = res.value
        grad = grad + weights.nnfm * ext.backward(cache, res.grad)
    return LossResult(weights.rgb * l1 + weights.nnfm * nnfm, l1, nnfm, grad)
