"""Evaluation kernels: content fidelity (CFSD), style similarity, direction consistency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, ShapeMismatch, TooShort, ZeroDescriptor
from .features import FeatureExtractor


@dataclass
class Descriptor:
    vector: np.ndarray
    source: str = "extractor"  # or "imported"

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("descriptor has non-finite entries")

    @property
    def degenerate(self) -> bool:
        return not np.any(self.vector)


def _vec(d):
    return d.vector if isinstance(d, Descriptor) else np.asarray(d, dtype=np.float64).ravel()


def _log_softmax_rows(m):
    m = m - m.max(axis=1, keepdims=True)
    return m - np.log(np.sum(np.exp(m), axis=1, keepdims=True))


def correlation_map(features: np.ndarray) -> np.ndarray:
    """Row-softmax of the (hw x hw) self-similarity F F^T."""
    f = np.asarray(features, dtype=np.float64).reshape(-1, np.shape(features)[-1])
    return np.exp(_log_softmax_rows(f @ f.T))


def cfsd_from_features(f_content, f_stylized) -> float:
    """Mean row-wise KL(S_content || S_stylized) of the correlation maps."""
    fc = np.asarray(f_content, dtype=np.float64)
    fs = np.asarray(f_stylized, dtype=np.float64)
    fc = fc.reshape(-1, fc.shape[-1])
    fs = fs.reshape(-1, fs.shape[-1])
    if fc.shape[0] != fs.shape[0]:
        raise ShapeMismatch(f"feature maps have {fc.shape[0]} and {fs.shape[0]} positions")
    log_c = _log_softmax_rows(fc @ fc.T)
    log_s = _log_softmax_rows(fs @ fs.T)
    kl = np.sum(np.exp(log_c) * (log_c - log_s), axis=1)
    return float(max(np.mean(kl), 0.0))


def cfsd(content, stylized, ext: FeatureExtractor) -> float:
    content = np.asarray(content)
    stylized = np.asarray(stylized)
    if content.shape != stylized.shape:
        raise ShapeMismatch(f"content {content.shape} vs stylized {stylized.shape}")
    return cfsd_from_features(ext.extract(content).grid, ext.extract(stylized).grid)


def cosine_similarity(a, b) -> float:
    a, b = _vec(a), _vec(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroDescriptor("cosine similarity of an all-zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def csd_score(style_desc, stylized_desc) -> float:
    a, b = _vec(style_desc), _vec(stylized_desc)
    if a.shape != b.shape:
        raise ShapeMismatch(f"descriptor sizes {a.shape} and {b.shape} differ")
    return cosine_similarity(a, b)


@dataclass
class ClipDCResult:
    score: float
    pairs: int
    degenerate_pairs: int


def clip_dc(orig_embeds, styl_embeds) -> ClipDCResult:
    """Mean cosine similarity of edit directions between adjacent frames.

    A pair where either direction is exactly zero scores 1.0 and is counted
    as degenerate. Frames are taken as one camera path in the given order.
    """
    if len(orig_embeds) != len(styl_embeds):
        raise LengthMismatch(f"{len(orig_embeds)} original vs {len(styl_embeds)} stylized frames")
    if len(orig_embeds) < 2:
        raise TooShort("direction consistency needs at least two frames")
    dirs = [_vec(s) - _vec(o) for o, s in zip(orig_embeds, styl_embeds)]
    scores, degenerate = [], 0
    for a, b in zip(dirs[:-1], dirs[1:]):
        if not np.any(a) or not np.any(b):
            scores.append(1.0)
            degenerate += 1
        else:
            scores.append(cosine_similarity(a, b))
    return ClipDCResult(float(np.mean(scores)), len(scores), degenerate)


def descriptor(img, ext: FeatureExtractor) -> Descriptor:
    return Descriptor(ext.descriptor(img), "extractor")


@dataclass
class MetricReport:
    cfsd: float
    csd: float
    clip_dc: float
    frames: int
    clip_dc_pairs: int
    clip_dc_degenerate: int
    descriptor_source: str = "extractor"

    def as_dict(self) -> dict:
        return {
            "cfsd": self.cfsd,
            "csd": self.csd,
            "clip_dc": self.clip_dc,
            "frames": self.frames,
            "clip_dc_pairs": self.clip_dc_pairs,
            "clip_dc_degenerate": self.clip_dc_degenerate,
            "clip_dc_paths": 1,
            "descriptor_source": self.descriptor_source,
        }


def evaluate(originals, stylized, style_img, ext: FeatureExtractor, style_desc=None,
             orig_descs=None, styl_descs=None) -> MetricReport:
    """All three metrics over one camera path of (original, stylized) frames."""
    if len(originals) != len(stylized):
        raise LengthMismatch(f"{len(originals)} original vs {len(stylized)} stylized frames")
    source = "imported" if styl_descs is not None else "extractor"
    cf = float(np.mean([cfsd(o, s, ext) for o, s in zip(originals, stylized)]))
    if styl_descs is None:
        styl_descs = [descriptor(s, ext) for s in stylized]
    if orig_descs is None:
        orig_descs = [descriptor(o, ext) for o in originals]
    if style_desc is None:
        style_desc = descriptor(style_img, ext)
    cs = float(np.mean([csd_score(style_desc, d) for d in styl_descs]))
    dc = clip_dc(orig_descs, styl_descs) if len(originals) >= 2 else ClipDCResult(float("nan"), 0, 0)
    return MetricReport(cf, cs, dc.score, len(originals), dc.pairs, dc.degenerate_pairs, source)
