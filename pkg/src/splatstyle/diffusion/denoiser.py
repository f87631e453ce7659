"""Seeded toy denoiser with separated content/style conditioning.

The network predicts a clean-latent estimate ``x0`` and reports it as noise
through the noise level of the current step::

    eps = skip * (z_t - sqrt(alpha_t) * x0) / sqrt(1 - alpha_t)

One block, applied to every view of a group (``h`` is the update stream,
attention reads the normalized ``z_t + h``)::

    h += NVAttn(z_t + h) Wo               # self-attention shared across the group
    h += CrossAttn(., content tokens)      # content slot
    h += CrossAttn(., style tokens)        # style slot, separate weights
    h += control residual of this block
    h += MLP(.)
    x0 = h @ W_head

The control branch mirrors the block stack (NV self-attention,
cross-attention over the style tokens, MLP) on a stream seeded with the
content patches, and hands one residual per block to the denoiser.

Weights are random except for a few structured tensors: the control input
and the style patch embedding average each patch and lift it into latent
space, the style cross-attention passes token values through at
``style_gain``, the per-block control outputs and the head start as
(scaled) identities, and ``skip`` is 1. Random branch outputs are scaled by
``branch_gain`` so they perturb rather than replace the content latent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch, TimestepMismatch
from .attention import attention, nv_attention, softmax
from .latent import LatentCodec, LatentGrid, image_patches


@dataclass(frozen=True)
class DenoiserConfig:
    d_model: int = 64
    n_blocks: int = 4
    patch_size: int = 8
    n_style_tokens: int = 4
    mlp_ratio: int = 2
    branch_gain: float = 0.02
    style_gain: float = 0.25
    seed: int = 0


@dataclass
class StyleControl:
    tokens: np.ndarray  # (m_s, d)


@dataclass
class ContentControl:
    proj_tokens: np.ndarray  # (m_c, d)
    control_residuals: list = field(default_factory=list)  # per block, (n, d)


def _rms_norm(x):
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + 1e-6)


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    emb = np.concatenate([np.sin(t * freqs), np.cos(t * freqs)])
    return np.pad(emb, (0, dim - emb.size))


class DenoiserWeights:
    """Every parameter tensor of the denoiser and its control branch.

    Drawn once from ``cfg.seed``; two instances built from the same config
    are identical.
    """

    def __init__(self, cfg: DenoiserConfig = DenoiserConfig()):
        self.cfg = cfg
        d, p = cfg.d_model, cfg.patch_size
        patch_dim = p * p * 3
        hidden = cfg.mlp_ratio * d
        rng = np.random.default_rng(cfg.seed)
        gain = cfg.branch_gain

        def lin(fan_in, fan_out, g=1.0):
            return rng.normal(scale=g / np.sqrt(fan_in), size=(fan_in, fan_out))

        # patch (p*p*3) -> per-channel mean -> latent lift
        codec = LatentCodec(p, d, cfg.seed)
        averaging = np.tile(np.eye(3), (p * p, 1)) / (p * p)

        self.skip = np.ones(())
        self.time = lin(d, d, 0.05)
        self.style_patch = averaging @ codec.lift + lin(patch_dim, d, 0.05)
        self.style_heads = rng.normal(size=(cfg.n_style_tokens, d))
        self.content_proj = lin(patch_dim, d)
        self.control_in = averaging @ codec.lift
        self.control_z = lin(d, d, 0.1)
        self.head = np.eye(d)

        def attn_params():
            return {"q": lin(d, d), "k": lin(d, d), "v": lin(d, d), "o": lin(d, d, gain)}

        def style_params():
            # values pass style colors through; output adds them at ``style_gain``
            return {"q": lin(d, d), "k": lin(d, d), "v": np.eye(d),
                    "o": cfg.style_gain * np.eye(d) + lin(d, d, gain)}

        self.blocks = [
            {
                "self": attn_params(),
                "content": attn_params(),
                "style": style_params(),
                "mlp1": lin(d, hidden),
                "mlp2": lin(hidden, d, gain),
            }
            for _ in range(cfg.n_blocks)
        ]
        self.control_blocks = [
            {
                "self": attn_params(),
                "style": attn_params(),
                "mlp1": lin(d, hidden),
                "mlp2": lin(hidden, d, gain),
                "zero": np.eye(d) / cfg.n_blocks,
            }
            for _ in range(cfg.n_blocks)
        ]

    def arrays(self):
        yield from (self.skip, self.time, self.style_patch, self.style_heads, self.content_proj,
                    self.control_in, self.control_z, self.head)
        for blk in (*self.blocks, *self.control_blocks):
            for value in blk.values():
                if isinstance(value, dict):
                    yield from value.values()
                else:
                    yield value

    def zero_(self) -> DenoiserWeights:
        for a in self.arrays():
            a[...] = 0.0
        return self


def _flat_patches(img, patch_size):
    pt = image_patches(np.asarray(img, dtype=np.float64), patch_size)
    return pt.reshape(pt.shape[0] * pt.shape[1], -1)


def encode_style(style_img, weights: DenoiserWeights, style_scale: float = 0.6) -> StyleControl:
    """Patch-embed the style image and pool it into ``n_style_tokens`` tokens."""
    emb = _flat_patches(style_img, weights.cfg.patch_size) @ weights.style_patch
    scores = emb @ weights.style_heads.T / np.sqrt(weights.cfg.d_model)  # (P, m_s)
    pool = softmax(scores, axis=0)
    return StyleControl(style_scale * (pool.T @ emb))


def _nv_self_attention(xs, params, share: bool):
    qs = [x @ params["q"] for x in xs]
    ks = [x @ params["k"] for x in xs]
    vs = [x @ params["v"] for x in xs]
    if share:
        outs = nv_attention(qs, ks, vs)
    else:
        outs = [attention(q, k, v) for q, k, v in zip(qs, ks, vs)]
    return [o @ params["o"] for o in outs]


def _cross(x, tokens, params):
    return attention(x @ params["q"], tokens @ params["k"], tokens @ params["v"]) @ params["o"]


def _mlp(x, blk):
    return np.maximum(x @ blk["mlp1"], 0.0) @ blk["mlp2"]


def encode_content_group(latents, content_images, d_s: StyleControl, weights: DenoiserWeights,
                         content_scale: float = 1.0, control_scale: float = 1.0,
                         share: bool = True) -> list[ContentControl]:
    """Content controls for a whole group; the control branch shares attention across views."""
    cfg = weights.cfg
    if len(latents) != len(content_images):
        raise ShapeMismatch("one content image per latent is required")
    patches = [_flat_patches(img, cfg.patch_size) for img in content_images]
    for z, pt in zip(latents, patches):
        if z.flat().shape != (len(pt), cfg.d_model):
            raise ShapeMismatch(f"latent {z.tokens.shape} does not match content patches {pt.shape}")

    temb = timestep_embedding(latents[0].timestep, cfg.d_model) @ weights.time
    cs = [pt @ weights.control_in + z.flat() @ weights.control_z + temb for z, pt in zip(latents, patches)]
    residuals = [[] for _ in cs]
    for blk in weights.control_blocks:
        attn = _nv_self_attention([_rms_norm(c) for c in cs], blk["self"], share)
        cs = [c + a for c, a in zip(cs, attn)]
        cs = [c + _cross(_rms_norm(c), d_s.tokens, blk["style"]) for c in cs]
        cs = [c + _mlp(_rms_norm(c), blk) for c in cs]
        for i, c in enumerate(cs):
            residuals[i].append(control_scale * (c @ blk["zero"]))
    return [ContentControl(content_scale * (pt @ weights.content_proj), res)
            for pt, res in zip(patches, residuals)]


def encode_content(z_t: LatentGrid, content_img, d_s: StyleControl, weights: DenoiserWeights,
                   content_scale: float = 1.0, control_scale: float = 1.0) -> ContentControl:
    return encode_content_group([z_t], [content_img], d_s, weights, content_scale, control_scale)[0]


def predict_clean(latents, t: int, controls, d_s: StyleControl, weights: DenoiserWeights,
                  share: bool = True) -> list[np.ndarray]:
    """Clean-latent estimate for every view of a group, as flat (n, d) arrays."""
    if any(z.timestep != t for z in latents):
        raise TimestepMismatch(f"group members are not all at timestep {t}")
    cfg = weights.cfg
    temb = timestep_embedding(t, cfg.d_model) @ weights.time
    zs = [z.flat() for z in latents]
    hs = [np.broadcast_to(temb, z.shape).copy() for z in zs]
    for b, blk in enumerate(weights.blocks):
        attn = _nv_self_attention([_rms_norm(z + h) for z, h in zip(zs, hs)], blk["self"], share)
        hs = [h + a for h, a in zip(hs, attn)]
        hs = [h + _cross(_rms_norm(z + h), c.proj_tokens, blk["content"]) for z, h, c in zip(zs, hs, controls)]
        hs = [h + _cross(_rms_norm(z + h), d_s.tokens, blk["style"]) for z, h in zip(zs, hs)]
        hs = [h + c.control_residuals[b] for h, c in zip(hs, controls)]
        hs = [h + _mlp(_rms_norm(z + h), blk) for z, h in zip(zs, hs)]
    return [h @ weights.head for h in hs]


def predict_noise(latents, t: int, controls, d_s: StyleControl, weights: DenoiserWeights,
                  alpha_t: float, share: bool = True) -> list[np.ndarray]:
    """Noise prediction for every view of a group, shaped like each latent grid.

    ``alpha_t`` is the signal coefficient of level ``t`` in the sampling
    schedule; it converts the clean estimate into a noise estimate.
    """
    if not 0.0 < alpha_t < 1.0:
        raise ValueError("alpha_t must lie in (0, 1) for a noise prediction")
    x0s = predict_clean(latents, t, controls, d_s, weights, share)
    a = np.sqrt(alpha_t)
    s = np.sqrt(1.0 - alpha_t)
    return [(weights.skip * (z.flat() - a * x0) / s).reshape(z.tokens.shape) for z, x0 in zip(latents, x0s)]
