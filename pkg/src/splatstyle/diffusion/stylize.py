"""Joint stylization of a group of neighboring views."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import DenoiserConfig, DenoiserWeights, encode_content_group, encode_style, predict_noise
from .latent import LatentCodec, LatentGrid
from .scheduler import SchedulerConfig, ddim_transition


@dataclass(frozen=True)
class StylizeConfig:
    steps: int = 20
    content_scale: float = 1.0
    style_scale: float = 0.6
    control_scale: float = 1.0
    seed: int = 0
    alpha_start: float = 0.999
    alpha_end: float = 0.1
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)

    def schedule(self) -> SchedulerConfig:
        return SchedulerConfig.linear(self.steps, self.alpha_start, self.alpha_end)


class Stylizer:
    """Holds the seeded denoiser and codec so groups can be stylized repeatedly."""

    def __init__(self, cfg: StylizeConfig = StylizeConfig(), weights: DenoiserWeights | None = None):
        self.cfg = cfg
        self.weights = weights if weights is not None else DenoiserWeights(cfg.denoiser)
        self.codec = LatentCodec(cfg.denoiser.patch_size, cfg.denoiser.d_model, cfg.denoiser.seed)

    def initial_noise(self, height: int, width: int) -> np.ndarray:
        p = self.cfg.denoiser.patch_size
        rng = np.random.default_rng(self.cfg.seed)
        return rng.normal(size=(height // p, width // p, self.cfg.denoiser.d_model))

    def stylize_group(self, content_images, style_img, share: bool = True) -> list[np.ndarray]:
        """Denoise all views of a group together and decode them.

        Every view starts from the same seeded noise, so a view's result does
        not depend on which group it was placed in except through attention.
        """
        cfg = self.cfg
        images = [np.asarray(img, dtype=np.float64) for img in content_images]
        h, w = images[0].shape[:2]
        d_s = encode_style(style_img, self.weights, cfg.style_scale)
        sched = cfg.schedule()
        noise = self.initial_noise(h, w)
        latents = [LatentGrid(noise.copy(), sched.steps - 1) for _ in images]

        # walk from the noisiest level down to level 0, then to the clean estimate
        for level in range(sched.steps - 1, -1, -1):
            controls = encode_content_group(latents, images, d_s, self.weights,
                                            cfg.content_scale, cfg.control_scale, share)
            eps = predict_noise(latents, level, controls, d_s, self.weights, sched.alphas[level], share)
            alpha_to = sched.alphas[level - 1] if level > 0 else 1.0
            latents = [LatentGrid(ddim_transition(z.tokens, e, sched.alphas[level], alpha_to), level - 1)
                       for z, e in zip(latents, eps)]
        return [self.codec.decode(z) for z in latents]


def stylize_group(group, content_images, style_img, cfg: StylizeConfig = StylizeConfig(),
                  share: bool = True) -> dict[int, np.ndarray]:
    """Stylize the views listed in ``group``; returns {view index: image}."""
    stylizer = Stylizer(cfg)
    idx = list(group)
    out = stylizer.stylize_group([content_images[i] for i in idx], style_img, share)
    return dict(zip(idx, out))
