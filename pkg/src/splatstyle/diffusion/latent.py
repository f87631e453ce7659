"""Toy latent codec: patch average-pool plus a fixed linear lift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonDivisibleResolution


@dataclass
class LatentGrid:
    tokens: np.ndarray  # (h_l, w_l, d)
    timestep: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.tokens.shape[:2]

    def flat(self) -> np.ndarray:
        return self.tokens.reshape(-1, self.tokens.shape[-1])


def image_patches(img: np.ndarray, patch_size: int) -> np.ndarray:
    """(H, W, 3) -> (H/p, W/p, p, p, 3) non-overlapping patches."""
    h, w = img.shape[:2]
    if h % patch_size or w % patch_size:
        raise NonDivisibleResolution(f"{w}x{h} image is not divisible by patch size {patch_size}")
    p = patch_size
    return img.reshape(h // p, p, w // p, p, 3).transpose(0, 2, 1, 3, 4)


def patch_means(img: np.ndarray, patch_size: int) -> np.ndarray:
    return image_patches(img, patch_size).mean(axis=(2, 3))


class LatentCodec:
    def __init__(self, patch_size: int = 8, dim: int = 64, seed: int = 0):
        if dim < 3:
            raise ValueError("latent dimension must be >= 3")
        self.patch_size = patch_size
        self.dim = dim
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.normal(size=(dim, 3)))
        self.lift = q.T  # (3, d) with orthonormal rows
        self.unlift = q  # right inverse: lift @ unlift == I_3

    def encode(self, img: np.ndarray, timestep: int = 0) -> LatentGrid:
        return LatentGrid(patch_means(np.asarray(img, dtype=np.float64), self.patch_size) @ self.lift, timestep)

    def decode(self, z: LatentGrid) -> np.ndarray:
        rgb = np.clip(z.tokens @ self.unlift, 0.0, 1.0)
        p = self.patch_size
        return np.repeat(np.repeat(rgb, p, axis=0), p, axis=1)
