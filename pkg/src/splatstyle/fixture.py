"""Seeded synthetic scene used by the tests, the acceptance suite and the CLI demo."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import Camera, GaussianScene, logit, look_at

FIXTURE_SEED = 7


@dataclass
class Fixture:
    scene: GaussianScene
    cameras: list
    style_image: np.ndarray
    names: list


def ring_cameras(count: int = 8, radius: float = 3.0, height: float = 0.6, size: int = 64,
                 focal: float = 60.0) -> list[Camera]:
    cams = []
    for k in range(count):
        ang = 2.0 * np.pi * k / count
        eye = [radius * np.cos(ang), -height, radius * np.sin(ang)]
        rot, t = look_at(eye, [0.0, 0.0, 0.0], up=(0.0, -1.0, 0.0))
        cams.append(Camera(rot, t, focal, focal, size / 2, size / 2, size, size))
    return cams


def blob_scene(n: int = 100, seed: int = FIXTURE_SEED) -> GaussianScene:
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    positions = dirs * rng.uniform(0.2, 0.8, size=(n, 1)) ** (1 / 3) * 0.9
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    log_scales = np.log(rng.uniform(0.06, 0.16, size=(n, 3)))
    opacity = logit(rng.uniform(0.6, 0.95, size=n))
    colors = np.clip(0.5 + 0.45 * positions / 0.9 + rng.normal(scale=0.05, size=(n, 3)), 0.0, 1.0)
    return GaussianScene(positions, q, log_scales, opacity, colors, background=(0.25, 0.25, 0.3))


def style_image(size: int = 64, seed: int = FIXTURE_SEED) -> np.ndarray:
    """Diagonal warm/cool stripes with seeded speckle."""
    rng = np.random.default_rng(seed + 1)
    y, x = np.mgrid[0:size, 0:size]
    stripe = 0.5 + 0.5 * np.sin((x + y) * 2.0 * np.pi / 12.0)
    warm = np.array([0.9, 0.45, 0.1])
    cool = np.array([0.1, 0.25, 0.7])
    img = stripe[..., None] * warm + (1.0 - stripe[..., None]) * cool
    img += rng.normal(scale=0.05, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def make_fixture(seed: int = FIXTURE_SEED, n_gaussians: int = 100, n_views: int = 8, size: int = 64) -> Fixture:
    cams = ring_cameras(n_views, size=size, focal=60.0 * size / 64)
    return Fixture(blob_scene(n_gaussians, seed), cams, style_image(size, seed),
                   [f"view_{i:03d}.png" for i in range(n_views)])


FIXTURE_CONFIG = """\
[run]
seed = 7
background = 0.25, 0.25, 0.3

[grouping]
n_views = 4

[diffusion]
steps = 20

[finetune]
iterations = 200
"""


def write_fixture(out_dir, fixture: Fixture | None = None) -> Path:
    from .io import save_colmap, save_ply, save_png
    from .io.atomic import write_text

    fx = fixture or make_fixture()
    out = Path(out_dir)
    save_ply(fx.scene, out / "scene.ply")
    save_colmap(out / "colmap", fx.cameras, fx.names)
    save_png(out / "style.png", fx.style_image)
    write_text(out / "config.ini", FIXTURE_CONFIG)
    return out
