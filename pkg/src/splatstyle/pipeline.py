"""Dataset update, scene finetuning and ablation variants."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .diffusion.stylize import Stylizer
from .errors import DivergenceDetected
from .features import FeatureExtractor
from .grouping import group_views, singleton_groups
from .losses import finetune_loss
from .metrics import evaluate
from .optim import Adam
from .rasterizer import render, render_backward, render_with_state
from .scene import GaussianScene, logit

log = logging.getLogger(__name__)


@dataclass
class StylizationRun:
    scene: GaussianScene
    cameras: list
    style_image: np.ndarray
    config: PipelineConfig = field(default_factory=PipelineConfig)
    content_images: list | None = None
    groups: list | None = None
    targets: list | None = None


@dataclass
class FinetuneResult:
    scene: GaussianScene
    losses: list  # per-iteration L_fine of the sampled view


def render_views(scene: GaussianScene, cameras, cfg: PipelineConfig) -> list[np.ndarray]:
    return [render(scene, cam, cfg.rasterizer) for cam in cameras]


def dataset_update(run: StylizationRun) -> list[np.ndarray]:
    """Render every view, group neighbors and stylize each group jointly."""
    cfg = run.config
    run.content_images = render_views(run.scene, run.cameras, cfg)
    if cfg.ablation.no_nv_attention:
        run.groups = singleton_groups(len(run.cameras))
    else:
        run.groups = group_views(run.cameras, cfg.grouping.n_views)
    stylizer = Stylizer(cfg.stylize_config())
    targets: list = [None] * len(run.cameras)
    for group in run.groups:
        idx = list(group)
        outs = stylizer.stylize_group([run.content_images[i] for i in idx], run.style_image)
        for i, img in zip(idx, outs):
            targets[i] = img
    log.info("dataset update: %d targets in %d groups", len(targets), len(run.groups))
    run.targets = targets
    return targets


def scratch_scene(targets, cameras, cfg: PipelineConfig, background=(0.0, 0.0, 0.0)) -> GaussianScene:
    """Random splats placed on unprojected target pixels at uniform depths."""
    ft = cfg.finetune
    rng = np.random.default_rng(cfg.run.seed)
    n = ft.scratch_gaussians
    positions = np.empty((n, 3))
    colors = np.empty((n, 3))
    log_scales = np.empty((n, 3))
    for k in range(n):
        v = k % len(cameras)
        cam, img = cameras[v], targets[v]
        px = rng.uniform(0, cam.width - 1)
        py = rng.uniform(0, cam.height - 1)
        depth = rng.uniform(ft.scratch_depth_min, ft.scratch_depth_max)
        ray = np.array([(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0]) * depth
        positions[k] = cam.rotation.T @ (ray - cam.translation)
        colors[k] = img[int(round(py)), int(round(px))]
        log_scales[k] = np.log(ft.scratch_footprint_px * depth / cam.fx)
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    opacity = np.full(n, float(logit(ft.scratch_opacity)))
    return GaussianScene(positions, rotations, log_scales, opacity, colors, background)


def initial_scene(run: StylizationRun) -> GaussianScene:
    if run.config.ablation.from_scratch:
        return scratch_scene(run.targets, run.cameras, run.config, run.scene.background)
    return run.scene.copy()


def evaluate_loss(scene: GaussianScene, run: StylizationRun, ext: FeatureExtractor, style_feats=None) -> float:
    """Mean L_fine over all views."""
    cfg = run.config
    style_feats = style_feats if style_feats is not None else ext.extract(run.style_image)
    vals = [finetune_loss(render(scene, cam, cfg.rasterizer), tgt, style_feats, ext, cfg.loss_weights()).total
            for cam, tgt in zip(run.cameras, run.targets)]
    return float(np.mean(vals))


def finetune(run: StylizationRun, iterations: int | None = None, callback=None) -> FinetuneResult:
    """Optimize the scene against the stylized targets, one view per step (round-robin)."""
    if run.targets is None:
        raise ValueError("run has no stylized targets; call dataset_update first")
    cfg = run.config
    ft = cfg.finetune
    iterations = ft.iterations if iterations is None else iterations
    scene = initial_scene(run)
    ext = FeatureExtractor(cfg.losses.extractor_seed)
    weights = cfg.loss_weights()
    style_feats = ext.extract(run.style_image) if weights.nnfm != 0.0 else None
    opt = Adam(ft.learning_rates(), ft.beta1, ft.beta2, ft.eps)
    losses = []
    for it in range(iterations):
        v = it % len(run.cameras)
        cam = run.cameras[v]
        fwd = render_with_state(scene, cam, cfg.rasterizer)
        res = finetune_loss(fwd.image, run.targets[v], style_feats, ext, weights)
        if not np.isfinite(res.total):
            raise DivergenceDetected(f"iteration {it}, view {v}: loss {res.total} "
                                     f"(l1={res.l1}, nnfm={res.nnfm})")
        grads = render_backward(scene, cam, res.grad, fwd, cfg.rasterizer)
        opt.step(scene.params(), grads.as_dict())
        scene.normalize_rotations()
        losses.append(res.total)
        if callback is not None:
            callback(it, res, scene)
    return FinetuneResult(scene, losses)


ABLATION_VARIANTS = ("full", "from_scratch", "no_nv", "no_nnfm", "n_sweep")


def configure_variant(cfg: PipelineConfig, variant: str, n_views: int | None = None) -> PipelineConfig:
    if variant == "full":
        return cfg
    if variant == "from_scratch":
        return cfg.replace(ablation={"from_scratch": True})
    if variant == "no_nv":
        return cfg.replace(ablation={"no_nv_attention": True})
    if variant == "no_nnfm":
        return cfg.replace(ablation={"no_nnfm": True})
    if variant == "n_sweep":
        return cfg.replace(grouping={"n_views": n_views})
    raise ValueError(f"unknown ablation variant {variant!r}")


@dataclass
class AblationResult:
    name: str
    config: PipelineConfig
    scene: GaussianScene
    targets: list
    groups: list
    report: dict


def run_ablation(run: StylizationRun, variant: str = "full", n_values=(2, 4, 8)) -> list[AblationResult]:
    """Run one variant (``n_sweep`` expands to one run per group size) and score it."""
    settings = [(f"n_views={n}", n) for n in n_values] if variant == "n_sweep" else [(variant, None)]
    ext = FeatureExtractor(run.config.losses.extractor_seed)
    results = []
    for name, n in settings:
        cfg = configure_variant(run.config, variant, n)
        sub = StylizationRun(run.scene, run.cameras, run.style_image, cfg)
        dataset_update(sub)
        out = finetune(sub)
        stylized = render_views(out.scene, run.cameras, cfg)
        report = evaluate(sub.content_images, stylized, run.style_image, ext).as_dict()
        report["loss_first"] = out.losses[0] if out.losses else float("nan")
        report["loss_last"] = out.losses[-1] if out.losses else float("nan")
        report["groups"] = len(sub.groups)
        results.append(AblationResult(name, cfg, out.scene, sub.targets, sub.groups, report))
    return results
