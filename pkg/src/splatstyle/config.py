"""Pipeline configuration and its ``key = value`` INI representation."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .diffusion.denoiser import DenoiserConfig
from .diffusion.stylize import StylizeConfig
from .errors import ConfigError
from .losses import LossWeights
from .rasterizer import RasterConfig


@dataclass
class RunSection:
    seed: int = 0
    background: tuple = (0.0, 0.0, 0.0)  # PLY files carry no background color


@dataclass
class GroupingSection:
    n_views: int = 15


@dataclass
class DiffusionSection:
    steps: int = 20
    content_scale: float = 1.0
    style_scale: float = 0.6
    control_scale: float = 1.0
    alpha_start: float = 0.999
    alpha_end: float = 0.1
    d_model: int = 64
    n_blocks: int = 4
    patch_size: int = 8
    n_style_tokens: int = 4
    weights_seed: int = 0


@dataclass
class LossSection:
    w_rgb: float = 1.0
    w_nnfm: float = 1.0
    extractor_seed: int = 0


@dataclass
class FinetuneSection:
    iterations: int = 1000
    lr_position: float = 1.6e-4
    lr_rotation: float = 1e-3
    lr_log_scale: float = 5e-3
    lr_opacity: float = 5e-2
    lr_color: float = 2.5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    scratch_gaussians: int = 5000
    scratch_depth_min: float = 1.0
    scratch_depth_max: float = 5.0
    scratch_opacity: float = 0.1
    scratch_footprint_px: float = 1.5

    def learning_rates(self) -> dict[str, float]:
        return {
            "positions": self.lr_position,
            "rotations": self.lr_rotation,
            "log_scales": self.lr_log_scale,
            "opacity_logits": self.lr_opacity,
            "colors": self.lr_color,
        }


@dataclass
class AblationSection:
    from_scratch: bool = False
    no_nv_attention: bool = False
    no_nnfm: bool = False


@dataclass
class PipelineConfig:
    run: RunSection = field(default_factory=RunSection)
    rasterizer: RasterConfig = field(default_factory=RasterConfig)
    grouping: GroupingSection = field(default_factory=GroupingSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    losses: LossSection = field(default_factory=LossSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    ablation: AblationSection = field(default_factory=AblationSection)

    def stylize_config(self) -> StylizeConfig:
        d = self.diffusion
        return StylizeConfig(
            steps=d.steps,
            content_scale=d.content_scale,
            style_scale=d.style_scale,
            control_scale=d.control_scale,
            seed=self.run.seed,
            alpha_start=d.alpha_start,
            alpha_end=d.alpha_end,
            denoiser=DenoiserConfig(d.d_model, d.n_blocks, d.patch_size, d.n_style_tokens, seed=d.weights_seed),
        )

    def loss_weights(self) -> LossWeights:
        w_nnfm = 0.0 if self.ablation.no_nnfm else self.losses.w_nnfm
        return LossWeights(self.losses.w_rgb, w_nnfm)

    def replace(self, **sections) -> PipelineConfig:
        """Copy with some fields changed, e.g. ``replace(grouping={"n_views": 4})``."""
        out = dataclasses.replace(self)
        for name, changes in sections.items():
            setattr(out, name, dataclasses.replace(getattr(self, name), **changes))
        return out


def _convert(kind, raw: str, where: str):
    try:
        if kind is bool or kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int or kind == "int":
            return int(raw)
        if kind is tuple or kind == "tuple":
            return tuple(float(v) for v in raw.split(","))
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for sec in dataclasses.fields(cfg):
        section = getattr(cfg, sec.name)
        lines.append(f"[{sec.name}]")
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {_format(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    cfg = base if base is not None else PipelineConfig()
    known = {f.name for f in dataclasses.fields(cfg)}
    updates = {}
    for name in parser.sections():
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")
        section = getattr(cfg, name)
        types = {f.name: f.type for f in dataclasses.fields(section)}
        changes = {}
        for key, raw in parser.items(name):
            if key not in types:
                raise ConfigError(f"[{name}] unknown key {key!r}")
            changes[key] = _convert(types[key], raw, f"[{name}] {key}")
        updates[name] = changes
    return cfg.replace(**updates)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return parse_config(fh.read())
