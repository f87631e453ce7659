from .attention import attention, nv_attention, softmax
from .denoiser import (
    ContentControl,
    DenoiserConfig,
    DenoiserWeights,
    StyleControl,
    encode_content,
    encode_content_group,
    encode_style,
    predict_clean,
    predict_noise,
)
from .latent import LatentCodec, LatentGrid, patch_means
from .scheduler import SchedulerConfig, ddim_step, ddim_transition
from .stylize import StylizeConfig, Stylizer, stylize_group

__all__ = [
    "attention", "nv_attention", "softmax", "ContentControl", "DenoiserConfig", "DenoiserWeights",
    "StyleControl", "encode_content", "encode_content_group", "encode_style", "predict_clean", "predict_noise",
    "LatentCodec", "LatentGrid", "patch_means", "SchedulerConfig", "ddim_step", "ddim_transition",
    "StylizeConfig", "Stylizer", "stylize_group",
]
