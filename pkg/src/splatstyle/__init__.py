"""Multi-view consistent style transfer for 3D Gaussian splatting scenes.

The pipeline renders every training view, stylizes groups of neighboring
views jointly with a toy content/style separated denoiser, and finetunes the
scene on the stylized targets with an L1 + nearest-neighbor feature loss.
"""

from .config import PipelineConfig, dump_config, load_config, parse_config
from .errors import SplatStyleError
from .grouping import ViewGroup, group_views
from .pipeline import StylizationRun, dataset_update, finetune, run_ablation
from .rasterizer import RasterConfig, render, render_backward
from .scene import Camera, GaussianScene

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig", "dump_config", "load_config", "parse_config", "SplatStyleError", "ViewGroup",
    "group_views", "StylizationRun", "dataset_update", "finetune", "run_ablation", "RasterConfig",
    "render", "render_backward", "Camera", "GaussianScene",
]
