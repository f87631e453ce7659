from .atomic import atomic_write
from .colmap import load_colmap, save_colmap
from .featfile import load_descriptor, load_features, save_features
from .images import load_png, save_png
from .ply import load_ply, save_ply

__all__ = ["atomic_write", "load_colmap", "save_colmap", "load_descriptor", "load_features",
           "save_features", "load_png", "save_png", "load_ply", "save_ply"]
