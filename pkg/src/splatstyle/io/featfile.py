"""Flat binary feature maps: u32 magic, h, w, c (little-endian), then row-major f32."""

from __future__ import annotations

import struct

import numpy as np

from ..errors import MalformedHeader, TruncatedBody
from ..features import FeatureMap
from .atomic import write_bytes

MAGIC = int.from_bytes(b"FEAT", "little")
_HEADER = struct.Struct("<IIII")


def feature_bytes(grid) -> bytes:
    grid = np.asarray(grid, dtype="<f4")
    if grid.ndim == 1:
        grid = grid.reshape(1, 1, -1)
    h, w, c = grid.shape
    return _HEADER.pack(MAGIC, h, w, c) + grid.tobytes()


def save_features(path, grid) -> None:
    write_bytes(path, feature_bytes(grid))


def parse_features(data: bytes, layer: str = "imported") -> FeatureMap:
    if len(data) < _HEADER.size:
        raise MalformedHeader("feature file shorter than its header")
    magic, h, w, c = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedHeader(f"bad magic 0x{magic:08x}")
    if c < 1:
        raise MalformedHeader("channel count must be >= 1")
    count = h * w * c
    if len(data) - _HEADER.size < 4 * count:
        raise TruncatedBody(f"expected {4 * count} body bytes, found {len(data) - _HEADER.size}")
    grid = np.frombuffer(data, dtype="<f4", count=count, offset=_HEADER.size).astype(np.float64)
    return FeatureMap(grid.reshape(h, w, c), layer)


def load_features(path) -> FeatureMap:
    with open(path, "rb") as fh:
        return parse_features(fh.read())


def load_descriptor(path) -> np.ndarray:
    """A descriptor file is a feature map; its positions are mean-pooled."""
    return load_features(path).flat().mean(axis=0)
