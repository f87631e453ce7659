"""8-bit sRGB PNG boundary for linear float images."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .atomic import write_bytes


def linear_to_srgb(x):
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def srgb_to_linear(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))


def encode_png(img) -> bytes:
    data = np.round(linear_to_srgb(img) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, img) -> None:
    write_bytes(path, encode_png(img))


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        data = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(data)
