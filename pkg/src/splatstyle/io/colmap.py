"""COLMAP text model (cameras.txt / images.txt) reader and writer."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import MalformedFile, UnsupportedCameraModel
from ..scene import Camera, quat_to_rotmat
from .atomic import write_text


@dataclass
class CameraRecord:
    camera_id: int
    model: str
    width: int
    height: int
    params: tuple


@dataclass
class ImageRecord:
    image_id: int
    qvec: np.ndarray
    tvec: np.ndarray
    camera_id: int
    name: str


@dataclass
class ColmapModel:
    cameras: dict
    images: list


def _data_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            yield lineno, line.rstrip("\n")


def read_cameras_text(path) -> dict[int, CameraRecord]:
    cameras = {}
    for lineno, line in _data_lines(path):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        elems = line.split()
        try:
            cam_id, model = int(elems[0]), elems[1]
            width, height = int(elems[2]), int(elems[3])
            params = tuple(float(v) for v in elems[4:])
        except (IndexError, ValueError) as exc:
            raise MalformedFile(f"{path}:{lineno}: bad camera record ({exc})") from None
        cameras[cam_id] = CameraRecord(cam_id, model, width, height, params)
    return cameras


def read_images_text(path) -> list[ImageRecord]:
    images = []
    lines = [(n, l) for n, l in _data_lines(path) if not l.lstrip().startswith("#")]
    i = 0
    while i < len(lines):
        lineno, line = lines[i]
        if not line.strip():
            i += 1
            continue
        elems = line.split()
        try:
            image_id = int(elems[0])
            qvec = np.array([float(v) for v in elems[1:5]])
            tvec = np.array([float(v) for v in elems[5:8]])
            camera_id = int(elems[8])
            name = " ".join(elems[9:])
        except (IndexError, ValueError) as exc:
            raise MalformedFile(f"{path}:{lineno}: bad image record ({exc})") from None
        if len(qvec) != 4 or len(tvec) != 3 or not name:
            raise MalformedFile(f"{path}:{lineno}: image record needs 10 fields")
        images.append(ImageRecord(image_id, qvec / np.linalg.norm(qvec), tvec, camera_id, name))
        i += 2  # skip the 2D points line
    return images


def _to_camera(rec: CameraRecord, img: ImageRecord) -> Camera:
    if rec.model == "SIMPLE_PINHOLE":
        if len(rec.params) != 3:
            raise MalformedFile(f"camera {rec.camera_id}: SIMPLE_PINHOLE needs 3 params")
        f, cx, cy = rec.params
        fx = fy = f
    elif rec.model == "PINHOLE":
        if len(rec.params) != 4:
            raise MalformedFile(f"camera {rec.camera_id}: PINHOLE needs 4 params")
        fx, fy, cx, cy = rec.params
    else:
        raise UnsupportedCameraModel(f"camera {rec.camera_id}: model {rec.model}")
    return Camera(quat_to_rotmat(img.qvec), img.tvec, fx, fy, cx, cy, rec.width, rec.height)


def load_colmap(path) -> tuple[list[Camera], list[str]]:
    """Cameras and image names, in images.txt order."""
    path = Path(path)
    cams = read_cameras_text(path / "cameras.txt")
    imgs = read_images_text(path / "images.txt")
    cameras = []
    for img in imgs:
        if img.camera_id not in cams:
            raise MalformedFile(f"image {img.image_id} references unknown camera {img.camera_id}")
        cameras.append(_to_camera(cams[img.camera_id], img))
    return cameras, [img.name for img in imgs]


def rotmat_to_quat(r: np.ndarray) -> np.ndarray:
    """(w, x, y, z) with w >= 0 for a proper rotation matrix."""
    r = np.asarray(r, dtype=np.float64)
    k = np.array([
        [r[0, 0] - r[1, 1] - r[2, 2], 0, 0, 0],
        [r[1, 0] + r[0, 1], r[1, 1] - r[0, 0] - r[2, 2], 0, 0],
        [r[2, 0] + r[0, 2], r[2, 1] + r[1, 2], r[2, 2] - r[0, 0] - r[1, 1], 0],
        [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1], r[0, 0] + r[1, 1] + r[2, 2]],
    ]) / 3.0
    vals, vecs = np.linalg.eigh(k)
    q = vecs[[3, 0, 1, 2], np.argmax(vals)]
    return -q if q[0] < 0 else q


def save_colmap(path, cameras, names=None) -> None:
    path = Path(path)
    names = names or [f"view_{i:03d}.png" for i in range(len(cameras))]
    cam_lines = ["# Camera list with one line of data per camera:",
                 "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]"]
    img_lines = ["# Image list with two lines of data per image:",
                 "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
                 "#   POINTS2D[] as (X, Y, POINT3D_ID)"]
    for i, (cam, name) in enumerate(zip(cameras, names), 1):
        params = (cam.fx, cam.fy, cam.cx, cam.cy)
        cam_lines.append(" ".join([str(i), "PINHOLE", str(cam.width), str(cam.height), *map(repr, map(float, params))]))
        q = rotmat_to_quat(cam.rotation)
        fields = [*map(repr, map(float, q)), *map(repr, map(float, cam.translation))]
        img_lines.append(" ".join([str(i), *fields, str(i), name]))
        img_lines.append("")
    write_text(path / "cameras.txt", "\n".join(cam_lines) + "\n")
    write_text(path / "images.txt", "\n".join(img_lines) + "\n")
