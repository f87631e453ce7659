"""Binary little-endian PLY in the usual 3D Gaussian splatting vertex layout."""

from __future__ import annotations

import numpy as np

from ..errors import MalformedHeader, TruncatedBody
from ..scene import SH_C0, GaussianScene
from .atomic import write_bytes

PROPERTIES = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)
VERTEX_DTYPE = np.dtype([(name, "<f4") for name in PROPERTIES])


def scene_to_bytes(scene: GaussianScene) -> bytes:
    n = len(scene)
    rec = np.empty(n, dtype=VERTEX_DTYPE)
    for i, axis in enumerate("xyz"):
        rec[axis] = scene.positions[:, i]
    f_dc = (scene.colors - 0.5) / SH_C0
    for i in range(3):
        rec[f"f_dc_{i}"] = f_dc[:, i]
        rec[f"scale_{i}"] = scene.log_scales[:, i]
    rec["opacity"] = scene.opacity_logits
    for i in range(4):
        rec[f"rot_{i}"] = scene.rotations[:, i]
    header = "ply\nformat binary_little_endian 1.0\n"
    header += f"element vertex {n}\n"
    header += "".join(f"property float {name}\n" for name in PROPERTIES)
    header += "end_header\n"
    return header.encode("ascii") + rec.tobytes()


def save_ply(scene: GaussianScene, path) -> None:
    write_bytes(path, scene_to_bytes(scene))


def _parse_header(data: bytes) -> tuple[int, int]:
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise MalformedHeader("missing 'ply' magic or 'end_header'")
    lines = data[:end].decode("ascii", errors="replace").splitlines()[1:]
    count, props, fmt = None, [], None
    for line in lines:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1] if len(parts) > 1 else None
        elif parts[0] == "element":
            if count is not None or len(parts) != 3 or parts[1] != "vertex":
                raise MalformedHeader(f"unexpected element line: {line!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            if len(parts) != 3 or parts[1] != "float":
                raise MalformedHeader(f"unsupported property line: {line!r}")
            props.append(parts[2])
        else:
            raise MalformedHeader(f"unexpected header line: {line!r}")
    if fmt != "binary_little_endian":
        raise MalformedHeader(f"unsupported format {fmt!r}")
    if count is None:
        raise MalformedHeader("no vertex element")
    if tuple(props) != PROPERTIES:
        missing = [p for p in PROPERTIES if p not in props]
        raise MalformedHeader(f"vertex properties differ from the expected layout (missing: {missing})")
    return count, end + len(b"end_header\n")


def scene_from_bytes(data: bytes, background=(0.0, 0.0, 0.0)) -> GaussianScene:
    count, offset = _parse_header(data)
    need = count * VERTEX_DTYPE.itemsize
    if len(data) - offset < need:
        raise TruncatedBody(f"expected {need} body bytes, found {len(data) - offset}")
    rec = np.frombuffer(data, dtype=VERTEX_DTYPE, count=count, offset=offset)

    def cols(names):
        return np.stack([rec[n].astype(np.float64) for n in names], axis=-1)

    rot = cols([f"rot_{i}" for i in range(4)])
    norm = np.linalg.norm(rot, axis=1, keepdims=True)
    # float32-quantized unit quaternions pass through untouched
    off = np.abs(norm - 1.0) > 1e-6
    rot = np.where(off, rot / np.where(norm > 0, norm, 1.0), rot)
    return GaussianScene(
        positions=cols("xyz"),
        rotations=rot,
        log_scales=cols([f"scale_{i}" for i in range(3)]),
        opacity_logits=rec["opacity"].astype(np.float64),
        colors=SH_C0 * cols([f"f_dc_{i}" for i in range(3)]) + 0.5,
        background=background,
    )


def load_ply(path, background=(0.0, 0.0, 0.0)) -> GaussianScene:
    with open(path, "rb") as fh:
        return scene_from_bytes(fh.read(), background)
