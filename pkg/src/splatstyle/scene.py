"""Gaussian scene representation, cameras and covariance parameterization.

A scene is stored as a struct of arrays (one row per splat) so the
rasterizer and optimizer can work on whole parameter tensors at once.
``Gaussian3D`` is the single-splat view used by the per-splat helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SH_C0 = 0.28209479177387814

PARAM_NAMES = ("positions", "rotations", "log_scales", "opacity_logits", "colors")


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass
class Gaussian3D:
    position: np.ndarray
    rotation: np.ndarray  # (w, x, y, z)
    log_scale: np.ndarray
    opacity_logit: float
    color: np.ndarray

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


@dataclass
class GaussianScene:
    positions: np.ndarray  # (G, 3)
    rotations: np.ndarray  # (G, 4), (w, x, y, z)
    log_scales: np.ndarray  # (G, 3)
    opacity_logits: np.ndarray  # (G,)
    colors: np.ndarray  # (G, 3), RGB in [0, 1]
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(n, 3)
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def from_gaussians(cls, gaussians, background=(0.0, 0.0, 0.0)) -> GaussianScene:
        gaussians = list(gaussians)
        return cls(
            positions=np.array([g.position for g in gaussians]).reshape(-1, 3),
            rotations=np.array([g.rotation for g in gaussians]).reshape(-1, 4),
            log_scales=np.array([g.log_scale for g in gaussians]).reshape(-1, 3),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            colors=np.array([g.color for g in gaussians]).reshape(-1, 3),
            background=background,
        )

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            log_scale=self.log_scales[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            color=self.colors[i].copy(),
        )

    def copy(self) -> GaussianScene:
        return GaussianScene(
            self.positions.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.opacity_logits.copy(),
            self.colors.copy(),
            self.background.copy(),
        )

    def params(self) -> dict[str, np.ndarray]:
        """Optimizable tensors keyed by name (views, not copies)."""
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def normalize_rotations(self) -> None:
        self.rotations /= np.linalg.norm(self.rotations, axis=1, keepdims=True)


@dataclass
class Camera:
    """Pinhole camera with a world-to-camera rigid transform.

    Pixel centers sit at integer coordinates, so a principal point of
    ``(cx, cy)`` lands exactly on pixel column ``cx`` and row ``cy``.
    """

    rotation: np.ndarray  # (3, 3) world -> camera
    translation: np.ndarray  # (3,)
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-6):
            raise ValueError("camera rotation is not orthonormal")

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def focal(self) -> tuple[float, float]:
        return (self.fx, self.fy)

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.width, self.height)

    def with_resolution(self, width: int, height: int) -> Camera:
        sx, sy = width / self.width, height / self.height
        return replace(self, fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx,
                       cy=self.cy * sy, width=width, height=height)


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a camera at ``eye`` looking at ``target``.

    Camera axes follow the OpenCV/COLMAP convention: +z forward, +y down.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return rot, -rot @ eye


def check_image(img, height=None, width=None) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got shape {img.shape}")
    if height is not None and img.shape[:2] != (height, width):
        raise ValueError(f"image shape {img.shape[:2]} does not match camera {(height, width)}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


# ---------------------------------------------------------------------------
# Quaternion / covariance parameterization
# ---------------------------------------------------------------------------


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (..., 4) quaternions (w, x, y, z); normalizes first."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def quat_to_rotmat_backward(q: np.ndarray, grad_rot: np.ndarray) -> np.ndarray:
    """Pull dL/dR (G, 3, 3) back to dL/dq (G, 4) through normalization."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    qn = q / norm
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    g = grad_rot
    zero = np.zeros_like(w)

    def contract(m):
        return np.einsum("gij,gij->g", g, np.stack([np.stack(r, -1) for r in m], -2))

    dw = contract([[zero, -2 * z, 2 * y], [2 * z, zero, -2 * x], [-2 * y, 2 * x, zero]])
    dx = contract([[zero, 2 * y, 2 * z], [2 * y, -4 * x, -2 * w], [2 * z, 2 * w, -4 * x]])
    dy = contract([[-4 * y, 2 * x, 2 * w], [2 * x, zero, 2 * z], [-2 * w, 2 * z, -4 * y]])
    dz = contract([[-4 * z, -2 * w, 2 * x], [2 * w, -4 * z, 2 * y], [2 * x, 2 * y, zero]])
    grad_qn = np.stack([dw, dx, dy, dz], -1)
    # d(q/|q|)/dq = (I - qn qn^T) / |q|
    return (grad_qn - qn * np.sum(grad_qn * qn, axis=-1, keepdims=True)) / norm


def covariances(rotations: np.ndarray, log_scales: np.ndarray) -> np.ndarray:
    """Sigma = R S S^T R^T for every splat; returns (G, 3, 3)."""
    m = quat_to_rotmat(rotations) * np.exp(log_scales)[:, None, :]
    return m @ np.swapaxes(m, -1, -2)


def covariance_from_rs(g: Gaussian3D) -> np.ndarray:
    return covariances(np.asarray(g.rotation)[None], np.asarray(g.log_scale)[None])[0]


def gaussian_density(g: Gaussian3D, x) -> float:
    """Unnormalized density exp(-0.5 d^T Sigma^-1 d) at world point ``x``."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(g.position, dtype=np.float64)
    sigma = covariance_from_rs(g)
    return float(np.exp(-0.5 * d @ np.linalg.solve(sigma, d)))
