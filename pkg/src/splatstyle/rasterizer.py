"""Differentiable Gaussian splatting: projection, tiled compositing, backward.

Forward model per pixel p (pixel centers at integer coordinates)::

    alpha_i = min(o_i * exp(-0.5 d^T conic_i d), alpha_max)   if d^T conic_i d <= 9
    C(p)    = sum_i c_i alpha_i T_i + bg * T_final,  T_i = prod_{j<i} (1 - alpha_j)

with splats sorted front to back (ties by index) and compositing stopped
once the transmittance in front of a splat drops below ``min_transmittance``.

``render_untiled`` evaluates every visible splat at every pixel and is the
reference; ``render`` bins splats into tiles and must agree bit for bit.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyScene, MismatchedForward
from .scene import (
    PARAM_NAMES,
    Camera,
    Gaussian3D,
    GaussianScene,
    quat_to_rotmat,
    quat_to_rotmat_backward,
    sigmoid,
)


@dataclass(frozen=True)
class RasterConfig:
    tile_size: int = 16
    lowpass: float = 0.3
    alpha_max: float = 0.999
    near_plane: float = 0.01
    min_transmittance: float = 1e-4
    support_sigma: float = 3.0
    # Tiles are handed to workers in row-major order; gradients are reduced in
    # the same order whatever the worker count.
    threads: int = 1


DEFAULT_CONFIG = RasterConfig()


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float


@dataclass(frozen=True)
class Culled:
    reason: str


@dataclass
class Projection:
    """Batched projection of a whole scene into one camera."""

    visible: np.ndarray  # (G,) bool
    order: np.ndarray  # visible splat ids sorted front to back
    means2d: np.ndarray  # (G, 2)
    cov2d: np.ndarray  # (G, 2, 2), dilated
    conics: np.ndarray  # (G, 2, 2), inverse of cov2d
    radii: np.ndarray  # (G, 2) support half-extent in pixels
    depths: np.ndarray
    colors: np.ndarray
    opacities: np.ndarray
    # kept for the backward pass
    cam_points: np.ndarray
    jacobians: np.ndarray  # (G, 2, 3)
    rotmats: np.ndarray
    scales: np.ndarray
    cov3d: np.ndarray


@dataclass
class RenderGradients:
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> RenderGradients:
        return cls(np.zeros((n, 3)), np.zeros((n, 4)), np.zeros((n, 3)), np.zeros(n), np.zeros((n, 3)))

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def __iadd__(self, other: RenderGradients) -> RenderGradients:
        for name in PARAM_NAMES:
            getattr(self, name).__iadd__(getattr(other, name))
        return self


@dataclass
class TileIndex:
    tile_size: int
    tiles_x: int
    tiles_y: int
    lists: list  # per tile (row-major): splat ids in depth order

    def tile_bounds(self, t: int, width: int, height: int) -> tuple[int, int, int, int]:
        ty, tx = divmod(t, self.tiles_x)
        x0, y0 = tx * self.tile_size, ty * self.tile_size
        return x0, min(x0 + self.tile_size, width), y0, min(y0 + self.tile_size, height)


@dataclass
class _TileState:
    ids: np.ndarray
    px: np.ndarray
    py: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    gauss: np.ndarray
    raw: np.ndarray
    alpha: np.ndarray
    t_before: np.ndarray
    t_final: np.ndarray
    grad_mask: np.ndarray
    support: np.ndarray
    clamped: np.ndarray
    active: np.ndarray


@dataclass
class RenderResult:
    image: np.ndarray
    projection: Projection
    tiles: TileIndex
    states: list = field(repr=False)
    camera_shape: tuple = ()


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def project(scene: GaussianScene, cam: Camera, cfg: RasterConfig = DEFAULT_CONFIG) -> Projection:
    rot_w = cam.rotation
    pts = scene.positions @ rot_w.T + cam.translation
    tx, ty, tz = pts[:, 0], pts[:, 1], pts[:, 2]
    in_front = tz > cfg.near_plane
    tz_safe = np.where(in_front, tz, 1.0)

    n = len(scene)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = cam.fx / tz_safe
    jac[:, 0, 2] = -cam.fx * tx / tz_safe**2
    jac[:, 1, 1] = cam.fy / tz_safe
    jac[:, 1, 2] = -cam.fy * ty / tz_safe**2

    rotmats = quat_to_rotmat(scene.rotations)
    scales = np.exp(scene.log_scales)
    m = rotmats * scales[:, None, :]
    cov3d = m @ np.swapaxes(m, 1, 2)
    t_mat = jac @ rot_w
    cov2d = t_mat @ cov3d @ np.swapaxes(t_mat, 1, 2)
    cov2d[:, 0, 0] += cfg.lowpass
    cov2d[:, 1, 1] += cfg.lowpass

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    conics = np.empty_like(cov2d)
    conics[:, 0, 0] = cov2d[:, 1, 1] / det
    conics[:, 1, 1] = cov2d[:, 0, 0] / det
    conics[:, 0, 1] = -cov2d[:, 0, 1] / det
    conics[:, 1, 0] = conics[:, 0, 1]

    means2d = np.stack([cam.fx * tx / tz_safe + cam.cx, cam.fy * ty / tz_safe + cam.cy], -1)
    radii = cfg.support_sigma * np.sqrt(np.stack([cov2d[:, 0, 0], cov2d[:, 1, 1]], -1))
    lo = means2d - radii
    hi = means2d + radii
    on_screen = (hi[:, 0] >= 0) & (lo[:, 0] <= cam.width - 1) & (hi[:, 1] >= 0) & (lo[:, 1] <= cam.height - 1)
    visible = in_front & on_screen

    ids = np.nonzero(visible)[0]
    order = ids[np.lexsort((ids, tz[ids]))]
    return Projection(
        visible=visible,
        order=order,
        means2d=means2d,
        cov2d=cov2d,
        conics=conics,
        radii=radii,
        depths=tz,
        colors=scene.colors,
        opacities=sigmoid(scene.opacity_logits),
        cam_points=pts,
        jacobians=jac,
        rotmats=rotmats,
        scales=scales,
        cov3d=cov3d,
    )


def project_gaussian(g: Gaussian3D, cam: Camera, cfg: RasterConfig = DEFAULT_CONFIG):
    """Project one splat; returns a ``ProjectedGaussian`` or ``Culled``."""
    proj = project(GaussianScene.from_gaussians([g]), cam, cfg)
    if proj.depths[0] <= cfg.near_plane:
        return Culled("behind near plane")
    if not proj.visible[0]:
        return Culled("outside image")
    return ProjectedGaussian(
        mean2d=proj.means2d[0],
        cov2d=proj.cov2d[0],
        depth=float(proj.depths[0]),
        color=proj.colors[0].copy(),
        opacity=float(proj.opacities[0]),
    )


def tile_bin(proj: Projection, cam: Camera, tile_size: int = 16) -> TileIndex:
    """List every splat in each tile its support bounding box touches."""
    tiles_x = -(-cam.width // tile_size)
    tiles_y = -(-cam.height // tile_size)
    lists: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    if len(proj.order):
        ids = proj.order
        lo = np.ceil(proj.means2d[ids] - proj.radii[ids])
        hi = np.floor(proj.means2d[ids] + proj.radii[ids])
        x0 = np.clip(lo[:, 0], 0, cam.width - 1).astype(int) // tile_size
        x1 = np.clip(hi[:, 0], 0, cam.width - 1).astype(int) // tile_size
        y0 = np.clip(lo[:, 1], 0, cam.height - 1).astype(int) // tile_size
        y1 = np.clip(hi[:, 1], 0, cam.height - 1).astype(int) // tile_size
        for k, gid in enumerate(ids):
            if lo[k, 0] > hi[k, 0] or lo[k, 1] > hi[k, 1]:
                continue  # support box contains no pixel center
            for ty in range(y0[k], y1[k] + 1):
                for tx in range(x0[k], x1[k] + 1):
                    lists[ty * tiles_x + tx].append(int(gid))
    return TileIndex(tile_size, tiles_x, tiles_y, [np.asarray(t, dtype=np.int64) for t in lists])


# ---------------------------------------------------------------------------
# Compositing
# ---------------------------------------------------------------------------


def _composite(px, py, ids, proj: Projection, bg, cfg: RasterConfig, keep: bool):
    npix = len(px)
    if len(ids) == 0:
        color = np.broadcast_to(bg * np.ones(npix)[:, None], (npix, 3)).copy()
        empty = np.zeros((0, npix))
        state = _TileState(ids, px, py, empty, empty, empty, empty, empty, empty, np.ones(npix),
                           empty.astype(bool), empty.astype(bool), empty.astype(bool), empty.astype(bool))
        return color, state if keep else None

    mean = proj.means2d[ids]
    conic = proj.conics[ids]
    opac = proj.opacities[ids]
    cols = proj.colors[ids]

    dx = px[None, :] - mean[:, 0, None]
    dy = py[None, :] - mean[:, 1, None]
    q = conic[:, 0, 0, None] * dx * dx + 2.0 * conic[:, 0, 1, None] * dx * dy + conic[:, 1, 1, None] * dy * dy
    support = q <= cfg.support_sigma**2
    gauss = np.exp(-0.5 * q)
    raw = opac[:, None] * gauss
    clamped = raw > cfg.alpha_max
    alpha = np.where(support, np.minimum(raw, cfg.alpha_max), 0.0)

    ones = np.ones((1, npix))
    t_incl = np.cumprod(1.0 - alpha, axis=0)
    t_before = np.concatenate([ones, t_incl[:-1]], axis=0)
    active = t_before >= cfg.min_transmittance
    alpha = np.where(active, alpha, 0.0)
    t_incl = np.cumprod(1.0 - alpha, axis=0)
    t_before = np.concatenate([ones, t_incl[:-1]], axis=0)
    t_final = t_incl[-1]

    weights = alpha * t_before
    color = np.cumsum(weights[:, :, None] * cols[:, None, :], axis=0)[-1] + bg[None, :] * t_final[:, None]
    if not keep:
        return color, None
    grad_mask = active & support & ~clamped
    state = _TileState(ids, px, py, dx, dy, gauss, raw, alpha, t_before, t_final, grad_mask,
                       support, clamped, active)
    return color, state


def _check_scene(scene: GaussianScene):
    if len(scene) == 0:
        raise EmptyScene("scene has no Gaussians")


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def render_with_state(scene: GaussianScene, cam: Camera, cfg: RasterConfig = DEFAULT_CONFIG) -> RenderResult:
    """Tiled forward pass that keeps what the backward pass needs."""
    _check_scene(scene)
    proj = project(scene, cam, cfg)
    tiles = tile_bin(proj, cam, cfg.tile_size)
    image = np.empty((cam.height, cam.width, 3))

    def run(t):
        x0, x1, y0, y1 = tiles.tile_bounds(t, cam.width, cam.height)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        color, state = _composite(xs.ravel().astype(np.float64), ys.ravel().astype(np.float64),
                                  tiles.lists[t], proj, scene.background, cfg, keep=True)
        return color.reshape(y1 - y0, x1 - x0, 3), state

    results = _map(run, range(len(tiles.lists)), cfg.threads)
    states = []
    for t, (block, state) in enumerate(results):
        x0, x1, y0, y1 = tiles.tile_bounds(t, cam.width, cam.height)
        image[y0:y1, x0:x1] = block
        states.append(state)
    return RenderResult(image, proj, tiles, states, (cam.height, cam.width))


def render(scene: GaussianScene, cam: Camera, cfg: RasterConfig = DEFAULT_CONFIG) -> np.ndarray:
    return render_with_state(scene, cam, cfg).image


def render_untiled(scene: GaussianScene, cam: Camera, cfg: RasterConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Reference renderer: every visible splat evaluated at every pixel."""
    _check_scene(scene)
    proj = project(scene, cam, cfg)
    ys, xs = np.mgrid[0:cam.height, 0:cam.width]
    color, _ = _composite(xs.ravel().astype(np.float64), ys.ravel().astype(np.float64),
                          proj.order, proj, scene.background, cfg, keep=False)
    return color.reshape(cam.height, cam.width, 3)


def structure_signature(result: RenderResult) -> str:
    """Digest of every discrete decision taken by a forward pass.

    Two passes with equal signatures differ only through smooth terms, so a
    finite-difference probe between them is valid.
    """
    h = hashlib.sha1()
    h.update(result.projection.visible.tobytes())
    h.update(result.projection.order.tobytes())
    for st in result.states:
        h.update(st.ids.tobytes())
        for mask in (st.support, st.clamped, st.active):
            h.update(np.packbits(mask).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------


def _tile_backward(state: _TileState, upstream, proj: Projection, bg):
    k = len(state.ids)
    if k == 0:
        return None
    cols = proj.colors[state.ids]
    conic = proj.conics[state.ids]
    weights = state.alpha * state.t_before

    d_color = weights @ upstream

    wc = weights[:, :, None] * cols[:, None, :]
    behind = np.cumsum(wc[::-1], axis=0)[::-1] - wc + bg[None, None, :] * state.t_final[None, :, None]
    d_alpha = state.t_before * (cols @ upstream.T) - np.einsum("kpc,pc->kp", behind, upstream) / (1.0 - state.alpha)
    d_raw = np.where(state.grad_mask, d_alpha, 0.0)

    d_opac = np.sum(d_raw * state.gauss, axis=1)
    d_q = d_raw * (-0.5 * state.raw)
    dx, dy = state.dx, state.dy
    a, b, c = conic[:, 0, 0, None], conic[:, 0, 1, None], conic[:, 1, 1, None]
    d_mean = np.stack([np.sum(d_q * -2.0 * (a * dx + b * dy), axis=1),
                       np.sum(d_q * -2.0 * (b * dx + c * dy), axis=1)], -1)
    d_conic = np.empty((k, 2, 2))
    d_conic[:, 0, 0] = np.sum(d_q * dx * dx, axis=1)
    d_conic[:, 1, 1] = np.sum(d_q * dy * dy, axis=1)
    d_conic[:, 0, 1] = np.sum(d_q * dx * dy, axis=1)
    d_conic[:, 1, 0] = d_conic[:, 0, 1]
    return d_color, d_opac, d_mean, d_conic


def render_backward(scene: GaussianScene, cam: Camera, upstream, result: RenderResult | None = None,
                    cfg: RasterConfig = DEFAULT_CONFIG) -> RenderGradients:
    """Analytic gradients of ``sum(upstream * image)`` w.r.t. every splat parameter."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (cam.height, cam.width, 3):
        raise MismatchedForward(f"upstream shape {upstream.shape} does not match camera "
                                f"{(cam.height, cam.width, 3)}")
    if result is None:
        result = render_with_state(scene, cam, cfg)
    elif result.camera_shape != (cam.height, cam.width) or len(result.projection.visible) != len(scene):
        raise MismatchedForward("forward state was computed for another scene or camera")
    proj, tiles = result.projection, result.tiles
    n = len(scene)

    def run(t):
        st = result.states[t]
        x0, x1, y0, y1 = tiles.tile_bounds(t, cam.width, cam.height)
        return _tile_backward(st, upstream[y0:y1, x0:x1].reshape(-1, 3), proj, scene.background)

    partials = _map(run, range(len(tiles.lists)), cfg.threads)
    d_color = np.zeros((n, 3))
    d_opac = np.zeros(n)
    d_mean = np.zeros((n, 2))
    d_conic = np.zeros((n, 2, 2))
    for t, part in enumerate(partials):
        if part is None:
            continue
        ids = tiles.lists[t]
        d_color[ids] += part[0]
        d_opac[ids] += part[1]
        d_mean[ids] += part[2]
        d_conic[ids] += part[3]

    grads = RenderGradients.zeros(n)
    vis = proj.visible
    if not np.any(vis):
        return grads

    conic = proj.conics[vis]
    # conic = cov2d^-1  =>  dL/dcov2d = -conic dL/dconic conic
    d_cov2d = -conic @ d_conic[vis] @ conic
    jac = proj.jacobians[vis]
    rot_w = cam.rotation
    t_mat = jac @ rot_w
    cov3d = proj.cov3d[vis]
    d_cov3d = np.swapaxes(t_mat, 1, 2) @ d_cov2d @ t_mat
    d_t = 2.0 * d_cov2d @ t_mat @ cov3d
    d_jac = d_t @ rot_w.T

    pts = proj.cam_points[vis]
    tx, ty, tz = pts[:, 0], pts[:, 1], pts[:, 2]
    fx, fy = cam.fx, cam.fy
    dm = d_mean[vis]
    d_pt = np.zeros_like(pts)
    d_pt[:, 0] = dm[:, 0] * fx / tz - d_jac[:, 0, 2] * fx / tz**2
    d_pt[:, 1] = dm[:, 1] * fy / tz - d_jac[:, 1, 2] * fy / tz**2
    d_pt[:, 2] = (-dm[:, 0] * fx * tx / tz**2 - dm[:, 1] * fy * ty / tz**2
                  - d_jac[:, 0, 0] * fx / tz**2 - d_jac[:, 1, 1] * fy / tz**2
                  + d_jac[:, 0, 2] * 2.0 * fx * tx / tz**3 + d_jac[:, 1, 2] * 2.0 * fy * ty / tz**3)
    grads.positions[vis] = d_pt @ rot_w

    rot = proj.rotmats[vis]
    scales = proj.scales[vis]
    m = rot * scales[:, None, :]
    d_m = 2.0 * d_cov3d @ m
    grads.log_scales[vis] = np.sum(d_m * rot, axis=1) * scales
    grads.rotations[vis] = quat_to_rotmat_backward(scene.rotations[vis], d_m * scales[:, None, :])

    opac = proj.opacities[vis]
    grads.opacity_logits[vis] = d_opac[vis] * opac * (1.0 - opac)
    grads.colors[vis] = d_color[vis]
    return grads
