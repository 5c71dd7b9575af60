"""Forward/backward rasterization entry points and the parameter chain rule.

The backward pass recomputes each pixel's front-to-back walk in reverse from
the stored final transmittance (compute traded for memory), accumulates
screen-space gradients per tile entry, reduces them per Gaussian, then maps
them to the optimizable parameters with vectorized matrix calculus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..scene import Camera, GaussianSet, RenderOutputs, quaternions_to_rotations
from . import kernels
from .project import FRUSTUM_LIMIT, SH_C0, SH_C1, ProjectedGaussians, project
from .tiles import TILE_PX, TileBins, build_tiles

_EMPTY_IMG = np.zeros((1, 1, 3))
_EMPTY_MAP = np.zeros((1, 1))
_EMPTY_MASK = np.zeros((1, 1), dtype=np.bool_)


@dataclass
class MeshLayer:
    """Opaque, depth-fixed background produced by the mesh rasterizer.

    color        (H, W, 3)
    depth        (H, W); +inf where the mesh does not cover the pixel
    triangle_id  (H, W) int32; -1 where uncovered
    """

    color: np.ndarray
    depth: np.ndarray
    triangle_id: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.triangle_id >= 0


@dataclass
class RenderCtx:
    """State retained from a forward pass for the matching backward pass."""

    gaussians: GaussianSet
    camera: Camera
    proj: ProjectedGaussians
    tiles: TileBins
    mesh: Optional[MeshLayer]
    background: np.ndarray
    final_t: np.ndarray
    last_consumed: np.ndarray  # (H, W) int32, index into tile entries


@dataclass
class GaussianGrads:
    """Gradients for every GaussianSet parameter (full-length arrays; culled
    Gaussians carry zeros) plus the incoming mesh-layer color gradient."""

    centers: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    logit_opacities: np.ndarray
    colors_dc: np.ndarray
    colors_rest: Optional[np.ndarray]
    densify_norm: np.ndarray   # |d pixel loss / d mean2d| in half-image units
    visible: np.ndarray        # Gaussians that reached at least one tile
    mesh_color: Optional[np.ndarray]


def rasterize_forward(proj: ProjectedGaussians, tiles: TileBins, width: int, height: int,
                      background: Union[np.ndarray, MeshLayer],
                      mesh: Optional[MeshLayer] = None,
                      bg_color=(0.0, 0.0, 0.0)):
    """Blend projected Gaussians front to back over a color or mesh background.

    ``background`` may be an RGB triple/array or a MeshLayer; a MeshLayer may
    also be passed via ``mesh`` together with an RGB ``background`` used for
    uncovered pixels. Returns (RenderOutputs, final_t, last_consumed).
    """
    if isinstance(background, MeshLayer):
        mesh = background
        bg = np.asarray(bg_color, dtype=np.float64)
    else:
        bg = np.asarray(background, dtype=np.float64).reshape(3)

    out_color = np.zeros((height, width, 3))
    out_t = np.ones((height, width))
    out_depth = np.full((height, width), np.nan)
    out_last = np.full((height, width), -1, dtype=np.int32)

    has_mesh = mesh is not None
    kernels.forward_kernel(
        tiles.tile_starts, tiles.entries, tiles.tiles_x, tiles.tiles_y, tiles.tile_px,
        width, height,
        proj.mean2d, proj.conic, proj.alpha, proj.color, proj.depth,
        has_mesh,
        mesh.color if has_mesh else _EMPTY_IMG,
        mesh.depth if has_mesh else _EMPTY_MAP,
        mesh.valid if has_mesh else _EMPTY_MASK,
        bg, out_color, out_t, out_depth, out_last)

    outputs = RenderOutputs(
        color=out_color, depth=out_depth, transmittance=out_t,
        triangle_id=mesh.triangle_id.copy() if has_mesh else None)
    return outputs, out_t, out_last


def render(gs: GaussianSet, cam: Camera, background=(0.0, 0.0, 0.0),
           mesh: Optional[MeshLayer] = None, tile_px: int = TILE_PX):
    """Project, bin, and blend; returns (RenderOutputs, RenderCtx)."""
    proj = project(gs, cam)
    tiles = build_tiles(proj, cam.width, cam.height, tile_px)
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    outputs, final_t, last = rasterize_forward(proj, tiles, cam.width, cam.height,
                                               bg, mesh=mesh)
    ctx = RenderCtx(gs, cam, proj, tiles, mesh, bg, final_t, last)
    return outputs, ctx


def rasterize_backward(ctx: RenderCtx, grad_color: np.ndarray,
                       grad_transmittance: Optional[np.ndarray] = None) -> GaussianGrads:
    """Analytic gradients of sum(grad_color * pixel) for all parameters.

    grad_transmittance optionally adds the gradient of a loss term that
    consumes the per-pixel residual transmittance directly (the
    transmittance-aware texture mask does).
    """
    gs, cam, proj, tiles = ctx.gaussians, ctx.camera, ctx.proj, ctx.tiles
    h, w = cam.height, cam.width
    grad_color = np.asarray(grad_color, dtype=np.float64)
    if grad_color.shape != (h, w, 3):
        raise ValueError(f"grad_color shape {grad_color.shape} != {(h, w, 3)}")
    if grad_transmittance is None:
        grad_transmittance = np.zeros((h, w))
    elif grad_transmittance.shape != (h, w):
        raise ValueError(f"grad_transmittance shape {grad_transmittance.shape} != {(h, w)}")

    entry_grads = np.zeros((len(tiles.entries), 9))
    has_mesh = ctx.mesh is not None
    kernels.backward_kernel(
        tiles.tile_starts, tiles.entries, tiles.tiles_x, tiles.tiles_y, tiles.tile_px,
        w, h,
        proj.mean2d, proj.conic, proj.alpha, proj.color, proj.depth,
        has_mesh,
        ctx.mesh.color if has_mesh else _EMPTY_IMG,
        ctx.mesh.depth if has_mesh else _EMPTY_MAP,
        ctx.mesh.valid if has_mesh else _EMPTY_MASK,
        ctx.background, ctx.final_t, ctx.last_consumed, grad_color,
        np.asarray(grad_transmittance, dtype=np.float64), entry_grads)

    m = len(proj)
    per_gauss = np.zeros((m, 9))
    np.add.at(per_gauss, tiles.entries, entry_grads)

    g_mean2d = per_gauss[:, 0:2]
    g_cov = np.empty((m, 2, 2))
    g_cov[:, 0, 0] = per_gauss[:, 2]
    g_cov[:, 0, 1] = per_gauss[:, 3]
    g_cov[:, 1, 0] = per_gauss[:, 3]
    g_cov[:, 1, 1] = per_gauss[:, 4]
    g_alpha = per_gauss[:, 5]
    g_color = per_gauss[:, 6:9]

    grads = _chain_to_parameters(gs, cam, proj, g_mean2d, g_cov, g_alpha, g_color)

    # densification statistic: pixel-space gradient in half-image units
    dens = np.zeros(len(gs))
    scaled = g_mean2d * np.array([w / 2.0, h / 2.0])
    dens[proj.kept] = np.linalg.norm(scaled, axis=1)
    grads.densify_norm = dens

    visible = np.zeros(len(gs), dtype=bool)
    visible[proj.kept] = True
    grads.visible = visible

    if has_mesh:
        grads.mesh_color = grad_color * (ctx.final_t * ctx.mesh.valid)[..., None]
    return grads


def _chain_to_parameters(gs: GaussianSet, cam: Camera, proj: ProjectedGaussians,
                         g_mean2d, g_cov, g_alpha, g_color) -> GaussianGrads:
    n = len(gs)
    kept = proj.kept
    m = len(kept)
    out = GaussianGrads(
        centers=np.zeros((n, 3)), rotations=np.zeros((n, 4)),
        log_scales=np.zeros((n, 3)), logit_opacities=np.zeros(n),
        colors_dc=np.zeros((n, 3)),
        colors_rest=None if gs.colors_rest is None else np.zeros((n, 3, 3)),
        densify_norm=np.zeros(n), visible=np.zeros(n, dtype=bool), mesh_color=None)
    if m == 0:
        return out

    # opacity: sigma = alpha * G, alpha = sigmoid(logit)
    out.logit_opacities[kept] = g_alpha * proj.alpha * (1.0 - proj.alpha)

    # color: c = max(0, 0.5 + C0 dc + C1 (-y r0 + z r1 - x r2))
    open_ch = (proj.color_pre > 0.0).astype(np.float64)
    g_pre = g_color * open_ch
    out.colors_dc[kept] = SH_C0 * g_pre
    grad_center = np.zeros((m, 3))
    if gs.colors_rest is not None:
        d = proj.view_dir
        x, y, z = d[:, 0:1], d[:, 1:2], d[:, 2:3]
        out.colors_rest[kept, 0] = -SH_C1 * y * g_pre
        out.colors_rest[kept, 1] = SH_C1 * z * g_pre
        out.colors_rest[kept, 2] = -SH_C1 * x * g_pre
        rest = gs.colors_rest[kept]
        g_dir = np.stack([
            -SH_C1 * np.sum(g_pre * rest[:, 2], axis=1),
            -SH_C1 * np.sum(g_pre * rest[:, 0], axis=1),
            SH_C1 * np.sum(g_pre * rest[:, 1], axis=1)], axis=1)
        # dir = (u - c)/dist ; d dir/d u = (I - dir dir^T)/dist
        proj_term = g_dir - d * np.sum(g_dir * d, axis=1, keepdims=True)
        grad_center += proj_term / proj.view_dist[:, None]

    # rebuild the forward intermediates for kept Gaussians
    t = proj.t_cam
    tz = t[:, 2]
    fx, fy = cam.fx, cam.fy
    limx = FRUSTUM_LIMIT * (cam.width / (2.0 * fx))
    limy = FRUSTUM_LIMIT * (cam.height / (2.0 * fy))
    rx_raw = t[:, 0] / tz
    ry_raw = t[:, 1] / tz
    rx = np.clip(rx_raw, -limx, limx)
    ry = np.clip(ry_raw, -limy, limy)
    in_x = (np.abs(rx_raw) < limx).astype(np.float64)
    in_y = (np.abs(ry_raw) < limy).astype(np.float64)

    J = np.zeros((m, 2, 3))
    J[:, 0, 0] = fx / tz
    J[:, 0, 2] = -fx * rx / tz
    J[:, 1, 1] = fy / tz
    J[:, 1, 2] = -fy * ry / tz

    Rw = cam.rotation
    q = gs.rotations[kept]
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    R = quaternions_to_rotations(q)
    s = np.exp(gs.log_scales[kept])
    M = R * s[:, None, :]
    sigma = M @ M.transpose(0, 2, 1)
    A = J @ Rw[None]

    # cov2d = A Sigma A^T (+ floor)
    g_sigma = np.einsum("mja,mjk,mkb->mab", A, g_cov, A)
    g_A = 2.0 * np.einsum("mjk,mka,mab->mjb", g_cov, A, sigma)
    g_J = np.einsum("mjc,kc->mjk", g_A, Rw)

    # mean2d = (fx tx/tz + cx, fy ty/tz + cy): its Jacobian is J built from
    # the raw (unclamped) center
    g_t = np.zeros((m, 3))
    g_t[:, 0] += g_mean2d[:, 0] * fx / tz
    g_t[:, 1] += g_mean2d[:, 1] * fy / tz
    g_t[:, 2] += -(g_mean2d[:, 0] * fx * rx_raw + g_mean2d[:, 1] * fy * ry_raw) / tz

    # J depends on the clamped center
    inv_tz2 = 1.0 / (tz * tz)
    g_t[:, 0] += g_J[:, 0, 2] * (-fx * in_x * inv_tz2)
    g_t[:, 1] += g_J[:, 1, 2] * (-fy * in_y * inv_tz2)
    g_t[:, 2] += (g_J[:, 0, 0] * (-fx * inv_tz2)
                  + g_J[:, 1, 1] * (-fy * inv_tz2)
                  + g_J[:, 0, 2] * fx * (in_x * rx_raw + rx) * inv_tz2
                  + g_J[:, 1, 2] * fy * (in_y * ry_raw + ry) * inv_tz2)

    grad_center += g_t @ Rw

    # Sigma = M M^T with M = R diag(s)
    g_M = 2.0 * np.einsum("mab,mbc->mac", g_sigma, M)
    g_R = g_M * s[:, None, :]
    g_s = np.einsum("mij,mij->mj", g_M, R)
    out.log_scales[kept] = g_s * s

    # rotation: contract with dR/dq at the normalized quaternion, then the
    # normalization Jacobian
    D = _quat_rotation_derivatives(qn)
    g_qn = np.einsum("mij,mkij->mk", g_R, D)
    norm = np.linalg.norm(q, axis=1, keepdims=True)
    out.rotations[kept] = (g_qn - qn * np.sum(g_qn * qn, axis=1, keepdims=True)) / norm

    out.centers[kept] = grad_center
    return out


def _quat_rotation_derivatives(qn: np.ndarray) -> np.ndarray:
    """(M, 4, 3, 3): derivative of the rotation matrix w.r.t. each component
    of a unit quaternion (w, x, y, z)."""
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    m = len(qn)
    D = np.zeros((m, 4, 3, 3))
    zero = np.zeros(m)
    D[:, 0] = 2.0 * np.stack([
        np.stack([zero, -z, y], axis=1),
        np.stack([z, zero, -x], axis=1),
        np.stack([-y, x, zero], axis=1)], axis=1)
    D[:, 1] = 2.0 * np.stack([
        np.stack([zero, y, z], axis=1),
        np.stack([y, -2 * x, -w], axis=1),
        np.stack([z, w, -2 * x], axis=1)], axis=1)
    D[:, 2] = 2.0 * np.stack([
        np.stack([-2 * y, x, w], axis=1),
        np.stack([x, zero, z], axis=1),
        np.stack([-w, z, -2 * y], axis=1)], axis=1)
    D[:, 3] = 2.0 * np.stack([
        np.stack([-2 * z, -w, x], axis=1),
        np.stack([w, -2 * z, y], axis=1),
        np.stack([x, y, zero], axis=1)], axis=1)
    return D


def render_depth(gs: GaussianSet, cam: Camera, tile_px: int = TILE_PX) -> np.ndarray:
    """(H, W) median-style depth map for surface extraction; NaN = invalid."""
    proj = project(gs, cam)
    tiles = build_tiles(proj, cam.width, cam.height, tile_px)
    out = np.full((cam.height, cam.width), np.nan)
    kernels.depth_kernel(
        tiles.tile_starts, tiles.entries, tiles.tiles_x, tiles.tiles_y, tiles.tile_px,
        cam.width, cam.height, proj.mean2d, proj.conic, proj.alpha, proj.depth, out)
    return out
