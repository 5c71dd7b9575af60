"""Differentiable textured-mesh rasterization.

Geometry is rasterized once per camera into a fragment buffer (triangle id,
perspective-correct barycentrics, depth, UV); color is a bilinear texture
lookup over that buffer, so texture updates never re-rasterize. The texture
backward scatters pixel gradients to the four bilinear neighbor texels.

Edge pixels follow a top-left fill rule; triangles with any vertex closer
than the camera near plane are culled. Rasterization is two-sided.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numba import njit

from .scene import Camera, TexturedMesh
from .splat.render import MeshLayer
from .train.adam import Adam


@dataclass
class MeshFragmentBuffer:
    """Per-pixel rasterization state for one camera.

    triangle_id  (H, W) int32, -1 where uncovered
    bary         (H, W, 3) perspective-correct weights, sum to 1 on coverage
    depth        (H, W) camera z, +inf where uncovered
    uv           (H, W, 2) interpolated texture coordinates
    """

    triangle_id: np.ndarray
    bary: np.ndarray
    depth: np.ndarray
    uv: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.triangle_id >= 0


@njit(cache=True)
def _raster_kernel(vs, zs, tris, uvs, has_uv, width, height, near,
                   out_tri, out_depth, out_bary, out_uv):
    nf = tris.shape[0]
    for f in range(nf):
        ia, ib, ic = tris[f, 0], tris[f, 1], tris[f, 2]
        if zs[ia] <= near or zs[ib] <= near or zs[ic] <= near:
            continue
        ax, ay = vs[ia, 0], vs[ia, 1]
        bx, by = vs[ib, 0], vs[ib, 1]
        cx, cy = vs[ic, 0], vs[ic, 1]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        # normalize winding so every edge function is positive inside
        flip = area2 < 0.0
        if flip:
            bx, cx = cx, bx
            by, cy = cy, by
            area2 = -area2

        x0 = max(int(np.floor(min(ax, bx, cx) - 0.5)), 0)
        x1 = min(int(np.ceil(max(ax, bx, cx) - 0.5)), width - 1)
        y0 = max(int(np.floor(min(ay, by, cy) - 0.5)), 0)
        y1 = min(int(np.ceil(max(ay, by, cy) - 0.5)), height - 1)
        if x1 < x0 or y1 < y0:
            continue

        # edge k opposite local vertex k; boundary ownership: top or left edge
        e0x, e0y = cx - bx, cy - by
        e1x, e1y = ax - cx, ay - cy
        e2x, e2y = bx - ax, by - ay
        own0 = (e0y == 0.0 and e0x > 0.0) or e0y < 0.0
        own1 = (e1y == 0.0 and e1x > 0.0) or e1y < 0.0
        own2 = (e2y == 0.0 and e2x > 0.0) or e2y < 0.0

        inv_area = 1.0 / area2
        za = zs[ia]
        zb = zs[ic] if flip else zs[ib]
        zc = zs[ib] if flip else zs[ic]

        for py in range(y0, y1 + 1):
            sy = py + 0.5
            for px in range(x0, x1 + 1):
                sx = px + 0.5
                w0 = e0x * (sy - by) - e0y * (sx - bx)
                w1 = e1x * (sy - cy) - e1y * (sx - cx)
                w2 = e2x * (sy - ay) - e2y * (sx - ax)
                if not ((w0 > 0.0 or (w0 == 0.0 and own0))
                        and (w1 > 0.0 or (w1 == 0.0 and own1))
                        and (w2 > 0.0 or (w2 == 0.0 and own2))):
                    continue
                l0 = w0 * inv_area
                l1 = w1 * inv_area
                l2 = w2 * inv_area
                inv_z = l0 / za + l1 / zb + l2 / zc
                z = 1.0 / inv_z
                if z >= out_depth[py, px]:
                    continue
                out_depth[py, px] = z
                out_tri[py, px] = f
                b0 = l0 / za * z
                b1 = l1 / zb * z
                b2 = l2 / zc * z
                if flip:
                    b1, b2 = b2, b1
                out_bary[py, px, 0] = b0
                out_bary[py, px, 1] = b1
                out_bary[py, px, 2] = b2
                if has_uv:
                    out_uv[py, px, 0] = b0 * uvs[f, 0, 0] + b1 * uvs[f, 1, 0] + b2 * uvs[f, 2, 0]
                    out_uv[py, px, 1] = b0 * uvs[f, 0, 1] + b1 * uvs[f, 1, 1] + b2 * uvs[f, 2, 1]


def rasterize_fragments(mesh: TexturedMesh, cam: Camera) -> MeshFragmentBuffer:
    """Z-buffered rasterization of the mesh geometry into a fragment buffer."""
    h, w = cam.height, cam.width
    out_tri = np.full((h, w), -1, dtype=np.int32)
    out_depth = np.full((h, w), np.inf)
    out_bary = np.zeros((h, w, 3))
    out_uv = np.zeros((h, w, 2))
    if mesh.n_faces:
        pts_cam = mesh.vertices @ cam.rotation.T + cam.translation
        zs = pts_cam[:, 2].copy()
        safe_z = np.where(zs > 0, zs, 1.0)
        vs = np.stack([cam.fx * pts_cam[:, 0] / safe_z + cam.cx,
                       cam.fy * pts_cam[:, 1] / safe_z + cam.cy], axis=1)
        has_uv = mesh.uvs is not None
        uvs = mesh.uvs if has_uv else np.zeros((mesh.n_faces, 3, 2))
        _raster_kernel(vs, zs, mesh.triangles.astype(np.int64), uvs, has_uv,
                       w, h, cam.near, out_tri, out_depth, out_bary, out_uv)
    return MeshFragmentBuffer(out_tri, out_bary, out_depth, out_uv)


def _texel_coords(uv: np.ndarray, th: int, tw: int):
    """Continuous texel coordinates and bilinear weights (clamped borders)."""
    tx = uv[..., 0] * tw - 0.5
    ty = (1.0 - uv[..., 1]) * th - 0.5
    x0 = np.floor(tx)
    y0 = np.floor(ty)
    fx = tx - x0
    fy = ty - y0
    x0i = np.clip(x0.astype(np.int64), 0, tw - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, tw - 1)
    y0i = np.clip(y0.astype(np.int64), 0, th - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, th - 1)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    return (y0i, x0i, w00), (y0i, x1i, w10), (y1i, x0i, w01), (y1i, x1i, w11)


def sample_texture(texture: np.ndarray, uv: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Bilinear texture lookup; invalid pixels come back black."""
    th, tw = texture.shape[:2]
    taps = _texel_coords(uv, th, tw)
    out = np.zeros(uv.shape[:-1] + (3,))
    for yi, xi, wgt in taps:
        out += texture[yi, xi] * wgt[..., None]
    out[~valid] = 0.0
    return out


def texture_backward(fragments: MeshFragmentBuffer, grad_image: np.ndarray,
                     texture_shape: Tuple[int, int]) -> np.ndarray:
    """Adjoint of sample_texture: scatter pixel gradients into texel space."""
    th, tw = texture_shape
    valid = fragments.valid
    if grad_image.shape[:2] != valid.shape:
        raise ValueError(f"grad image shape {grad_image.shape} does not match fragments {valid.shape}")
    grad_tex = np.zeros((th, tw, 3))
    if not valid.any():
        return grad_tex
    uv = fragments.uv[valid]
    g = grad_image[valid]
    taps = _texel_coords(uv, th, tw)
    for yi, xi, wgt in taps:
        np.add.at(grad_tex, (yi, xi), g * wgt[:, None])
    return grad_tex


def raster_mesh(mesh: TexturedMesh, cam: Camera):
    """Full mesh render: returns (color, depth, triangle_id, fragments)."""
    if mesh.uvs is None or mesh.texture is None:
        raise ValueError("raster_mesh needs a mesh with UVs and texture")
    frags = rasterize_fragments(mesh, cam)
    color = sample_texture(mesh.texture, frags.uv, frags.valid)
    return color, frags.depth, frags.triangle_id, frags


def mesh_layer(mesh: TexturedMesh, cam: Camera,
               fragments: Optional[MeshFragmentBuffer] = None) -> MeshLayer:
    """MeshLayer for hybrid compositing; pass cached fragments to skip
    re-rasterization when only the texture changed."""
    if fragments is None:
        fragments = rasterize_fragments(mesh, cam)
    color = sample_texture(mesh.texture, fragments.uv, fragments.valid)
    return MeshLayer(color=color, depth=fragments.depth, triangle_id=fragments.triangle_id)


def init_texture(mesh: TexturedMesh, images: List[np.ndarray], cameras: List[Camera],
                 iters: int = 500, mode: str = "optimized", lr: float = 0.05,
                 warn=print) -> TexturedMesh:
    """Initialize the texture: constant 0.5, or gradient descent on the
    masked MSE between the mesh render and the target images.

    Texels never covered by any view keep the 0.5 initialization; texture is
    clamped to [0, 1] after every step.
    """
    if mesh.uvs is None:
        raise ValueError("init_texture needs a mesh with UVs")
    if mode not in ("constant", "optimized"):
        raise ValueError(f"unknown texture init mode {mode!r}")
    out = mesh.copy()
    out.texture = np.full_like(out.texture, 0.5)
    if mode == "constant" or iters <= 0:
        return out

    if len(images) != len(cameras):
        raise ValueError("images/cameras count mismatch")
    frag_list = [rasterize_fragments(out, cam) for cam in cameras]
    n_covered = [int(f.valid.sum()) for f in frag_list]
    if sum(n_covered) == 0:
        warn("init_texture: no camera sees the mesh; falling back to constant 0.5")
        return out

    opt = Adam({"texture": out.texture}, {"texture": lr})
    th, tw = out.texture.shape[:2]
    for _ in range(iters):
        grad = np.zeros_like(out.texture)
        for img, frags, cov in zip(images, frag_list, n_covered):
            if cov == 0:
                continue
            pred = sample_texture(out.texture, frags.uv, frags.valid)
            diff = np.zeros_like(pred)
            diff[frags.valid] = pred[frags.valid] - img[frags.valid]
            grad += texture_backward(frags, 2.0 * diff / cov, (th, tw))
        opt.step({"texture": grad / len(cameras)})
        np.clip(out.texture, 0.0, 1.0, out=out.texture)
    return out
