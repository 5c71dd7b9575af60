"""Deliberately simple reference implementations used to verify the fast
paths: a per-pixel sequential blend renderer, a ray-triangle mesh renderer,
and a central finite-difference harness.

Everything here is O(pixels x primitives), shares no code with the
production rasterizers beyond the scene types, and favors obviousness over
speed.
"""

from __future__ import annotations

import math

import numpy as np

from .scene import Camera, GaussianSet, quaternions_to_rotations

# Blending semantics shared with the production rasterizer (fixed constants,
# reimplemented independently): 0.3 px^2 covariance floor, 0.99 opacity
# clamp, 1/255 skip, hard 3-sigma support, early stop below T = 1e-4,
# 1.3x frustum clamp inside the projection Jacobian.
_FLOOR = 0.3
_CLAMP = 0.99
_SKIP = 1.0 / 255.0
_SUPPORT = 9.0
_EARLY = 1e-4
_LIMIT = 1.3
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199


def _project_one(center, quat, log_scale, cam: Camera):
    """Screen mean, 2x2 covariance (floored), and camera depth of one Gaussian."""
    Rw = cam.rotation
    t = Rw @ center + cam.translation
    z = t[2]
    R = quaternions_to_rotations(quat[None])[0]
    S = np.diag(np.exp(log_scale))
    M3 = R @ S
    sigma = M3 @ M3.T

    limx = _LIMIT * cam.width / (2.0 * cam.fx)
    limy = _LIMIT * cam.height / (2.0 * cam.fy)
    rx = min(max(t[0] / z, -limx), limx)
    ry = min(max(t[1] / z, -limy), limy)
    J = np.array([[cam.fx / z, 0.0, -cam.fx * rx / z],
                  [0.0, cam.fy / z, -cam.fy * ry / z]])
    A = J @ Rw
    cov = A @ sigma @ A.T
    cov[0, 0] += _FLOOR
    cov[1, 1] += _FLOOR
    mean = np.array([cam.fx * t[0] / z + cam.cx, cam.fy * t[1] / z + cam.cy])
    return mean, cov, z


def oracle_render(gs: GaussianSet, cam: Camera, background=(0.0, 0.0, 0.0),
                  mesh_color=None, mesh_depth=None, mesh_valid=None):
    """Sequential front-to-back blend of every Gaussian at every pixel.

    Returns (color, transmittance) images. When the three mesh arrays are
    given, blending stops at the mesh depth and the residual transmittance is
    applied to the mesh color; otherwise to the background color.
    """
    h, w = cam.height, cam.width
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    n = len(gs)

    means = np.zeros((n, 2))
    conics = np.zeros((n, 3))
    depths = np.zeros(n)
    alive = np.zeros(n, dtype=bool)
    alphas = gs.opacities()
    colors = np.maximum(0.5 + _C0 * gs.colors_dc, 0.0)
    if gs.colors_rest is not None:
        colors = np.zeros((n, 3))
    for i in range(n):
        mean, cov, z = _project_one(gs.centers[i], gs.rotations[i], gs.log_scales[i], cam)
        if not (cam.near < z < cam.far):
            continue
        inv = np.linalg.inv(cov)
        means[i] = mean
        conics[i] = (inv[0, 0], inv[0, 1], inv[1, 1])
        depths[i] = z
        alive[i] = True
        if gs.colors_rest is not None:
            d = gs.centers[i] - cam.center()
            d = d / np.linalg.norm(d)
            rest = gs.colors_rest[i]
            pre = (0.5 + _C0 * gs.colors_dc[i]
                   - _C1 * d[1] * rest[0] + _C1 * d[2] * rest[1] - _C1 * d[0] * rest[2])
            colors[i] = np.maximum(pre, 0.0)

    order = np.lexsort((np.arange(n), depths))
    order = order[alive[order]]

    color_out = np.zeros((h, w, 3))
    t_out = np.ones((h, w))
    has_mesh = mesh_valid is not None

    for py in range(h):
        fy = py + 0.5
        for px in range(w):
            fx = px + 0.5
            dx = fx - means[order, 0]
            dy = fy - means[order, 1]
            m = (conics[order, 0] * dx * dx + 2 * conics[order, 1] * dx * dy
                 + conics[order, 2] * dy * dy)
            sig = np.where(m <= _SUPPORT, np.minimum(alphas[order] * np.exp(-0.5 * m), _CLAMP), 0.0)
            cand = np.nonzero(sig >= _SKIP)[0]
            trans = 1.0
            acc = np.zeros(3)
            limit = mesh_depth[py, px] if (has_mesh and mesh_valid[py, px]) else math.inf
            for j in cand:
                i = order[j]
                if depths[i] >= limit:
                    break
                test = trans * (1.0 - sig[j])
                if test < _EARLY:
                    break
                acc += colors[i] * (sig[j] * trans)
                trans = test
            if has_mesh and mesh_valid[py, px]:
                acc += trans * mesh_color[py, px]
            else:
                acc += trans * bg
            color_out[py, px] = acc
            t_out[py, px] = trans
    return color_out, t_out


def oracle_raytrace(vertices, triangles, cam: Camera):
    """Per-pixel ray-triangle renderer (two-sided, nearest hit, index
    tie-break). Returns (triangle_id, depth, barycentrics) images; id -1 and
    depth +inf where nothing is hit inside (near, far)."""
    h, w = cam.height, cam.width
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(triangles, dtype=np.int64)
    tri_id = np.full((h, w), -1, dtype=np.int32)
    depth = np.full((h, w), np.inf)
    bary = np.zeros((h, w, 3))
    if len(f) == 0:
        return tri_id, depth, bary

    origin = cam.center()
    Rt = cam.rotation.T
    p0 = v[f[:, 0]]
    e1 = v[f[:, 1]] - p0
    e2 = v[f[:, 2]] - p0

    for py in range(h):
        for px in range(w):
            d_cam = np.array([(px + 0.5 - cam.cx) / cam.fx,
                              (py + 0.5 - cam.cy) / cam.fy, 1.0])
            d = Rt @ d_cam  # camera z of a hit equals the ray parameter t
            pvec = np.cross(d, e2)
            det = np.einsum("ij,ij->i", e1, pvec)
            ok = np.abs(det) > 1e-14
            inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
            tvec = origin - p0
            u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
            qvec = np.cross(tvec, e1)
            vv = np.einsum("j,ij->i", d, qvec) * inv_det
            t = np.einsum("ij,ij->i", e2, qvec) * inv_det
            hit = ok & (u >= 0) & (vv >= 0) & (u + vv <= 1) & (t > cam.near) & (t < cam.far)
            if not hit.any():
                continue
            idx = np.nonzero(hit)[0]
            best = idx[np.argmin(t[idx])]
            tri_id[py, px] = best
            depth[py, px] = t[best]
            bary[py, px] = (1.0 - u[best] - vv[best], u[best], vv[best])
    return tri_id, depth, bary


def central_difference(f, x0: float, h: float = 1e-4) -> float:
    """Two-point central difference of a scalar function."""
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


def gradient_matches(analytic: float, numeric: float,
                     rel_tol: float = 1e-3, abs_tol: float = 1e-6) -> bool:
    """Relative comparison with an absolute floor near zero."""
    scale = max(abs(analytic), abs(numeric))
    if scale < abs_tol:
        return True
    return abs(analytic - numeric) <= rel_tol * scale
