"""JIT kernels for the tile rasterizer. Serial over tiles by design: every
pixel's blend is a fixed-order walk, so output is bit-reproducible."""

import math

import numpy as np
from numba import njit

from .project import ALPHA_CLAMP, EARLY_STOP_T, SIGMA_SKIP, SUPPORT_MAHAL2


@njit(cache=True)
def forward_kernel(tile_starts, entries, tiles_x, tiles_y, tile_px, width, height,
                   mean2d, conic, alpha, color, depth,
                   has_mesh, mesh_color, mesh_depth, mesh_valid, bg,
                   out_color, out_t, out_depth, out_last):
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            t = ty * tiles_x + tx
            s = tile_starts[t]
            e = tile_starts[t + 1]
            py0 = ty * tile_px
            px0 = tx * tile_px
            py1 = min(py0 + tile_px, height)
            px1 = min(px0 + tile_px, width)
            for py in range(py0, py1):
                for px in range(px0, px1):
                    fx = px + 0.5
                    fy = py + 0.5
                    mesh_here = has_mesh and mesh_valid[py, px]
                    limit = mesh_depth[py, px] if mesh_here else np.inf
                    trans = 1.0
                    r = 0.0
                    g = 0.0
                    b = 0.0
                    dacc = 0.0
                    last = -1
                    for k in range(s, e):
                        i = entries[k]
                        if depth[i] >= limit:
                            break  # list is depth sorted; mesh is opaque
                        dx = fx - mean2d[i, 0]
                        dy = fy - mean2d[i, 1]
                        m = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy
                        if m > SUPPORT_MAHAL2 or m < 0.0:
                            continue
                        sig = alpha[i] * math.exp(-0.5 * m)
                        if sig > ALPHA_CLAMP:
                            sig = ALPHA_CLAMP
                        if sig < SIGMA_SKIP:
                            continue
                        test_t = trans * (1.0 - sig)
                        if test_t < EARLY_STOP_T:
                            break
                        w = sig * trans
                        r += color[i, 0] * w
                        g += color[i, 1] * w
                        b += color[i, 2] * w
                        dacc += depth[i] * w
                        trans = test_t
                        last = k
                    if mesh_here:
                        out_color[py, px, 0] = r + trans * mesh_color[py, px, 0]
                        out_color[py, px, 1] = g + trans * mesh_color[py, px, 1]
                        out_color[py, px, 2] = b + trans * mesh_color[py, px, 2]
                        out_depth[py, px] = dacc + trans * mesh_depth[py, px]
                    else:
                        out_color[py, px, 0] = r + trans * bg[0]
                        out_color[py, px, 1] = g + trans * bg[1]
                        out_color[py, px, 2] = b + trans * bg[2]
                        acc = 1.0 - trans
                        out_depth[py, px] = dacc / acc if acc > 1e-12 else np.nan
                    out_t[py, px] = trans
                    out_last[py, px] = last


@njit(cache=True)
def backward_kernel(tile_starts, entries, tiles_x, tiles_y, tile_px, width, height,
                    mean2d, conic, alpha, color, depth,
                    has_mesh, mesh_color, mesh_depth, mesh_valid, bg,
                    final_t, out_last, grad_pixels, grad_trans, entry_grads):
    """Reverse walk per pixel, recomputing the forward blend state.

    entry_grads is (K, 9) per tile-entry: d/d(mean2d x, y), d/d(cov2d xx, xy,
    yy) in full-matrix convention, d/d(alpha), d/d(color r, g, b). Reduction
    to per-Gaussian buffers happens outside. grad_trans is the loss gradient
    with respect to the pixel's final transmittance (T = prod(1 - sigma), so
    d T/d sigma_i = -T / (1 - sigma_i)).
    """
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            t = ty * tiles_x + tx
            s = tile_starts[t]
            py0 = ty * tile_px
            px0 = tx * tile_px
            py1 = min(py0 + tile_px, height)
            px1 = min(px0 + tile_px, width)
            for py in range(py0, py1):
                for px in range(px0, px1):
                    last = out_last[py, px]
                    gr = grad_pixels[py, px, 0]
                    gg = grad_pixels[py, px, 1]
                    gb = grad_pixels[py, px, 2]
                    gt_pix = grad_trans[py, px]
                    mesh_here = has_mesh and mesh_valid[py, px]
                    if last < 0:
                        continue
                    fx = px + 0.5
                    fy = py + 0.5
                    t_after = final_t[py, px]
                    # suffix color behind the current Gaussian, background included
                    if mesh_here:
                        acc_r = t_after * mesh_color[py, px, 0]
                        acc_g = t_after * mesh_color[py, px, 1]
                        acc_b = t_after * mesh_color[py, px, 2]
                    else:
                        acc_r = t_after * bg[0]
                        acc_g = t_after * bg[1]
                        acc_b = t_after * bg[2]
                    for k in range(last, s - 1, -1):
                        i = entries[k]
                        dx = fx - mean2d[i, 0]
                        dy = fy - mean2d[i, 1]
                        m = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy
                        if m > SUPPORT_MAHAL2 or m < 0.0:
                            continue
                        gauss = math.exp(-0.5 * m)
                        sig = alpha[i] * gauss
                        clamped = sig > ALPHA_CLAMP
                        if clamped:
                            sig = ALPHA_CLAMP
                        if sig < SIGMA_SKIP:
                            continue
                        one_minus = 1.0 - sig
                        t_before = t_after / one_minus
                        w = sig * t_before
                        # color gradient
                        entry_grads[k, 6] += gr * w
                        entry_grads[k, 7] += gg * w
                        entry_grads[k, 8] += gb * w
                        # d pixel / d sigma, contracted with the pixel gradient
                        s_i = (gr * (color[i, 0] * t_before - acc_r / one_minus)
                               + gg * (color[i, 1] * t_before - acc_g / one_minus)
                               + gb * (color[i, 2] * t_before - acc_b / one_minus))
                        if gt_pix != 0.0:
                            s_i += gt_pix * (-final_t[py, px] / one_minus)
                        if not clamped:
                            qd_x = conic[i, 0] * dx + conic[i, 1] * dy
                            qd_y = conic[i, 1] * dx + conic[i, 2] * dy
                            common = s_i * sig
                            entry_grads[k, 0] += common * qd_x
                            entry_grads[k, 1] += common * qd_y
                            entry_grads[k, 2] += 0.5 * common * qd_x * qd_x
                            entry_grads[k, 3] += 0.5 * common * qd_x * qd_y
                            entry_grads[k, 4] += 0.5 * common * qd_y * qd_y
                            entry_grads[k, 5] += s_i * gauss
                        acc_r += color[i, 0] * w
                        acc_g += color[i, 1] * w
                        acc_b += color[i, 2] * w
                        t_after = t_before


@njit(cache=True)
def depth_kernel(tile_starts, entries, tiles_x, tiles_y, tile_px, width, height,
                 mean2d, conic, alpha, depth, out_depth):
    """Median-style depth: camera z of the Gaussian at which accumulated
    opacity first exceeds 0.5; NaN where it never does."""
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            t = ty * tiles_x + tx
            s = tile_starts[t]
            e = tile_starts[t + 1]
            py0 = ty * tile_px
            px0 = tx * tile_px
            py1 = min(py0 + tile_px, height)
            px1 = min(px0 + tile_px, width)
            for py in range(py0, py1):
                for px in range(px0, px1):
                    fx = px + 0.5
                    fy = py + 0.5
                    trans = 1.0
                    found = np.nan
                    for k in range(s, e):
                        i = entries[k]
                        dx = fx - mean2d[i, 0]
                        dy = fy - mean2d[i, 1]
                        m = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy
                        if m > SUPPORT_MAHAL2 or m < 0.0:
                            continue
                        sig = alpha[i] * math.exp(-0.5 * m)
                        if sig > ALPHA_CLAMP:
                            sig = ALPHA_CLAMP
                        if sig < SIGMA_SKIP:
                            continue
                        test_t = trans * (1.0 - sig)
                        if test_t < EARLY_STOP_T:
                            break
                        trans = test_t
                        if 1.0 - trans > 0.5:
                            found = depth[i]
                            break
                    out_depth[py, px] = found
