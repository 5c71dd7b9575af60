"""Image quality metrics and rasterizer benchmarking."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .scene import Camera, GaussianSet
from .splat import MeshLayer, build_tiles, project, rasterize_forward
from .train.losses import ssim as _ssim_with_grad


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) over [0, 1] images; +inf for identical inputs."""
    mse = float(np.mean((np.asarray(a, dtype=np.float64)
                         - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    return _ssim_with_grad(np.asarray(a, dtype=np.float64),
                           np.asarray(b, dtype=np.float64))[0]


@dataclass
class BenchResult:
    ms_per_frame: float     # median over frames
    fps: float
    iqr_ms: float
    n_gaussians: int
    frames: int

    def to_dict(self) -> dict:
        return {"ms_per_frame": self.ms_per_frame, "fps": self.fps,
                "iqr_ms": self.iqr_ms, "n_gaussians": self.n_gaussians,
                "frames": self.frames}


def bench_fps(gs: GaussianSet, cam: Camera, mesh: Optional[MeshLayer] = None,
              frames: int = 20, warmup: int = 3,
              background=(0.0, 0.0, 0.0)) -> BenchResult:
    """Median wall time of the rasterizer body (project, bin, blend) alone;
    IO, losses, and mesh rasterization are excluded (the mesh layer is a
    precomputed input)."""
    bg = np.asarray(background, dtype=np.float64)
    times = []
    for i in range(frames + warmup):
        t0 = time.perf_counter()
        proj = project(gs, cam)
        tiles = build_tiles(proj, cam.width, cam.height)
        rasterize_forward(proj, tiles, cam.width, cam.height, bg, mesh=mesh)
        dt = time.perf_counter() - t0
        if i >= warmup:
            times.append(dt * 1000.0)
    times = np.asarray(times)
    med = float(np.median(times))
    q75, q25 = np.percentile(times, [75, 25])
    return BenchResult(ms_per_frame=med, fps=1000.0 / med if med > 0 else float("inf"),
                       iqr_ms=float(q75 - q25), n_gaussians=len(gs), frames=frames)


def evaluate_views(gs: GaussianSet, cameras: List[Camera],
                   images: List[np.ndarray], mesh_layers=None,
                   background=(0.0, 0.0, 0.0)) -> dict:
    """PSNR/SSIM report over views; mesh_layers is an optional parallel list
    for hybrid rendering."""
    per_view = []
    renders = []
    for i, (cam, gt) in enumerate(zip(cameras, images)):
        layer = mesh_layers[i] if mesh_layers is not None else None
        proj = project(gs, cam)
        tiles = build_tiles(proj, cam.width, cam.height)
        out, _, _ = rasterize_forward(proj, tiles, cam.width, cam.height,
                                      np.asarray(background, dtype=np.float64),
                                      mesh=layer)
        renders.append(out.color)
        per_view.append({"view": i, "psnr": psnr(out.color, gt),
                         "ssim": ssim(out.color, gt)})
    agg = {
        "psnr": float(np.mean([v["psnr"] for v in per_view])),
        "ssim": float(np.mean([v["ssim"] for v in per_view])),
        "n_gaussians": len(gs),
        "per_view": per_view,
    }
    return agg, renders
