"""Gaussian-set filters applied before mesh extraction."""

from __future__ import annotations

import numpy as np

from ..scene import GaussianSet, camera_extent


def filter_large_gaussians(gs: GaussianSet, cameras, frac: float = 0.01) -> GaussianSet:
    """Drop Gaussians whose largest activated scale axis exceeds
    frac x camera_extent(cameras); oversized blobs in weakly supervised
    regions would otherwise produce spurious surface bumps."""
    extent = camera_extent(cameras)
    keep = np.exp(gs.log_scales).max(axis=1) <= frac * extent
    return gs.select(keep)
