"""Tile binning for the splatting rasterizer.

Each Gaussian is duplicated into every tile its 3-sigma bounding square
touches (conservative AABB test). Entries within a tile are sorted by
(depth, original index) so rendering order is total and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .project import ProjectedGaussians

TILE_PX = 16


@dataclass
class TileBins:
    """CSR layout: entries[tile_starts[t]:tile_starts[t+1]] are row indices
    into the ProjectedGaussians arrays, depth-sorted front to back."""

    tile_starts: np.ndarray  # (tiles_x * tiles_y + 1,) int64
    entries: np.ndarray      # (K,) int32
    tiles_x: int
    tiles_y: int
    tile_px: int

    def tile_list(self, tx: int, ty: int) -> np.ndarray:
        t = ty * self.tiles_x + tx
        return self.entries[self.tile_starts[t]:self.tile_starts[t + 1]]


def build_tiles(proj: ProjectedGaussians, width: int, height: int,
                tile_px: int = TILE_PX) -> TileBins:
    tiles_x = (width + tile_px - 1) // tile_px
    tiles_y = (height + tile_px - 1) // tile_px
    n_tiles = tiles_x * tiles_y
    m = len(proj)
    if m == 0:
        return TileBins(np.zeros(n_tiles + 1, dtype=np.int64),
                        np.zeros(0, dtype=np.int32), tiles_x, tiles_y, tile_px)

    x0 = np.clip(np.floor((proj.mean2d[:, 0] - proj.radius) / tile_px), 0, tiles_x - 1).astype(np.int64)
    x1 = np.clip(np.floor((proj.mean2d[:, 0] + proj.radius) / tile_px), 0, tiles_x - 1).astype(np.int64)
    y0 = np.clip(np.floor((proj.mean2d[:, 1] - proj.radius) / tile_px), 0, tiles_y - 1).astype(np.int64)
    y1 = np.clip(np.floor((proj.mean2d[:, 1] + proj.radius) / tile_px), 0, tiles_y - 1).astype(np.int64)

    counts = (x1 - x0 + 1) * (y1 - y0 + 1)
    total = int(counts.sum())
    tile_of = np.empty(total, dtype=np.int64)
    gauss_of = np.empty(total, dtype=np.int32)

    offsets = np.concatenate([[0], np.cumsum(counts)])
    for i in range(m):  # python loop over gaussians only; spans are tiny
        tys = np.arange(y0[i], y1[i] + 1)
        txs = np.arange(x0[i], x1[i] + 1)
        tids = (tys[:, None] * tiles_x + txs[None, :]).reshape(-1)
        o = offsets[i]
        tile_of[o:o + len(tids)] = tids
        gauss_of[o:o + len(tids)] = i

    # group by tile, then front-to-back with original-index tie-break
    order = np.lexsort((proj.kept[gauss_of], proj.depth[gauss_of], tile_of))
    tile_sorted = tile_of[order]
    entries = gauss_of[order]
    tile_starts = np.searchsorted(tile_sorted, np.arange(n_tiles + 1))
    return TileBins(tile_starts.astype(np.int64), entries, tiles_x, tiles_y, tile_px)
