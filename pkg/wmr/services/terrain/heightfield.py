"""Heightfield storage and bilinear queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Heightfield:
    """Square tile centred on the env origin; heights[i, j] sits at x_i, y_j."""

    resolution: float
    heights: np.ndarray  # [nx, ny] m
    friction: np.ndarray  # [nx, ny] multiplier on foot friction

    def __post_init__(self):
        if not np.all(np.isfinite(self.heights)):
            raise ValueError("heightfield contains non-finite heights")
        if np.any(self.friction <= 0):
            raise ValueError("friction multiplier must be positive")

    @property
    def half_extent(self) -> float:
        return 0.5 * (self.heights.shape[0] - 1) * self.resolution

    @property
    def coords(self) -> np.ndarray:
        n = self.heights.shape[0]
        return np.arange(n) * self.resolution - self.half_extent


def _cells(shape, resolution: float, half_extent: float, x, y):
    nx, ny = shape
    gx = np.clip((np.asarray(x, dtype=float) + half_extent) / resolution, 0.0, nx - 1.0)
    gy = np.clip((np.asarray(y, dtype=float) + half_extent) / resolution, 0.0, ny - 1.0)
    i = np.minimum(np.floor(gx).astype(np.int64), nx - 2)
    j = np.minimum(np.floor(gy).astype(np.int64), ny - 2)
    return i, j, gx - i, gy - j


def _bilinear(heights, resolution, i, j, tx, ty, lead=()):
    h00 = heights[lead + (i, j)]
    h10 = heights[lead + (i + 1, j)]
    h01 = heights[lead + (i, j + 1)]
    h11 = heights[lead + (i + 1, j + 1)]
    z = (1 - tx) * (1 - ty) * h00 + tx * (1 - ty) * h10 + (1 - tx) * ty * h01 + tx * ty * h11
    dzdx = ((1 - ty) * (h10 - h00) + ty * (h11 - h01)) / resolution
    dzdy = ((1 - tx) * (h01 - h00) + tx * (h11 - h10)) / resolution
    normal = np.stack([-dzdx, -dzdy, np.ones_like(z)], axis=-1)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    return z, normal


def height_at(hf: Heightfield, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear height and the surface normal from its local gradient; queries clamp to the border."""
    i, j, tx, ty = _cells(hf.heights.shape, hf.resolution, hf.half_extent, x, y)
    return _bilinear(hf.heights, hf.resolution, i, j, tx, ty)


class FlatGround:
    """Infinite plane at z = 0 with unit friction multiplier."""

    def sample(self, xy: np.ndarray):
        shape = xy.shape[:-1]
        normal = np.zeros(shape + (3,))
        normal[..., 2] = 1.0
        return np.zeros(shape), normal, np.ones(shape)

    def subset(self, rows) -> "FlatGround":
        return self


class TileGround:
    """Per-env view into a shared stack of immutable tiles."""

    def __init__(self, heights: np.ndarray, friction: np.ndarray, resolution: float, tile_index: np.ndarray):
        self.heights = heights  # [K, nx, ny]
        self.friction = friction
        self.resolution = resolution
        self.half_extent = 0.5 * (heights.shape[1] - 1) * resolution
        self.tile_index = tile_index  # [N]

    def sample(self, xy: np.ndarray):
        """xy [N, P, 2] in each env's own frame -> heights [N, P], normals [N, P, 3], friction [N, P]."""
        i, j, tx, ty = _cells(self.heights.shape[1:], self.resolution, self.half_extent, xy[..., 0], xy[..., 1])
        tile = self.tile_index.reshape((-1,) + (1,) * (xy.ndim - 2))
        tile = np.broadcast_to(tile, i.shape)
        z, normal = _bilinear(self.heights, self.resolution, i, j, tx, ty, lead=(tile,))
        fi = np.where(tx < 0.5, i, i + 1)
        fj = np.where(ty < 0.5, j, j + 1)
        return z, normal, self.friction[tile, fi, fj]

    def subset(self, rows) -> "TileGround":
        return TileGround(self.heights, self.friction, self.resolution, self.tile_index[rows])
