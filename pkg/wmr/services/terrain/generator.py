"""Procedural terrain tiles, one difficulty level at a time."""

from __future__ import annotations

import numpy as np

from wmr.services.terrain.heightfield import Heightfield

TERRAIN_KINDS = ["flat", "random-rough", "boxes", "pyramid-slope", "thresholds", "stairs"]

# amplitude at the top level; every kind scales linearly from zero at level 0
ROUGH_AMPLITUDE = 0.06
SLOPE_DEGREES = 20.0
STEP_HEIGHT = 0.12
BOX_HEIGHT = 0.10
THRESHOLD_HEIGHT = 0.10

STAIR_TREAD = 0.3
THRESHOLD_SPACING = 1.0
THRESHOLD_WIDTH = 0.1
ROUGH_CELL = 0.2
SPAWN_RADIUS = 0.5
BOX_COUNT = 40


def _grid(size: float, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(size / resolution)) + 1
    axis = np.arange(n) * resolution - size / 2
    return np.meshgrid(axis, axis, indexing="ij")


def _ring(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(x), np.abs(y))


def _rough(x, y, amplitude, rng, size):
    coarse_n = int(round(size / ROUGH_CELL)) + 1
    coarse_axis = np.arange(coarse_n) * ROUGH_CELL - size / 2
    coarse = rng.uniform(-amplitude, amplitude, size=(coarse_n, coarse_n))
    axis = x[:, 0]
    rows = np.stack([np.interp(axis, coarse_axis, coarse[:, k]) for k in range(coarse_n)], axis=1)
    return np.stack([np.interp(axis, coarse_axis, rows[i]) for i in range(len(axis))], axis=0)


def _boxes(x, y, height, rng, size):
    out = np.zeros_like(x)
    for _ in range(BOX_COUNT):
        cx, cy = rng.uniform(-size / 2, size / 2, size=2)
        w, l = rng.uniform(0.4, 1.0, size=2)
        h = rng.uniform(0.5 * height, height)
        inside = (np.abs(x - cx) <= w / 2) & (np.abs(y - cy) <= l / 2)
        out = np.where(inside, np.maximum(out, h), out)
    return out


def generate(
    kind: str,
    level: int,
    seed: int,
    max_level: int = 9,
    size: float = 8.0,
    resolution: float = 0.05,
) -> Heightfield:
    """Deterministic tile for (kind, level, seed); amplitudes grow linearly with level."""
    if kind not in TERRAIN_KINDS:
        raise ValueError(f"unknown terrain kind '{kind}' (expected one of {TERRAIN_KINDS})")
    level = int(np.clip(level, 0, max_level))
    frac = level / max_level if max_level > 0 else 0.0
    rng = np.random.default_rng([seed, TERRAIN_KINDS.index(kind), level])
    x, y = _grid(size, resolution)
    r = _ring(x, y)
    spawn = r < SPAWN_RADIUS

    if kind == "flat":
        heights = np.zeros_like(x)
    elif kind == "random-rough":
        heights = _rough(x, y, ROUGH_AMPLITUDE * frac, rng, size)
    elif kind == "boxes":
        heights = np.where(spawn, 0.0, _boxes(x, y, BOX_HEIGHT * frac, rng, size))
    elif kind == "pyramid-slope":
        grade = np.tan(np.radians(SLOPE_DEGREES * frac))
        heights = grade * (size / 2 - np.maximum(r, SPAWN_RADIUS))
    elif kind == "thresholds":
        offset = np.mod(r, THRESHOLD_SPACING)
        bars = (offset >= THRESHOLD_SPACING - THRESHOLD_WIDTH) & ~spawn
        heights = np.where(bars, THRESHOLD_HEIGHT * frac, 0.0)
    else:
        # descending square stairs around a landing
        steps = np.where(spawn, 0.0, np.floor((r - SPAWN_RADIUS) / STAIR_TREAD) + 1)
        heights = -STEP_HEIGHT * frac * steps

    return Heightfield(resolution=resolution, heights=heights, friction=np.ones_like(heights))
