"""Walk-distance terrain curriculum and the per-env tile assignment it drives."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from wmr.config import TerrainSection
from wmr.services.terrain.generator import TERRAIN_KINDS, generate
from wmr.services.terrain.heightfield import TileGround


@dataclass(frozen=True)
class CurriculumState:
    level: np.ndarray  # [N] int
    kind: np.ndarray  # [N] index into the configured kind list
    walked: np.ndarray  # [N] m walked so far this episode
    max_level: int

    @classmethod
    def initial(cls, n_envs: int, n_kinds: int, level: int, max_level: int) -> "CurriculumState":
        return cls(
            level=np.full(n_envs, int(np.clip(level, 0, max_level)), dtype=np.int64),
            kind=np.arange(n_envs, dtype=np.int64) % n_kinds,
            walked=np.zeros(n_envs),
            max_level=max_level,
        )

    @property
    def mean_level(self) -> float:
        return float(self.level.mean())


def curriculum_update(
    state: CurriculumState,
    walked: np.ndarray,
    commanded: np.ndarray,
    promote: float = 0.8,
    demote: float = 0.4,
    rows: np.ndarray | None = None,
) -> CurriculumState:
    """Promote one level when walked >= promote*commanded, demote when walked < demote*commanded.

    Only `rows` (default: all) are touched; their walked distance restarts at 0.
    """
    walked = np.asarray(walked, dtype=float)
    commanded = np.asarray(commanded, dtype=float)
    if np.any(walked < 0) or np.any(commanded < 0):
        raise ValueError("walked and commanded distances must be >= 0")
    rows = np.ones(state.level.shape, dtype=bool) if rows is None else rows
    step = np.where(walked >= promote * commanded, 1, np.where(walked < demote * commanded, -1, 0))
    level = state.level.copy()
    level[rows] = np.clip(level[rows] + step[rows], 0, state.max_level)
    moved = state.walked.copy()
    moved[rows] = 0.0
    return replace(state, level=level, walked=moved)


class TerrainTiles:
    """Every (kind, level) tile generated once and shared read-only by all envs."""

    def __init__(self, section: TerrainSection, seed: int):
        unknown = [k for k in section.kinds if k not in TERRAIN_KINDS]
        if unknown:
            raise ValueError(f"unknown terrain kinds {unknown}")
        self.kinds = list(section.kinds)
        self.levels = section.max_level + 1
        fields = [
            generate(kind, level, seed, section.max_level, section.size, section.resolution)
            for kind in self.kinds
            for level in range(self.levels)
        ]
        self.resolution = section.resolution
        self.heights = np.stack([f.heights for f in fields])
        self.friction = np.stack([f.friction for f in fields])
        self.heights.setflags(write=False)
        self.friction.setflags(write=False)

    def index(self, curriculum: CurriculumState) -> np.ndarray:
        return curriculum.kind * self.levels + curriculum.level

    def ground(self, curriculum: CurriculumState) -> TileGround:
        return TileGround(self.heights, self.friction, self.resolution, self.index(curriculum))
