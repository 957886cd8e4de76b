from wmr.services.terrain.curriculum import CurriculumState, TerrainTiles, curriculum_update
from wmr.services.terrain.generator import TERRAIN_KINDS, generate
from wmr.services.terrain.heightfield import FlatGround, Heightfield, TileGround, height_at
