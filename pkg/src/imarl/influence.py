"""Per-unit influence fields and their signed global aggregation.

A living unit radiates ``sign * strength * (health / max_health) *
falloff(d)`` onto the cells of a fixed-resolution grid, where ``d`` is
the distance (in grid cells) from the unit's projected cell and the
falloff vanishes beyond ``radius``. Controlled units contribute with
positive sign, enemies negative. Grids are row-major ``(height, width)``
float64 arrays; world coordinates map onto the grid by uniform scaling,
with the continuous position landing in its containing cell (no bilinear
splatting, so a one-grid-cell shift in world space shifts the footprint
by exactly one cell).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .units import CONTROLLED, UnitState

LINEAR = "linear"
INVERSE_DISTANCE = "inverse_distance"

FRIENDLY_SIGN = 1.0
ENEMY_SIGN = -1.0


@dataclass(frozen=True)
class AIMParams:
    """Influence grid geometry and falloff choice."""

    grid_width: int = 64
    grid_height: int = 64
    falloff: str = LINEAR
    radius: float = 8.0  # grid cells; default is grid_width / 8

    def __post_init__(self):
        if self.grid_width < 8 or self.grid_height < 8:
            raise ValueError("influence grid must be at least 8x8")
        if self.radius <= 0:
            raise ValueError("influence radius must be positive")
        if self.falloff not in (LINEAR, INVERSE_DISTANCE):
            raise ValueError(f"unknown falloff {self.falloff!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.grid_height, self.grid_width)


def default_params(grid: int = 64) -> AIMParams:
    return AIMParams(grid_width=grid, grid_height=grid, radius=max(grid / 8, 1.0))


def project_cell(x: float, y: float, params: AIMParams,
                 map_dims: tuple[int, int]) -> tuple[int, int]:
    """Containing grid cell (row, col) for a world position."""
    map_w, map_h = map_dims
    col = min(int(x * params.grid_width / map_w), params.grid_width - 1)
    row = min(int(y * params.grid_height / map_h), params.grid_height - 1)
    return row, col


def _falloff_weights(params: AIMParams, rows: np.ndarray,
                     cols: np.ndarray, row0: int, col0: int) -> np.ndarray:
    d = np.sqrt((rows - row0) ** 2 + (cols - col0) ** 2)
    if params.falloff == LINEAR:
        w = 1.0 - d / params.radius
        return np.maximum(w, 0.0)
    w = 1.0 / (1.0 + d)
    w[d >= params.radius] = 0.0
    return w


def agent_influence(unit: UnitState, params: AIMParams,
                    map_dims: tuple[int, int]) -> np.ndarray:
    """Influence grid radiated by one unit; all-zero for a dead unit."""
    grid = np.zeros(params.shape, dtype=np.float64)
    if not unit.alive:
        return grid
    row0, col0 = project_cell(unit.x, unit.y, params, map_dims)
    reach = int(math.ceil(params.radius))
    r_lo, r_hi = max(row0 - reach, 0), min(row0 + reach, params.grid_height - 1)
    c_lo, c_hi = max(col0 - reach, 0), min(col0 + reach, params.grid_width - 1)
    rows, cols = np.ogrid[r_lo:r_hi + 1, c_lo:c_hi + 1]
    weights = _falloff_weights(params, rows, cols, row0, col0)
    sign = FRIENDLY_SIGN if unit.team == CONTROLLED else ENEMY_SIGN
    magnitude = unit.type.influence_strength * (unit.health / unit.type.max_health)
    grid[r_lo:r_hi + 1, c_lo:c_hi + 1] = sign * magnitude * weights
    return grid


def aggregate_maim(world, params: AIMParams) -> np.ndarray:
    """Element-wise sum of every living unit's influence, both teams."""
    map_dims = (world.spec.map_width, world.spec.map_height)
    grid = np.zeros(params.shape, dtype=np.float64)
    for unit in world.units:
        if unit.alive:
            grid += agent_influence(unit, params, map_dims)
    return grid


def maim_normalizer(spec) -> float:
    """Largest absolute cell value attainable in the scenario: every unit
    of one team stacked on a single cell at starting health."""
    friendly = sum(u.influence_strength for u, _ in spec.controlled_units)
    enemy = sum(u.influence_strength * spec.enemy_health_fraction
                for u, _ in spec.enemy_units)
    return max(friendly, enemy)


def encode_maim(grid: np.ndarray, norm: float) -> np.ndarray:
    """Scale a grid into [-1, 1] and shape it as a 1-channel input tensor."""
    if norm <= 0:
        raise ValueError("normalization constant must be positive")
    return (grid / norm).astype(np.float32)[None, :, :]


def dump_grid_text(grid: np.ndarray, path) -> None:
    """Plain-text matrix: one row per line, space-separated values."""
    with open(path, "w") as fh:
        for row in np.asarray(grid):
            fh.write(" ".join(f"{v:.6g}" for v in row) + "\n")


def load_grid_text(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64, ndmin=2)


def save_grid_pgm(grid: np.ndarray, path, norm: float | None = None) -> None:
    """8-bit grayscale export (binary PGM, header ``P5 <w> <h> 255``).

    Zero influence maps to gray 128, +norm to white, -norm to black.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if norm is None:
        norm = max(float(np.abs(grid).max()), 1e-12)
    scaled = np.clip(grid / norm, -1.0, 1.0)
    pixels = np.round((scaled + 1.0) * 127.5).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5 {w} {h} 255\n".encode("ascii"))
        fh.write(pixels.tobytes())
