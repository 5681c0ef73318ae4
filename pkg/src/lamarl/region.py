"""Target-shape grid geometry, cell occupancy and the two assembly metrics.

A region is a set of square cells of side ``l_cell`` laid on a uniform grid.
Cell ``k`` sits at row ``rows[k]`` / column ``cols[k]`` of the source canvas
(row 0 is the top line of the file or image); world coordinates put the
canvas' lower-left corner at the origin with y pointing up.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

log = logging.getLogger(__name__)

MARKED = "#"
UNMARKED = "."
RASTER_SUFFIXES = {".png", ".bmp", ".gif", ".pgm", ".pbm", ".tif", ".tiff", ".jpg", ".jpeg"}


class RegionError(ValueError):
    """Raised for shapes that cannot be turned into a valid region."""


@dataclass(frozen=True)
class GridRegion:
    cell_centers: np.ndarray  # (n_cell, 2), meters
    l_cell: float
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax of the canvas
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    name: str = ""

    @property
    def n_cell(self) -> int:
        return int(self.cell_centers.shape[0])

    @property
    def area(self) -> float:
        return self.n_cell * self.l_cell**2

    def cell_extent(self) -> tuple[float, float, float, float]:
        """Bounding box of the marked cells (not the whole canvas)."""
        h = 0.5 * self.l_cell
        lo = self.cell_centers.min(axis=0) - h
        hi = self.cell_centers.max(axis=0) + h
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def contains(self, points: np.ndarray) -> np.ndarray:
        """True for each point lying inside (or on the edge of) some cell square."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        half = 0.5 * self.l_cell * (1.0 + 1e-9)
        offset = np.abs(pts[:, None, :] - self.cell_centers[None, :, :])
        return np.any(np.all(offset <= half, axis=2), axis=1)


@dataclass(frozen=True)
class OccupancyMap:
    """Per-cell occupancy. ``occupant`` is -1 for free cells.

    ``count`` holds how many robots are within ``r_avoid`` of each center, so a
    robot can tell cells held only by itself from cells held by others.
    """

    occupied: np.ndarray
    occupant: np.ndarray
    count: np.ndarray

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())


# --------------------------------------------------------------------------- loading


def parse_ascii_grid(text: str) -> np.ndarray:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise RegionError("empty ASCII grid")
    width = len(lines[0])
    for n, line in enumerate(lines):
        if len(line) != width:
            raise RegionError(f"ASCII grid is not rectangular: line {n} has {len(line)} chars, expected {width}")
        bad = set(line) - {MARKED, UNMARKED}
        if bad:
            raise RegionError(f"ASCII grid line {n} has invalid characters {sorted(bad)}")
    return np.array([[c == MARKED for c in line] for line in lines], dtype=bool)


def read_raster(path: Union[str, Path]) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        pixels = np.asarray(img.convert("L"))
    return pixels > 127


def components(mask: np.ndarray) -> list[int]:
    """Sizes of the 4-connected components of ``mask``, largest first."""
    seen = np.zeros_like(mask, dtype=bool)
    sizes = []
    for r, c in zip(*np.nonzero(mask)):
        if seen[r, c]:
            continue
        seen[r, c] = True
        queue, size = deque([(r, c)]), 0
        while queue:
            y, x = queue.popleft()
            size += 1
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < mask.shape[0] and 0 <= nx < mask.shape[1] and mask[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((ny, nx))
        sizes.append(size)
    return sorted(sizes, reverse=True)


def region_from_mask(mask: np.ndarray, scale: float, name: str = "") -> GridRegion:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise RegionError(f"shape mask must be 2-D, got {mask.ndim}-D")
    if scale <= 0:
        raise RegionError(f"scale must be positive, got {scale}")
    if not mask.any():
        raise RegionError("shape has no marked cells")
    sizes = components(mask)
    if len(sizes) > 1:
        raise RegionError(
            f"shape is not 4-connected: {len(sizes)} components, the two largest have {sizes[0]} and {sizes[1]} cells"
        )
    height, width = mask.shape
    rows, cols = np.nonzero(mask)  # row-major order fixes the cell index
    centers = np.column_stack([(cols + 0.5) * scale, (height - rows - 0.5) * scale]).astype(float)
    return GridRegion(
        cell_centers=centers,
        l_cell=float(scale),
        bounds=(0.0, 0.0, width * scale, height * scale),
        rows=rows,
        cols=cols,
        name=name,
    )


def load_region(source, scale: float, name: str | None = None) -> GridRegion:
    """Build a region from an ASCII grid (text or file), a raster file, or a boolean array.

    Strings containing a newline or only ``#``/``.`` characters are parsed as
    grid text; other strings and paths are read from disk, by suffix.
    """
    if isinstance(source, np.ndarray):
        return region_from_mask(source, scale, name or "")
    if isinstance(source, str) and ("\n" in source or set(source) <= {MARKED, UNMARKED}):
        return region_from_mask(parse_ascii_grid(source), scale, name or "")
    path = Path(source)
    if path.suffix.lower() in RASTER_SUFFIXES:
        mask = read_raster(path)
    else:
        mask = parse_ascii_grid(path.read_text(encoding="utf-8"))
    return region_from_mask(mask, scale, name if name is not None else path.stem)


def load_shape_library(directory: Union[str, Path], scale: float) -> list[GridRegion]:
    directory = Path(directory)
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() == ".txt" or p.suffix.lower() in RASTER_SUFFIXES
    )
    if not files:
        raise RegionError(f"no shape files in {directory}")
    return [load_region(p, scale) for p in files]


def to_ascii(region: GridRegion) -> str:
    xmin, ymin, xmax, ymax = region.bounds
    height = int(round((ymax - ymin) / region.l_cell))
    width = int(round((xmax - xmin) / region.l_cell))
    grid = np.full((height, width), UNMARKED)
    grid[region.rows, region.cols] = MARKED
    return "".join("".join(row) + "\n" for row in grid)


# --------------------------------------------------------------------------- occupancy & metrics


def cell_distances(region: GridRegion, positions: np.ndarray) -> np.ndarray:
    """(n_robot, n_cell) Euclidean distances."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    diff = pos[:, None, :] - region.cell_centers[None, :, :]
    return np.sqrt(np.einsum("rck,rck->rc", diff, diff))


def compute_occupancy(region: GridRegion, positions: np.ndarray, r_avoid: float) -> OccupancyMap:
    if r_avoid <= 0:
        raise ValueError(f"r_avoid must be positive, got {r_avoid}")
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        zeros = np.zeros(region.n_cell, dtype=bool)
        return OccupancyMap(zeros, np.full(region.n_cell, -1), np.zeros(region.n_cell, dtype=int))
    dist = cell_distances(region, pos)
    within = dist < r_avoid
    occupied = within.any(axis=0)
    nearest = np.argmin(dist, axis=0)  # first minimum -> lowest robot id
    occupant = np.where(occupied, nearest, -1)
    return OccupancyMap(occupied, occupant, within.sum(axis=0))


def coverage_rate(region: GridRegion, positions: np.ndarray, r_avoid: float) -> float:
    """M1: fraction of cells with a robot closer than ``r_avoid`` to the center."""
    return compute_occupancy(region, positions, r_avoid).n_occupied / region.n_cell


def voronoi_counts(region: GridRegion, positions: np.ndarray) -> np.ndarray:
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        raise ValueError("uniformity needs at least one robot")
    if len(np.unique(pos, axis=0)) != len(pos):
        raise ValueError("coincident robot positions: Voronoi assignment is undefined")
    owner = np.argmin(cell_distances(region, pos), axis=0)  # ties -> lowest robot id
    return np.bincount(owner, minlength=len(pos))


def uniformity(region: GridRegion, positions: np.ndarray) -> float:
    """M2: population variance of per-robot Voronoi cell counts."""
    counts = voronoi_counts(region, positions).astype(float)
    return float(np.sum((counts - counts.mean()) ** 2) / len(counts))


def capacity_check(n_robot: int, r_avoid: float, region: GridRegion) -> bool:
    """Whether the region has room for ``n_robot`` disks: 4 n r^2 <= n_cell l^2."""
    need = 4.0 * n_robot * r_avoid**2
    have = region.n_cell * region.l_cell**2
    return need <= have * (1.0 + 1e-12)


def metrics_row(step: int, region: GridRegion, positions: np.ndarray, r_avoid: float, n_collisions: int) -> dict:
    return {
        "step": step,
        "M1": coverage_rate(region, positions, r_avoid),
        "M2": uniformity(region, positions),
        "n_collisions": n_collisions,
    }


METRICS_FIELDS: Sequence[str] = ("step", "M1", "M2", "n_collisions")
