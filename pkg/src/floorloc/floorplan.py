"""Occupancy-grid floorplans, exact ray casting and ground-truth scans.

World frame: x runs along columns, y along rows, theta = 0 points to +x and
angles increase counter-clockwise.  Cell ``(row, col)`` covers
``[origin_x + col*res, origin_x + (col+1)*res) x [origin_y + row*res, ...)``.
Cells hold 0 (free) or 1 (occupied).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import _raycast
from .errors import OriginOccupied, OriginOutOfBounds, ParseError, ValidationError

TWO_PI = 2.0 * math.pi
DEFAULT_MAX_RANGE = 10.0


def wrap_angle(theta: float) -> float:
    """Map an angle to [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    if t >= TWO_PI:
        t = 0.0
    return t


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValidationError(f"non-finite pose {self.x}, {self.y}, {self.theta}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True, eq=False)
class FloorplanGrid:
    cells: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ValidationError(f"grid must be a non-empty 2D array, got shape {cells.shape}")
        if not np.all((cells == 0) | (cells == 1)):
            raise ValidationError("grid cells must be 0 (free) or 1 (occupied)")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValidationError(f"resolution must be positive, got {self.resolution}")
        cells = np.ascontiguousarray(cells, dtype=np.uint8).copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FloorplanGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self):
        return hash((self.cells.tobytes(), self.cells.shape, self.resolution, self.origin))

    def to_grid(self, x, y):
        """World meters -> continuous (col, row) grid coordinates."""
        return (np.subtract(x, self.origin[0]) / self.resolution,
                np.subtract(y, self.origin[1]) / self.resolution)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing a world point (floor rule)."""
        gx, gy = self.to_grid(x, y)
        return int(math.floor(gy)), int(math.floor(gx))

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin[0] + (col + 0.5) * self.resolution,
                self.origin[1] + (row + 0.5) * self.resolution)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def is_free(self, x: float, y: float) -> bool:
        r, c = self.cell_of(x, y)
        return self.in_bounds(r, c) and self.cells[r, c] == 0

    def free_mask_at(self, x, y) -> np.ndarray:
        """Vectorised free test for arrays of world points (out of bounds is not free)."""
        gx, gy = self.to_grid(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        col = np.floor(gx).astype(np.int64)
        row = np.floor(gy).astype(np.int64)
        ok = (row >= 0) & (row < self.height) & (col >= 0) & (col < self.width)
        out = np.zeros(ok.shape, dtype=bool)
        out[ok] = self.cells[row[ok], col[ok]] == 0
        return out

    @property
    def n_occupied(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True, eq=False)
class DepthRayScan:
    depths: np.ndarray
    fov: float
    max_range: float = DEFAULT_MAX_RANGE
    frame_id: int | str | None = field(default=None, compare=False)

    def __post_init__(self):
        d = np.array(self.depths, dtype=np.float64).reshape(-1)
        if d.size < 1:
            raise ValidationError("scan needs at least one ray")
        if not (self.max_range > 0):
            raise ValidationError("max_range must be positive")
        if not (0 < self.fov <= TWO_PI + 1e-12):
            raise ValidationError(f"fov must be in (0, 2pi], got {self.fov}")
        if np.any(~np.isfinite(d)) or np.any(d < 0) or np.any(d > self.max_range):
            raise ValidationError("scan depths must lie in [0, max_range]")
        d.setflags(write=False)
        object.__setattr__(self, "depths", d)

    @property
    def l(self) -> int:
        return self.depths.size

    def __len__(self):
        return self.depths.size

    def __eq__(self, other):
        if not isinstance(other, DepthRayScan):
            return NotImplemented
        return (self.fov == other.fov and self.max_range == other.max_range
                and np.array_equal(self.depths, other.depths))


def ray_offsets(l: int, fov: float) -> np.ndarray:
    """Equiangular bearing offsets; ray 0 sits at -fov/2 (clockwise edge)."""
    if l < 1:
        raise ValidationError(f"ray count must be >= 1, got {l}")
    if l == 1:
        return np.zeros(1)
    k = np.arange(l, dtype=np.float64)
    return -fov / 2.0 + k * (fov / (l - 1))


def _check_origin(grid: FloorplanGrid, x: float, y: float):
    r, c = grid.cell_of(x, y)
    if not grid.in_bounds(r, c):
        raise OriginOutOfBounds(f"({x}, {y}) lies outside the grid")
    if grid.cells[r, c]:
        raise OriginOccupied(f"({x}, {y}) lies in occupied cell ({r}, {c})")


def _depths(grid, x, y, bearings, max_range):
    gx, gy = grid.to_grid(x, y)
    max_t = max_range / grid.resolution
    n = len(bearings)
    t = _raycast.dda_many(grid.cells, np.full(n, gx), np.full(n, gy),
                          np.asarray(bearings, dtype=np.float64), max_t)
    out = np.minimum(t * grid.resolution, max_range)
    out[t >= max_t] = max_range
    return out


def cast_ray(grid: FloorplanGrid, origin: Pose, bearing: float,
             max_range: float = DEFAULT_MAX_RANGE) -> float:
    """Exact distance from ``origin`` to the nearest wall face along ``bearing``.

    ``bearing`` is absolute (world frame); ``origin.theta`` is ignored.
    Walls are occupied cells; the depth is measured to the face through
    which the ray enters the first occupied cell.  If nothing is hit within
    ``max_range`` (or the ray leaves the grid) ``max_range`` is returned.
    """
    if not max_range > 0:
        raise ValidationError("max_range must be positive")
    _check_origin(grid, origin.x, origin.y)
    return float(_depths(grid, origin.x, origin.y, [bearing], max_range)[0])


def gt_scan(grid: FloorplanGrid, pose: Pose, l: int, fov: float,
            max_range: float = DEFAULT_MAX_RANGE) -> DepthRayScan:
    if not (0 < fov <= TWO_PI + 1e-12):
        raise ValidationError(f"fov must be in (0, 2pi], got {fov}")
    if not max_range > 0:
        raise ValidationError("max_range must be positive")
    _check_origin(grid, pose.x, pose.y)
    bearings = pose.theta + ray_offsets(l, fov)
    return DepthRayScan(_depths(grid, pose.x, pose.y, bearings, max_range), fov, max_range)


# -- file formats -------------------------------------------------------------

HEADER = "FLOORPLAN"


def save_floorplan(grid: FloorplanGrid, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = format or _guess_format(path)
    if fmt == "text":
        lines = [f"{HEADER} v1 {grid.height} {grid.width} {grid.resolution!r} "
                 f"{grid.origin[0]!r} {grid.origin[1]!r}"]
        table = np.array([ord("."), ord("#")], dtype=np.uint8)
        for row in table[grid.cells]:
            lines.append(row.tobytes().decode("ascii"))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
    elif fmt == "pgm":
        # image rows run top-down, i.e. from the largest y to the smallest
        pixels = np.where(grid.cells[::-1] == 1, 0, 255).astype(np.uint8)
        head = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
        path.write_bytes(head + pixels.tobytes())
        sidecar = {"resolution": grid.resolution, "origin": [grid.origin[0], grid.origin[1]]}
        _sidecar_path(path).write_text(yaml.safe_dump(sidecar, sort_keys=True))
    else:
        raise ValidationError(f"unknown floorplan format {fmt!r}")


def load_floorplan(path, format: str | None = None, *, resolution: float | None = None,
                   origin: tuple[float, float] | None = None) -> FloorplanGrid:
    """Read a grid from disk.

    ``resolution``/``origin`` override the values stored in the file (text
    format) or in the ``<name>.yaml`` sidecar (PGM).
    """
    path = Path(path)
    data = path.read_bytes()
    fmt = format or ("pgm" if data[:2] == b"P5" else _guess_format(path))
    if fmt == "text":
        grid_cells, res, org = _parse_text(data, path)
    elif fmt == "pgm":
        grid_cells = _parse_pgm(data, path)
        res, org = None, None
        side = _sidecar_path(path)
        if side.exists():
            meta = yaml.safe_load(side.read_text()) or {}
            res = meta.get("resolution")
            if meta.get("origin") is not None:
                org = tuple(float(v) for v in meta["origin"][:2])
        if res is None and resolution is None:
            raise ParseError("PGM floorplan needs a resolution (sidecar or argument)", path=path)
        org = org or (0.0, 0.0)
    else:
        raise ValidationError(f"unknown floorplan format {fmt!r}")
    return FloorplanGrid(grid_cells,
                         float(resolution if resolution is not None else res),
                         tuple(origin) if origin is not None else org)


def _guess_format(path: Path) -> str:
    return "pgm" if path.suffix.lower() == ".pgm" else "text"


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".yaml")


def _parse_text(data: bytes, path):
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as e:
        raise ParseError("non-ascii content", byte=e.start, path=path) from None
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", line=1, path=path)
    parts = lines[0].split()
    if len(parts) != 7 or parts[0] != HEADER or parts[1] != "v1":
        raise ParseError(f"bad header {lines[0]!r}", line=1, path=path)
    try:
        h, w = int(parts[2]), int(parts[3])
        res, ox, oy = float(parts[4]), float(parts[5]), float(parts[6])
    except ValueError:
        raise ParseError(f"bad header values {lines[0]!r}", line=1, path=path) from None
    if h < 1 or w < 1 or not res > 0:
        raise ParseError("header dimensions must be positive", line=1, path=path)
    body = lines[1:]
    if len(body) < h:
        raise ParseError(f"expected {h} rows, found {len(body)}", line=len(lines) + 1, path=path)
    if any(s.strip() for s in body[h:]):
        raise ParseError("trailing content after grid rows", line=h + 2, path=path)
    cells = np.empty((h, w), dtype=np.uint8)
    for r, row in enumerate(body[:h]):
        if len(row) != w:
            raise ParseError(f"row has {len(row)} cells, expected {w}", line=r + 2, path=path)
        for c, ch in enumerate(row):
            if ch == ".":
                cells[r, c] = 0
            elif ch == "#":
                cells[r, c] = 1
            else:
                raise ParseError(f"bad cell character {ch!r} at column {c + 1}",
                                 line=r + 2, path=path)
    return cells, res, (ox, oy)


def _parse_pgm(data: bytes, path):
    tokens = []
    pos = 2
    if data[:2] != b"P5":
        raise ParseError("not a binary PGM (missing P5 magic)", byte=0, path=path)
    while len(tokens) < 3:
        if pos >= len(data):
            raise ParseError("truncated PGM header", byte=pos, path=path)
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise ParseError(f"bad PGM header token {tok!r}", byte=start, path=path)
            tokens.append(int(tok))
    pos += 1  # exactly one whitespace byte before the raster
    w, h, maxval = tokens
    if w < 1 or h < 1 or maxval != 255:
        raise ParseError("PGM must be 8-bit with positive size", byte=pos, path=path)
    raster = data[pos:]
    if len(raster) != w * h:
        raise ParseError(f"expected {w * h} pixel bytes, found {len(raster)}", byte=pos, path=path)
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(h, w)[::-1]
    return (pixels < 128).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Write an 8-bit grayscale array as binary PGM (row 0 is the top row)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
