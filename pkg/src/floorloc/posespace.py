"""Discretised pose space: probability maps over (row, col, orientation bin)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AllZero, DimensionMismatch, ParseError, ValidationError
from .floorplan import FloorplanGrid, Pose, TWO_PI

NORM_TOL = 1e-9


@dataclass(frozen=True)
class PoseGridSpec:
    """Ĥ x Ŵ spatial cells of ``cell_size`` meters times O orientation bins.

    Row ``i`` spans y, column ``j`` spans x.  Bin ``k`` is centred on
    ``2*pi*k/O``.
    """
    h_cells: int
    w_cells: int
    o_bins: int
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if min(self.h_cells, self.w_cells, self.o_bins) < 1:
            raise ValidationError("pose grid counts must be >= 1")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValidationError("cell_size must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @classmethod
    def for_floorplan(cls, grid: FloorplanGrid, o_bins: int = 16,
                      cell_size: float | None = None) -> "PoseGridSpec":
        """Pose grid covering the floorplan; defaults to the floorplan's own cells."""
        cs = grid.resolution if cell_size is None else float(cell_size)
        w = int(math.ceil(grid.width * grid.resolution / cs - 1e-9))
        h = int(math.ceil(grid.height * grid.resolution / cs - 1e-9))
        return cls(h, w, o_bins, cs, grid.origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.h_cells, self.w_cells, self.o_bins)

    @property
    def size(self) -> int:
        return self.h_cells * self.w_cells * self.o_bins

    @property
    def bin_width(self) -> float:
        return TWO_PI / self.o_bins

    def bin_angles(self) -> np.ndarray:
        return TWO_PI * np.arange(self.o_bins) / self.o_bins

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.w_cells) + 0.5) * self.cell_size

    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.h_cells) + 0.5) * self.cell_size

    def center_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) world coordinates of every spatial cell centre, shape (Ĥ, Ŵ)."""
        return np.meshgrid(self.x_centers(), self.y_centers())

    def pose_at(self, i: int, j: int, k: int) -> Pose:
        return Pose(self.origin[0] + (j + 0.5) * self.cell_size,
                    self.origin[1] + (i + 0.5) * self.cell_size,
                    TWO_PI * k / self.o_bins)

    def index_of(self, pose: Pose) -> tuple[int, int, int]:
        """Cell indices containing a pose (floor rule; nearest bin centre)."""
        j = int(math.floor((pose.x - self.origin[0]) / self.cell_size))
        i = int(math.floor((pose.y - self.origin[1]) / self.cell_size))
        k = int(round(pose.theta / self.bin_width)) % self.o_bins
        return i, j, k

    def free_mask(self, grid: FloorplanGrid) -> np.ndarray:
        """(Ĥ, Ŵ) bool: cell centre lies in a free floorplan cell."""
        X, Y = self.center_grid()
        return grid.free_mask_at(X, Y)


@dataclass(frozen=True, eq=False)
class ProbMap:
    spec: PoseGridSpec
    values: np.ndarray
    normalized: bool = field(default=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.spec.shape:
            raise DimensionMismatch(f"values shape {v.shape} != spec shape {self.spec.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("probability map entries must be finite and >= 0")
        if self.normalized and abs(v.sum() - 1.0) > NORM_TOL:
            raise ValidationError(f"map flagged normalized but sums to {v.sum()!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def total(self) -> float:
        return float(self.values.sum())

    def spatial(self) -> np.ndarray:
        """Mass per spatial cell (sum over orientation)."""
        return self.values.sum(axis=2)

    def __eq__(self, other):
        if not isinstance(other, ProbMap):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.values, other.values)


def uniform_map(spec: PoseGridSpec, mask: np.ndarray | None = None) -> ProbMap:
    """Uniform belief, optionally restricted to a (Ĥ, Ŵ) spatial mask."""
    v = np.ones(spec.shape)
    if mask is not None:
        v *= np.asarray(mask, dtype=bool)[:, :, None]
    return normalize(ProbMap(spec, v))


def normalize(pmap: ProbMap) -> ProbMap:
    total = pmap.values.sum()
    if not total > 0:
        raise AllZero("cannot normalise a map whose entries sum to zero")
    return ProbMap(pmap.spec, pmap.values / total, normalized=True)


def argmax_pose(pmap: ProbMap) -> Pose:
    """Cell-centre pose of the largest entry; ties go to the lowest flat index."""
    flat = pmap.values.reshape(-1)
    idx = int(np.argmax(flat))
    if not flat[idx] > 0:
        raise AllZero("argmax of an all-zero map")
    i, j, k = np.unravel_index(idx, pmap.spec.shape)
    return pmap.spec.pose_at(int(i), int(j), int(k))


def upsample(pmap: ProbMap, factor: int) -> ProbMap:
    """Nearest-neighbour spatial replication by ``factor``; bins untouched."""
    if int(factor) != factor or factor < 1:
        raise ValidationError(f"upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return pmap
    s = pmap.spec
    spec = replace(s, h_cells=s.h_cells * factor, w_cells=s.w_cells * factor,
                   cell_size=s.cell_size / factor)
    v = np.repeat(np.repeat(pmap.values, factor, axis=0), factor, axis=1)
    out = ProbMap(spec, v)
    return normalize(out) if pmap.normalized else out


# -- serialisation ------------------------------------------------------------

def save_probmap(pmap: ProbMap, path) -> None:
    s = pmap.spec
    head = (f"PROBMAP v1 {s.h_cells} {s.w_cells} {s.o_bins} {s.cell_size!r} "
            f"{s.origin[0]!r} {s.origin[1]!r}\n").encode("ascii")
    Path(path).write_bytes(head + pmap.values.astype("<f8").tobytes(order="C"))


def load_probmap(path) -> ProbMap:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError("missing PROBMAP header line", line=1, path=path)
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 8 or parts[0] != "PROBMAP" or parts[1] != "v1":
        raise ParseError(f"bad header {data[:nl]!r}", line=1, path=path)
    try:
        h, w, o = int(parts[2]), int(parts[3]), int(parts[4])
        cs, ox, oy = float(parts[5]), float(parts[6]), float(parts[7])
    except ValueError:
        raise ParseError("bad header values", line=1, path=path) from None
    payload = data[nl + 1:]
    if len(payload) != 8 * h * w * o:
        raise ParseError(f"expected {8 * h * w * o} payload bytes, found {len(payload)}",
                         byte=nl + 1, path=path)
    spec = PoseGridSpec(h, w, o, cs, (ox, oy))
    v = np.frombuffer(payload, dtype="<f8").reshape(h, w, o).astype(np.float64)
    return ProbMap(spec, v, normalized=abs(v.sum() - 1.0) <= NORM_TOL)


def heatmap(pmap: ProbMap) -> np.ndarray:
    """Per-cell maximum over orientation, scaled linearly to 0..255.

    Returned with the largest y in row 0 so it displays upright.
    """
    m = pmap.values.max(axis=2)
    top = m.max()
    scaled = np.zeros_like(m) if top <= 0 else m / top
    return np.round(scaled[::-1] * 255.0).astype(np.uint8)


def save_heatmap(pmap: ProbMap, path, color: bool = False) -> None:
    img = heatmap(pmap)
    h, w = img.shape
    if color:
        # black -> red -> yellow -> white ramp
        t = img.astype(np.float64) / 255.0
        rgb = np.stack([np.clip(3 * t, 0, 1), np.clip(3 * t - 1, 0, 1), np.clip(3 * t - 2, 0, 1)],
                       axis=-1)
        body = np.round(rgb * 255).astype(np.uint8).tobytes()
        Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + body)
    else:
        Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())
