"""Depth-ray observation model.

A scan is scored against the ground-truth rays of every candidate pose; the
scores form a likelihood map over the pose grid.  Single- and multi-frame
maps can be blended, and the ray-regression training loss lives here too.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _raycast
from .errors import (AllZero, DimensionMismatch, LengthMismatch, ParseError,
                     ValidationError)
from .floorplan import DEFAULT_MAX_RANGE, DepthRayScan, FloorplanGrid, Pose, gt_scan, ray_offsets
from .posespace import PoseGridSpec, ProbMap, normalize, upsample

GIBSON_FOV = math.radians(108.0)


@dataclass(frozen=True)
class LikelihoodParams:
    sigma: float = 0.1
    l: int = 40
    fov: float = GIBSON_FOV
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.l < 1:
            raise ValidationError(f"l must be >= 1, got {self.l}")
        if not (0 < self.fov <= 2 * math.pi + 1e-12):
            raise ValidationError(f"fov must be in (0, 2pi], got {self.fov}")
        if not self.max_range > 0:
            raise ValidationError("max_range must be positive")


@dataclass(frozen=True)
class FusionWeight:
    omega: float

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValidationError(f"omega must lie in [0, 1], got {self.omega}")


class RayTable:
    """Ground-truth rays for every free pose of a pose grid.

    ``depths`` has shape (n_free, O, l); ``free`` is the (Ĥ, Ŵ) mask whose
    True cells, in row-major order, correspond to the first axis.
    """

    def __init__(self, grid: FloorplanGrid, spec: PoseGridSpec, l: int, fov: float,
                 max_range: float):
        self.spec = spec
        self.l = l
        self.fov = fov
        self.max_range = max_range
        self.free = spec.free_mask(grid)
        X, Y = spec.center_grid()
        gx, gy = grid.to_grid(X[self.free], Y[self.free])
        bearings = (spec.bin_angles()[:, None] + ray_offsets(l, fov)[None, :]).reshape(-1)
        max_t = max_range / grid.resolution
        t = _raycast.dda_table(grid.cells, np.ascontiguousarray(gx, dtype=np.float64),
                               np.ascontiguousarray(gy, dtype=np.float64), bearings, max_t)
        depths = np.minimum(t * grid.resolution, max_range)
        depths[t >= max_t] = max_range
        self.depths = depths.reshape(-1, spec.o_bins, l)

    def residuals(self, scan: np.ndarray) -> np.ndarray:
        """L1 ray residual per free pose, shape (n_free, O)."""
        return np.abs(self.depths - scan[None, None, :]).sum(axis=2)


_TABLE_CACHE: dict = {}
_TABLE_CACHE_SIZE = 4


def ray_table(grid: FloorplanGrid, spec: PoseGridSpec, l: int, fov: float,
              max_range: float) -> RayTable:
    key = (hash(grid), spec, int(l), float(fov), float(max_range))
    table = _TABLE_CACHE.get(key)
    if table is None:
        table = RayTable(grid, spec, int(l), float(fov), float(max_range))
        if len(_TABLE_CACHE) >= _TABLE_CACHE_SIZE:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
        _TABLE_CACHE[key] = table
    return table


def kernel(residual, sigma: float, l: int):
    """Likelihood of an L1 ray residual: exp(-residual / (sigma * l))."""
    return np.exp(-np.asarray(residual, dtype=np.float64) / (sigma * l))


def _check_scan(scan, params: LikelihoodParams) -> np.ndarray:
    if isinstance(scan, DepthRayScan):
        if abs(scan.fov - params.fov) > 1e-9:
            raise ValidationError(f"scan fov {scan.fov} differs from configured {params.fov}")
        depths = scan.depths
    else:
        depths = np.asarray(scan, dtype=np.float64).reshape(-1)
    if depths.size != params.l:
        raise LengthMismatch(f"scan has {depths.size} rays, expected {params.l}")
    return depths


def likelihood_map(grid: FloorplanGrid, scan, spec: PoseGridSpec,
                   params: LikelihoodParams) -> ProbMap:
    """Normalised likelihood of ``scan`` over every pose of ``spec``.

    Free poses score exp(-|scan - gt|_1 / (sigma * l)); poses whose centre is
    in a wall or off the floorplan score 0.  Scores are shifted by the best
    residual before exponentiating, which cancels in the normalisation but
    keeps tiny sigmas from underflowing.
    """
    depths = _check_scan(scan, params)
    table = ray_table(grid, spec, params.l, params.fov, params.max_range)
    if table.depths.shape[0] == 0:
        raise AllZero("the pose grid has no free pose")
    res = table.residuals(depths)
    scores = kernel(res - res.min(), params.sigma, params.l)
    values = np.zeros(spec.shape)
    values[table.free] = scores
    return normalize(ProbMap(spec, values))


def pose_residuals(grid: FloorplanGrid, scan, spec: PoseGridSpec,
                   params: LikelihoodParams) -> np.ndarray:
    """(Ĥ, Ŵ, O) L1 residuals, +inf at poses that are not free."""
    depths = _check_scan(scan, params)
    table = ray_table(grid, spec, params.l, params.fov, params.max_range)
    out = np.full(spec.shape, np.inf)
    out[table.free] = table.residuals(depths)
    return out


def is_unique_view(grid: FloorplanGrid, pose: Pose, spec: PoseGridSpec,
                   params: LikelihoodParams, tol: float = 1e-9) -> bool:
    """True if no other pose of ``spec`` sees the same ground-truth scan."""
    scan = gt_scan(grid, pose, params.l, params.fov, params.max_range)
    res = pose_residuals(grid, scan.depths, spec, params)
    return int(np.count_nonzero(res <= tol)) == 1


def fuse_maps(single: ProbMap, multi: ProbMap, w: FusionWeight | float, factor: int,
              normalize_output: bool = True) -> ProbMap:
    """omega * upsample(single) + (1 - omega) * multi."""
    omega = w.omega if isinstance(w, FusionWeight) else FusionWeight(float(w)).omega
    up = upsample(single, factor)
    a, b = up.spec, multi.spec
    if (a.shape != b.shape or not math.isclose(a.cell_size, b.cell_size, rel_tol=1e-9)
            or not all(math.isclose(p, q, rel_tol=1e-9, abs_tol=1e-9)
                       for p, q in zip(a.origin, b.origin))):
        raise DimensionMismatch(f"upsampled single map {a} does not match multi map {b}")
    # endpoints select one map exactly
    if omega == 1.0:
        src = up
    elif omega == 0.0:
        src = multi
    else:
        src = ProbMap(b, omega * up.values + (1.0 - omega) * multi.values)
    out = ProbMap(b, src.values, normalized=src.normalized)
    return normalize(out) if normalize_output and not out.normalized else out


def floc_loss(pred, gt, epsilon: float = 1e-8) -> tuple[float, np.ndarray]:
    """L1 + (1 - cosine) ray loss and its gradient with respect to ``pred``.

    The L1 subgradient is taken as 0 where pred == gt.
    """
    d = np.asarray(pred.depths if isinstance(pred, DepthRayScan) else pred, dtype=np.float64)
    g = np.asarray(gt.depths if isinstance(gt, DepthRayScan) else gt, dtype=np.float64)
    if d.shape != g.shape:
        raise LengthMismatch(f"pred has {d.size} rays, gt has {g.size}")
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    diff = d - g
    l1 = float(np.abs(diff).sum())
    nd = float(np.linalg.norm(d))
    ng = float(np.linalg.norm(g))
    dot = float(d @ g)
    denom = nd * ng
    if denom > epsilon:
        cos = dot / denom
        dcos = g / denom - dot * d / (nd ** 3 * ng)
    else:
        cos = dot / epsilon
        dcos = g / epsilon
    loss = l1 + (1.0 - cos)
    grad = np.sign(diff) - dcos
    return loss, grad


# -- scan files ---------------------------------------------------------------

def read_scans(path) -> list[DepthRayScan]:
    scans = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                depths = [float(v) for v in rec["depths"]]
                if int(rec["l"]) != len(depths):
                    raise ParseError(f"l={rec['l']} but {len(depths)} depths", line=lineno, path=path)
                scans.append(DepthRayScan(depths, math.radians(float(rec["fov_deg"])),
                                          float(rec["max_range_m"]), frame_id=rec["frame_id"]))
            except ParseError:
                raise
            except (ValueError, KeyError, TypeError) as e:
                raise ParseError(f"bad scan record: {e}", line=lineno, path=path) from None
    return scans


def write_scans(path, scans) -> None:
    lines = []
    for i, s in enumerate(scans):
        fid = s.frame_id if s.frame_id is not None else i
        lines.append(json.dumps({"frame_id": fid, "l": s.l, "fov_deg": math.degrees(s.fov),
                                 "max_range_m": s.max_range,
                                 "depths": [float(v) for v in s.depths]}))
    Path(path).write_text("".join(x + "\n" for x in lines), encoding="utf-8")
