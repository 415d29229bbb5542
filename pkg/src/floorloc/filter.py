"""Histogram Bayes filter over the discretised pose grid."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import AllZero, FlocError, LengthMismatch, ParseError, StepError, ValidationError
from .floorplan import FloorplanGrid, Pose
from .observation import LikelihoodParams, likelihood_map
from .posespace import PoseGridSpec, ProbMap, argmax_pose, normalize, uniform_map

SNAP = 1e-9


@dataclass(frozen=True)
class MotionStep:
    """Body-frame odometry: ``dx`` forward, ``dy`` to the left, ``dtheta`` CCW."""
    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0
    sigma_trans: float = 0.0
    sigma_rot: float = 0.0

    def __post_init__(self):
        if self.sigma_trans < 0 or self.sigma_rot < 0:
            raise ValidationError("motion noise sigmas must be >= 0")
        for v in (self.dx, self.dy, self.dtheta):
            if not math.isfinite(v):
                raise ValidationError("motion components must be finite")


@dataclass(frozen=True)
class TrackState:
    posterior: ProbMap
    step_index: int = 0
    floor_prob: float = 1e-9
    free: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.floor_prob <= 1e-3:
            raise ValidationError(f"floor_prob must lie in (0, 1e-3], got {self.floor_prob}")
        if abs(self.posterior.total() - 1.0) > 1e-9:
            raise ValidationError("posterior must be normalised")
        if self.free is not None:
            free = np.asarray(self.free, dtype=bool)
            if free.shape != self.posterior.spec.shape[:2]:
                raise ValidationError("free mask does not match the pose grid")
            object.__setattr__(self, "free", free)


def _snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < SNAP else v


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian on integer offsets, truncated at 3 sigma, summing to 1."""
    if sigma <= 0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (d / sigma) ** 2)
    return k / k.sum()


def _split(shift: float) -> list[tuple[int, float]]:
    """Linear mass split of a fractional shift onto two integer offsets."""
    shift = _snap(shift)
    lo = math.floor(shift)
    a = shift - lo
    parts = [(lo, 1.0 - a)]
    if a > 0:
        parts.append((lo + 1, a))
    return parts


def world_shift(spec: PoseGridSpec, motion: MotionStep, k: int) -> tuple[float, float]:
    """(cols, rows) displacement for orientation bin ``k``."""
    th = 2.0 * math.pi * k / spec.o_bins
    c, s = math.cos(th), math.sin(th)
    wx = motion.dx * c - motion.dy * s
    wy = motion.dx * s + motion.dy * c
    return wx / spec.cell_size, wy / spec.cell_size


def transition(values: np.ndarray, spec: PoseGridSpec, motion: MotionStep,
               free: np.ndarray | None = None) -> np.ndarray:
    """Apply the motion model without renormalising.

    Per orientation bin the body displacement is rotated into the world,
    the slice is shifted with bilinear mass splitting and moved to the
    (linearly split) new bin, then blurred by a separable truncated
    Gaussian.  Mass that ends in a wall or off the grid is handed to the
    free cells in proportion to what they already hold, so the total is
    conserved.  If no mass survives the input is returned unchanged.
    """
    h, w, o = spec.shape
    ks = gaussian_kernel(motion.sigma_trans / spec.cell_size)
    kr = gaussian_kernel(motion.sigma_rot / spec.bin_width)
    rs = len(ks) // 2
    reach = math.hypot(motion.dx, motion.dy) / spec.cell_size
    pad = int(math.ceil(reach)) + 2 + rs
    buf = np.zeros((h + 2 * pad, w + 2 * pad, o))

    bin_parts = _split(motion.dtheta / spec.bin_width)
    for k in range(o):
        sl = values[:, :, k]
        if not sl.any():
            continue
        sx, sy = world_shift(spec, motion, k)
        for dr, wr in _split(sy):
            for dc, wc in _split(sx):
                for dk, wk in bin_parts:
                    buf[pad + dr:pad + dr + h, pad + dc:pad + dc + w, (k + dk) % o] += \
                        (wr * wc * wk) * sl

    if len(ks) > 1:
        for axis in (0, 1):
            acc = np.zeros_like(buf)
            for i, wt in enumerate(ks):
                off = i - rs
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                n = buf.shape[axis]
                src[axis] = slice(max(0, -off), n - max(0, off))
                dst[axis] = slice(max(0, off), n - max(0, -off))
                acc[tuple(dst)] += wt * buf[tuple(src)]
            buf = acc
    if len(kr) > 1:
        rr = len(kr) // 2
        acc = np.zeros_like(buf)
        for i, wt in enumerate(kr):
            acc += wt * np.roll(buf, i - rr, axis=2)
        buf = acc

    inner = buf[pad:pad + h, pad:pad + w, :]
    if free is not None:
        inner = inner * free[:, :, None]
    total_in = values.sum()
    kept = inner.sum()
    if not kept > 0:
        return np.array(values, dtype=np.float64, copy=True)
    return inner * (total_in / kept)


def predict(state: TrackState, motion: MotionStep) -> TrackState:
    post = state.posterior
    values = transition(post.values, post.spec, motion, state.free)
    return TrackState(normalize(ProbMap(post.spec, values)), state.step_index + 1,
                      state.floor_prob, state.free)


def update(state: TrackState, likelihood: ProbMap) -> TrackState:
    """Bayes update with the prior floored at ``floor_prob`` times uniform."""
    post = state.posterior
    if likelihood.spec.shape != post.spec.shape:
        raise ValidationError(f"likelihood shape {likelihood.spec.shape} "
                              f"!= posterior shape {post.spec.shape}")
    floor = state.floor_prob / post.values.size
    prod = np.maximum(post.values, floor) * likelihood.values
    if not prod.sum() > 0:
        raise AllZero("prior times likelihood vanishes everywhere")
    return TrackState(normalize(ProbMap(post.spec, prod)), state.step_index,
                      state.floor_prob, state.free)


@dataclass(frozen=True)
class TrackParams:
    spec: PoseGridSpec
    likelihood: LikelihoodParams = field(default_factory=LikelihoodParams)
    sigma_trans: float = 0.05
    sigma_rot: float = 0.05
    floor_prob: float = 1e-9


def _as_motion(m, params: TrackParams) -> MotionStep:
    if isinstance(m, MotionStep):
        return m
    dx, dy, dth = m
    return MotionStep(float(dx), float(dy), float(dth), params.sigma_trans, params.sigma_rot)


def iter_track(grid: FloorplanGrid, scans: Sequence, motions: Sequence,
               params: TrackParams) -> Iterator[tuple[Pose, ProbMap]]:
    if len(motions) != len(scans) - 1:
        raise LengthMismatch(f"{len(scans)} scans need {len(scans) - 1} motions, "
                             f"got {len(motions)}")
    spec = params.spec
    free = spec.free_mask(grid)
    if not free.any():
        raise AllZero("the pose grid has no free cell")
    state = TrackState(uniform_map(spec, free), 0, params.floor_prob, free)
    for t, scan in enumerate(scans):
        try:
            if t > 0:
                state = predict(state, _as_motion(motions[t - 1], params))
            lik = likelihood_map(grid, scan, spec, params.likelihood)
            state = update(state, lik)
            pose = argmax_pose(state.posterior)
        except FlocError as e:
            raise StepError(t, e) from e
        yield pose, state.posterior


def track(grid: FloorplanGrid, scans: Sequence, motions: Sequence,
          params: TrackParams) -> list[tuple[Pose, ProbMap]]:
    return list(iter_track(grid, scans, motions, params))


def region_mass(pmap: ProbMap, mask: np.ndarray) -> float:
    """Posterior mass inside a (Ĥ, Ŵ) spatial mask."""
    return float(pmap.spatial()[np.asarray(mask, dtype=bool)].sum())


def mode_share(pmap: ProbMap, radius: float = 1.0) -> float:
    """Share of the dominant mode among the two strongest modes.

    Mass within ``radius`` of the spatial peak is compared with mass within
    ``radius`` of the best cell at least ``2*radius`` away.  Values near 0.5
    indicate two equally likely hypotheses, 1.0 a single one.
    """
    spec = pmap.spec
    m = pmap.spatial()
    X, Y = spec.center_grid()
    i1 = np.unravel_index(int(np.argmax(m)), m.shape)
    d1 = np.hypot(X - X[i1], Y - Y[i1])
    m1 = m[d1 <= radius].sum()
    rest = np.where(d1 >= 2 * radius, m, -1.0)
    if rest.max() <= 0:
        return 1.0
    i2 = np.unravel_index(int(np.argmax(rest)), m.shape)
    d2 = np.hypot(X - X[i2], Y - Y[i2])
    m2 = m[(d2 <= radius) & (d1 > radius)].sum()
    return float(m1 / (m1 + m2)) if m1 + m2 > 0 else 1.0


# -- motion files -------------------------------------------------------------

def read_motions(path) -> list[MotionStep]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append((int(rec["step"]), float(rec["dx_m"]), float(rec["dy_m"]),
                            float(rec["dtheta_rad"])))
            except (ValueError, KeyError, TypeError) as e:
                raise ParseError(f"bad motion record: {e}", line=lineno, path=path) from None
    out.sort(key=lambda r: r[0])
    return [r[1:] for r in out]


def write_motions(path, motions) -> None:
    lines = []
    for i, m in enumerate(motions):
        dx, dy, dth = (m.dx, m.dy, m.dtheta) if isinstance(m, MotionStep) else m
        lines.append(json.dumps({"step": i, "dx_m": float(dx), "dy_m": float(dy),
                                 "dtheta_rad": float(dth)}))
    Path(path).write_text("".join(x + "\n" for x in lines), encoding="utf-8")
