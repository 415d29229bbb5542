"""Synthetic floorplans built from rectangles, plus trajectory helpers.

A scene is a set of axis-aligned rectangles in meters.  Rooms, corridors and
doors carve free space out of a solid block; obstacles put walls back.  The
grid is the bounding box of the free rectangles plus a ``margin`` of wall
cells on every side.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidSpec
from .floorplan import FloorplanGrid, Pose, TWO_PI


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    @classmethod
    def from_any(cls, obj) -> "Rect":
        if isinstance(obj, Rect):
            return obj
        if isinstance(obj, dict):
            return cls(float(obj["x"]), float(obj["y"]), float(obj["w"]), float(obj["h"]))
        x, y, w, h = obj
        return cls(float(x), float(y), float(w), float(h))

    def contains(self, x, y):
        return (x >= self.x) & (x < self.x + self.w) & (y >= self.y) & (y < self.y + self.h)


@dataclass(frozen=True)
class SceneSpec:
    resolution: float = 0.1
    rooms: tuple[Rect, ...] = ()
    corridors: tuple[Rect, ...] = ()
    doors: tuple[Rect, ...] = ()
    obstacles: tuple[Rect, ...] = ()
    margin: int = 1

    def __post_init__(self):
        for name in ("rooms", "corridors", "doors", "obstacles"):
            try:
                rects = tuple(Rect.from_any(r) for r in getattr(self, name))
            except (KeyError, TypeError, ValueError) as e:
                raise InvalidSpec(f"bad {name} entry: {e}") from None
            object.__setattr__(self, name, rects)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        try:
            return cls(
                resolution=float(d.get("resolution", 0.1)),
                rooms=tuple(Rect.from_any(r) for r in d.get("rooms", ())),
                corridors=tuple(Rect.from_any(r) for r in d.get("corridors", ())),
                doors=tuple(Rect.from_any(r) for r in d.get("doors", ())),
                obstacles=tuple(Rect.from_any(r) for r in d.get("obstacles", ())),
                margin=int(d.get("margin", 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidSpec(f"malformed scene description: {e}") from None

    def to_dict(self) -> dict:
        return asdict(self)


def _span(lo, size, origin, res, what):
    a = int(round((lo - origin) / res))
    b = int(round((lo + size - origin) / res))
    if b <= a:
        raise InvalidSpec(f"{what} is thinner than one cell")
    return a, b


def synth_floorplan(spec: SceneSpec | dict) -> FloorplanGrid:
    """Rasterise a scene; raises InvalidSpec unless free space is one connected region."""
    if isinstance(spec, dict):
        spec = SceneSpec.from_dict(spec)
    res = spec.resolution
    if not res > 0:
        raise InvalidSpec("resolution must be positive")
    if spec.margin < 0:
        raise InvalidSpec("margin must be >= 0")
    free = [("room", r) for r in spec.rooms] + [("corridor", r) for r in spec.corridors] \
        + [("door", r) for r in spec.doors]
    if not spec.rooms:
        raise InvalidSpec("scene needs at least one room")
    for kind, r in free + [("obstacle", r) for r in spec.obstacles]:
        if not (r.w > 0 and r.h > 0):
            raise InvalidSpec(f"{kind} {r} must have positive width and height")
    min_x = min(r.x for _, r in free)
    min_y = min(r.y for _, r in free)
    max_x = max(r.x + r.w for _, r in free)
    max_y = max(r.y + r.h for _, r in free)
    ox = min_x - spec.margin * res
    oy = min_y - spec.margin * res
    width = int(round((max_x - min_x) / res)) + 2 * spec.margin
    height = int(round((max_y - min_y) / res)) + 2 * spec.margin

    cells = np.ones((height, width), dtype=np.uint8)
    for kind, r in free:
        c0, c1 = _span(r.x, r.w, ox, res, kind)
        r0, r1 = _span(r.y, r.h, oy, res, kind)
        cells[r0:r1, c0:c1] = 0
    for r in spec.obstacles:
        c0, c1 = _span(r.x, r.w, ox, res, "obstacle")
        r0, r1 = _span(r.y, r.h, oy, res, "obstacle")
        cells[max(r0, 0):max(r1, 0), max(c0, 0):max(c1, 0)] = 1

    for i, r in enumerate(spec.rooms):
        c0, c1 = _span(r.x, r.w, ox, res, "room")
        r0, r1 = _span(r.y, r.h, oy, res, "room")
        if not (cells[r0:r1, c0:c1] == 0).any():
            raise InvalidSpec(f"room {i} has no free interior")
    if not (cells == 0).any():
        raise InvalidSpec("scene has no free space")
    n_comp = count_free_components(cells)
    if n_comp != 1:
        raise InvalidSpec(f"free space splits into {n_comp} disconnected regions")
    return FloorplanGrid(cells, res, (ox, oy))


def count_free_components(cells: np.ndarray) -> int:
    """Number of 4-connected free regions (BFS)."""
    h, w = cells.shape
    seen = cells != 0
    count = 0
    for start in zip(*np.nonzero(~seen)):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            r, c = queue.popleft()
            for rr, cc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                if 0 <= rr < h and 0 <= cc < w and not seen[rr, cc]:
                    seen[rr, cc] = True
                    queue.append((rr, cc))
    return count


def random_scene_spec(seed: int, room_rows: int | None = None, room_cols: int | None = None,
                      resolution: float = 0.1, room_cells: tuple[int, int] = (18, 32),
                      obstacles_per_room: tuple[int, int] = (1, 3)) -> SceneSpec:
    """A lattice of rectangular rooms joined by doors, cluttered with boxes.

    Works in whole cells and converts to meters at the end, so the raster is
    exact.  Door positions and clutter are random, which makes the free space
    geometrically distinctive.
    """
    rng = np.random.default_rng(seed)
    nr = room_rows if room_rows is not None else int(rng.integers(1, 3))
    nc = room_cols if room_cols is not None else int(rng.integers(1, 4))
    lo, hi = room_cells
    widths = rng.integers(lo, hi + 1, size=nc)
    heights = rng.integers(lo, hi + 1, size=nr)
    wall = 2
    xs = np.concatenate([[0], np.cumsum(widths + wall)[:-1]])
    ys = np.concatenate([[0], np.cumsum(heights + wall)[:-1]])
    rooms = {(i, j): (int(xs[j]), int(ys[i]), int(widths[j]), int(heights[i]))
             for i in range(nr) for j in range(nc)}

    # random spanning tree over the room lattice, plus a few extra doors
    visited = {(0, 0)}
    edges = []
    while len(visited) < nr * nc:
        frontier = [(a, b) for a in sorted(visited)
                    for b in ((a[0] + 1, a[1]), (a[0] - 1, a[1]), (a[0], a[1] + 1), (a[0], a[1] - 1))
                    if b in rooms and b not in visited]
        a, b = frontier[int(rng.integers(len(frontier)))]
        visited.add(b)
        edges.append((a, b))
    for (i, j) in sorted(rooms):
        for b in ((i + 1, j), (i, j + 1)):
            if b in rooms and ((i, j), b) not in edges and (b, (i, j)) not in edges \
                    and rng.random() < 0.3:
                edges.append(((i, j), b))

    doors = []
    for a, b in edges:
        a, b = sorted((a, b))
        ax, ay, aw, ah = rooms[a]
        bx, by, bw, bh = rooms[b]
        size = int(rng.integers(6, 10))
        if a[0] == b[0]:  # horizontal neighbours, door through a vertical wall
            y0 = ay + int(rng.integers(2, ah - size - 1))
            doors.append((ax + aw, y0, wall, size))
        else:
            x0 = ax + int(rng.integers(2, aw - size - 1))
            doors.append((x0, ay + ah, size, wall))

    cell_rooms = [rooms[k] for k in sorted(rooms)]
    obstacles = []
    base = dict(resolution=resolution,
                rooms=[_cells_to_m(r, resolution) for r in cell_rooms],
                doors=[_cells_to_m(d, resolution) for d in doors])
    for (rx, ry, rw, rh) in cell_rooms:
        n_obs = int(rng.integers(obstacles_per_room[0], obstacles_per_room[1] + 1))
        for _ in range(n_obs):
            ow = int(rng.integers(2, 7))
            oh = int(rng.integers(2, 7))
            ox = rx + int(rng.integers(2, max(3, rw - ow - 2)))
            oy = ry + int(rng.integers(2, max(3, rh - oh - 2)))
            trial = obstacles + [(ox, oy, ow, oh)]
            spec = SceneSpec.from_dict({**base, "obstacles": [_cells_to_m(o, resolution)
                                                              for o in trial]})
            try:
                synth_floorplan(spec)
            except InvalidSpec:
                continue
            obstacles = trial
    return SceneSpec.from_dict({**base, "obstacles": [_cells_to_m(o, resolution)
                                                      for o in obstacles]})


def _cells_to_m(rect, res):
    x, y, w, h = rect
    return Rect(x * res, y * res, w * res, h * res)


@dataclass(frozen=True)
class TwoRoomScene:
    """Two identical rooms side by side opening onto one corridor.

    The corridor runs along the top of both rooms and extends much further
    past the left room than past the right one, so the view from inside
    either room is identical while the corridor is not.
    """
    spec: SceneSpec
    left_room: Rect
    right_room: Rect
    split_x: float = field(default=0.0)

    def room_masks(self, x, y):
        return self.left_room.contains(x, y), self.right_room.contains(x, y)

    def side_masks(self, x, y):
        """Left/right halves of the building, split midway between the rooms."""
        x = np.asarray(x)
        return x < self.split_x, x >= self.split_x


def two_room_scene(resolution: float = 0.1) -> TwoRoomScene:
    r = resolution
    room = 30  # cells
    wall = 2
    left = (0, 0, room, room)
    right = (room + wall, 0, room, room)
    corridor = (-20, room + wall, 2 * room + wall + 20, 10)
    door_x, door_w = 12, 8
    doors = [(left[0] + door_x, room, door_w, wall), (right[0] + door_x, room, door_w, wall)]
    # the same box sits in both rooms so each room alone has no symmetry
    box = (6, 5, 5, 4)
    obstacles = [(left[0] + box[0], box[1], box[2], box[3]),
                 (right[0] + box[0], box[1], box[2], box[3])]
    spec = SceneSpec(
        resolution=r,
        rooms=(_cells_to_m(left, r), _cells_to_m(right, r)),
        corridors=(_cells_to_m(corridor, r),),
        doors=tuple(_cells_to_m(d, r) for d in doors),
        obstacles=tuple(_cells_to_m(o, r) for o in obstacles),
    )
    return TwoRoomScene(spec, _cells_to_m(left, r), _cells_to_m(right, r),
                        split_x=(room + wall / 2) * r)


# -- trajectories -------------------------------------------------------------

def body_motion(a: Pose, b: Pose) -> tuple[float, float, float]:
    """Body-frame odometry (forward, lateral, heading change) taking a to b."""
    wx, wy = b.x - a.x, b.y - a.y
    c, s = math.cos(a.theta), math.sin(a.theta)
    dtheta = math.remainder(b.theta - a.theta, TWO_PI)
    return c * wx + s * wy, -s * wx + c * wy, dtheta


def random_walk(grid: FloorplanGrid, n_steps: int, o_bins: int, seed: int,
                clearance: int = 1, start: Pose | None = None) -> list[Pose]:
    """Cell-to-cell random walk whose poses sit on cell and bin centres.

    Each step moves one cell along a world axis and may turn by one bin.
    ``clearance`` keeps the walk that many cells away from walls.  ``start``
    fixes the first cell and bin (snapped to centres).
    """
    rng = np.random.default_rng(seed)
    free = grid.cells == 0
    if clearance > 0:
        h, w = grid.shape
        padded = np.pad(grid.cells, clearance, constant_values=1)
        blocked = np.zeros_like(free)
        for dr in range(-clearance, clearance + 1):
            for dc in range(-clearance, clearance + 1):
                blocked |= padded[clearance + dr:clearance + dr + h,
                                  clearance + dc:clearance + dc + w] == 1
        free = ~blocked
    cand = np.argwhere(free)
    if len(cand) == 0:
        raise InvalidSpec("no free cell with the requested clearance")
    r, c = cand[int(rng.integers(len(cand)))]
    k = int(rng.integers(o_bins))
    if start is not None:
        r, c = grid.cell_of(start.x, start.y)
        k = int(round(start.theta / (TWO_PI / o_bins))) % o_bins
        if not (grid.in_bounds(r, c) and free[r, c]):
            raise InvalidSpec("start pose is not in a free cell with the requested clearance")
    moves = [(0, 1), (1, 0), (0, -1), (-1, 0)]
    d = int(rng.integers(4))
    poses = []
    for step in range(n_steps):
        x, y = grid.cell_center(int(r), int(c))
        poses.append(Pose(x, y, TWO_PI * k / o_bins))
        if step == n_steps - 1:
            break
        options = [d] * 4 + [(d + 1) % 4, (d + 3) % 4]
        for _ in range(8):
            d = options[int(rng.integers(len(options)))]
            rr, cc = r + moves[d][0], c + moves[d][1]
            if 0 <= rr < grid.height and 0 <= cc < grid.width and free[rr, cc]:
                r, c = rr, cc
                break
            d = int(rng.integers(4))
        k = (k + int(rng.choice([-1, 0, 0, 1]))) % o_bins
    return poses


def two_room_trajectory(scene: TwoRoomScene) -> list[Pose]:
    """Walk inside the left room facing away from its door, then leave.

    Poses sit on cell and 16-bin orientation centres.  The robot first moves
    around the lower part of the room (the view is identical in both rooms),
    turns north, walks out through the door, turns west in the corridor and
    follows it.
    """
    r = scene.spec.resolution
    room = scene.left_room
    half = math.pi / 2
    x = room.x + 20.5 * r
    y = room.y + 15.5 * r
    th = 3 * half
    out = [Pose(x, y, th)]
    for _ in range(3):
        x -= r
        out.append(Pose(x, y, th))
    out.append(Pose(x, y, 0.0))
    th = half
    out.append(Pose(x, y, th))
    door_y = room.y + room.h
    while y + 2 * r < door_y:
        y += 2 * r
        out.append(Pose(x, y, th))
    y += 2 * r  # into the doorway
    out.append(Pose(x, y, th))
    y += 4 * r  # into the corridor
    out.append(Pose(x, y, th))
    th = math.pi
    out.append(Pose(x, y, th))
    for _ in range(4):
        x -= 2 * r
        out.append(Pose(x, y, th))
    return out
