"""Synthetic flat world: terrain patches, extruded obstacles and scripted actors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from matplotlib.path import Path as MplPath


def _polygon(points) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(p) < 3:
        raise ValueError("a polygon needs at least 3 vertices")
    return p


def _signed_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class TerrainPatch:
    polygon: np.ndarray
    class_id: int

    def __post_init__(self):
        object.__setattr__(self, "polygon", _polygon(self.polygon))

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return MplPath(self.polygon).contains_points(xy, radius=1e-9)


@dataclass(frozen=True)
class Obstacle:
    """Convex polygon extruded from the ground up to ``height``."""

    polygon: np.ndarray
    height: float
    class_id: int

    def __post_init__(self):
        p = _polygon(self.polygon)
        if _signed_area(p) < 0:
            p = p[::-1].copy()
        if self.height <= 0:
            raise ValueError("obstacle height must be positive")
        # convexity: all turns have the same sign
        d = np.diff(np.vstack([p, p[:2]]), axis=0)
        cross = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
        if np.any(cross < -1e-12):
            raise ValueError("obstacle polygons must be convex")
        object.__setattr__(self, "polygon", p)


def box_polygon(cx, cy, lx, ly) -> np.ndarray:
    hx, hy = lx / 2.0, ly / 2.0
    return np.array([[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]])


@dataclass
class Actor:
    """Axis-aligned box moving along a waypoint script at constant speed."""

    size: tuple[float, float, float]  # lx, ly, height
    class_id: int
    waypoints: np.ndarray
    speed: float = 1.0
    instance_id: int = 1
    delay: float = 0.0  # s spent at the first waypoint before moving
    elapsed: float = 0.0

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        if len(self.waypoints) == 0:
            raise ValueError("actor needs at least one waypoint")
        if self.speed < 0:
            raise ValueError("actor speed must be non-negative")
        if any(s <= 0 for s in self.size):
            raise ValueError("actor size must be positive")

    @property
    def position(self) -> np.ndarray:
        travel = self.speed * max(0.0, self.elapsed - self.delay)
        wp = self.waypoints
        for a, b in zip(wp[:-1], wp[1:]):
            seg = float(np.hypot(*(b - a)))
            if travel <= seg:
                return a + (b - a) * (travel / seg) if seg > 0 else a.copy()
            travel -= seg
        return wp[-1].copy()

    def polygon(self) -> np.ndarray:
        x, y = self.position
        return box_polygon(x, y, self.size[0], self.size[1])


@dataclass
class World:
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    default_class: int
    terrain: list = field(default_factory=list)  # later patches paint over earlier ones
    obstacles: list = field(default_factory=list)
    actors: list = field(default_factory=list)
    time: float = 0.0
    sky_class: int = 34

    def terrain_class(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        out = np.full(len(xy), self.default_class, dtype=np.uint8)
        for patch in self.terrain:
            out[patch.contains(xy)] = patch.class_id
        return out

    def copy(self) -> "World":
        return replace(self, actors=[replace(a) for a in self.actors], terrain=list(self.terrain), obstacles=list(self.obstacles))


def step_actors(world: World, dt: float) -> World:
    """Advance every actor script by ``dt`` seconds; returns a new world."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = world.copy()
    for a in out.actors:
        a.elapsed += dt
    out.time = world.time + dt
    return out


# -- ray casting --------------------------------------------------------------


def _prism_hits(origin, dirs, polygon, height):
    """Entry distance of rays into a convex prism (``inf`` on a miss)."""
    n = len(dirs)
    t0 = np.zeros(n)
    t1 = np.full(n, np.inf)
    ok = np.ones(n, dtype=bool)
    nxt = np.roll(polygon, -1, axis=0)
    planes = []
    for a, b in zip(polygon, nxt):
        e = b - a
        planes.append((np.array([e[1], -e[0], 0.0]), np.array([a[0], a[1], 0.0])))
    planes.append((np.array([0.0, 0.0, -1.0]), np.zeros(3)))
    planes.append((np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, height])))
    for normal, point in planes:
        num = float(np.dot(normal, origin - point))
        den = dirs @ normal
        par = np.abs(den) < 1e-15
        ok &= ~(par & (num > 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -num / den
        ent = ~par & (den < 0)
        ext = ~par & (den > 0)
        t0 = np.where(ent, np.maximum(t0, t), t0)
        t1 = np.where(ext, np.minimum(t1, t), t1)
    hit = ok & (t0 <= t1)
    return np.where(hit, t0, np.inf)


def cast_rays(world: World, origin, dirs, max_range: float = np.inf):
    """First hit of each unit ray against ground, obstacles and actors.

    Returns ``(t, class_id, instance_id)``; ``t`` is ``inf`` on a miss and the class of
    a miss is ``world.sky_class``.
    """
    origin = np.asarray(origin, dtype=float)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    n = len(dirs)
    best = np.full(n, np.inf)
    cls = np.full(n, world.sky_class, dtype=np.uint8)
    inst = np.zeros(n, dtype=np.int32)
    down = dirs[:, 2] < 0
    if origin[2] >= 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            tg = np.where(down, -origin[2] / dirs[:, 2], np.inf)
        best = tg
        ground = np.isfinite(tg)
        if ground.any():
            xy = origin[:2] + dirs[ground, :2] * tg[ground, None]
            cls[ground] = world.terrain_class(xy)
    for obs in world.obstacles:
        t = _prism_hits(origin, dirs, obs.polygon, obs.height)
        closer = t < best
        best = np.where(closer, t, best)
        cls[closer] = obs.class_id
        inst[closer] = 0
    for act in world.actors:
        t = _prism_hits(origin, dirs, act.polygon(), act.size[2])
        closer = t < best
        best = np.where(closer, t, best)
        cls[closer] = act.class_id
        inst[closer] = act.instance_id
    miss = best > max_range
    best[miss] = np.inf
    cls[miss] = world.sky_class
    inst[miss] = 0
    return best, cls, inst


# -- ground truth occupancy ---------------------------------------------------


def truth_occupancy(world: World, origin, shape, resolution, registry, include_actors: bool = True) -> np.ndarray:
    """Cells overlapping an obstacle or actor with positive area, or lying on
    non-traversable terrain (sampled at the cell center)."""
    rows, cols = shape
    ox, oy = origin
    occ = np.zeros(shape, dtype=np.uint8)
    xs = ox + (np.arange(cols) + 0.5) * resolution
    ys = oy + (np.arange(rows) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    trav = registry.traversable_lut()
    occ |= (~trav[world.terrain_class(centers)]).reshape(shape).astype(np.uint8)
    polys = [o.polygon for o in world.obstacles]
    if include_actors:
        polys += [a.polygon() for a in world.actors]
    for poly in polys:
        _mark_polygon(occ, poly, ox, oy, resolution)
    return occ


def _mark_polygon(occ, poly, ox, oy, res):
    from shapely.geometry import Polygon, box

    shape = Polygon(poly)
    xmin, ymin, xmax, ymax = shape.bounds
    c0 = max(0, math.floor((xmin - ox) / res))
    c1 = min(occ.shape[1] - 1, math.floor((xmax - ox) / res))
    r0 = max(0, math.floor((ymin - oy) / res))
    r1 = min(occ.shape[0] - 1, math.floor((ymax - oy) / res))
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            cell = box(ox + c * res, oy + r * res, ox + (c + 1) * res, oy + (r + 1) * res)
            if shape.intersection(cell).area > 1e-9:
                occ[r, c] = 1
