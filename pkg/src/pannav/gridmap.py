"""Two-layer semantic grid map with derived occupancy and cost layers.

Cell ``(row, col)`` covers ``[x0 + col*res, x0 + (col+1)*res) x [y0 + row*res, ...)``
where ``(x0, y0)`` is ``origin``. Layers:

* ``static_class``  persistent terrain/structure classes, 0 = never observed
* ``dynamic_class`` rewritten every cycle from confirmed tracks, 0 = empty
* ``merged_class``  dynamic where set, static elsewhere
* ``occupancy``     0 free / 1 occupied
* ``cost``          per-cell traversal cost, ``inf`` on occupied cells
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GridMismatch
from .taxonomy import UNKNOWN_ID, UNKNOWN_OBJECT_ID, ClassRegistry

EMPTY = 0


@dataclass(frozen=True)
class MapConfig:
    resolution: float = 0.2
    size: float = 60.0  # m, side length of the square map
    inflation_radius: float = 0.3
    fill_radius: float = 0.0  # m, gap filling of never-observed cells from the same scan
    follow_robot: bool = True
    mark_untracked: bool = True


@dataclass
class MapSnapshot:
    """Read-only view handed to the planner for one cycle."""

    occupancy: np.ndarray
    cost: np.ndarray
    resolution: float
    origin: tuple[float, float]
    stamp: float = 0.0
    merged_class: np.ndarray | None = None

    def __post_init__(self):
        for a in (self.occupancy, self.cost, self.merged_class):
            if a is not None:
                a.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def world_to_cell(self, xy) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=float)
        col = np.floor((xy[..., 0] - self.origin[0]) / self.resolution).astype(np.int64)
        row = np.floor((xy[..., 1] - self.origin[1]) / self.resolution).astype(np.int64)
        return row, col

    @property
    def extent(self) -> tuple[float, float, float, float]:
        r, c = self.shape
        x0, y0 = self.origin
        return x0, y0, x0 + c * self.resolution, y0 + r * self.resolution

    @classmethod
    def free(cls, width: float, height: float, resolution: float = 0.2, cost: float = 0.0, origin=(0.0, 0.0)):
        """All-free map with uniform cost, mostly for tests and benchmarks."""
        rows, cols = int(round(height / resolution)), int(round(width / resolution))
        return cls(np.zeros((rows, cols), np.uint8), np.full((rows, cols), float(cost)), resolution, tuple(origin))


@dataclass
class LayeredGridMap:
    resolution: float
    origin: tuple[float, float]
    shape: tuple[int, int]
    static_class: np.ndarray = field(default=None)
    dynamic_class: np.ndarray = field(default=None)
    merged_class: np.ndarray = field(default=None)
    occupancy: np.ndarray = field(default=None)
    cost: np.ndarray = field(default=None)
    stamp: float = 0.0
    stats: dict = field(default_factory=lambda: {"out_of_bounds": 0})

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        r, c = self.shape
        if self.static_class is None:
            self.static_class = np.zeros((r, c), np.uint8)
        if self.dynamic_class is None:
            self.dynamic_class = np.zeros((r, c), np.uint8)
        if self.merged_class is None:
            self.merged_class = self.static_class.copy()
        if self.occupancy is None:
            self.occupancy = np.ones((r, c), np.uint8)
        if self.cost is None:
            self.cost = np.full((r, c), math.inf)
        for name in ("static_class", "dynamic_class", "merged_class", "occupancy", "cost"):
            if getattr(self, name).shape != (r, c):
                raise ValueError(f"layer {name} has shape {getattr(self, name).shape}, expected {(r, c)}")

    @classmethod
    def centered(cls, x: float, y: float, cfg: MapConfig = MapConfig()) -> "LayeredGridMap":
        n = int(round(cfg.size / cfg.resolution))
        x0 = math.floor((x - cfg.size / 2) / cfg.resolution) * cfg.resolution
        y0 = math.floor((y - cfg.size / 2) / cfg.resolution) * cfg.resolution
        return cls(cfg.resolution, (x0, y0), (n, n))

    @classmethod
    def covering(cls, xmin, ymin, xmax, ymax, resolution=0.2) -> "LayeredGridMap":
        cols = int(math.ceil((xmax - xmin) / resolution - 1e-9))
        rows = int(math.ceil((ymax - ymin) / resolution - 1e-9))
        return cls(resolution, (float(xmin), float(ymin)), (rows, cols))

    def world_to_cell(self, xy):
        xy = np.asarray(xy, dtype=float)
        col = np.floor((xy[..., 0] - self.origin[0]) / self.resolution).astype(np.int64)
        row = np.floor((xy[..., 1] - self.origin[1]) / self.resolution).astype(np.int64)
        return row, col

    def cell_center(self, row, col):
        return (
            self.origin[0] + (np.asarray(col) + 0.5) * self.resolution,
            self.origin[1] + (np.asarray(row) + 0.5) * self.resolution,
        )

    def in_bounds(self, row, col):
        return (row >= 0) & (row < self.shape[0]) & (col >= 0) & (col < self.shape[1])

    def copy(self) -> "LayeredGridMap":
        return LayeredGridMap(
            self.resolution, self.origin, self.shape,
            self.static_class.copy(), self.dynamic_class.copy(), self.merged_class.copy(),
            self.occupancy.copy(), self.cost.copy(), self.stamp, dict(self.stats),
        )

    def snapshot(self) -> MapSnapshot:
        return MapSnapshot(self.occupancy.copy(), self.cost.copy(), self.resolution, self.origin, self.stamp,
                           self.merged_class.copy())

    def known_static(self) -> np.ndarray:
        return self.static_class != EMPTY


def update_static(gmap: LayeredGridMap, cloud, fill_radius: float = 0.0) -> LayeredGridMap:
    """Rasterise one scan's static cloud into the static layer (in place).

    Each cell hit this scan takes the modal known label of its points; when the
    cloud carries a ground mask, non-ground points decide the cell if any are
    present. Unknown points never write, and cells without points are untouched.
    ``fill_radius`` > 0 additionally paints never-observed cells from the nearest
    cell labeled in this scan, within that radius.
    """
    pts, labels = cloud.points, cloud.labels.astype(np.int64)
    row, col = gmap.world_to_cell(pts[:, :2])
    inb = gmap.in_bounds(row, col)
    gmap.stats["out_of_bounds"] = gmap.stats.get("out_of_bounds", 0) + int((~inb).sum())
    keep = inb & (labels != UNKNOWN_ID)
    if cloud.ground is not None:
        prio = np.where(cloud.ground, 0, 1)[keep]
    else:
        prio = np.zeros(int(keep.sum()), dtype=np.int64)
    lin = row[keep] * gmap.shape[1] + col[keep]
    lab = labels[keep]
    scan_layer = np.zeros(gmap.shape, np.uint8)
    if len(lin):
        # one (cell, priority, label) key; count, then pick per cell the best
        # priority, then the highest count, then the lowest label id
        key = (lin * 2 + prio) * 256 + lab
        uniq, counts = np.unique(key, return_counts=True)
        u_lab = uniq % 256
        u_prio = (uniq // 256) % 2
        u_cell = uniq // 512
        order = np.lexsort((u_lab, -counts, -u_prio, u_cell))
        u_cell = u_cell[order]
        first = np.r_[True, u_cell[1:] != u_cell[:-1]]
        cells = u_cell[first]
        scan_layer.flat[cells] = u_lab[order][first]
    if fill_radius > 0 and scan_layer.any():
        dist, (ri, ci) = ndimage.distance_transform_edt(scan_layer == 0, return_indices=True)
        near = (dist * gmap.resolution <= fill_radius) & (scan_layer == 0) & (gmap.static_class == EMPTY)
        gmap.static_class[near] = scan_layer[ri[near], ci[near]]
    hit = scan_layer != 0
    gmap.static_class[hit] = scan_layer[hit]
    gmap.stamp = max(gmap.stamp, float(cloud.stamp))
    return gmap


# Box edges this close to a grid line (in cells) count as lying on it, so tracker
# jitter on a stationary object cannot toggle a sliver column on and off.
RASTER_SNAP = 1e-3


def _rect_cells(gmap, xmin, ymin, xmax, ymax):
    """Index ranges of cells sharing positive area with the rectangle (clipped to the map).

    Edges within ``RASTER_SNAP`` cells of a grid line count as lying on it.
    """
    r, e = gmap.resolution, RASTER_SNAP
    c0 = max(0, math.floor((xmin - gmap.origin[0]) / r + e))
    c1 = min(gmap.shape[1] - 1, math.ceil((xmax - gmap.origin[0]) / r - e) - 1)
    r0 = max(0, math.floor((ymin - gmap.origin[1]) / r + e))
    r1 = min(gmap.shape[0] - 1, math.ceil((ymax - gmap.origin[1]) / r - e) - 1)
    return r0, r1, c0, c1


def update_dynamic(gmap: LayeredGridMap, tracks, dynamic_cloud=None, inflation_radius: float = 0.3,
                   mark_untracked: bool = True) -> LayeredGridMap:
    """Clear and re-rasterise the dynamic layer from confirmed tracks (in place).

    Each track stamps its box footprint, grown by ``inflation_radius`` on every
    side. Where footprints overlap, the track with the higher box top wins, then the
    lower track id. Tracks without a class stamp the reserved unknown-object id.
    With ``mark_untracked``, dynamic points outside every stamped footprint mark
    their own cell as unknown-object.
    """
    gmap.dynamic_class[:] = EMPTY
    top = np.full(gmap.shape, -np.inf)
    owner = np.full(gmap.shape, np.iinfo(np.int64).max)
    for t in tracks:
        xmin, ymin, xmax, ymax = t.footprint()
        ri = inflation_radius
        r0, r1, c0, c1 = _rect_cells(gmap, xmin - ri, ymin - ri, xmax + ri, ymax + ri)
        if r0 > r1 or c0 > c1:
            continue
        label = t.label if t.label != UNKNOWN_ID else UNKNOWN_OBJECT_ID
        sl = (slice(r0, r1 + 1), slice(c0, c1 + 1))
        wins = (t.top > top[sl]) | ((t.top == top[sl]) & (t.track_id < owner[sl]))
        gmap.dynamic_class[sl][wins] = label
        top[sl][wins] = t.top
        owner[sl][wins] = t.track_id
    if mark_untracked and dynamic_cloud is not None and len(dynamic_cloud):
        row, col = gmap.world_to_cell(dynamic_cloud.points[:, :2])
        inb = gmap.in_bounds(row, col)
        row, col = row[inb], col[inb]
        free = gmap.dynamic_class[row, col] == EMPTY
        gmap.dynamic_class[row[free], col[free]] = UNKNOWN_OBJECT_ID
    return gmap


def merge_layers(gmap: LayeredGridMap) -> LayeredGridMap:
    gmap.merged_class = np.where(gmap.dynamic_class != EMPTY, gmap.dynamic_class, gmap.static_class).astype(np.uint8)
    return gmap


def derive_occupancy(gmap: LayeredGridMap, registry: ClassRegistry) -> LayeredGridMap:
    """Free iff the merged class is traversable; never-observed cells are occupied."""
    trav = registry.traversable_lut()
    gmap.occupancy = np.where(trav[gmap.merged_class], 0, 1).astype(np.uint8)
    return gmap


def derive_cost(gmap: LayeredGridMap, registry: ClassRegistry) -> LayeredGridMap:
    """Registry cost on free cells, ``inf`` on occupied ones."""
    lut = registry.cost_lut()
    cost = lut[gmap.merged_class]
    gmap.cost = np.where(gmap.occupancy == 0, cost, math.inf)
    return gmap


@dataclass
class AprioriMap:
    occupancy: np.ndarray  # (rows, cols) 0/1
    resolution: float
    origin: tuple[float, float]


def resample_apriori(gmap: LayeredGridMap, apriori: AprioriMap) -> np.ndarray:
    """Nearest-cell resampling of an a-priori raster onto the map grid.

    Map cells outside the a-priori extent read as free (no prior information).
    """
    occ = np.asarray(apriori.occupancy)
    if occ.ndim != 2 or apriori.resolution <= 0:
        raise GridMismatch("a-priori raster must be 2D with a positive resolution")
    rows, cols = np.indices(gmap.shape)
    xc, yc = gmap.cell_center(rows, cols)
    ac = np.floor((xc - apriori.origin[0]) / apriori.resolution).astype(np.int64)
    ar = np.floor((yc - apriori.origin[1]) / apriori.resolution).astype(np.int64)
    inside = (ar >= 0) & (ar < occ.shape[0]) & (ac >= 0) & (ac < occ.shape[1])
    if not inside.any():
        raise GridMismatch("a-priori raster does not overlap the map")
    out = np.zeros(gmap.shape, np.uint8)
    out[inside] = (occ[ar[inside], ac[inside]] != 0).astype(np.uint8)
    return out


def union_apriori(gmap: LayeredGridMap, apriori) -> LayeredGridMap:
    """Union of occupied sets; also sets the cost of newly occupied cells to ``inf``."""
    prior = apriori if isinstance(apriori, np.ndarray) else resample_apriori(gmap, apriori)
    if prior.shape != gmap.shape:
        raise GridMismatch(f"a-priori shape {prior.shape} differs from map shape {gmap.shape}")
    gmap.occupancy = np.maximum(gmap.occupancy, (prior != 0).astype(np.uint8))
    gmap.cost = np.where(gmap.occupancy != 0, math.inf, gmap.cost)
    return gmap


def recenter(gmap: LayeredGridMap, x: float, y: float, size: float) -> LayeredGridMap:
    """Scroll the grid so (x, y) is near its center, keeping cell alignment.

    Static content moves with the world; cells scrolled in are never-observed.
    Dynamic and derived layers are left for the next cycle to recompute.
    """
    r = gmap.resolution
    x0 = gmap.origin[0] + round((x - size / 2 - gmap.origin[0]) / r) * r
    y0 = gmap.origin[1] + round((y - size / 2 - gmap.origin[1]) / r) * r
    dc = int(round((x0 - gmap.origin[0]) / r))
    dr = int(round((y0 - gmap.origin[1]) / r))
    if dc == 0 and dr == 0:
        return gmap
    rows, cols = gmap.shape
    new = np.zeros_like(gmap.static_class)
    src_r = slice(max(0, dr), min(rows, rows + dr))
    dst_r = slice(max(0, -dr), min(rows, rows - dr))
    src_c = slice(max(0, dc), min(cols, cols + dc))
    dst_c = slice(max(0, -dc), min(cols, cols - dc))
    new[dst_r, dst_c] = gmap.static_class[src_r, src_c]
    gmap.static_class = new
    gmap.origin = (gmap.origin[0] + dc * r, gmap.origin[1] + dr * r)
    gmap.dynamic_class = np.zeros_like(new)
    merge_layers(gmap)
    return gmap


def refresh(gmap: LayeredGridMap, registry: ClassRegistry, apriori=None) -> LayeredGridMap:
    """merge -> occupancy -> cost -> optional a-priori union."""
    merge_layers(gmap)
    derive_occupancy(gmap, registry)
    derive_cost(gmap, registry)
    if apriori is not None:
        union_apriori(gmap, apriori)
    return gmap


# -- raster export -----------------------------------------------------------
#
# class and occupancy layers: plain PGM (P2), maxval 255, row 0 = lowest y.
# cost layer: same header with magic "P2F" and repr() floats ("inf" for occupied).
# metadata sidecar: map.json with resolution, origin, shape, stamp.

_INT_LAYERS = ("static_class", "dynamic_class", "merged_class", "occupancy")


def write_pgm(path, arr: np.ndarray):
    rows, cols = arr.shape
    body = "\n".join(" ".join(str(int(v)) for v in row) for row in arr.tolist())
    Path(path).write_text(f"P2\n{cols} {rows}\n255\n{body}\n")


def write_float_raster(path, arr: np.ndarray):
    rows, cols = arr.shape
    body = "\n".join(" ".join(repr(float(v)) for v in row) for row in arr.tolist())
    Path(path).write_text(f"P2F\n{cols} {rows}\n{body}\n")


def read_raster(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    magic = tokens[0]
    cols, rows = int(tokens[1]), int(tokens[2])
    if magic == "P2":
        vals = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
        if vals.size != rows * cols or vals.min(initial=0) < 0 or vals.max(initial=0) > int(tokens[3]):
            raise ValueError(f"{path}: malformed PGM body")
        return vals.reshape(rows, cols).astype(np.uint8)
    if magic == "P2F":
        vals = np.array([float(t) for t in tokens[3:]])
        if vals.size != rows * cols:
            raise ValueError(f"{path}: malformed float raster body")
        return vals.reshape(rows, cols)
    raise ValueError(f"{path}: unknown raster magic {magic!r}")


def export_map(gmap: LayeredGridMap, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in _INT_LAYERS:
        write_pgm(d / f"{name}.pgm", getattr(gmap, name))
    write_float_raster(d / "cost.pgm", gmap.cost)
    meta = {"resolution": gmap.resolution, "origin": list(gmap.origin), "shape": list(gmap.shape), "stamp": gmap.stamp}
    (d / "map.json").write_text(json.dumps(meta, indent=1) + "\n")
    return d


def import_map(directory) -> LayeredGridMap:
    d = Path(directory)
    meta = json.loads((d / "map.json").read_text())
    layers = {name: read_raster(d / f"{name}.pgm") for name in _INT_LAYERS}
    layers["cost"] = read_raster(d / "cost.pgm")
    return LayeredGridMap(float(meta["resolution"]), tuple(meta["origin"]), tuple(meta["shape"]),
                          stamp=float(meta["stamp"]), **layers)


def read_apriori(path_or_dir) -> AprioriMap:
    """A-priori occupancy in the export format: a PGM plus a ``map.json`` sidecar."""
    p = Path(path_or_dir)
    pgm, meta_path = (p / "occupancy.pgm", p / "map.json") if p.is_dir() else (p, p.with_name("map.json"))
    meta = json.loads(meta_path.read_text())
    occ = read_raster(pgm)
    return AprioriMap((occ != 0).astype(np.uint8), float(meta["resolution"]), tuple(meta["origin"]))


def write_apriori(apriori: AprioriMap, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_pgm(d / "occupancy.pgm", apriori.occupancy)
    meta = {"resolution": apriori.resolution, "origin": list(apriori.origin), "shape": list(apriori.occupancy.shape)}
    (d / "map.json").write_text(json.dumps(meta, indent=1) + "\n")
    return d
