"""Scenario documents (YAML) and their validation.

Every check raises :class:`ConfigError` naming the dotted path of the bad field,
e.g. ``world.actors[1].speed``. Class references accept names or ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..cloud import CloudParams, GroundParams
from ..errors import ConfigError, PannavError
from ..gridmap import AprioriMap, MapConfig
from ..planner import Footprint, PlannerConfig
from ..taxonomy import ClassRegistry, default_registry, load_registry
from ..tracker import TrackerConfig
from .sensors import Confusion, LidarPattern, SegmentationNoise, SensorRig
from .world import Actor, Obstacle, TerrainPatch, World

BUNDLED = ("empty-world", "narrow-corridor", "mud-vs-road", "adversarial-crossing", "geofence")


@dataclass
class ScenarioConfig:
    name: str
    world: World
    start: tuple[float, float, float]
    goal: tuple[float, float]
    footprint: Footprint
    rig: SensorRig
    noise: SegmentationNoise
    cloud: CloudParams
    tracker: TrackerConfig
    map: MapConfig
    planner: PlannerConfig
    duration: float
    sensor_rate: float = 10.0
    seed: int = 0
    apriori: AprioriMap | None = None
    nopath_cycles: int = 10
    seed_start_radius: float = 0.5  # m margin around the start footprint seeded from the terrain
    registry: ClassRegistry = field(default_factory=default_registry)
    document: dict = field(default_factory=dict, repr=False)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("pannav.data").joinpath("scenarios", f"{name}.yaml")))


def load_scenario(source, seed: int | None = None, overrides: dict | None = None) -> ScenarioConfig:
    """Parse a scenario from a path, a bundled name, YAML text or a mapping."""
    if isinstance(source, dict):
        doc = source
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            p = Path(source)
            if isinstance(source, str) and source in BUNDLED:
                p = bundled_path(source)
            if p.is_file():
                text = p.read_text()
            else:
                raise ConfigError("scenario", f"file not found: {source}")
        if text is None:
            text = str(source)
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("scenario", f"not valid YAML ({exc.__class__.__name__})") from None
    if not isinstance(doc, dict):
        raise ConfigError("scenario", "top level must be a mapping")
    doc = _deep_merge(doc, overrides or {})
    if seed is not None:
        doc = {**doc, "seed": int(seed)}
    return parse_scenario(doc)


def _deep_merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _num(doc, key, path, default=None, *, positive=False, nonneg=False, integer=False):
    if key not in doc or doc[key] is None:
        if default is None:
            raise ConfigError(path, "required")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(path, f"must be >= 0, got {v!r}")
    return int(v) if integer else float(v)


def _map(doc, key, path) -> dict:
    v = doc.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(path, "expected a mapping")
    return v


def _class(registry, v, path) -> int:
    try:
        cid = registry.id_of(v)
    except (KeyError, ValueError, PannavError):
        raise ConfigError(path, f"unknown class {v!r}") from None
    if cid not in registry:
        raise ConfigError(path, f"unknown class {v!r}")
    return cid


def _points(v, path, n=None) -> np.ndarray:
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a list of [x, y] pairs") from None
    if arr.ndim != 2 or arr.shape[1] != 2 or not np.all(np.isfinite(arr)):
        raise ConfigError(path, "expected a list of [x, y] pairs")
    if n is not None and len(arr) < n:
        raise ConfigError(path, f"needs at least {n} points")
    return arr


def _vec(v, path, n) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(path, f"expected {n} numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ConfigError(f"{path}[{i}]", f"expected a finite number, got {x!r}")
        out.append(float(x))
    return tuple(out)


def _dataclass_from(cls, doc, path, **extra):
    """Build a frozen config dataclass from a mapping, mapping errors to field paths."""
    names = {f.name for f in fields(cls)}
    kw = {}
    for k, v in doc.items():
        if k not in names:
            raise ConfigError(f"{path}.{k}", "unknown field")
        kw[k] = v
    kw.update(extra)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_scenario(doc: dict) -> ScenarioConfig:
    registry = default_registry()
    if "registry" in doc:
        try:
            registry = load_registry(doc["registry"])
        except PannavError as exc:
            raise ConfigError("registry", str(exc)) from None
    name = str(doc.get("name", "scenario"))
    duration = _num(doc, "duration", "duration", positive=True)
    seed = _num(doc, "seed", "seed", 0, integer=True, nonneg=True)

    # world
    wd = _map(doc, "world", "world")
    if "bounds" not in wd:
        raise ConfigError("world.bounds", "required")
    bounds = _vec(wd["bounds"], "world.bounds", 4)
    if not (bounds[0] < bounds[2] and bounds[1] < bounds[3]):
        raise ConfigError("world.bounds", "expected [xmin, ymin, xmax, ymax] with min < max")
    default_class = _class(registry, wd.get("default_class", "gravel"), "world.default_class")
    terrain = []
    for i, t in enumerate(wd.get("terrain") or []):
        p = f"world.terrain[{i}]"
        terrain.append(TerrainPatch(_points(t.get("polygon"), f"{p}.polygon", 3), _class(registry, t.get("class"), f"{p}.class")))
    obstacles = []
    for i, o in enumerate(wd.get("obstacles") or []):
        p = f"world.obstacles[{i}]"
        if "box" in o:
            cx, cy, lx, ly = _vec(o["box"], f"{p}.box", 4)
            if lx <= 0 or ly <= 0:
                raise ConfigError(f"{p}.box", "sizes must be positive")
            from .world import box_polygon

            poly = box_polygon(cx, cy, lx, ly)
        else:
            poly = _points(o.get("polygon"), f"{p}.polygon", 3)
        h = _num(o, "height", f"{p}.height", positive=True)
        try:
            obstacles.append(Obstacle(poly, h, _class(registry, o.get("class"), f"{p}.class")))
        except ValueError as exc:
            raise ConfigError(f"{p}.polygon", str(exc)) from None
    actors = []
    for i, a in enumerate(wd.get("actors") or []):
        p = f"world.actors[{i}]"
        size = _vec(a.get("size"), f"{p}.size", 3)
        if min(size) <= 0:
            raise ConfigError(f"{p}.size", "sizes must be positive")
        actors.append(
            Actor(
                size,
                _class(registry, a.get("class", "person"), f"{p}.class"),
                _points(a.get("waypoints"), f"{p}.waypoints", 1),
                speed=_num(a, "speed", f"{p}.speed", 1.0, nonneg=True),
                instance_id=i + 1,
                delay=_num(a, "delay", f"{p}.delay", 0.0, nonneg=True),
            )
        )
    world = World(bounds, default_class, terrain, obstacles, actors, sky_class=registry.id_of("sky") if "sky" in [s.name for s in registry] else 0)

    # robot
    rd = _map(doc, "robot", "robot")
    start = _vec(rd.get("start"), "robot.start", 3)
    goal = _vec(rd.get("goal"), "robot.goal", 2)
    fd = _map(rd, "footprint", "robot.footprint")
    fp = _dataclass_from(Footprint, fd, "robot.footprint")

    # sensors
    sd = _map(doc, "sensors", "sensors")
    rate = _num(sd, "rate", "sensors.rate", 10.0, positive=True)
    ld = dict(_map(sd, "lidar", "sensors.lidar"))
    for k in ("elevation_min", "elevation_max"):
        if k in ld:
            ld[k] = math.radians(_num(ld, k, f"sensors.lidar.{k}"))
    for k in ("channels", "azimuth_steps"):
        if k in ld:
            ld[k] = _num(ld, k, f"sensors.lidar.{k}", positive=True, integer=True)
    pattern = _dataclass_from(LidarPattern, ld, "sensors.lidar")
    cd = _map(sd, "camera", "sensors.camera")
    rig_kw = {"lidar": pattern}
    if "mount_height" in sd:
        rig_kw["mount_height"] = _num(sd, "mount_height", "sensors.mount_height", positive=True)
    if "pitch_down" in cd:
        rig_kw["pitch_down"] = math.radians(_num(cd, "pitch_down", "sensors.camera.pitch_down"))
    if "width" in cd:
        rig_kw["camera_width"] = _num(cd, "width", "sensors.camera.width", positive=True, integer=True)
    if "height" in cd:
        rig_kw["camera_height"] = _num(cd, "height", "sensors.camera.height", positive=True, integer=True)
    if "hfov" in cd:
        hfov = _num(cd, "hfov", "sensors.camera.hfov", positive=True)
        if hfov >= 180:
            raise ConfigError("sensors.camera.hfov", "must be below 180 degrees")
        rig_kw["camera_hfov"] = math.radians(hfov)
    rig = SensorRig(**rig_kw)

    # noise
    nd = _map(doc, "noise", "noise")
    confs = []
    for i, c in enumerate(nd.get("confusion") or []):
        p = f"noise.confusion[{i}]"
        cls = c.get("classes")
        if not isinstance(cls, list) or len(cls) != 2:
            raise ConfigError(f"{p}.classes", "expected two classes")
        try:
            confs.append(Confusion(_class(registry, cls[0], f"{p}.classes[0]"), _class(registry, cls[1], f"{p}.classes[1]"),
                                   _num(c, "ratio", f"{p}.ratio"), _num(c, "fraction", f"{p}.fraction", 1.0)))
        except ValueError as exc:
            raise ConfigError(p, str(exc)) from None
    if "range_sigma" in nd:
        sigma = _num(nd, "range_sigma", "noise.range_sigma", nonneg=True)
        rig = SensorRig(**{**rig_kw, "lidar": _dataclass_from(LidarPattern, {**ld, "range_sigma": sigma}, "sensors.lidar")})

    # pipeline
    pd = dict(_map(doc, "pipeline", "pipeline"))
    gd = _map(pd, "ground", "pipeline.ground")
    pd.pop("ground", None)
    ground = _dataclass_from(GroundParams, gd, "pipeline.ground", seed=seed)
    cloud = _dataclass_from(CloudParams, pd, "pipeline", ground=ground)
    tracker = _dataclass_from(TrackerConfig, _map(doc, "tracker", "tracker"), "tracker")
    mcfg = _dataclass_from(MapConfig, _map(doc, "map", "map"), "map")
    pl = dict(_map(doc, "planner", "planner"))
    pl.setdefault("robot_speed", _num(rd, "speed", "robot.speed", 0.5, positive=True))
    pl.setdefault("goal_tolerance", _num(rd, "goal_tolerance", "robot.goal_tolerance", 0.5, positive=True))
    planner = _dataclass_from(PlannerConfig, pl, "planner", seed=seed)
    if fp.stride > mcfg.resolution:
        raise ConfigError("robot.footprint.stride", "must not exceed map.resolution")

    apriori = None
    if doc.get("apriori"):
        apriori = _parse_apriori(_map(doc, "apriori", "apriori"))

    term = _map(doc, "termination", "termination")
    return ScenarioConfig(
        name=name,
        world=world,
        start=start,
        goal=goal,
        footprint=fp,
        rig=rig,
        noise=SegmentationNoise(tuple(confs)),
        cloud=cloud,
        tracker=tracker,
        map=mcfg,
        planner=planner,
        duration=duration,
        sensor_rate=rate,
        seed=seed,
        apriori=apriori,
        nopath_cycles=_num(term, "nopath_cycles", "termination.nopath_cycles", 10, positive=True, integer=True),
        seed_start_radius=_num(rd, "seed_radius", "robot.seed_radius", 0.5, nonneg=True),
        registry=registry,
        document=doc,
    )


def _parse_apriori(ad: dict) -> AprioriMap:
    """Either ``path`` to an exported raster or inline ``bounds`` + occupied ``polygons``/``rings``."""
    if "path" in ad:
        from ..gridmap import read_apriori

        try:
            return read_apriori(ad["path"])
        except (OSError, ValueError, PannavError) as exc:
            raise ConfigError("apriori.path", str(exc)) from None
    bounds = _vec(ad.get("bounds"), "apriori.bounds", 4)
    res = _num(ad, "resolution", "apriori.resolution", 0.2, positive=True)
    cols = int(math.ceil((bounds[2] - bounds[0]) / res - 1e-9))
    rows = int(math.ceil((bounds[3] - bounds[1]) / res - 1e-9))
    if rows <= 0 or cols <= 0:
        raise ConfigError("apriori.bounds", "empty raster")
    occ = np.zeros((rows, cols), np.uint8)
    xs = bounds[0] + (np.arange(cols) + 0.5) * res
    ys = bounds[1] + (np.arange(rows) + 0.5) * res
    gx, gy = np.meshgrid(xs, ys)
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    from matplotlib.path import Path as MplPath

    for i, poly in enumerate(ad.get("polygons") or []):
        pts = _points(poly, f"apriori.polygons[{i}]", 3)
        occ |= MplPath(pts).contains_points(centers).reshape(rows, cols)
    for i, ring in enumerate(ad.get("rings") or []):
        # a ring is an axis-aligned rectangle [xmin, ymin, xmax, ymax] whose band of width `width` is occupied
        p = f"apriori.rings[{i}]"
        rect = _vec(ring.get("rect"), f"{p}.rect", 4)
        w = _num(ring, "width", f"{p}.width", positive=True)
        inside_outer = (gx >= rect[0]) & (gx <= rect[2]) & (gy >= rect[1]) & (gy <= rect[3])
        inside_inner = (gx > rect[0] + w) & (gx < rect[2] - w) & (gy > rect[1] + w) & (gy < rect[3] - w)
        occ |= (inside_outer & ~inside_inner).astype(np.uint8)
    return AprioriMap(occ, res, (bounds[0], bounds[1]))


def validate_file(path) -> ScenarioConfig:
    return load_scenario(Path(path))


def scenario_to_yaml(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump({**cfg.document, "seed": cfg.seed}, sort_keys=True)
