"""Simulated spinning LiDAR and ground-truth panoptic camera."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from ..cloud import LidarScan
from ..geometry import CameraModel, Pose3D
from ..masks import PanopticFrame
from ..taxonomy import ClassRegistry, default_registry
from .world import World, cast_rays


@dataclass(frozen=True)
class LidarPattern:
    channels: int = 64
    azimuth_steps: int = 512
    elevation_min: float = math.radians(-40.0)
    elevation_max: float = math.radians(5.0)
    max_range: float = 40.0
    range_sigma: float = 0.0  # m, Gaussian range noise

    def __post_init__(self):
        if self.channels < 1 or self.azimuth_steps < 1:
            raise ValueError("pattern needs at least one channel and one azimuth step")
        if self.elevation_min > self.elevation_max:
            raise ValueError("elevation_min must not exceed elevation_max")
        if self.max_range <= 0 or self.range_sigma < 0:
            raise ValueError("max_range must be positive and range_sigma non-negative")

    def directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, channel-major ``(C * A, 3)``."""
        return _directions(self)


@functools.lru_cache(maxsize=8)
def _directions(pattern: LidarPattern) -> np.ndarray:
    if pattern.channels == 1:
        el = np.array([pattern.elevation_min])
    else:
        el = np.linspace(pattern.elevation_min, pattern.elevation_max, pattern.channels)
    az = np.arange(pattern.azimuth_steps) * (2 * math.pi / pattern.azimuth_steps)
    e, a = np.meshgrid(el, az, indexing="ij")
    ce = np.cos(e)
    d = np.stack([ce * np.cos(a), ce * np.sin(a), np.sin(e)], axis=-1).reshape(-1, 3)
    d.setflags(write=False)
    return d


def simulate_lidar(world: World, sensor_pose: Pose3D, pattern: LidarPattern, rng=None, stamp: float | None = None) -> LidarScan:
    """Ray-cast one sweep. Points are returned in the sensor frame; misses are dropped."""
    d_sensor = pattern.directions()
    d_world = d_sensor @ sensor_pose.R.T
    t, cls, _ = cast_rays(world, sensor_pose.t, d_world, pattern.max_range)
    hit = np.isfinite(t)
    r = t[hit]
    if pattern.range_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        r = np.maximum(r + rng.normal(0.0, pattern.range_sigma, size=len(r)), 0.0)
    pts = d_sensor[hit] * r[:, None]
    return LidarScan(pts, world.time if stamp is None else stamp, sensor_pose, truth_labels=cls[hit])


@dataclass(frozen=True)
class Confusion:
    """Pixels of either class get probability ``1 - ratio`` on their class and
    ``ratio`` on the other one."""

    class_a: int
    class_b: int
    ratio: float
    fraction: float = 1.0  # share of affected pixels, drawn per pixel

    def __post_init__(self):
        if not (0 <= self.ratio <= 1 and 0 <= self.fraction <= 1):
            raise ValueError("ratio and fraction must lie in [0, 1]")


@dataclass(frozen=True)
class SegmentationNoise:
    confusions: tuple = field(default_factory=tuple)


def pixel_rays(cam: CameraModel) -> np.ndarray:
    """Optical-frame unit rays through pixel centers, row-major ``(H * W, 3)``.

    The center of pixel ``(u, v)`` sits at the integer coordinate ``(u, v)``, which
    matches the round-to-nearest pixel lookup in label_points.
    """
    u, v = np.meshgrid(np.arange(cam.width, dtype=float), np.arange(cam.height, dtype=float))
    d = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def render_truth(world: World, camera_pose: Pose3D, cam: CameraModel):
    """Ground-truth ``(class_id, instance)`` rasters seen from ``camera_pose``."""
    d = pixel_rays(cam) @ camera_pose.R.T
    _, cls, inst = cast_rays(world, camera_pose.t, d)
    return cls.reshape(cam.height, cam.width), inst.reshape(cam.height, cam.width)


def render_segmentation(world: World, camera_pose: Pose3D, cam: CameraModel, noise: SegmentationNoise = SegmentationNoise(),
                        rng=None, registry: ClassRegistry | None = None, stamp: float | None = None) -> PanopticFrame:
    """Panoptic frame from the ground truth with optional pairwise confusion."""
    registry = registry or default_registry()
    cls, inst = render_truth(world, camera_pose, cam)
    ids = registry.ids
    chan = np.full(256, -1, dtype=np.int64)
    chan[ids] = np.arange(len(ids))
    h, w = cls.shape
    probs = np.zeros((h, w, len(ids)), dtype=np.float32)
    rr, cc = np.mgrid[0:h, 0:w]
    probs[rr, cc, chan[cls]] = 1.0
    thing = registry.thing_lut()
    inst = np.where(thing[cls], inst, 0).astype(np.int32)
    for conf in noise.confusions:
        for src, dst in ((conf.class_a, conf.class_b), (conf.class_b, conf.class_a)):
            hit = cls == src
            if conf.fraction < 1.0:
                rng = rng if rng is not None else np.random.default_rng(0)
                hit &= rng.random(cls.shape) < conf.fraction
            r, c = np.nonzero(hit)
            probs[r, c, chan[src]] = 1.0 - conf.ratio
            probs[r, c, chan[dst]] = conf.ratio
    return PanopticFrame(probs, ids.copy(), inst, world.time if stamp is None else stamp)


@dataclass(frozen=True)
class SensorRig:
    """Co-located LiDAR and camera on a mast; sharing the optical center keeps
    their occlusions identical."""

    mount_height: float = 2.5
    pitch_down: float = math.radians(20.0)
    lidar: LidarPattern = LidarPattern()
    camera_width: int = 160
    camera_height: int = 120
    camera_hfov: float = math.radians(120.0)

    def lidar_extrinsic(self) -> Pose3D:
        return Pose3D((0.0, 0.0, self.mount_height), frame_id="body", child_frame_id="lidar")

    def camera(self) -> CameraModel:
        from ..geometry import forward_camera_extrinsic

        ext = forward_camera_extrinsic(0.0, 0.0, self.mount_height, pitch_down=self.pitch_down)
        return CameraModel.from_fov(self.camera_width, self.camera_height, self.camera_hfov, ext)


def body_pose(x: float, y: float, heading: float, stamp: float = 0.0) -> Pose3D:
    return Pose3D.from_xyz_rpy(x, y, 0.0, yaw=heading, frame_id="world", child_frame_id="body", stamp=stamp)


class SimMaskSource:
    """Mask source rendering frames on demand from a live world."""

    def __init__(self, world_fn, camera_pose_fn, cam: CameraModel, noise: SegmentationNoise = SegmentationNoise(),
                 rng=None, registry: ClassRegistry | None = None):
        self.world_fn = world_fn
        self.camera_pose_fn = camera_pose_fn
        self.cam = cam
        self.noise = noise
        self.rng = rng
        self.registry = registry or default_registry()

    def next_mask(self, stamp: float | None = None) -> PanopticFrame:
        world = self.world_fn()
        return render_segmentation(world, self.camera_pose_fn(), self.cam, self.noise, self.rng, self.registry, stamp)
