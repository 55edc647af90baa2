"""Frames, rigid transforms, pinhole projection and axis-aligned boxes.

Conventions used everywhere in the package:

* world and body frames are right-handed with +z up; the body frame has +x forward
  and +y to the left.
* the camera (optical) frame has +z forward along the optical axis, +x right and
  +y down, so the pixel row index ``v`` grows downward in the image.
* quaternions are stored as ``(w, x, y, z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCluster

NEAR_PLANE = 0.01  # meters; points at or closer than this along +z are not visible


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def quat_normalize(q) -> tuple[float, float, float, float]:
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion has zero or non-finite norm")
    if abs(n - 1.0) > 1e-12:
        q = q / n
    if q[0] < 0:
        q = -q
    return tuple(float(c) for c in q)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> tuple[float, float, float, float]:
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = (0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s)
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = ((R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s)
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = ((R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s)
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = ((R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s)
    return quat_normalize(q)


def quat_from_euler(roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0):
    """Quaternion for the intrinsic z-y'-x'' (yaw, pitch, roll) rotation."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return quat_normalize(
        (
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )
    )


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0
    frame_id: str = "world"
    stamp: float = 0.0

    def __post_init__(self):
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Pose3D:
    """Rigid transform taking coordinates in ``child_frame_id`` to ``frame_id``.

    ``frame_id`` is the target frame of the transform. ``child_frame_id`` is
    optional and only used for frame-consistency checks.
    """

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    frame_id: str = "world"
    stamp: float = 0.0
    child_frame_id: str = ""
    _R: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.frame_id:
            raise ValueError("frame_id must be non-empty")
        t = tuple(float(c) for c in self.translation)
        if len(t) != 3 or not all(math.isfinite(c) for c in t):
            raise ValueError(f"translation must be 3 finite numbers, got {self.translation!r}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", quat_normalize(self.rotation))
        object.__setattr__(self, "_R", quat_to_matrix(self.rotation))

    @classmethod
    def from_xyz_rpy(cls, x=0.0, y=0.0, z=0.0, roll=0.0, pitch=0.0, yaw=0.0, **kw) -> "Pose3D":
        return cls((x, y, z), quat_from_euler(roll, pitch, yaw), **kw)

    @classmethod
    def from_matrix(cls, R, t, **kw) -> "Pose3D":
        return cls(tuple(np.asarray(t, dtype=float)), matrix_to_quat(R), **kw)

    @property
    def R(self) -> np.ndarray:
        return self._R

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation)

    def inverse(self) -> "Pose3D":
        Rt = self._R.T
        return Pose3D.from_matrix(
            Rt,
            -Rt @ self.t,
            frame_id=self.child_frame_id or "child",
            child_frame_id=self.frame_id,
            stamp=self.stamp,
        )

    def compose(self, other: "Pose3D") -> "Pose3D":
        """``self * other``: apply ``other`` first, then ``self``."""
        return Pose3D.from_matrix(
            self._R @ other.R,
            self._R @ other.t + self.t,
            frame_id=self.frame_id,
            child_frame_id=other.child_frame_id,
            stamp=max(self.stamp, other.stamp),
        )

    def yaw(self) -> float:
        R = self._R
        return math.atan2(R[1, 0], R[0, 0])


def transform_points(points, pose: Pose3D) -> np.ndarray:
    """Apply ``p' = R p + t`` to an ``(N, 3)`` array of points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return pts @ pose.R.T + pose.t


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: Pose3D = field(default_factory=lambda: Pose3D(frame_id="body", child_frame_id="camera"))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov: float, extrinsic: Pose3D | None = None) -> "CameraModel":
        """Square-pixel camera with the principal point at the image center."""
        f = (width / 2.0) / math.tan(hfov / 2.0)
        kw = {} if extrinsic is None else {"extrinsic": extrinsic}
        return cls(f, f, width / 2.0, height / 2.0, width, height, **kw)


# rotation taking optical-frame coordinates (z fwd, x right, y down) into a
# body-like frame (x fwd, y left, z up)
OPTICAL_TO_BODY = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def forward_camera_extrinsic(x=0.0, y=0.0, z=0.0, pitch_down=0.0, yaw=0.0) -> Pose3D:
    """Extrinsic of a forward-looking camera mounted at (x, y, z) in the body frame."""
    tilt = Pose3D.from_xyz_rpy(pitch=pitch_down, yaw=yaw).R
    return Pose3D.from_matrix(tilt @ OPTICAL_TO_BODY, (x, y, z), frame_id="body", child_frame_id="camera")


def project_points(p_cam, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised pinhole projection.

    Returns ``(uv, visible)`` where ``uv`` is ``(N, 2)`` (NaN where not visible).
    """
    p = np.asarray(p_cam, dtype=float).reshape(-1, 3)
    z = p[:, 2]
    in_front = z > NEAR_PLANE
    zs = np.where(in_front, z, 1.0)
    u = cam.fx * p[:, 0] / zs + cam.cx
    v = cam.fy * p[:, 1] / zs + cam.cy
    visible = in_front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    uv = np.stack([u, v], axis=1)
    uv[~visible] = np.nan
    return uv, visible


def project_point(p_cam, cam: CameraModel) -> tuple[float, float] | None:
    """Project one camera-frame point; ``None`` means not visible."""
    uv, vis = project_points(p_cam, cam)
    if not vis[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


@dataclass(frozen=True)
class Aabb3D:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(c) for c in self.min_corner)
        hi = tuple(float(c) for c in self.max_corner)
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("min_corner must be <= max_corner componentwise")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.min_corner) + np.asarray(self.max_corner)) / 2.0

    @property
    def extents(self) -> np.ndarray:
        return np.asarray(self.max_corner) - np.asarray(self.min_corner)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.all((p >= self.min_corner) & (p <= self.max_corner), axis=1)

    def contains_column(self, points) -> np.ndarray:
        """Points inside the xy footprint and not above the box top."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        lo, hi = self.min_corner, self.max_corner
        return (
            (p[:, 0] >= lo[0]) & (p[:, 0] <= hi[0])
            & (p[:, 1] >= lo[1]) & (p[:, 1] <= hi[1])
            & (p[:, 2] <= hi[2])
        )


def aabb_of(points) -> Aabb3D:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise EmptyCluster("cannot bound an empty point set")
    return Aabb3D(tuple(p.min(axis=0)), tuple(p.max(axis=0)))
