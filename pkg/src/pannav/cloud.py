"""LiDAR scan -> labeled static and dynamic clouds.

Per scan: project every point into the panoptic mask and take the class of the
nearest pixel (unknown outside the image), drop the ground, cluster the rest
geometrically with DBSCAN, give each cluster the majority label if it clears the
vote threshold, and move every point inside a thing/unknown cluster box into the
dynamic cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateCloud, FrameMismatch
from .geometry import Aabb3D, CameraModel, Pose3D, aabb_of, project_points, transform_points
from .masks import PanopticMask
from .taxonomy import UNKNOWN_ID, ClassRegistry

NOISE = -1


@dataclass
class LidarScan:
    points: np.ndarray  # (N, 3) sensor frame
    stamp: float
    sensor_pose: Pose3D  # sensor -> world
    truth_labels: np.ndarray | None = None  # simulator ground truth, never used by the pipeline

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("scan contains non-finite coordinates")


@dataclass
class LabeledPointCloud:
    points: np.ndarray  # (N, 3)
    labels: np.ndarray  # (N,) uint8 class ids
    stamp: float = 0.0
    frame_id: str = "world"
    ground: np.ndarray | None = None  # optional (N,) bool, set by the pipeline

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if len(self.labels) != len(self.points):
            raise ValueError("labels and points differ in length")
        if self.ground is not None:
            self.ground = np.asarray(self.ground, dtype=bool).reshape(-1)
            if len(self.ground) != len(self.points):
                raise ValueError("ground mask and points differ in length")

    def __len__(self):
        return len(self.points)

    def subset(self, idx) -> "LabeledPointCloud":
        idx = np.asarray(idx, dtype=np.int64)
        g = None if self.ground is None else self.ground[idx]
        return LabeledPointCloud(self.points[idx], self.labels[idx], self.stamp, self.frame_id, g)


@dataclass
class Cluster:
    point_indices: np.ndarray
    label: int
    vote_ratio: float
    bbox: Aabb3D


@dataclass
class Detection:
    bbox: Aabb3D
    label: int
    stamp: float
    point_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class GroundParams:
    mode: str = "slab"  # "slab" | "ransac"
    z_ground: float = 0.0
    height_tol: float = 0.15
    ransac_tol: float = 0.05
    ransac_iterations: int = 200
    seed: int = 0


@dataclass(frozen=True)
class CloudParams:
    tau: float = 0.5
    eps: float = 0.5
    min_pts: int = 5
    vote_threshold: float = 0.6
    ground: GroundParams = GroundParams()


def label_points(scan: LidarScan, mask: PanopticMask, cam: CameraModel, body_pose: Pose3D) -> LabeledPointCloud:
    """Label each scan point with the class of the nearest mask pixel.

    Output points are in the world frame. Points behind the camera or outside the
    image get class 0 (unknown). Pixel rounding is round-half-up per axis.
    """
    if scan.sensor_pose.frame_id != body_pose.frame_id:
        raise FrameMismatch(
            f"scan pose is in {scan.sensor_pose.frame_id!r} but body pose is in {body_pose.frame_id!r}"
        )
    ext = cam.extrinsic
    if body_pose.child_frame_id and ext.frame_id != body_pose.child_frame_id:
        raise FrameMismatch(f"camera extrinsic is relative to {ext.frame_id!r}, body frame is {body_pose.child_frame_id!r}")
    if (mask.width, mask.height) != (cam.width, cam.height):
        raise ValueError("mask size does not match camera model")
    world = transform_points(scan.points, scan.sensor_pose)
    cam_in_world = body_pose.compose(ext)
    p_cam = transform_points(world, cam_in_world.inverse())
    uv, vis = project_points(p_cam, cam)
    labels = np.zeros(len(world), dtype=np.uint8)
    if np.any(vis):
        u = np.floor(uv[vis, 0] + 0.5).astype(np.int64)
        v = np.floor(uv[vis, 1] + 0.5).astype(np.int64)
        np.minimum(u, cam.width - 1, out=u)
        np.minimum(v, cam.height - 1, out=v)
        labels[vis] = mask.class_id[v, u]
    return LabeledPointCloud(world, labels, scan.stamp, scan.sensor_pose.frame_id)


def _fit_plane(p):
    n = np.cross(p[1] - p[0], p[2] - p[0])
    norm = np.linalg.norm(n)
    if norm < 1e-9:
        return None
    n = n / norm
    return n, -float(n @ p[0])


def remove_ground(cloud: LabeledPointCloud, params: GroundParams = GroundParams()) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into ``(ground, nonground)``.

    ``slab`` keeps points with ``|z - z_ground| <= height_tol`` as ground.
    ``ransac`` fits a plane and keeps its inliers within ``ransac_tol``.
    """
    pts = cloud.points
    n = len(pts)
    if params.mode == "slab":
        is_ground = np.abs(pts[:, 2] - params.z_ground) <= params.height_tol
    elif params.mode == "ransac":
        is_ground = _ransac_ground(pts, params)
    else:
        raise ValueError(f"unknown ground mode {params.mode!r}")
    idx = np.arange(n)
    return idx[is_ground], idx[~is_ground]


def _ransac_ground(pts, params: GroundParams) -> np.ndarray:
    if len(pts) < 3:
        raise DegenerateCloud("plane fit needs at least 3 points")
    centered = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
        raise DegenerateCloud("points are collinear")
    rng = np.random.default_rng(params.seed)
    best_count, best_mask = -1, None
    for _ in range(params.ransac_iterations):
        sample = pts[rng.choice(len(pts), 3, replace=False)]
        fit = _fit_plane(sample)
        if fit is None:
            continue
        normal, d = fit
        if abs(normal[2]) < 0.5:  # ground must be closer to horizontal than 60 deg
            continue
        inl = np.abs(pts @ normal + d) <= params.ransac_tol
        c = int(inl.sum())
        if c > best_count:
            best_count, best_mask = c, inl
    if best_mask is None:
        raise DegenerateCloud("no admissible ground plane hypothesis")
    # least-squares refinement on the consensus set
    q = pts[best_mask]
    c = q.mean(axis=0)
    _, _, vt = np.linalg.svd(q - c, full_matrices=False)
    normal = vt[-1]
    refined = np.abs((pts - c) @ normal) <= params.ransac_tol
    return refined if refined.sum() >= best_mask.sum() else best_mask


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN cluster ids per point (``NOISE`` = -1).

    Neighborhoods are closed balls (distance <= eps) and include the point itself.
    Cluster ids follow the order of each cluster's lowest-index core point. A border
    point reachable from several clusters joins the one with the smallest id, which
    is what a breadth-first expansion seeded in index order produces.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    pairs = cKDTree(pts).query_pairs(r=eps, output_type="ndarray")
    i, j = (pairs[:, 0], pairs[:, 1]) if len(pairs) else (np.zeros(0, np.int64), np.zeros(0, np.int64))
    counts = 1 + np.bincount(i, minlength=n) + np.bincount(j, minlength=n)
    core = counts >= min_pts
    if not core.any():
        return labels
    cc = core[i] & core[j]
    ii, jj = i[cc], j[cc]
    # CSR built directly (rows grouped by a stable sort) to skip scipy's duplicate pass
    order = np.argsort(ii, kind="stable")
    indptr = np.r_[0, np.cumsum(np.bincount(ii, minlength=n))]
    graph = csr_matrix((np.ones(len(ii)), jj[order], indptr), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    core_idx = np.flatnonzero(core)
    # rank components by their lowest core index
    first = np.full(comp.max() + 1, n, dtype=np.int64)
    np.minimum.at(first, comp[core_idx], core_idx)
    used = np.flatnonzero(first < n)
    rank = np.full(comp.max() + 1, -1, dtype=np.int64)
    rank[used[np.argsort(first[used], kind="stable")]] = np.arange(len(used))
    labels[core_idx] = rank[comp[core_idx]]
    # border points: smallest cluster id among core neighbours
    border = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    for a, b in ((i, j), (j, i)):
        m = core[a] & ~core[b]
        np.minimum.at(border, b[m], labels[a[m]])
    has = (~core) & (border != np.iinfo(np.int64).max)
    labels[has] = border[has]
    return labels


def vote_label(labels, vote_threshold: float = 0.6) -> tuple[int, float]:
    """Majority vote over a cluster's point labels.

    The winner is the most frequent known class; its ratio is counted against the
    whole cluster (unknown points included). The cluster stays unknown when the ratio
    is below ``vote_threshold`` or when the top count is tied with another class or
    with the unknown count.
    """
    lab = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(lab) == 0:
        raise ValueError("cannot vote over an empty cluster")
    counts = np.bincount(lab, minlength=1)
    n_unknown = int(counts[UNKNOWN_ID])
    known = counts.copy()
    known[UNKNOWN_ID] = 0
    top = int(known.max())
    if top == 0:
        return UNKNOWN_ID, 0.0
    ratio = top / len(lab)
    winners = np.flatnonzero(known == top)
    if len(winners) > 1 or n_unknown >= top or ratio < vote_threshold:
        return UNKNOWN_ID, ratio
    return int(winners[0]), ratio


def cluster_cloud(cloud: LabeledPointCloud, candidate_idx, eps: float, min_pts: int, vote_threshold: float) -> list[Cluster]:
    """DBSCAN over ``candidate_idx`` followed by a label vote per cluster."""
    candidate_idx = np.asarray(candidate_idx, dtype=np.int64)
    if len(candidate_idx) == 0:
        return []
    assign = dbscan(cloud.points[candidate_idx], eps, min_pts)
    clusters = []
    order = np.argsort(assign, kind="stable")
    sorted_assign = assign[order]
    starts = np.flatnonzero(np.r_[True, sorted_assign[1:] != sorted_assign[:-1]])
    ends = np.r_[starts[1:], len(order)]
    for s, e in zip(starts, ends):
        if sorted_assign[s] == NOISE:
            continue
        members = candidate_idx[np.sort(order[s:e])]
        label, ratio = vote_label(cloud.labels[members], vote_threshold)
        clusters.append(Cluster(members, label, ratio, aabb_of(cloud.points[members])))
    return clusters


def split_clouds(cloud: LabeledPointCloud, clusters, registry: ClassRegistry):
    """Partition a cloud into ``(static, dynamic, detections)``.

    A point is dynamic when it lies inside the box of a thing- or unknown-labeled
    cluster; the box is taken as a column from its top down, so ground points under
    a detected object move with it. Everything else is static.
    """
    dynamic = np.zeros(len(cloud), dtype=bool)
    detections = []
    thing = registry.thing_lut()
    for c in clusters:
        if not (c.label == UNKNOWN_ID or thing[c.label]):
            continue
        inside = c.bbox.contains_column(cloud.points)
        inside[c.point_indices] = True
        dynamic |= inside
        detections.append(Detection(c.bbox, c.label, cloud.stamp, np.flatnonzero(inside)))
    idx = np.arange(len(cloud))
    return cloud.subset(idx[~dynamic]), cloud.subset(idx[dynamic]), detections


@dataclass
class ScanResult:
    labeled: LabeledPointCloud
    ground_idx: np.ndarray
    clusters: list
    static: LabeledPointCloud
    dynamic: LabeledPointCloud
    detections: list


def process_scan(scan, mask, cam, body_pose, registry, params: CloudParams = CloudParams()) -> ScanResult:
    """Run labeling, ground removal, clustering, voting and splitting on one scan."""
    labeled = label_points(scan, mask, cam, body_pose)
    ground_idx, nonground_idx = remove_ground(labeled, params.ground)
    is_ground = np.zeros(len(labeled), dtype=bool)
    is_ground[ground_idx] = True
    labeled.ground = is_ground
    clusters = cluster_cloud(labeled, nonground_idx, params.eps, params.min_pts, params.vote_threshold)
    static, dynamic, detections = split_clouds(labeled, clusters, registry)
    return ScanResult(labeled, ground_idx, clusters, static, dynamic, detections)


# -- plain-text point cloud format -------------------------------------------
#
#   # frame=world stamp=0.5 [pose=tx,ty,tz,qw,qx,qy,qz]
#   x y z label_id
#   ...
#
# Floats are written with repr() so a write/read cycle is exact.


def write_cloud(path, cloud: LabeledPointCloud, pose: Pose3D | None = None):
    header = f"# frame={cloud.frame_id} stamp={float(cloud.stamp)!r}"
    if pose is not None:
        vals = list(pose.translation) + list(pose.rotation)
        header += " pose=" + ",".join(repr(float(v)) for v in vals)
    lines = [header]
    for (x, y, z), lab in zip(cloud.points.tolist(), cloud.labels.tolist()):
        lines.append(f"{x!r} {y!r} {z!r} {lab}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_cloud(path) -> tuple[LabeledPointCloud, Pose3D | None]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing header line")
    meta = dict(tok.split("=", 1) for tok in text[0][1:].split())
    frame = meta.get("frame", "world")
    stamp = float(meta.get("stamp", 0.0))
    pose = None
    if "pose" in meta:
        v = [float(s) for s in meta["pose"].split(",")]
        pose = Pose3D(tuple(v[:3]), tuple(v[3:]), frame_id=frame, stamp=stamp)
    rows = [ln.split() for ln in text[1:] if ln.strip()]
    if rows:
        pts = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows])
        labels = np.array([int(r[3]) for r in rows], dtype=np.uint8)
    else:
        pts, labels = np.zeros((0, 3)), np.zeros(0, dtype=np.uint8)
    if not np.all(np.isfinite(pts)) or (pts.size and not math.isfinite(stamp)):
        raise ValueError(f"{path}: non-finite values")
    return LabeledPointCloud(pts, labels, stamp, frame), pose
