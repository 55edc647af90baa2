"""Closed-loop scenario runner with metrics, exports and record/replay.

Each fixed step (one sensor period) runs: sense, threshold, label, cluster, track,
map update, and every ``cycle_period`` a replanning decision; then the robot moves
along its active trajectory and the actors advance.

Between planning cycles a safety monitor holds the robot as soon as its active path
collides within ``stop_radius`` on the latest map; the next cycle then decides how
to continue.
"""

from __future__ import annotations

import json
import logging
import math
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cloud import LabeledPointCloud, LidarScan, process_scan, read_cloud, write_cloud
from ..errors import ReplayDivergence
from ..geometry import Pose2D, Pose3D
from ..gridmap import LayeredGridMap, MapSnapshot, export_map, recenter, refresh, update_dynamic, update_static, write_apriori
from ..masks import FileMaskSource, threshold_frame, write_mask
from ..planner import (
    DECISION_FIELDS,
    TRAJECTORY_FIELDS,
    CostField,
    Footprint,
    RobotState,
    Trajectory,
    blocked_within,
    make_trajectory,
    replan_step,
    trajectory_rows,
    write_rows,
)
from ..tracker import Tracker
from .scenario import ScenarioConfig, scenario_to_yaml
from .sensors import body_pose, render_segmentation, simulate_lidar
from .world import _mark_polygon, step_actors, truth_occupancy

log = logging.getLogger(__name__)

METRICS_FORMAT = "pannav-metrics"
METRICS_VERSION = 1


@dataclass
class RunMetrics:
    cycles: list = field(default_factory=list)  # one dict per planning cycle
    switch_count: int = 0  # Switch decisions, the initial plan included
    replan_count: int = 0  # Switch decisions that replaced an existing trajectory
    stop_count: int = 0
    keep_count: int = 0
    nopath_count: int = 0
    monitor_holds: int = 0  # steps on which the in-between safety monitor held the robot
    violations: int = 0  # moving steps whose footprint overlapped ground-truth occupied cells
    min_clearance: float = math.inf  # m, robot footprint to nearest obstacle or actor
    goal_reached: bool = False
    time_to_goal: float | None = None
    distance: float = 0.0
    steps: int = 0
    terminated_by: str = "duration"

    def summary(self) -> dict:
        return {
            "switch_count": self.switch_count,
            "replan_count": self.replan_count,
            "stop_count": self.stop_count,
            "keep_count": self.keep_count,
            "nopath_count": self.nopath_count,
            "monitor_holds": self.monitor_holds,
            "violations": self.violations,
            "min_clearance": self.min_clearance,
            "goal_reached": self.goal_reached,
            "time_to_goal": self.time_to_goal,
            "distance": self.distance,
            "steps": self.steps,
            "terminated_by": self.terminated_by,
        }

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class RunResult:
    metrics: RunMetrics
    robot_path: np.ndarray  # (steps, 3) executed poses
    trajectories: list  # (cycle, Trajectory, snapshot) for each adopted trajectory
    gmap: LayeredGridMap
    track_rows: list
    timing: list


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, (np.floating,)):
        return _jsonable(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_metrics(path, cfg: ScenarioConfig, metrics: RunMetrics):
    lines = [{"format": METRICS_FORMAT, "version": METRICS_VERSION, "scenario": cfg.name, "seed": cfg.seed}]
    lines += [{"type": "cycle", **c} for c in metrics.cycles]
    lines.append({"type": "summary", **metrics.summary()})
    Path(path).write_text("".join(json.dumps(_jsonable(r), sort_keys=True) + "\n" for r in lines))


def read_metrics(path) -> tuple[dict, list, dict]:
    rows = [json.loads(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]
    header = rows[0]
    if header.get("format") != METRICS_FORMAT:
        raise ValueError(f"{path}: not a metrics file")
    if header.get("version") != METRICS_VERSION:
        raise ValueError(f"{path}: unsupported metrics version {header.get('version')}")
    cycles = [r for r in rows[1:] if r.get("type") == "cycle"]
    summary = next((r for r in rows if r.get("type") == "summary"), {})
    return header, cycles, summary


class _Recorder:
    def __init__(self, directory, cfg: ScenarioConfig):
        self.dir = Path(directory)
        (self.dir / "scans").mkdir(parents=True, exist_ok=True)
        (self.dir / "masks").mkdir(parents=True, exist_ok=True)
        idx = self.dir / "masks" / "index.csv"
        if idx.exists():
            idx.unlink()
        (self.dir / "scenario.yaml").write_text(scenario_to_yaml(cfg))
        (self.dir / "meta.json").write_text(json.dumps({"seed": cfg.seed, "scenario": cfg.name, "rate": cfg.sensor_rate}) + "\n")
        if cfg.apriori is not None:
            write_apriori(cfg.apriori, self.dir / "apriori")
        self.truth = (self.dir / "truth.jsonl").open("w")

    def step(self, k, scan: LidarScan, mask, world, pose):
        labels = scan.truth_labels if scan.truth_labels is not None else np.zeros(len(scan.points), np.uint8)
        write_cloud(self.dir / "scans" / f"{k:06d}.txt", LabeledPointCloud(scan.points, labels, scan.stamp, "lidar"), scan.sensor_pose)
        write_mask(self.dir / "masks", f"{k:06d}", mask)
        actors = [[float(v) for v in a.position] for a in world.actors]
        self.truth.write(json.dumps({"step": k, "stamp": scan.stamp, "robot": list(pose), "actors": actors}) + "\n")

    def close(self):
        self.truth.close()


class ReplaySource:
    """Recorded scans and masks, read back in step order."""

    def __init__(self, clouds_dir, masks_dir, registry=None):
        self.clouds = Path(clouds_dir)
        self.masks = FileMaskSource(masks_dir, registry, period=0.0)
        self.files = sorted(self.clouds.glob("*.txt"))

    def get(self, k: int, expected_pose: Pose3D):
        if k >= len(self.files):
            raise ReplayDivergence(f"recording ends before step {k}")
        cloud, pose = read_cloud(self.files[k])
        if pose is None:
            raise ReplayDivergence(f"{self.files[k]} has no sensor pose")
        pose = Pose3D(pose.translation, pose.rotation, frame_id="world", child_frame_id="lidar", stamp=cloud.stamp)
        if pose.translation != expected_pose.translation or pose.rotation != expected_pose.rotation:
            raise ReplayDivergence(f"step {k}: recorded sensor pose differs from the replayed robot pose")
        mask = self.masks.read_discrete()
        if mask.stamp != cloud.stamp:
            raise ReplayDivergence(f"step {k}: mask stamp {mask.stamp} does not match scan stamp {cloud.stamp}")
        return LidarScan(cloud.points, cloud.stamp, pose, cloud.labels), mask


def _seed_start(gmap: LayeredGridMap, cfg: ScenarioConfig):
    """Copy the true terrain under the start footprint into the static layer.

    The mast LiDAR cannot see the ground right around the machine, so a robot that
    has not moved yet would otherwise sit on never-observed (occupied) cells.
    """
    x, y, h = cfg.start
    fp = cfg.footprint
    m = cfg.seed_start_radius
    big = Footprint(fp.length + 2 * m, fp.width + 2 * m, min(fp.stride, gmap.resolution / 2))
    c, s = math.cos(h), math.sin(h)
    off = big.offsets()
    pts = np.stack([x + c * off[:, 0] - s * off[:, 1], y + s * off[:, 0] + c * off[:, 1]], axis=1)
    row, col = gmap.world_to_cell(pts)
    ok = gmap.in_bounds(row, col)
    row, col = row[ok], col[ok]
    cx, cy = gmap.cell_center(row, col)
    gmap.static_class[row, col] = cfg.world.terrain_class(np.stack([cx, cy], axis=1))


def _advance(wp: np.ndarray, s: float):
    """Pose at arc length ``s`` along a waypoint polyline (clamped to the end)."""
    if len(wp) == 1:
        return wp[0].copy(), 0.0, True
    seg = np.hypot(*np.diff(wp[:, :2], axis=0).T)
    cum = np.r_[0.0, np.cumsum(seg)]
    total = float(cum[-1])
    if s >= total:
        return wp[-1].copy(), total, True
    i = int(np.searchsorted(cum, s, side="right") - 1)
    f = (s - cum[i]) / seg[i] if seg[i] > 0 else 0.0
    a, b = wp[i], wp[i + 1]
    pose = np.array([a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, math.atan2(b[1] - a[1], b[0] - a[0])])
    return pose, s, False


def _footprint_polygon(pose, fp: Footprint):
    from shapely.geometry import Polygon

    x, y, h = pose
    c, s = math.cos(h), math.sin(h)
    hl, hw = fp.length / 2, fp.width / 2
    pts = [(x + c * a - s * b, y + s * a + c * b) for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]
    return Polygon(pts)


def run_scenario(cfg: ScenarioConfig, out_dir=None, record_dir=None, export_cycles=(), replay: ReplaySource | None = None,
                 figures: bool = True) -> RunResult:
    """Run one scenario to completion; optionally write outputs to ``out_dir``."""
    from shapely.geometry import Polygon

    reg = cfg.registry
    world = cfg.world.copy()
    dt = 1.0 / cfg.sensor_rate
    per_cycle = max(1, int(round(cfg.planner.cycle_period / dt)))
    n_steps = int(math.floor(cfg.duration / dt + 1e-9))
    lidar_rng = np.random.default_rng([cfg.seed, 1])
    seg_rng = np.random.default_rng([cfg.seed, 2])
    cam = cfg.rig.camera()
    lidar_ext = cfg.rig.lidar_extrinsic()
    pcfg = cfg.planner
    fp = cfg.footprint
    goal = Pose2D(cfg.goal[0], cfg.goal[1])

    gmap = LayeredGridMap.centered(cfg.start[0], cfg.start[1], cfg.map)
    _seed_start(gmap, cfg)
    tracker = Tracker(cfg.tracker)

    xmin, ymin, xmax, ymax = cfg.world.bounds
    truth_grid = LayeredGridMap.covering(xmin, ymin, xmax, ymax, cfg.map.resolution)
    static_truth = truth_occupancy(world, truth_grid.origin, truth_grid.shape, truth_grid.resolution, reg, include_actors=False)
    obstacle_shapes = [Polygon(o.polygon) for o in world.obstacles]

    recorder = _Recorder(record_dir, cfg) if record_dir is not None else None
    metrics = RunMetrics()
    pose = np.array(cfg.start, dtype=float)
    velocity = (0.0, 0.0)
    active: Trajectory | None = None
    progress = 0.0
    hold = True
    nopath_streak = 0
    robot_path = [pose.copy()]
    adopted = []
    timing = []
    exports = set(int(c) for c in export_cycles)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for k in range(n_steps + 1):
        t = k * dt
        metrics.steps = k
        bp = body_pose(pose[0], pose[1], pose[2], t)
        sensor_pose = bp.compose(lidar_ext)
        tic = time.perf_counter()
        if replay is not None:
            scan, mask = replay.get(k, sensor_pose)
        else:
            scan = simulate_lidar(world, sensor_pose, cfg.rig.lidar, lidar_rng, stamp=t)
            frame = render_segmentation(world, bp.compose(cam.extrinsic), cam, cfg.noise, seg_rng, reg, stamp=t)
            mask = threshold_frame(frame, cfg.cloud.tau, reg)
        if recorder is not None:
            recorder.step(k, scan, mask, world, pose.tolist())
        res = process_scan(scan, mask, cam, bp, reg, cfg.cloud)
        tracks, _ = tracker.step(res.detections, t)
        if cfg.map.follow_robot:
            cx = gmap.origin[0] + gmap.shape[1] * gmap.resolution / 2
            cy = gmap.origin[1] + gmap.shape[0] * gmap.resolution / 2
            if max(abs(pose[0] - cx), abs(pose[1] - cy)) > cfg.map.size / 4:
                recenter(gmap, pose[0], pose[1], cfg.map.size)
        update_static(gmap, res.static, cfg.map.fill_radius)
        update_dynamic(gmap, tracks, res.dynamic, cfg.map.inflation_radius, cfg.map.mark_untracked)
        refresh(gmap, reg, cfg.apriori)
        gmap.stamp = t
        snap = gmap.snapshot()
        pipeline_time = time.perf_counter() - tic

        if math.hypot(pose[0] - goal.x, pose[1] - goal.y) <= pcfg.goal_tolerance + 1e-9:
            metrics.goal_reached = True
            metrics.time_to_goal = t
            metrics.terminated_by = "goal"
            break

        if k % per_cycle == 0:
            cycle = k // per_cycle
            robot = RobotState(Pose2D(pose[0], pose[1], pose[2], stamp=t), velocity)
            dec = replan_step(robot, active, goal, snap, pcfg, fp, seed=cfg.seed * 100003 + cycle)
            rec = {
                "cycle": cycle,
                "time": t,
                "decision": dec.kind,
                "candidate_cost": dec.candidate_cost,
                "remaining_cost": dec.remaining_cost,
                "x": float(pose[0]),
                "y": float(pose[1]),
            }
            timing.append({"cycle": cycle, "plan_time": dec.plan_time, "iterations": dec.iterations, "pipeline_time": pipeline_time})
            if dec.kind == "Switch":
                lead = dec.lead_in if dec.lead_in is not None else np.zeros((0, 3))
                wp = np.vstack([lead[:-1], dec.trajectory.waypoints]) if len(lead) > 1 else dec.trajectory.waypoints
                if active is not None:
                    metrics.replan_count += 1
                active = make_trajectory(wp, snap, fp, pcfg, t)
                active.cost_to_go = dec.trajectory.cost_to_go
                progress = 0.0
                hold = False
                metrics.switch_count += 1
                nopath_streak = 0
                adopted.append((cycle, active, snap))
            elif dec.kind == "Keep":
                hold = False
                metrics.keep_count += 1
                nopath_streak = 0
            elif dec.kind == "Stop":
                hold = True
                metrics.stop_count += 1
                nopath_streak = 0
            else:
                hold = True
                metrics.nopath_count += 1
                nopath_streak += 1
            rec["c_total"] = active.c_total if active is not None else math.inf
            metrics.cycles.append(rec)
            log.debug("cycle %d t=%.1f %s cand=%s rem=%s", cycle, t, dec.kind, dec.candidate_cost, dec.remaining_cost)
            if out is not None and cycle in exports:
                export_map(gmap, out / "maps" / f"cycle_{cycle:04d}")
            if nopath_streak >= cfg.nopath_cycles:
                metrics.terminated_by = "nopath"
                break
        elif active is not None and not hold:
            if blocked_within(active, Pose2D(pose[0], pose[1], pose[2]), snap, pcfg.stop_radius, fp):
                hold = True
                metrics.monitor_holds += 1

        # move
        prev = pose.copy()
        if active is not None and not hold:
            new_pose, progress, _ = _advance(active.waypoints, progress + pcfg.robot_speed * dt)
            pose = new_pose if np.any(new_pose[:2] != prev[:2]) else prev
        moved = bool(np.any(pose[:2] != prev[:2]))
        velocity = ((pose[0] - prev[0]) / dt, (pose[1] - prev[1]) / dt) if moved else (0.0, 0.0)
        metrics.distance += math.hypot(pose[0] - prev[0], pose[1] - prev[1])
        robot_path.append(pose.copy())

        # ground-truth safety
        truth = static_truth.copy()
        for a in world.actors:
            _mark_polygon(truth, a.polygon(), truth_grid.origin[0], truth_grid.origin[1], truth_grid.resolution)
        if moved:
            tsnap = MapSnapshot(truth, np.zeros(truth.shape), truth_grid.resolution, truth_grid.origin)
            if not CostField(tsnap, fp).valid(pose[None])[0]:
                metrics.violations += 1
                log.warning("footprint overlaps ground-truth occupied cells at t=%.1f", t)
        body = _footprint_polygon(pose, fp)
        for shp in obstacle_shapes + [Polygon(a.polygon()) for a in world.actors]:
            metrics.min_clearance = min(metrics.min_clearance, body.distance(shp))
        world = step_actors(world, dt)

    if recorder is not None:
        recorder.close()
    result = RunResult(metrics, np.array(robot_path), adopted, gmap, list(tracker.log_rows), timing)
    if out is not None:
        write_outputs(out, cfg, result, figures)
    return result


def write_outputs(out: Path, cfg: ScenarioConfig, result: RunResult, figures: bool = True):
    from ..tracker import write_track_log

    m = result.metrics
    write_metrics(out / "metrics.jsonl", cfg, m)
    (out / "timing.jsonl").write_text("".join(json.dumps(_jsonable(r), sort_keys=True) + "\n" for r in result.timing))
    write_rows(out / "decisions.csv", DECISION_FIELDS,
               ([c["cycle"], c["time"], c["decision"], c["candidate_cost"], c["remaining_cost"]] for c in m.cycles))
    rows = []
    for cycle, traj, snap in result.trajectories:
        rows.extend(trajectory_rows(cycle, traj, snap, cfg.footprint))
    write_rows(out / "trajectories.csv", TRAJECTORY_FIELDS, rows)
    write_track_log(out / "tracks.csv", result.track_rows)
    if figures:
        from ..report import render_run

        render_run(out, cfg, result)


def replay_run(record_dir, out_dir=None, clouds=None, masks=None, figures: bool = True) -> RunResult:
    """Re-run the pipeline and planner from a recording made with ``record_dir``."""
    from .scenario import load_scenario

    rd = Path(record_dir)
    cfg = load_scenario(rd / "scenario.yaml")
    src = ReplaySource(clouds or rd / "scans", masks or rd / "masks", cfg.registry)
    return run_scenario(cfg, out_dir=out_dir, replay=src, figures=figures)


def clean_dir(path):
    p = Path(path)
    if p.exists():
        shutil.rmtree(p)
