"""Anytime RRT* over occupancy/cost snapshots and the reactive replanning rule.

Trajectory cost is ``c_total = lambda1 * c_length + lambda2 * c_semantic`` where
``c_length`` is the polyline length in meters and ``c_semantic`` sums, over every
waypoint, the mean cost of the cells under the vehicle footprint at that waypoint.
Waypoints are spaced at most ``resolution / 2`` apart.

A trajectory is valid when every waypoint footprint is free. The tree only accepts
edges whose whole swept footprint overlaps free cells, so validity also holds for
any pose between waypoints. Heading is not a planning state: the footprint at a
waypoint is aligned with the segment leading into it (point turns at vertices).
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidStart, NoPathFound
from .geometry import Pose2D
from .gridmap import MapSnapshot

# Iterations that fit in the 0.95 s wall budget on the reference desktop for the
# acceptance map (20 x 20 m, 0.2 m cells); see calibrate_iterations().
CALIBRATED_ITERATIONS = 850


@dataclass(frozen=True)
class Footprint:
    length: float = 2.5  # along heading
    width: float = 2.0
    stride: float = 0.2  # cell-coverage sampling stride; must not exceed the map resolution

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.stride > 0):
            raise ValueError("footprint length, width and stride must be positive")

    def offsets(self) -> np.ndarray:
        """Sample points in the vehicle frame, boundary included, ``(m, 2)``."""
        nl = int(math.ceil(self.length / self.stride - 1e-9)) + 1
        nw = int(math.ceil(self.width / self.stride - 1e-9)) + 1
        xs = np.linspace(-self.length / 2, self.length / 2, nl)
        ys = np.linspace(-self.width / 2, self.width / 2, nw)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


@dataclass(frozen=True)
class PlannerConfig:
    lambda1: float = 1.0
    lambda2: float = 0.1
    plan_budget: float = 0.95  # s
    cycle_period: float = 1.0  # s
    stop_radius: float = 3.0  # m
    robot_speed: float = 0.5  # m/s
    step_size: float = 1.0  # m
    goal_tolerance: float = 0.5  # m
    goal_bias: float = 0.05
    rewire_gamma: float | None = None  # None: sized from the sampling area
    rewire_max: float = 3.0  # m, cap on the rewiring radius
    seed: int = 0
    deterministic: bool = True  # iteration budget instead of wall clock
    max_iterations: int = CALIBRATED_ITERATIONS
    hysteresis: float = 0.0  # switch only if candidate < remaining - hysteresis
    # cost per meter charged for the unexplored rest of the way to the goal; when set,
    # plan() returns the most promising branch if the goal cannot be reached yet
    frontier_weight: float | None = None

    def __post_init__(self):
        if not (0 < self.plan_budget < self.cycle_period):
            raise ValueError("plan_budget must lie in (0, cycle_period)")
        if self.stop_radius <= 0:
            raise ValueError("stop_radius must be positive")
        if self.step_size <= 0 or self.goal_tolerance < 0 or not (0 <= self.goal_bias <= 1):
            raise ValueError("invalid RRT* parameters")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.frontier_weight is not None and self.frontier_weight <= 0:
            raise ValueError("frontier_weight must be positive when set")


@dataclass
class Trajectory:
    waypoints: np.ndarray  # (N, 3) x, y, heading
    stamps: np.ndarray  # (N,)
    c_length: float
    c_semantic: float
    c_total: float
    lambda1: float = 1.0
    lambda2: float = 0.1
    cost_to_go: float = 0.0  # frontier estimate for trajectories that stop short of the goal

    @property
    def complete(self) -> bool:
        return self.cost_to_go == 0.0

    @property
    def estimate(self) -> float:
        return self.c_total + self.cost_to_go

    def __len__(self):
        return len(self.waypoints)

    def poses(self) -> list[Pose2D]:
        return [Pose2D(x, y, h, stamp=s) for (x, y, h), s in zip(self.waypoints.tolist(), self.stamps.tolist())]

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1, :2]


class CostField:
    """Flat, padded views of a snapshot for vectorised footprint queries."""

    def __init__(self, snap: MapSnapshot, fp: Footprint):
        if fp.stride > snap.resolution + 1e-12:
            raise ValueError("footprint stride must not exceed the map resolution")
        self.snap = snap
        self.fp = fp
        self.rows, self.cols = snap.shape
        self.res = snap.resolution
        self.ox, self.oy = snap.origin
        n = self.rows * self.cols
        # index n is the "outside the map" sentinel: occupied, infinite cost
        self.occ = np.append(snap.occupancy.ravel().astype(np.uint8), np.uint8(1))
        self.cost = np.append(snap.cost.ravel().astype(float), math.inf)
        self.outside = n
        self.offsets = fp.offsets()

    def cells(self, xy: np.ndarray) -> np.ndarray:
        col = np.floor((xy[..., 0] - self.ox) / self.res).astype(np.int64)
        row = np.floor((xy[..., 1] - self.oy) / self.res).astype(np.int64)
        inside = (row >= 0) & (row < self.rows) & (col >= 0) & (col < self.cols)
        return np.where(inside, row * self.cols + col, self.outside)

    def footprint_cells(self, poses: np.ndarray) -> np.ndarray:
        """Cell indices sampled under each pose, ``(K, m)``."""
        poses = np.atleast_2d(poses)
        c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
        ox, oy = self.offsets[:, 0], self.offsets[:, 1]
        x = poses[:, 0:1] + c[:, None] * ox - s[:, None] * oy
        y = poses[:, 1:2] + s[:, None] * ox + c[:, None] * oy
        return self.cells(np.stack([x, y], axis=-1))

    def valid(self, poses: np.ndarray) -> np.ndarray:
        return ~np.any(self.occ[self.footprint_cells(poses)] != 0, axis=1)

    def mean_costs(self, poses: np.ndarray) -> np.ndarray:
        """Mean cost over the distinct cells under each pose."""
        lin = np.sort(self.footprint_cells(poses), axis=1)
        first = np.ones_like(lin, dtype=bool)
        first[:, 1:] = lin[:, 1:] != lin[:, :-1]
        vals = np.where(first, self.cost[lin], 0.0)
        return vals.sum(axis=1) / first.sum(axis=1)

    def swept_free(self, a, b) -> bool:
        """True iff every cell overlapping the footprint swept from ``a`` to ``b`` is free.

        The footprint is aligned with the motion, so the swept region is a single
        oriented rectangle; overlap with each cell is decided by separating axes.
        """
        dx, dy = b[0] - a[0], b[1] - a[1]
        L = math.hypot(dx, dy)
        if L > 0:
            c, s = dx / L, dy / L
        else:
            c, s = 1.0, 0.0
        hl = (L + self.fp.length) / 2.0
        hw = self.fp.width / 2.0
        mx, my = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
        ex = abs(c) * hl + abs(s) * hw
        ey = abs(s) * hl + abs(c) * hw
        r = self.res
        c0 = math.floor((mx - ex - self.ox) / r - 1e-9)
        c1 = math.floor((mx + ex - self.ox) / r + 1e-9)
        r0 = math.floor((my - ey - self.oy) / r - 1e-9)
        r1 = math.floor((my + ey - self.oy) / r + 1e-9)
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        cx = self.ox + (cols + 0.5) * r - mx
        cy = self.oy + (rows + 0.5) * r - my
        half = r / 2.0
        pu = cy[:, None] * s + cx[None, :] * c
        pv = cy[:, None] * c - cx[None, :] * s
        slack = half * (abs(c) + abs(s)) + 1e-9
        hit = (np.abs(pu) <= hl + slack) & (np.abs(pv) <= hw + slack)
        if not hit.any():
            return True
        rr, cc = np.nonzero(hit)
        rr = rows[rr]
        cc = cols[cc]
        if rr.min() < 0 or cc.min() < 0 or rr.max() >= self.rows or cc.max() >= self.cols:
            return False
        return not np.any(self.occ[rr * self.cols + cc])


def footprint_valid(snap: MapSnapshot, pose: Pose2D, fp: Footprint) -> bool:
    """Every sampled cell under the oriented footprint is free (outside = occupied)."""
    return bool(CostField(snap, fp).valid(np.array([[pose.x, pose.y, pose.heading]]))[0])


def semantic_cost(snap: MapSnapshot, traj: Trajectory, fp: Footprint) -> float:
    """Sum over waypoints of the mean footprint cost; ``inf`` if any cell is occupied."""
    if len(traj.waypoints) == 0:
        return 0.0
    return float(CostField(snap, fp).mean_costs(traj.waypoints).sum())


def path_length(waypoints: np.ndarray) -> float:
    if len(waypoints) < 2:
        return 0.0
    return float(np.hypot(*np.diff(waypoints[:, :2], axis=0).T).sum())


def total_cost(traj: Trajectory, cfg: PlannerConfig) -> float:
    return cfg.lambda1 * traj.c_length + cfg.lambda2 * traj.c_semantic


def make_trajectory(waypoints, snap: MapSnapshot, fp: Footprint, cfg: PlannerConfig, t0: float = 0.0) -> Trajectory:
    """Wrap waypoints, stamping them at ``cfg.robot_speed`` and computing all cost terms."""
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    seg = np.hypot(*np.diff(wp[:, :2], axis=0).T) if len(wp) > 1 else np.zeros(0)
    stamps = t0 + np.r_[0.0, np.cumsum(seg)] / cfg.robot_speed
    c_len = path_length(wp)
    c_sem = float(CostField(snap, fp).mean_costs(wp).sum()) if len(wp) else 0.0
    return Trajectory(wp, stamps, c_len, c_sem, cfg.lambda1 * c_len + cfg.lambda2 * c_sem, cfg.lambda1, cfg.lambda2)


def densify(a, b, stride: float) -> np.ndarray:
    """Samples ``a + (b - a) k / n`` for ``k = 1..n`` with ``n = ceil(|b - a| / stride)``."""
    L = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(1, int(math.ceil(L / stride - 1e-12)))
    k = np.arange(1, n + 1) / n
    h = math.atan2(b[1] - a[1], b[0] - a[0]) if L > 0 else 0.0
    out = np.empty((n, 3))
    out[:, 0] = a[0] + (b[0] - a[0]) * k
    out[:, 1] = a[1] + (b[1] - a[1]) * k
    out[:, 2] = h
    return out


@dataclass
class PlanResult:
    trajectory: Trajectory
    iterations: int
    nodes: int
    wall_time: float
    history: list = field(default_factory=list)  # (iteration, best c_total) at each improvement


class RRTStar:
    """RRT* in (x, y) with footprint-swept edge checks and the semantic edge cost."""

    def __init__(self, snap: MapSnapshot, fp: Footprint, cfg: PlannerConfig):
        self.snap = snap
        self.fp = fp
        self.cfg = cfg
        self.field = CostField(snap, fp)
        self.stride = snap.resolution / 2.0

    # edge cost a -> b: lambda1 * length + lambda2 * sum of footprint means at the
    # densified samples after a (b included); None when the swept footprint collides
    def edge(self, a, b):
        if not self.field.swept_free(a, b):
            return None
        samples = densify(a, b, self.stride)
        sem = float(self.field.mean_costs(samples).sum())
        if not math.isfinite(sem):
            return None
        L = math.hypot(b[0] - a[0], b[1] - a[1])
        return self.cfg.lambda1 * L + self.cfg.lambda2 * sem

    def _sampling_box(self, start, goal):
        free = np.nonzero(self.snap.occupancy == 0)
        r = self.snap.resolution
        ox, oy = self.snap.origin
        xs = np.r_[ox + free[1] * r, ox + (free[1] + 1) * r, start[0], goal[0]]
        ys = np.r_[oy + free[0] * r, oy + (free[0] + 1) * r, start[1], goal[1]]
        return xs.min(), ys.min(), xs.max(), ys.max()

    def solve(self, start: Pose2D, goal: Pose2D, max_iterations: int | None = None, budget: float | None = None,
              on_improve: Callable[[int, float], None] | None = None, t0: float = 0.0) -> PlanResult:
        cfg = self.cfg
        clock0 = time.perf_counter()
        deadline = None if budget is None else clock0 + budget
        start_pose = np.array([start.x, start.y, start.heading])
        if not self.field.valid(start_pose[None])[0]:
            raise InvalidStart(f"footprint at start ({start.x:.3f}, {start.y:.3f}) is in collision")
        gxy = np.array([goal.x, goal.y])
        root_cost = cfg.lambda2 * float(self.field.mean_costs(start_pose[None])[0])

        if math.hypot(start.x - goal.x, start.y - goal.y) <= cfg.goal_tolerance:
            traj = make_trajectory(start_pose[None], self.snap, self.fp, cfg, t0)
            return PlanResult(traj, 0, 1, time.perf_counter() - clock0, [(0, traj.c_total)])

        cap = (max_iterations or 1024) + 2
        X = np.empty((cap, 2))
        cost = np.empty(cap)
        parent = np.full(cap, -1, dtype=np.int64)
        children: list[list[int]] = [[]]
        X[0] = start_pose[:2]
        cost[0] = root_cost
        n = 1
        goal_nodes: list[int] = []
        best_cost, best_node = math.inf, -1
        history = []

        xmin, ymin, xmax, ymax = self._sampling_box(start_pose, gxy)
        area = max((xmax - xmin) * (ymax - ymin), 1e-6)
        gamma = cfg.rewire_gamma or 2.0 * math.sqrt(1.5) * math.sqrt(area / math.pi)
        rng = np.random.default_rng(cfg.seed)
        lam1 = cfg.lambda1
        goal_inserted = False
        it = 0
        limit = max_iterations if max_iterations is not None else (None if budget is not None else cfg.max_iterations)

        while True:
            if limit is not None and it >= limit:
                break
            if deadline is not None and time.perf_counter() >= deadline:
                break
            it += 1
            if rng.random() < cfg.goal_bias:
                q = gxy.copy()
            else:
                q = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
            d = X[:n] - q
            d2 = np.einsum("ij,ij->i", d, d)
            i_near = int(np.argmin(d2))
            dist = math.sqrt(d2[i_near])
            if dist < 1e-9:
                continue
            if dist > cfg.step_size:
                q = X[i_near] + (q - X[i_near]) * (cfg.step_size / dist)
            is_goal = bool(np.allclose(q, gxy, rtol=0, atol=1e-12))
            if is_goal and goal_inserted:
                continue
            radius = min(cfg.rewire_max, max(cfg.step_size, gamma * math.sqrt(math.log(n + 1) / (n + 1))))
            dn = X[:n] - q
            dists = np.sqrt(np.einsum("ij,ij->i", dn, dn))
            near = np.flatnonzero(dists <= radius)
            if i_near not in near:
                near = np.append(near, i_near)
            # choose parent: scan by optimistic cost, stop once it cannot improve
            lb = cost[near] + lam1 * dists[near]
            order = np.argsort(lb, kind="stable")
            best_p, best_c = -1, math.inf
            for k in order:
                if lb[k] >= best_c:
                    break
                j = int(near[k])
                ec = self.edge(X[j], q)
                if ec is not None and cost[j] + ec < best_c:
                    best_p, best_c = j, cost[j] + ec
            if best_p < 0:
                continue
            if n == len(X):
                X = np.concatenate([X, np.empty_like(X)])
                cost = np.concatenate([cost, np.empty_like(cost)])
                parent = np.concatenate([parent, np.full_like(parent, -1)])
            new = n
            X[new] = q
            cost[new] = best_c
            parent[new] = best_p
            children.append([])
            children[best_p].append(new)
            n += 1
            if is_goal:
                goal_inserted = True
            # rewire
            for k in range(len(near)):
                j = int(near[k])
                if j == best_p or j == 0:
                    continue
                if best_c + lam1 * dists[near[k]] >= cost[j]:
                    continue
                ec = self.edge(q, X[j])
                if ec is None or best_c + ec >= cost[j] - 1e-12:
                    continue
                delta = best_c + ec - cost[j]
                children[parent[j]].remove(j)
                parent[j] = new
                children[new].append(j)
                stack = [j]
                while stack:
                    m = stack.pop()
                    cost[m] += delta
                    stack.extend(children[m])
            if math.hypot(q[0] - gxy[0], q[1] - gxy[1]) <= cfg.goal_tolerance:
                goal_nodes.append(new)
            if goal_nodes:
                gn = np.asarray(goal_nodes)
                b = int(gn[np.argmin(cost[gn])])
                if cost[b] < best_cost - 1e-12:
                    best_cost, best_node = float(cost[b]), b
                    history.append((it, best_cost))
                    if on_improve is not None:
                        on_improve(it, best_cost)
                elif cost[b] <= best_cost:
                    best_node = b
        wall = time.perf_counter() - clock0
        to_go = 0.0
        if best_node < 0 and cfg.frontier_weight is not None and n > 1:
            d = np.hypot(X[:n, 0] - gxy[0], X[:n, 1] - gxy[1])
            score = cost[:n] + cfg.frontier_weight * d
            b = int(np.argmin(score))
            if b != 0 and score[b] < score[0]:
                best_node = b
                to_go = float(cfg.frontier_weight * d[b])
        if best_node < 0:
            raise NoPathFound(f"no goal connection after {it} iterations")
        chain = []
        m = best_node
        while m >= 0:
            chain.append(m)
            m = parent[m]
        chain.reverse()
        pieces = [start_pose[None]]
        for a, b in zip(chain[:-1], chain[1:]):
            pieces.append(densify(X[a], X[b], self.stride))
        traj = make_trajectory(np.vstack(pieces), self.snap, self.fp, cfg, t0)
        traj.cost_to_go = to_go
        return PlanResult(traj, it, n, wall, history)


def plan(start: Pose2D, goal: Pose2D, snap: MapSnapshot, cfg: PlannerConfig = PlannerConfig(),
         fp: Footprint = Footprint(), budget: float | None = None, seed: int | None = None,
         on_improve=None) -> Trajectory:
    """Best goal-reaching trajectory within the budget.

    With ``cfg.deterministic`` the budget is ``cfg.max_iterations`` iterations;
    otherwise it is ``budget`` (default ``cfg.plan_budget``) seconds of wall time.
    """
    return plan_detailed(start, goal, snap, cfg, fp, budget, seed, on_improve).trajectory


def plan_detailed(start, goal, snap, cfg=PlannerConfig(), fp=Footprint(), budget=None, seed=None, on_improve=None) -> PlanResult:
    if seed is not None:
        cfg = _with(cfg, seed=seed)
    solver = RRTStar(snap, fp, cfg)
    if cfg.deterministic:
        return solver.solve(start, goal, max_iterations=cfg.max_iterations, on_improve=on_improve, t0=start.stamp)
    b = cfg.plan_budget if budget is None else budget
    if b <= 0:
        raise ValueError("budget must be positive")
    return solver.solve(start, goal, budget=b, on_improve=on_improve, t0=start.stamp)


def _with(cfg: PlannerConfig, **kw) -> PlannerConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


def calibrate_iterations(snap: MapSnapshot, start: Pose2D, goal: Pose2D, fp: Footprint = Footprint(),
                         budget: float = 0.95, seed: int = 0) -> int:
    """Iterations a wall-clock plan completes within ``budget`` on this machine."""
    cfg = _with(PlannerConfig(), deterministic=False, seed=seed)
    return RRTStar(snap, fp, cfg).solve(start, goal, budget=budget).iterations


# -- replanning ---------------------------------------------------------------


def _ahead_index(wp: np.ndarray, xy) -> int:
    d = np.hypot(wp[:, 0] - xy[0], wp[:, 1] - xy[1])
    j = int(np.argmin(d))
    if j < len(wp) - 1:
        seg = wp[j + 1, :2] - wp[j, :2]
        if float(np.dot(np.asarray(xy) - wp[j, :2], seg)) > 0:
            j += 1
    return j


def remaining_cost(traj: Trajectory, pose: Pose2D, snap: MapSnapshot, cfg: PlannerConfig,
                   fp: Footprint = Footprint()) -> float:
    """Cost of the unexecuted suffix, re-evaluated on the current snapshot.

    The suffix starts at the nearest waypoint ahead of ``pose``. It is ``inf`` if
    any suffix waypoint footprint is in collision and 0 once no segment is left.
    A trajectory that stops short of the goal adds its ``cost_to_go``.
    """
    wp = traj.waypoints
    if len(wp) == 0:
        return traj.cost_to_go
    k = _ahead_index(wp, (pose.x, pose.y))
    suffix = wp[k:]
    if len(suffix) < 2:
        return traj.cost_to_go
    f = CostField(snap, fp)
    if not f.valid(suffix).all():
        return math.inf
    return cfg.lambda1 * path_length(suffix) + cfg.lambda2 * float(f.mean_costs(suffix).sum()) + traj.cost_to_go


def blocked_within(traj: Trajectory, pose: Pose2D, snap: MapSnapshot, radius: float, fp: Footprint = Footprint()) -> bool:
    """A colliding waypoint on the remaining path lies within ``radius`` of ``pose``."""
    wp = traj.waypoints
    if len(wp) == 0:
        return False
    suffix = wp[_ahead_index(wp, (pose.x, pose.y)):]
    bad = ~CostField(snap, fp).valid(suffix)
    if not bad.any():
        return False
    d = np.hypot(suffix[bad, 0] - pose.x, suffix[bad, 1] - pose.y)
    return bool(np.any(d <= radius))


@dataclass
class RobotState:
    pose: Pose2D
    velocity: tuple[float, float] = (0.0, 0.0)

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass
class Decision:
    kind: str  # "Keep" | "Switch" | "Stop" | "NoPath"
    trajectory: Trajectory | None
    candidate_cost: float = math.inf
    remaining_cost: float = math.inf
    plan_start: Pose2D | None = None
    lead_in: np.ndarray | None = None  # path from the robot to plan_start along the current trajectory
    plan_time: float = 0.0
    iterations: int = 0


def should_switch(candidate: float, remaining: float, hysteresis: float = 0.0) -> bool:
    return candidate < remaining - hysteresis


def project_start(robot: RobotState, current: Trajectory | None, horizon: float):
    """Where the robot will be after ``horizon`` seconds at its current speed.

    While following a trajectory the projection runs along it; otherwise it is a
    straight constant-velocity extrapolation. Returns ``(pose, lead_in)``.
    """
    p = robot.pose
    dist = robot.speed * horizon
    if current is None or dist <= 0 or len(current.waypoints) == 0:
        x, y = p.x + robot.velocity[0] * horizon, p.y + robot.velocity[1] * horizon
        return Pose2D(x, y, p.heading, stamp=p.stamp + horizon), np.array([[x, y, p.heading]])
    wp = current.waypoints
    k = _ahead_index(wp, (p.x, p.y))
    pts = np.vstack([[p.x, p.y, p.heading], wp[k:]])
    lead = [pts[0]]
    left = dist
    for a, b in zip(pts[:-1], pts[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        if seg >= left and seg > 0:
            f = left / seg
            h = math.atan2(b[1] - a[1], b[0] - a[0])
            end = np.array([a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, h])
            lead.append(end)
            return Pose2D(end[0], end[1], h, stamp=p.stamp + horizon), np.array(lead)
        left -= seg
        lead.append(b)
    end = pts[-1]
    return Pose2D(end[0], end[1], end[2], stamp=p.stamp + horizon), np.array(lead)


def replan_step(robot: RobotState, current: Trajectory | None, goal: Pose2D, snap: MapSnapshot,
                cfg: PlannerConfig = PlannerConfig(), fp: Footprint = Footprint(), seed: int | None = None,
                plan_fn=None) -> Decision:
    """One planning cycle.

    1. A moving robot stops if the remaining path collides within ``stop_radius``.
    2. Otherwise plan from the pose projected one cycle ahead.
    3. Switch iff the candidate is strictly cheaper than the current path's remaining
       cost (evaluated from the same projected pose); keep otherwise. Trajectories
       that stop short of the goal (frontier mode) compare ``c_total + cost_to_go``.

    A stopped robot with a blocked path stays stopped until a plan is found.
    ``plan_fn(start, goal, snap, cfg, fp, seed)`` may replace the RRT* call.
    """
    moving = robot.speed > 1e-9
    blocked = current is not None and blocked_within(current, robot.pose, snap, cfg.stop_radius, fp)
    if blocked and moving:
        rem = remaining_cost(current, robot.pose, snap, cfg, fp)
        return Decision("Stop", current, math.inf, rem, robot.pose)
    start, lead_in = project_start(robot, current, cfg.cycle_period)
    remaining = math.inf if current is None else remaining_cost(current, start, snap, cfg, fp)
    plan_fn = plan_fn or _default_plan
    cand, ptime, iters = None, 0.0, 0
    try:
        res = plan_fn(start, goal, snap, cfg, fp, seed)
        if isinstance(res, PlanResult):
            cand, ptime, iters = res.trajectory, res.wall_time, res.iterations
        else:
            cand = res
    except (NoPathFound, InvalidStart):
        cand = None
    if cand is not None and should_switch(cand.estimate, remaining, cfg.hysteresis):
        return Decision("Switch", cand, cand.estimate, remaining, start, lead_in, ptime, iters)
    c_cost = math.inf if cand is None else cand.estimate
    if current is None:
        return Decision("NoPath", None, c_cost, remaining, start, None, ptime, iters)
    if blocked:
        return Decision("Stop", current, c_cost, remaining, start, None, ptime, iters)
    return Decision("Keep", current, c_cost, remaining, start, None, ptime, iters)


def _default_plan(start, goal, snap, cfg, fp, seed):
    return plan_detailed(start, goal, snap, cfg, fp, seed=seed)


# -- exports -----------------------------------------------------------------

TRAJECTORY_FIELDS = ["cycle", "stamp", "x", "y", "heading", "cumulative_length", "cumulative_semantic"]
DECISION_FIELDS = ["cycle", "time", "decision", "candidate_cost", "remaining_cost"]


def trajectory_rows(cycle: int, traj: Trajectory, snap: MapSnapshot, fp: Footprint):
    wp = traj.waypoints
    seg = np.hypot(*np.diff(wp[:, :2], axis=0).T) if len(wp) > 1 else np.zeros(0)
    cum_len = np.r_[0.0, np.cumsum(seg)]
    cum_sem = np.cumsum(CostField(snap, fp).mean_costs(wp))
    for i in range(len(wp)):
        yield [cycle, traj.stamps[i], wp[i, 0], wp[i, 1], wp[i, 2], cum_len[i], cum_sem[i]]


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
