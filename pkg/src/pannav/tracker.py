"""Constant-velocity Kalman tracking of cluster boxes in the world plane.

State is ``(x, y, vx, vy)``; the measurement is the box center ``(x, y)``. Box
height and extents ride along as exponentially smoothed side values. A track keeps
the last conclusive (non-unknown) class it was given, so objects that leave the
camera view and are only seen as unlabeled LiDAR clusters stay e.g. ``person``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cloud import Detection
from .errors import NonMonotonicStamp, NonPositiveDefinite
from .taxonomy import UNKNOWN_ID

H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class TrackerConfig:
    sigma_a: float = 1.0  # m/s^2, white-acceleration process noise
    q_model: str = "piecewise"  # "piecewise" | "continuous"
    meas_sigma: float = 0.1  # m, per-axis measurement noise
    init_pos_var: float | None = None  # defaults to meas_sigma**2
    init_vel_var: float = 4.0  # (m/s)^2
    hit_confirm: int = 2
    miss_max: int = 10
    gate: float = 2.0  # m
    size_alpha: float = 0.5  # smoothing weight of the newest box size
    two_point_init: bool = True

    @property
    def R(self) -> np.ndarray:
        return np.eye(2) * self.meas_sigma**2


@dataclass
class Track:
    track_id: int
    state: np.ndarray  # (4,)
    covariance: np.ndarray  # (4, 4)
    z_center: float
    extents: np.ndarray  # (3,)
    label: int = UNKNOWN_ID
    hits: int = 1
    misses: int = 0
    last_update: float = 0.0
    confirmed: bool = False
    first_position: np.ndarray | None = None

    @property
    def position(self) -> np.ndarray:
        return self.state[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[2:]

    @property
    def top(self) -> float:
        return self.z_center + self.extents[2] / 2.0

    def footprint(self) -> tuple[float, float, float, float]:
        """``(xmin, ymin, xmax, ymax)`` of the box at the current estimate."""
        hx, hy = self.extents[0] / 2.0, self.extents[1] / 2.0
        x, y = self.state[0], self.state[1]
        return x - hx, y - hy, x + hx, y + hy

    def copy(self) -> "Track":
        return replace(
            self,
            state=self.state.copy(),
            covariance=self.covariance.copy(),
            extents=self.extents.copy(),
            first_position=None if self.first_position is None else self.first_position.copy(),
        )


def transition(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = dt
    F[1, 3] = dt
    return F


def process_noise(dt: float, sigma_a: float, model: str = "piecewise") -> np.ndarray:
    """White-acceleration process noise.

    ``piecewise``: acceleration constant over each step (``G G^T sigma^2``).
    ``continuous``: continuous white noise of spectral density ``sigma^2``; this
    one composes exactly, i.e. two predictions of ``a`` and ``b`` equal one of ``a+b``.
    """
    s2 = sigma_a**2
    if model == "piecewise":
        a, b, c = dt**4 / 4.0, dt**3 / 2.0, dt**2
    elif model == "continuous":
        a, b, c = dt**3 / 3.0, dt**2 / 2.0, dt
    else:
        raise ValueError(f"unknown process noise model {model!r}")
    Q = np.zeros((4, 4))
    for i in (0, 1):
        Q[i, i] = a * s2
        Q[i, i + 2] = Q[i + 2, i] = b * s2
        Q[i + 2, i + 2] = c * s2
    return Q


def predict(track: Track, dt: float, cfg: TrackerConfig = TrackerConfig()) -> Track:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    out = track.copy()
    if dt == 0:
        return out
    F = transition(dt)
    out.state = F @ track.state
    P = F @ track.covariance @ F.T + process_noise(dt, cfg.sigma_a, cfg.q_model)
    out.covariance = (P + P.T) / 2.0
    return out


def kalman_update(x, P, z, R):
    """Position-only measurement update (Joseph form). Returns ``(x, P)``."""
    S = H @ P @ H.T + R
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite("innovation covariance is not positive definite") from None
    if np.min(np.diag(L)) < 1e-12 * max(1.0, float(np.max(np.abs(S)))):
        raise NonPositiveDefinite("innovation covariance is numerically singular")
    K = np.linalg.solve(S.T, (P @ H.T).T).T
    x_new = x + K @ (np.asarray(z, dtype=float) - H @ x)
    I_KH = np.eye(len(x)) - K @ H
    P_new = I_KH @ P @ I_KH.T + K @ R @ K.T
    return x_new, (P_new + P_new.T) / 2.0


def update(track: Track, det: Detection, R=None, cfg: TrackerConfig = TrackerConfig()) -> Track:
    """Fuse one detection into a (predicted) track."""
    if det.stamp < track.last_update:
        raise NonMonotonicStamp(f"detection at {det.stamp} predates track update at {track.last_update}")
    R = cfg.R if R is None else np.asarray(R, dtype=float)
    out = track.copy()
    center = det.bbox.center
    out.state, out.covariance = kalman_update(track.state, track.covariance, center[:2], R)
    a = cfg.size_alpha
    out.z_center = (1 - a) * track.z_center + a * float(center[2])
    out.extents = (1 - a) * track.extents + a * det.bbox.extents
    out.hits = track.hits + 1
    out.misses = 0
    out.last_update = det.stamp
    if det.label != UNKNOWN_ID:
        out.label = det.label
    return out


@dataclass
class Assignment:
    pairs: list  # (track index, detection index)
    unmatched_tracks: list
    unmatched_detections: list


def associate(tracks, detections, gate: float) -> Assignment:
    """Greedy nearest-neighbour association on center distance.

    Candidate pairs within ``gate`` are taken in order of increasing distance, then
    lower ``track_id``, then lower detection index; each side is used at most once.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    cands = []
    for ti, t in enumerate(tracks):
        for di, d in enumerate(detections):
            dist = math.dist(t.state[:2], d.bbox.center[:2])
            if dist <= gate:
                cands.append((dist, t.track_id, di, ti))
    cands.sort()
    used_t, used_d, pairs = set(), set(), []
    for _, _, di, ti in cands:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        pairs.append((ti, di))
    pairs.sort()
    return Assignment(
        pairs,
        [i for i in range(len(tracks)) if i not in used_t],
        [i for i in range(len(detections)) if i not in used_d],
    )


@dataclass
class TrackerState:
    tracks: list = field(default_factory=list)
    next_id: int = 1
    stamp: float | None = None


class Tracker:
    """Track lifecycle: predict, associate, update, spawn, confirm, delete.

    Tentative tracks are dropped on their first miss; confirmed ones survive up to
    ``miss_max`` consecutive misses, coasting on their constant-velocity prediction.
    """

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self.state = TrackerState()
        self.log_rows: list[tuple] = []

    @property
    def tracks(self) -> list[Track]:
        return self.state.tracks

    def confirmed(self) -> list[Track]:
        return [t.copy() for t in self.state.tracks if t.confirmed]

    def step(self, detections, stamp: float):
        """Advance to ``stamp`` and fuse ``detections``.

        Returns ``(confirmed_tracks, memberships)`` where ``memberships`` maps each
        track id updated or spawned this step to the detection's point indices.
        """
        st = self.state
        if st.stamp is not None and stamp <= st.stamp:
            raise NonMonotonicStamp(f"stamp {stamp} does not advance past {st.stamp}")
        dt = 0.0 if st.stamp is None else stamp - st.stamp
        cfg = self.cfg
        predicted = [predict(t, dt, cfg) for t in st.tracks]
        assign = associate(predicted, detections, cfg.gate)
        memberships = {}
        survivors = []
        for ti, di in assign.pairs:
            t, det = predicted[ti], detections[di]
            if cfg.two_point_init and t.hits == 1 and t.first_position is not None and dt > 0:
                t = self._two_point(t, det, dt)
            else:
                t = update(t, det, cfg=cfg)
            if t.hits >= cfg.hit_confirm:
                t.confirmed = True
            memberships[t.track_id] = det.point_indices
            survivors.append(t)
        for ti in assign.unmatched_tracks:
            t = predicted[ti]
            t.misses += 1
            if not t.confirmed:
                continue
            if t.misses >= cfg.miss_max:
                continue
            survivors.append(t)
        for di in assign.unmatched_detections:
            t = self._spawn(detections[di], stamp)
            memberships[t.track_id] = detections[di].point_indices
            survivors.append(t)
        survivors.sort(key=lambda t: t.track_id)
        st.tracks = survivors
        st.stamp = stamp
        for t in survivors:
            self.log_rows.append(
                (stamp, t.track_id, float(t.state[0]), float(t.state[1]), float(t.state[2]), float(t.state[3]), t.label, t.confirmed)
            )
        return self.confirmed(), memberships

    def _spawn(self, det: Detection, stamp: float) -> Track:
        cfg = self.cfg
        c = det.bbox.center
        pv = cfg.meas_sigma**2 if cfg.init_pos_var is None else cfg.init_pos_var
        t = Track(
            track_id=self.state.next_id,
            state=np.array([c[0], c[1], 0.0, 0.0]),
            covariance=np.diag([pv, pv, cfg.init_vel_var, cfg.init_vel_var]),
            z_center=float(c[2]),
            extents=det.bbox.extents.astype(float),
            label=det.label,
            hits=1,
            misses=0,
            last_update=stamp,
            confirmed=cfg.hit_confirm <= 1,
            first_position=c[:2].astype(float),
        )
        self.state.next_id += 1
        return t

    def _two_point(self, t: Track, det: Detection, dt: float) -> Track:
        """Initialise position and velocity from the first two detections."""
        cfg = self.cfg
        c = det.bbox.center
        out = update(t, det, cfg=cfg)  # keeps bookkeeping and size smoothing
        vel = (c[:2] - t.first_position) / dt
        r = cfg.meas_sigma**2
        out.state = np.array([c[0], c[1], vel[0], vel[1]])
        P = np.zeros((4, 4))
        for i in (0, 1):
            P[i, i] = r
            P[i, i + 2] = P[i + 2, i] = r / dt
            P[i + 2, i + 2] = 2 * r / dt**2
        out.covariance = P
        out.first_position = None
        return out

    def write_log(self, path):
        write_track_log(path, self.log_rows)


TRACK_LOG_FIELDS = ["stamp", "track_id", "x", "y", "vx", "vy", "label", "confirmed"]


def write_track_log(path, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACK_LOG_FIELDS)
        for r in rows:
            w.writerow([repr(float(r[0])), r[1], *(repr(float(v)) for v in r[2:6]), r[6], int(bool(r[7]))])


def read_track_log(path):
    with Path(path).open(newline="") as fh:
        rd = csv.DictReader(fh)
        return [
            (float(r["stamp"]), int(r["track_id"]), float(r["x"]), float(r["y"]), float(r["vx"]), float(r["vy"]),
             int(r["label"]), bool(int(r["confirmed"])))
            for r in rd
        ]
