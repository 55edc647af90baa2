"""Hand-built map snapshots shared by the planner and acceptance tests."""

import numpy as np

from pannav.gridmap import MapSnapshot
from pannav.planner import densify

RES = 0.2


def empty_map(size=20.0, cost=0.0):
    return MapSnapshot.free(size, size, RES, cost)


def mud_road_map(mud_cost=5.0):
    """Two mirror-image corridors around a central block, road above and mud below.

    Start (2, 7) and goal (18, 7) sit in open road end zones; the corridors run
    between x = 5 and x = 15 at y in [9.5, 12.5] (road) and [1.5, 4.5] (mud).
    """
    rows, cols = 70, 100
    y = (np.arange(rows) + 0.5) * RES
    x = (np.arange(cols) + 0.5) * RES
    X, Y = np.meshgrid(x, y)
    outside = (Y < 1.5) | (Y > 12.5)
    block = (X > 5.0) & (X < 15.0) & (Y > 4.5) & (Y < 9.5)
    occ = (outside | block).astype(np.uint8)
    cost = np.where((X > 5.0) & (X < 15.0) & (Y < 4.5), float(mud_cost), 0.0)
    cost[occ == 1] = np.inf
    return MapSnapshot(occ, cost, RES, (0.0, 0.0))


MUD_ROAD_START = (2.0, 7.0)
MUD_ROAD_GOAL = (18.0, 7.0)


def corridor_candidate(upper: bool):
    """Canonical representative of one homotopy class: start, corridor entry and exit, goal."""
    yc = 11.0 if upper else 3.0
    pts = [MUD_ROAD_START, (4.0, yc), (16.0, yc), MUD_ROAD_GOAL]
    out = [np.array([[pts[0][0], pts[0][1], 0.0]])]
    for a, b in zip(pts[:-1], pts[1:]):
        out.append(densify(a, b, RES / 2))
    return np.vstack(out)


def uses_road(waypoints) -> bool:
    mid = waypoints[np.argmin(np.abs(waypoints[:, 0] - 10.0))]
    return bool(mid[1] > 7.0)
