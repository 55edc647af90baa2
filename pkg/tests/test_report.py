import math

import numpy as np
from PIL import Image

from pannav.gridmap import LayeredGridMap, refresh
from pannav.report import render_costs, render_map
from pannav.taxonomy import default_registry

REG = default_registry()


def test_render_map_writes_png(tmp_path):
    g = LayeredGridMap(0.2, (0.0, 0.0), (40, 50))
    g.static_class[:20] = REG.id_of("road")
    refresh(g, REG)
    path = np.array([[1.0, 1.0, 0.0], [5.0, 2.0, 0.0]])
    out = render_map(g, REG, tmp_path / "m.png", robot_path=path, goal=(8.0, 6.0), title="t")
    with Image.open(out) as im:
        assert im.format == "PNG" and im.size[0] > im.size[1]


def test_render_costs_handles_infinite_and_empty(tmp_path):
    cycles = [
        {"time": 0.0, "decision": "Switch", "candidate_cost": 10.0, "remaining_cost": math.inf},
        {"time": 1.0, "decision": "Keep", "candidate_cost": 9.5, "remaining_cost": 9.0},
        {"time": 2.0, "decision": "Stop", "candidate_cost": math.inf, "remaining_cost": math.inf},
    ]
    assert render_costs(cycles, tmp_path / "c.png").is_file()
    assert render_costs([], tmp_path / "e.png").is_file()
