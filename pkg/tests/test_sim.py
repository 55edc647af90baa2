import math

import numpy as np
import pytest
import yaml
from shapely.geometry import Polygon, box

from pannav.cloud import label_points
from pannav.errors import ConfigError
from pannav.geometry import Pose3D
from pannav.masks import threshold_frame
from pannav.sim.scenario import BUNDLED, bundled_path, load_scenario, scenario_to_yaml
from pannav.sim.sensors import (
    Confusion,
    LidarPattern,
    SegmentationNoise,
    SensorRig,
    body_pose,
    render_segmentation,
    render_truth,
    simulate_lidar,
)
from pannav.sim.world import Actor, Obstacle, TerrainPatch, World, box_polygon, cast_rays, step_actors
from pannav.sim.runner import run_scenario
from pannav.taxonomy import UNKNOWN_ID, default_registry

REG = default_registry()
GRAVEL, DIRT, PERSON, FENCE, SKY = (REG.id_of(n) for n in ("gravel", "dirt", "person", "fence", "sky"))


def flat(**kw):
    return World((-50, -50, 50, 50), GRAVEL, **kw)


# -- ray casting -------------------------------------------------------------


def test_ray_examples():
    w = flat(obstacles=[Obstacle(box_polygon(5.5, 0, 1, 1), 2.0, FENCE)])
    t, cls, _ = cast_rays(w, (0, 0, 2.0), np.array([[0, 0, -1.0]]), 50)
    assert t[0] == 2.0 and cls[0] == GRAVEL
    t, _, _ = cast_rays(flat(), (0, 0, 1.0), np.array([[1.0, 0, 0]]), 50)
    assert math.isinf(t[0])
    t, cls, _ = cast_rays(w, (0, 0, 1.0), np.array([[1.0, 0, 0]]), 50)
    assert t[0] == pytest.approx(5.0, abs=1e-12) and cls[0] == FENCE
    t, _, _ = cast_rays(w, (0, 0, 2.5), np.array([[1.0, 0, 0]]), 50)  # passes over the top
    assert math.isinf(t[0])


def test_actor_box_hit_carries_instance():
    a = Actor((1.0, 1.0, 1.8), PERSON, [[4.0, 0.0]], instance_id=7)
    t, cls, inst = cast_rays(flat(actors=[a]), (0, 0, 1.0), np.array([[1.0, 0, 0]]), 50)
    assert t[0] == pytest.approx(3.5) and cls[0] == PERSON and inst[0] == 7


def test_lidar_noise_is_seeded():
    pat = LidarPattern(channels=8, azimuth_steps=64, range_sigma=0.05)
    pose = Pose3D((0, 0, 2.0), frame_id="world", child_frame_id="lidar")
    a = simulate_lidar(flat(), pose, pat, np.random.default_rng(4))
    b = simulate_lidar(flat(), pose, pat, np.random.default_rng(4))
    assert np.array_equal(a.points, b.points)
    clean = simulate_lidar(flat(), pose, LidarPattern(channels=8, azimuth_steps=64))
    # every downward ray lands on z = -2 in the sensor frame
    assert np.allclose(clean.points[:, 2], -2.0, atol=1e-9)


# -- actors ------------------------------------------------------------------


def test_step_actors_examples():
    w = flat(actors=[Actor((0.6, 0.6, 1.8), PERSON, [[0, 0], [10, 0]], speed=1.0),
                     Actor((0.6, 0.6, 1.8), PERSON, [[3, 3], [5, 3]], speed=0.0)])
    w1 = step_actors(w, 1.0)
    assert np.allclose(w1.actors[0].position, [1, 0]) and np.allclose(w1.actors[1].position, [3, 3])
    w2 = step_actors(w1, 100.0)
    assert np.allclose(w2.actors[0].position, [10, 0])
    assert np.allclose(w.actors[0].position, [0, 0])  # input untouched
    with pytest.raises(ValueError):
        step_actors(w, 0.0)


def test_actor_delay():
    a = Actor((0.6, 0.6, 1.8), PERSON, [[0, 0], [10, 0]], speed=2.0, delay=3.0)
    w = step_actors(flat(actors=[a]), 4.0)
    assert np.allclose(w.actors[0].position, [2, 0])


# -- camera ------------------------------------------------------------------


def rig_poses(rig, x=0.0, y=0.0, h=0.0):
    bp = body_pose(x, y, h)
    cam = rig.camera()
    return bp, cam, bp.compose(cam.extrinsic)


def test_render_gravel_without_noise():
    rig = SensorRig()
    _, cam, cpose = rig_poses(rig)
    frame = render_segmentation(flat(), cpose, cam, registry=REG)
    cls, _ = render_truth(flat(), cpose, cam)
    ground = cls == GRAVEL
    assert ground.sum() > 0 and np.all((cls == GRAVEL) | (cls == SKY))
    ch = list(frame.class_ids).index(GRAVEL)
    assert np.all(frame.probs[ground][:, ch] == 1.0)


def test_render_actor_instance():
    rig = SensorRig()
    _, cam, cpose = rig_poses(rig)
    a = Actor((0.6, 0.6, 1.8), PERSON, [[5.0, 0.0]], instance_id=3)
    frame = render_segmentation(flat(actors=[a]), cpose, cam, registry=REG)
    mask = threshold_frame(frame, 0.5, REG)
    person = mask.class_id == PERSON
    assert person.sum() > 10 and np.all(mask.instance[person] == 3) and np.all(mask.instance[~person] == 0)


def test_confusion_pixels_become_unknown():
    rig = SensorRig()
    _, cam, cpose = rig_poses(rig)
    w = flat(terrain=[TerrainPatch([[3, -50], [50, -50], [50, 0], [3, 0]], DIRT)])
    truth, _ = render_truth(w, cpose, cam)
    noise = SegmentationNoise((Confusion(DIRT, GRAVEL, 0.5),))
    mask = threshold_frame(render_segmentation(w, cpose, cam, noise, registry=REG), 0.6, REG)
    n_dirt, n_gravel = int((truth == DIRT).sum()), int((truth == GRAVEL).sum())
    assert n_dirt > 0 and n_gravel > 0
    assert int((mask.class_id == UNKNOWN_ID).sum()) == n_dirt + n_gravel
    assert int((mask.class_id == SKY).sum()) == int((truth == SKY).sum())


def test_lidar_and_camera_agree_without_noise():
    rig = SensorRig(lidar=LidarPattern(channels=32, azimuth_steps=256, elevation_min=math.radians(-50)))
    w = flat(
        terrain=[TerrainPatch([[2, -50], [50, -50], [50, -1], [2, -1]], DIRT)],
        obstacles=[Obstacle(box_polygon(8, 3, 0.4, 4), 1.5, FENCE)],
        actors=[Actor((0.6, 0.6, 1.8), PERSON, [[6.0, -3.0]])],
    )
    bp, cam, cpose = rig_poses(rig, 1.0, 0.5, 0.2)
    scan = simulate_lidar(w, bp.compose(rig.lidar_extrinsic()), rig.lidar, stamp=0.0)
    mask = threshold_frame(render_segmentation(w, cpose, cam, registry=REG), 0.5, REG)
    out = label_points(scan, mask, cam, bp)
    # independent pinhole projection into the camera
    pc = (out.points - cpose.t) @ cpose.R
    front = pc[:, 2] > 1e-6
    u = np.floor(cam.fx * pc[:, 0] / np.where(front, pc[:, 2], 1) + cam.cx + 0.5).astype(int)
    v = np.floor(cam.fy * pc[:, 1] / np.where(front, pc[:, 2], 1) + cam.cy + 0.5).astype(int)
    inside = front & (u >= 1) & (u < cam.width - 1) & (v >= 1) & (v < cam.height - 1)
    truth, _ = render_truth(w, cpose, cam)
    checked = 0
    for i in np.flatnonzero(inside):
        patch = truth[v[i] - 1:v[i] + 2, u[i] - 1:u[i] + 2]
        if np.all(patch == patch[0, 0]):
            assert out.labels[i] == scan.truth_labels[i]
            checked += 1
    assert checked > 500


# -- scenarios ---------------------------------------------------------------


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_parse(name):
    cfg = load_scenario(name)
    assert cfg.name == name and cfg.duration > 0
    again = load_scenario(scenario_to_yaml(cfg))
    assert again.start == cfg.start and again.goal == cfg.goal and again.planner == cfg.planner


def doc(**changes):
    d = yaml.safe_load(bundled_path("adversarial-crossing").read_text())
    for path, value in changes.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[int(k)] if isinstance(node, list) else node[k]
        if isinstance(node, list):
            node[int(keys[-1])] = value
        else:
            node[keys[-1]] = value
    return d


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"duration": -1.0}, "duration"),
        ({"world__actors__0__speed": -2.0}, "world.actors[0].speed"),
        ({"world__default_class": "lava"}, "world.default_class"),
        ({"robot__footprint": {"length": 2.5, "width": 2.0, "stride": 0.5}}, "robot.footprint.stride"),
        ({"sensors__camera__hfov": 200}, "sensors.camera.hfov"),
        ({"planner": {"plan_budget": 1.5}}, "planner"),
        ({"world__bounds": [0, 0, -1, 5]}, "world.bounds"),
    ],
)
def test_config_errors_name_the_field(changes, field):
    with pytest.raises(ConfigError) as e:
        load_scenario(doc(**changes))
    assert e.value.field.startswith(field)


def test_overrides_and_seed():
    cfg = load_scenario("empty-world", seed=9, overrides={"duration": 5, "robot": {"speed": 0.25}})
    assert cfg.seed == 9 and cfg.duration == 5.0 and cfg.planner.robot_speed == 0.25 and cfg.goal == (16.0, 0.0)


def test_empty_world_reaches_goal():
    res = run_scenario(load_scenario("empty-world"))
    m = res.metrics
    assert m.goal_reached and m.violations == 0
    assert m.switch_count >= 1


def test_geofence_stays_inside_ring():
    cfg = load_scenario("geofence")
    res = run_scenario(cfg)
    m = res.metrics
    assert m.goal_reached and m.violations == 0
    ring = cfg.document["apriori"]["rings"][0]
    x0, y0, x1, y1 = ring["rect"]
    inner = box(x0 + ring["width"], y0 + ring["width"], x1 - ring["width"], y1 - ring["width"])
    fp = cfg.footprint
    for x, y, h in res.robot_path:
        c, s = math.cos(h), math.sin(h)
        corners = [(x + c * a - s * b, y + s * a + c * b)
                   for a, b in ((fp.length / 2, fp.width / 2), (-fp.length / 2, fp.width / 2),
                                (-fp.length / 2, -fp.width / 2), (fp.length / 2, -fp.width / 2))]
        assert inner.contains(Polygon(corners))
