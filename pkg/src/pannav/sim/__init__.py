"""Synthetic world, sensors and the closed-loop scenario runner."""

from .scenario import ScenarioConfig, load_scenario
from .sensors import LidarPattern, SensorRig, render_segmentation, simulate_lidar
from .world import Actor, Obstacle, TerrainPatch, World, cast_rays, step_actors

__all__ = [
    "Actor", "LidarPattern", "Obstacle", "ScenarioConfig", "SensorRig", "TerrainPatch", "World",
    "cast_rays", "load_scenario", "render_segmentation", "simulate_lidar", "step_actors",
]
