"""Semantic LiDAR-camera navigation: panoptic masks to labeled clouds, tracks,
a layered semantic map, and an anytime RRT* planner with reactive replanning."""

from .geometry import CameraModel, Pose2D, Pose3D
from .gridmap import LayeredGridMap, MapConfig, MapSnapshot
from .planner import Footprint, PlannerConfig, Trajectory, plan, replan_step
from .taxonomy import ClassRegistry, default_registry, load_registry
from .tracker import Tracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "CameraModel", "ClassRegistry", "Footprint", "LayeredGridMap", "MapConfig", "MapSnapshot", "PlannerConfig",
    "Pose2D", "Pose3D", "Tracker", "TrackerConfig", "Trajectory", "default_registry", "load_registry", "plan",
    "replan_step",
]
