"""
Shared fixtures: small synthetic missions and hand-built SO(2) cycles.
"""
from typing import Dict, Sequence

import numpy as np
import pytest

from core.synthetic import generate
from models.pose_graph import MultiRobotGraph, NodeId, Pose, RelativeMeasurement
from models.schemas import MissionSpec, NoiseModel, TrajectoryShape


def cycle_graph(measured_angles: Sequence[float], kappa: float = 1.0, sigma: float = 1.0) -> MultiRobotGraph:
    """Single-robot planar cycle i -> i+1 with pure rotation measurements."""
    n = len(measured_angles)
    edges = [
        RelativeMeasurement(NodeId(0, i), NodeId(0, (i + 1) % n), Pose.from_xy_theta(0.0, 0.0, angle), kappa, sigma)
        for i, angle in enumerate(measured_angles)
    ]
    return MultiRobotGraph(2, (n,), tuple(edges))


def winding_poses(n: int) -> Dict[NodeId, Pose]:
    """Headings that wind once around the circle."""
    return {NodeId(0, k): Pose.from_xy_theta(0.0, 0.0, 2.0 * np.pi * k / n) for k in range(n)}


def mission(num_robots=2, poses_per_robot=8, dimension=2, rot=0.01, trans=0.02, seed=1, **kwargs) -> MultiRobotGraph:
    spec = MissionSpec(
        num_robots=num_robots,
        poses_per_robot=poses_per_robot,
        dimension=dimension,
        trajectory_shape=kwargs.pop("trajectory_shape", TrajectoryShape.RING),
        intra_loop_period=kwargs.pop("intra_loop_period", 4),
        inter_overlap=kwargs.pop("inter_overlap", 0.25),
        noise=NoiseModel(rot_stddev=rot, trans_stddev=trans, seed=seed),
        **kwargs,
    )
    return generate(spec)


@pytest.fixture
def planar_mission() -> MultiRobotGraph:
    return mission()


@pytest.fixture
def spatial_mission() -> MultiRobotGraph:
    return mission(num_robots=3, poses_per_robot=6, dimension=3, trajectory_shape=TrajectoryShape.GRID, seed=3)


@pytest.fixture
def noiseless_mission() -> MultiRobotGraph:
    return mission(rot=0.0, trans=0.0)


@pytest.fixture
def winding_cycle() -> MultiRobotGraph:
    return cycle_graph([0.0] * 5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
