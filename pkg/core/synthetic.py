"""
Deterministic synthetic multi-robot missions with ground truth.

Robots drive consecutive windows of one base path; each robot's first poses
revisit the last poses of the previous robot, which yields the rendezvous.
"""
from typing import Dict, List, Tuple

import numpy as np

from config.settings import settings
from models.errors import SpecError
from models.pose_graph import MultiRobotGraph, NodeId, Pose, RelativeMeasurement
from models.schemas import MissionSpec, NoiseModel, TrajectoryShape
from utils.lie import exp_so, random_axis, random_rotation, wrap_angle
from utils.logger import get_logger

logger = get_logger("synthetic")

LATERAL_OFFSET = 0.3  # fraction of the step length
MATCH_RADIUS = 2.0  # in step lengths


def _base_positions(shape: TrajectoryShape, count: int, step: float) -> np.ndarray:
    """Planar positions of the shared base path, consecutive spacing = step."""
    m = np.arange(count, dtype=float)
    if shape == TrajectoryShape.RING and count >= 3:
        radius = step / (2.0 * np.sin(np.pi / count))
        phi = 2.0 * np.pi * m / count
        return np.column_stack([radius * np.cos(phi), radius * np.sin(phi)])
    if shape == TrajectoryShape.GRID:
        width = max(2, int(np.ceil(np.sqrt(count))))
        rows = m // width
        cols = m % width
        cols = np.where(rows % 2 == 1, width - 1 - cols, cols)
        return np.column_stack([cols * step, rows * step])
    return np.column_stack([m * step, np.zeros(count)])


def _headings(positions: np.ndarray) -> np.ndarray:
    if len(positions) < 2:
        return np.zeros(len(positions))
    delta = np.diff(positions, axis=0)
    heading = np.arctan2(delta[:, 1], delta[:, 0])
    return np.append(heading, heading[-1])


def _make_pose(d: int, xy: np.ndarray, yaw: float, m: int, total: int, step: float) -> Pose:
    if d == 2:
        return Pose(exp_so([yaw], 2), xy)
    roll = 0.1 * np.sin(0.7 * m)
    z = 0.1 * step * np.sin(2.0 * np.pi * m / max(total, 1))
    R = exp_so([0.0, 0.0, yaw], 3) @ exp_so([roll, 0.0, 0.0], 3)
    return Pose(R, np.array([xy[0], xy[1], z]))


def _noisy(relative: Pose, noise: NoiseModel, rng: np.random.Generator) -> Pose:
    """relative composed with an axis-angle rotation and Gaussian translation perturbation."""
    d = relative.dimension
    angle = wrap_angle(rng.normal(0.0, noise.rot_stddev)) if noise.rot_stddev > 0 else 0.0
    axis = random_axis(rng, d)
    translation = rng.normal(0.0, noise.trans_stddev, size=d) if noise.trans_stddev > 0 else np.zeros(d)
    return relative @ Pose(exp_so(angle * axis, d), translation)


def overlap_count(spec: MissionSpec) -> int:
    return min(spec.poses_per_robot, max(1, int(round(spec.inter_overlap * spec.poses_per_robot))))


def generate(spec: MissionSpec) -> MultiRobotGraph:
    """Build the mission graph with ground truth populated."""
    if spec.num_robots == 1 and spec.inter_overlap > 0:
        raise SpecError("A single robot cannot overlap another robot's trajectory")
    if spec.intra_loop_period == 1:
        raise SpecError("intra_loop_period must be 0 (disabled) or at least 2")

    d, R, P, step = spec.dimension, spec.num_robots, spec.poses_per_robot, spec.step_length
    overlap = overlap_count(spec) if R > 1 else 0
    stride = P - overlap
    total = P + (R - 1) * stride
    base = _base_positions(spec.trajectory_shape, total, step)
    headings = _headings(base)

    truth: Dict[NodeId, Pose] = {}
    for robot in range(R):
        offset = LATERAL_OFFSET * step * (robot % 2)
        for k in range(P):
            m = robot * stride + k
            normal = np.array([-np.sin(headings[m]), np.cos(headings[m])])
            truth[NodeId(robot, k)] = _make_pose(d, base[m] + offset * normal, headings[m], m, total, step)

    noise = spec.noise
    rng = np.random.default_rng(noise.seed)
    kappa = 1.0 / max(noise.rot_stddev ** 2, settings.WEIGHT_EPSILON)
    sigma = 1.0 / max(noise.trans_stddev ** 2, settings.WEIGHT_EPSILON)

    def measure(a: NodeId, b: NodeId) -> RelativeMeasurement:
        relative = truth[a].inverse() @ truth[b]
        return RelativeMeasurement(a, b, _noisy(relative, noise, rng), kappa, sigma)

    edges: List[RelativeMeasurement] = []
    for robot in range(R):
        for k in range(P - 1):
            edges.append(measure(NodeId(robot, k), NodeId(robot, k + 1)))
        period = spec.intra_loop_period
        if period >= 2:
            for k in range(period, P, period):
                edges.append(measure(NodeId(robot, k - period), NodeId(robot, k)))

    for robot in range(R - 1):
        candidates = [NodeId(robot, k) for k in range(P - overlap, P)]
        for k in range(overlap):
            target = NodeId(robot + 1, k)
            distances = [np.linalg.norm(truth[c].translation - truth[target].translation) for c in candidates]
            best = int(np.argmin(distances))
            if distances[best] <= MATCH_RADIUS * step:
                edges.append(measure(candidates[best], target))

    graph = MultiRobotGraph(
        dimension=d,
        poses_per_robot=tuple([P] * R),
        edges=tuple(edges),
        ground_truth=truth,
    )
    logger.info(
        f"Generated {spec.trajectory_shape.value} mission: {R} robots x {P} poses, "
        f"{len(edges)} edges ({len(graph.rendezvous_edges())} inter), d={d}"
    )
    return graph


def perturb_initial_guess(
    graph: MultiRobotGraph, magnitude_rot: float, magnitude_trans: float, seed: int
) -> Dict[NodeId, Pose]:
    """Ground truth with i.i.d. bounded rotation and translation perturbations."""
    if graph.ground_truth is None:
        raise SpecError("Graph has no ground truth to perturb")
    rng = np.random.default_rng(seed)
    d = graph.dimension
    perturbed: Dict[NodeId, Pose] = {}
    for node in graph.node_ids():
        pose = graph.ground_truth[node]
        rotation = pose.rotation @ random_rotation(rng, d, magnitude_rot)
        translation = pose.translation + rng.uniform(-magnitude_trans, magnitude_trans, size=d)
        perturbed[node] = Pose(rotation, translation)
    return perturbed


def mission_summary(graph: MultiRobotGraph) -> Tuple[int, int, int]:
    """(nodes, intra edges, inter edges)."""
    inter = len(graph.rendezvous_edges())
    return graph.num_nodes, len(graph.edges) - inter, inter
