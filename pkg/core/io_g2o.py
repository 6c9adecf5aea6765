"""
g2o pose-graph text format, TUM trajectories and JSON reports.

Vertex ids encode (robot, index) as robot * stride + index.
"""
import json
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import settings
from models.errors import IncompleteSolution, InvalidPose, InvalidTrajectory, NodeNotFound, ParseError
from models.pose_graph import MultiRobotGraph, NodeId, Pose, RelativeMeasurement, missing_nodes
from models.schemas import SolveReport
from utils.lie import quat_from_rotation, rotation_2d, rotation_from_quat, yaw_of
from utils.logger import get_logger

logger = get_logger("io_g2o")

# tag -> (dimension, token count including the tag)
VERTEX_TAGS = {"VERTEX_SE2": (2, 5), "VERTEX_SE3:QUAT": (3, 9)}
EDGE_TAGS = {"EDGE_SE2": (2, 12), "EDGE_SE3:QUAT": (3, 31)}


def _number(token: str) -> float:
    value = float(token)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {token!r}")
    return value


def _vertex_id(token: str) -> int:
    value = int(token)
    if value < 0:
        raise ValueError(f"negative vertex id {value}")
    return value


def _rotation_from_tokens(values: Sequence[float], d: int) -> np.ndarray:
    if d == 2:
        return rotation_2d(values[0])
    quat = np.asarray(values, dtype=float)
    norm = float(np.linalg.norm(quat))
    if abs(norm - 1.0) > settings.QUATERNION_NORM_TOL:
        raise ValueError(f"quaternion norm {norm:.6f} is not 1")
    return rotation_from_quat(quat, 3)


def _information_weights(values: Sequence[float], d: int) -> Tuple[float, float]:
    """(kappa, sigma) from the upper-triangular information entries."""
    if d == 2:
        xx, _, _, yy, _, tt = values
        return tt, 0.5 * (xx + yy)
    info = np.zeros((6, 6))
    info[np.triu_indices(6)] = values
    diag = np.diag(info)
    return float(diag[3:].mean()), float(diag[:3].mean())


def parse_g2o(text: Union[str, bytes], robot_id_stride: Optional[int] = None) -> MultiRobotGraph:
    """Parse g2o text into a graph whose initial guess holds the vertex poses."""
    stride = robot_id_stride or settings.ROBOT_ID_STRIDE
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"Input is not UTF-8 text: {e}", line_number=0)

    dimension: Optional[int] = None
    vertices: Dict[int, Pose] = {}
    raw_edges: List[Tuple[int, int, int, Pose, float, float]] = []

    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        tag = tokens[0]
        if tag in VERTEX_TAGS:
            d, expected = VERTEX_TAGS[tag]
        elif tag in EDGE_TAGS:
            d, expected = EDGE_TAGS[tag]
        else:
            raise ParseError(f"Unknown tag {tag!r}", line_number=line_number)
        if len(tokens) != expected:
            raise ParseError(f"{tag} expects {expected - 1} fields, got {len(tokens) - 1}", line_number=line_number)
        if dimension is None:
            dimension = d
        elif dimension != d:
            raise ParseError(f"{tag} mixes dimension {d} into a {dimension}D file", line_number=line_number)

        try:
            if tag in VERTEX_TAGS:
                vid = _vertex_id(tokens[1])
                values = [_number(tok) for tok in tokens[2:]]
                if vid in vertices:
                    raise ValueError(f"duplicate vertex id {vid}")
                vertices[vid] = Pose(_rotation_from_tokens(values[d:], d), np.array(values[:d]))
            else:
                source, target = _vertex_id(tokens[1]), _vertex_id(tokens[2])
                values = [_number(tok) for tok in tokens[3:]]
                rot_count = 1 if d == 2 else 4
                measurement = Pose(_rotation_from_tokens(values[d:d + rot_count], d), np.array(values[:d]))
                kappa, sigma = _information_weights(values[d + rot_count:], d)
                raw_edges.append((line_number, source, target, measurement, kappa, sigma))
        except (ValueError, IndexError, OverflowError, InvalidPose) as e:
            raise ParseError(f"Malformed {tag} line: {e}", line_number=line_number)

    dimension = dimension or 3
    counts: Dict[int, List[int]] = {}
    for vid in vertices:
        counts.setdefault(vid // stride, []).append(vid % stride)
    poses_per_robot = []
    for robot in range(len(counts)):
        if robot not in counts:
            raise ParseError(f"Robot ids are not contiguous: robot {robot} has no vertices", line_number=0)
        indices = sorted(counts[robot])
        if indices != list(range(len(indices))):
            raise ParseError(f"Robot {robot} pose indices are not contiguous from 0", line_number=0)
        poses_per_robot.append(len(indices))

    def node_of(vid: int, line_number: int) -> NodeId:
        if vid not in vertices:
            raise NodeNotFound(f"Edge on line {line_number} refers to missing vertex {vid}")
        return NodeId(vid // stride, vid % stride)

    edges = [
        RelativeMeasurement(node_of(i, ln), node_of(j, ln), measurement, kappa, sigma)
        for ln, i, j, measurement, kappa, sigma in raw_edges
    ]
    initial = {NodeId(vid // stride, vid % stride): pose for vid, pose in vertices.items()}
    graph = MultiRobotGraph(dimension, tuple(poses_per_robot), tuple(edges), initial_guess=initial)
    logger.debug(f"Parsed g2o: d={dimension}, robots={graph.num_robots}, nodes={graph.num_nodes}, edges={len(edges)}")
    return graph


def _fmt(value: float, digits: int) -> str:
    return f"{float(value) + 0.0:.{digits}g}"


def write_g2o(
    graph: MultiRobotGraph, poses: Dict[NodeId, Pose], robot_id_stride: Optional[int] = None
) -> str:
    """Serialize a graph with the given vertex poses; info matrices are isotropic."""
    stride = robot_id_stride or settings.ROBOT_ID_STRIDE
    digits = settings.G2O_DIGITS
    if graph.num_nodes == 0:
        return "# empty pose graph\n"
    missing = missing_nodes(graph, poses)
    if missing:
        raise IncompleteSolution(f"No pose for {len(missing)} nodes, first {missing[0]}")

    def vid(node: NodeId) -> int:
        return node.robot * stride + node.index

    def f(value: float) -> str:
        return _fmt(value, digits)

    lines: List[str] = []
    for node in graph.node_ids():
        pose = poses[node]
        if graph.dimension == 2:
            x, y = pose.translation
            lines.append(f"VERTEX_SE2 {vid(node)} {f(x)} {f(y)} {f(yaw_of(pose.rotation))}")
        else:
            fields = list(pose.translation) + list(quat_from_rotation(pose.rotation))
            lines.append(f"VERTEX_SE3:QUAT {vid(node)} " + " ".join(f(v) for v in fields))

    for edge in graph.edges:
        head = f"{vid(edge.source)} {vid(edge.target)}"
        m = edge.measurement
        k, s = edge.kappa, edge.sigma
        if graph.dimension == 2:
            x, y = m.translation
            info = [s, 0.0, 0.0, s, 0.0, k]
            lines.append(f"EDGE_SE2 {head} {f(x)} {f(y)} {f(yaw_of(m.rotation))} " + " ".join(f(v) for v in info))
        else:
            info = np.diag([s, s, s, k, k, k])[np.triu_indices(6)]
            fields = list(m.translation) + list(quat_from_rotation(m.rotation)) + list(info)
            lines.append(f"EDGE_SE3:QUAT {head} " + " ".join(f(v) for v in fields))
    return "\n".join(lines) + "\n"


def write_tum(trajectory: Sequence[Tuple[float, Pose]]) -> str:
    """TUM lines "t tx ty tz qx qy qz qw"; planar poses are embedded at z = 0."""
    digits = settings.TUM_DIGITS
    lines: List[str] = []
    previous: Optional[float] = None
    for t, pose in trajectory:
        t = float(t)
        if not math.isfinite(t) or (previous is not None and t <= previous):
            raise InvalidTrajectory(f"Timestamps must be finite and strictly increasing (got {t} after {previous})")
        previous = t
        translation = np.zeros(3)
        translation[:pose.dimension] = pose.translation
        quat = quat_from_rotation(pose.rotation)
        fields = " ".join(_fmt(v, digits) for v in list(translation) + list(quat))
        lines.append(f"{t + 0.0:.9f} {fields}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_tum(text: str, dimension: int = 3) -> List[Tuple[float, Pose]]:
    """Parse TUM lines; planar reads keep x, y and the yaw."""
    trajectory: List[Tuple[float, Pose]] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 8:
            raise ParseError(f"TUM line expects 8 fields, got {len(tokens)}", line_number=line_number)
        try:
            values = [_number(tok) for tok in tokens]
            rotation = _rotation_from_tokens(values[4:], 3)
            if dimension == 2:
                pose = Pose(rotation_2d(yaw_of(rotation)), np.array(values[1:3]))
            else:
                pose = Pose(rotation, np.array(values[1:4]))
        except (ValueError, InvalidPose) as e:
            raise ParseError(f"Malformed TUM line: {e}", line_number=line_number)
        trajectory.append((values[0], pose))
    return trajectory


def write_ground_truth(
    graph: MultiRobotGraph, poses: Dict[NodeId, Pose], robot_id_stride: Optional[int] = None
) -> str:
    """Ground-truth sidecar: TUM lines whose timestamp is the encoded vertex id."""
    stride = robot_id_stride or settings.ROBOT_ID_STRIDE
    missing = missing_nodes(graph, poses)
    if missing:
        raise IncompleteSolution(f"Ground truth misses {len(missing)} nodes, first {missing[0]}")
    return write_tum([(node.robot * stride + node.index, poses[node]) for node in graph.node_ids()])


def read_ground_truth(text: str, dimension: int, robot_id_stride: Optional[int] = None) -> Dict[NodeId, Pose]:
    stride = robot_id_stride or settings.ROBOT_ID_STRIDE
    truth: Dict[NodeId, Pose] = {}
    for t, pose in read_tum(text, dimension):
        vid = int(round(t))
        truth[NodeId(vid // stride, vid % stride)] = pose
    return truth


def robot_trajectory(graph: MultiRobotGraph, poses: Dict[NodeId, Pose], robot: int) -> List[Tuple[float, Pose]]:
    """One robot's poses as a TUM trajectory timed by pose index."""
    return [(float(k), poses[NodeId(robot, k)]) for k in range(graph.poses_per_robot[robot])]


def write_report(report: SolveReport) -> str:
    """Deterministic JSON text of a solve report."""
    payload = report.model_dump(mode="json", exclude_none=True)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
