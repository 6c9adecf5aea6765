"""
Core data model for multi-robot pose graphs: poses, weighted relative
measurements, the agent partition and structural validation.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from config.settings import settings
from models.errors import InvalidPose, NodeNotFound
from utils.lie import rotation_2d


class EdgeKind(str, Enum):
    """Edge kind enumeration."""
    INTRA = "intra"
    INTER = "inter"


@dataclass(frozen=True, order=True)
class NodeId:
    """Pose identity: (robot, per-robot index), both 0-based."""
    robot: int
    index: int

    def __post_init__(self):
        if self.robot < 0 or self.index < 0:
            raise ValueError(f"NodeId fields must be nonnegative, got ({self.robot}, {self.index})")

    def __repr__(self) -> str:
        return f"NodeId({self.robot}, {self.index})"


@dataclass(frozen=True, eq=False)
class Pose:
    """SE(d) element with rotation (d x d) and translation (d,) in meters."""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(-1)
        d = R.shape[0] if R.ndim == 2 else 0
        if d not in (2, 3) or R.shape != (d, d) or t.shape != (d,):
            raise InvalidPose(f"Pose needs a square rotation and translation of dimension 2 or 3, got {R.shape}, {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidPose("Pose contains non-finite values")
        deviation = np.max(np.abs(R.T @ R - np.eye(d)))
        if deviation > settings.ROTATION_TOL or abs(np.linalg.det(R) - 1.0) > settings.ROTATION_TOL:
            raise InvalidPose(f"Rotation is not in SO({d}) (orthogonality deviation {deviation:.3e})")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def dimension(self) -> int:
        return self.rotation.shape[0]

    @classmethod
    def identity(cls, d: int) -> "Pose":
        return cls(np.eye(d), np.zeros(d))

    @classmethod
    def from_xy_theta(cls, x: float, y: float, theta: float) -> "Pose":
        return cls(rotation_2d(theta), np.array([x, y]))

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation, self.translation + self.rotation @ other.translation)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def matrix(self) -> np.ndarray:
        d = self.dimension
        T = np.eye(d + 1)
        T[:d, :d] = self.rotation
        T[:d, d] = self.translation
        return T

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0.0)
            and np.allclose(self.translation, other.translation, atol=atol, rtol=0.0)
        )

    def __repr__(self) -> str:
        return f"Pose(R={self.rotation.tolist()}, t={self.translation.tolist()})"


@dataclass(frozen=True)
class RelativeMeasurement:
    """Directed relative-pose edge; the measurement is expressed in the source frame."""
    source: NodeId
    target: NodeId
    measurement: Pose
    kappa: float
    sigma: float

    @property
    def kind(self) -> EdgeKind:
        return EdgeKind.INTRA if self.source.robot == self.target.robot else EdgeKind.INTER

    @property
    def rotation(self) -> np.ndarray:
        return self.measurement.rotation

    @property
    def translation(self) -> np.ndarray:
        return self.measurement.translation

    def reversed(self) -> "RelativeMeasurement":
        """Same constraint expressed from the target frame."""
        return RelativeMeasurement(self.target, self.source, self.measurement.inverse(), self.kappa, self.sigma)

    def scaled(self, factor: float) -> "RelativeMeasurement":
        return replace(self, kappa=self.kappa * factor, sigma=self.sigma * factor)


class Violation(BaseModel):
    """Single structural problem found by validation."""
    kind: str = Field(..., description="Violation category")
    message: str = Field(..., description="Human-readable description")
    edge_index: Optional[int] = Field(None, description="Offending edge position")
    node: Optional[Tuple[int, int]] = Field(None, description="Offending node as (robot, index)")


class ValidationReport(BaseModel):
    """List of violations; empty means valid."""
    violations: List[Violation] = Field(default_factory=list, description="Every invariant violation found")

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def kinds(self) -> List[str]:
        return [v.kind for v in self.violations]

    def summary(self) -> str:
        if self.is_valid:
            return "valid"
        return "; ".join(v.message for v in self.violations)


@dataclass(frozen=True)
class MultiRobotGraph:
    """Pose graph partitioned over agents; immutable once built."""
    dimension: int
    poses_per_robot: Tuple[int, ...]
    edges: Tuple[RelativeMeasurement, ...] = ()
    ground_truth: Optional[Dict[NodeId, Pose]] = field(default=None, compare=False)
    initial_guess: Optional[Dict[NodeId, Pose]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError(f"Graph dimension must be 2 or 3, got {self.dimension}")
        object.__setattr__(self, "poses_per_robot", tuple(int(c) for c in self.poses_per_robot))
        object.__setattr__(self, "edges", tuple(self.edges))
        offsets = np.concatenate([[0], np.cumsum(self.poses_per_robot, dtype=int)]).astype(int)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def num_robots(self) -> int:
        return len(self.poses_per_robot)

    @property
    def num_nodes(self) -> int:
        return int(self._offsets[-1])

    @property
    def robot_offsets(self) -> np.ndarray:
        """Global index of each robot's first pose, plus the total at the end."""
        return self._offsets

    def contains(self, node: NodeId) -> bool:
        return node.robot < self.num_robots and node.index < self.poses_per_robot[node.robot]

    def global_index(self, node: NodeId) -> int:
        """Contiguous per-robot index: sum of earlier robots' counts plus the local index."""
        if not self.contains(node):
            raise NodeNotFound(f"Unknown node {node}")
        return int(self._offsets[node.robot]) + node.index

    def node_id(self, global_index: int) -> NodeId:
        if not 0 <= global_index < self.num_nodes:
            raise NodeNotFound(f"Global index {global_index} out of range [0, {self.num_nodes})")
        robot = int(np.searchsorted(self._offsets, global_index, side="right") - 1)
        return NodeId(robot, global_index - int(self._offsets[robot]))

    def node_ids(self) -> Iterator[NodeId]:
        for robot, count in enumerate(self.poses_per_robot):
            for index in range(count):
                yield NodeId(robot, index)

    def robot_slice(self, robot: int) -> slice:
        return slice(int(self._offsets[robot]), int(self._offsets[robot + 1]))

    def rendezvous_edges(self) -> List[RelativeMeasurement]:
        """Inter-robot edges in insertion order."""
        return [edge for edge in self.edges if edge.kind == EdgeKind.INTER]

    def intra_edges(self, robot: Optional[int] = None) -> List[RelativeMeasurement]:
        return [
            edge for edge in self.edges
            if edge.kind == EdgeKind.INTRA and (robot is None or edge.source.robot == robot)
        ]

    def robot_neighbors(self) -> Dict[int, List[int]]:
        """Robots sharing at least one inter edge, per robot, sorted."""
        neighbors: Dict[int, set] = {robot: set() for robot in range(self.num_robots)}
        for edge in self.rendezvous_edges():
            neighbors[edge.source.robot].add(edge.target.robot)
            neighbors[edge.target.robot].add(edge.source.robot)
        return {robot: sorted(adjacent) for robot, adjacent in neighbors.items()}

    def with_edges(self, new_edges: Iterable[RelativeMeasurement]) -> "MultiRobotGraph":
        """New graph with extra edges appended (e.g. a fresh rendezvous)."""
        return replace(self, edges=self.edges + tuple(new_edges))

    def with_weights_scaled(self, factor: float) -> "MultiRobotGraph":
        return replace(self, edges=tuple(edge.scaled(factor) for edge in self.edges))

    def validate(self) -> ValidationReport:
        """Report every invariant violation; never raises."""
        violations: List[Violation] = []
        n = self.num_nodes
        parent = list(range(n))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for k, edge in enumerate(self.edges):
            endpoints_known = True
            for node in (edge.source, edge.target):
                if not self.contains(node):
                    endpoints_known = False
                    violations.append(Violation(
                        kind="unknown node",
                        message=f"edge {k} refers to unknown node ({node.robot}, {node.index})",
                        edge_index=k, node=(node.robot, node.index),
                    ))
            if edge.source == edge.target:
                violations.append(Violation(
                    kind="self loop", message=f"edge {k} is a self loop on ({edge.source.robot}, {edge.source.index})",
                    edge_index=k, node=(edge.source.robot, edge.source.index),
                ))
            if not (edge.kappa > 0 and edge.sigma > 0) or not np.isfinite([edge.kappa, edge.sigma]).all():
                violations.append(Violation(
                    kind="nonpositive weight",
                    message=f"edge {k} has nonpositive weight (kappa={edge.kappa}, sigma={edge.sigma})",
                    edge_index=k,
                ))
            if edge.measurement.dimension != self.dimension:
                violations.append(Violation(
                    kind="dimension mismatch",
                    message=f"edge {k} has dimension {edge.measurement.dimension}, graph has {self.dimension}",
                    edge_index=k,
                ))
            if endpoints_known:
                a, b = find(self.global_index(edge.source)), find(self.global_index(edge.target))
                if a != b:
                    parent[a] = b

        for label, poses in (("ground truth", self.ground_truth), ("initial guess", self.initial_guess)):
            if poses is None:
                continue
            for node, pose in poses.items():
                if not self.contains(node):
                    violations.append(Violation(
                        kind="unknown node", message=f"{label} refers to unknown node ({node.robot}, {node.index})",
                        node=(node.robot, node.index),
                    ))
                elif pose.dimension != self.dimension:
                    violations.append(Violation(
                        kind="dimension mismatch", message=f"{label} pose ({node.robot}, {node.index}) has dimension {pose.dimension}",
                        node=(node.robot, node.index),
                    ))

        if n > 1:
            components = len({find(i) for i in range(n)})
            if components > 1:
                violations.append(Violation(
                    kind="disconnected",
                    message=f"graph is disconnected ({components} components)",
                ))

        return ValidationReport(violations=violations)


def global_index(graph: MultiRobotGraph, node: NodeId) -> int:
    """Bijection NodeId -> [0, n), contiguous per robot."""
    return graph.global_index(node)


def validate(graph: MultiRobotGraph) -> ValidationReport:
    """Structural validation report for a graph."""
    return graph.validate()


def rendezvous_edges(graph: MultiRobotGraph) -> List[RelativeMeasurement]:
    """Inter-robot constraint set in insertion order."""
    return graph.rendezvous_edges()


def poses_to_arrays(graph: MultiRobotGraph, poses: Dict[NodeId, Pose]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack a pose map into (n, d, d) rotations and (n, d) translations ordered by global index."""
    d = graph.dimension
    rotations = np.empty((graph.num_nodes, d, d))
    translations = np.empty((graph.num_nodes, d))
    for node in graph.node_ids():
        pose = poses[node]
        i = graph.global_index(node)
        rotations[i] = pose.rotation
        translations[i] = pose.translation
    return rotations, translations


def arrays_to_poses(graph: MultiRobotGraph, rotations: np.ndarray, translations: np.ndarray) -> Dict[NodeId, Pose]:
    return {node: Pose(rotations[i], translations[i]) for i, node in enumerate(graph.node_ids())}


def missing_nodes(graph: MultiRobotGraph, poses: Dict[NodeId, Pose]) -> Sequence[NodeId]:
    return [node for node in graph.node_ids() if node not in poses]
