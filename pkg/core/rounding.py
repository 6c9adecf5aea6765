"""
Rounding of lifted solutions back to SE(d) poses and gauge fixing.
"""
from typing import Dict

import numpy as np

from config.settings import settings
from core.quadratic import LiftedState
from models.errors import DegenerateSolution, DimensionMismatch, NodeNotFound
from models.pose_graph import MultiRobotGraph, NodeId, Pose
from utils.lie import project_to_rotation
from utils.logger import get_logger

logger = get_logger("rounding")


def round_solution(graph: MultiRobotGraph, X: LiftedState) -> Dict[NodeId, Pose]:
    """Project a lifted state onto SE(d)^n through the top-d left singular subspace."""
    d = X.d
    if X.num_nodes != graph.num_nodes or graph.dimension != d:
        raise DimensionMismatch(f"State holds {X.num_nodes} nodes of dimension {d}, graph {graph.num_nodes}")
    Y, p = X.frames()
    if X.r == d:
        basis = np.eye(d)
    else:
        stacked = Y.transpose(1, 0, 2).reshape(X.r, -1)
        U, s, _ = np.linalg.svd(stacked, full_matrices=False)
        if s[0] == 0 or s[d - 1] < settings.RANK_COLLAPSE_TOL * s[0]:
            raise DegenerateSolution(f"Lifted frames have rank below {d} (singular values {s[:d]})")
        basis = U[:, :d]

    frames = np.einsum("rd,nre->nde", basis, Y)
    translations = p @ basis
    positive = int(np.sum(np.linalg.det(frames) > 0))
    if positive < graph.num_nodes - positive:
        flip = np.eye(d)
        flip[-1, -1] = -1.0
        frames = np.einsum("de,nef->ndf", flip, frames)
        translations = translations @ flip
        logger.debug(f"Reflected rounded frames ({positive} of {graph.num_nodes} had positive determinant)")

    return {
        node: Pose(project_to_rotation(frames[i]), translations[i])
        for i, node in enumerate(graph.node_ids())
    }


def gauge_fix(poses: Dict[NodeId, Pose], anchor: NodeId = NodeId(0, 0)) -> Dict[NodeId, Pose]:
    """Express every pose relative to the anchor so the anchor becomes the identity."""
    if anchor not in poses:
        raise NodeNotFound(f"Anchor {anchor} is not in the solution")
    inverse = poses[anchor].inverse()
    return {node: inverse @ pose for node, pose in poses.items()}
