"""
Comparison baselines: one-time rendezvous alignment, odometry dead reckoning,
damped Gauss-Newton PGO and the ATE RMSE metric.
"""
from collections import deque
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from config.settings import settings
from core.quadratic import objective
from models.errors import InsufficientMatches, KeyMismatch
from models.pose_graph import MultiRobotGraph, NodeId, Pose, RelativeMeasurement, arrays_to_poses, poses_to_arrays
from models.schemas import GaussNewtonTrace
from utils.lie import exp_so, generators, procrustes, rigid_alignment, tangent_dim
from utils.logger import get_logger

logger = get_logger("baseline")


def rendezvous_align(pairs: Sequence[Tuple[Pose, Pose]]) -> Pose:
    """
    Transform T with T T_a ~ T_b for every (T_a, T_b) pair, chordal sense.

    Translation is the mean residual; rotation the Procrustes fit of
    orientations and centered positions.
    """
    if not pairs:
        raise InsufficientMatches("Rendezvous alignment needs at least one pose pair")
    if len(pairs) == 1:
        T_a, T_b = pairs[0]
        return T_b @ T_a.inverse()

    d = pairs[0][0].dimension
    ta = np.array([a.translation for a, _ in pairs])
    tb = np.array([b.translation for _, b in pairs])
    ca, cb = ta.mean(axis=0), tb.mean(axis=0)
    M = np.zeros((d, d))
    for (a, b), pa, pb in zip(pairs, ta - ca, tb - cb):
        M += b.rotation @ a.rotation.T + np.outer(pb, pa)
    R = procrustes(np.eye(d), M)
    t = cb - R @ ca
    return Pose(R, t)


def _odometry_order(graph: MultiRobotGraph, robot: int) -> Dict[NodeId, Pose]:
    """Dead reckoning for one robot: sequential odometry first, then BFS over other intra edges."""
    d = graph.dimension
    count = graph.poses_per_robot[robot]
    sequential: Dict[int, RelativeMeasurement] = {}
    adjacency: Dict[NodeId, List[Tuple[NodeId, Pose]]] = {NodeId(robot, k): [] for k in range(count)}
    for edge in graph.intra_edges(robot):
        if edge.target.index == edge.source.index + 1 and edge.source.index not in sequential:
            sequential[edge.source.index] = edge
        adjacency[edge.source].append((edge.target, edge.measurement))
        adjacency[edge.target].append((edge.source, edge.measurement.inverse()))

    poses: Dict[NodeId, Pose] = {NodeId(robot, 0): Pose.identity(d)}
    for k in range(count - 1):
        if k not in sequential or NodeId(robot, k) not in poses:
            break
        poses[NodeId(robot, k + 1)] = poses[NodeId(robot, k)] @ sequential[k].measurement

    queue = deque(poses)
    while queue:
        node = queue.popleft()
        for neighbor, relative in adjacency[node]:
            if neighbor not in poses:
                poses[neighbor] = poses[node] @ relative
                queue.append(neighbor)
    for k in range(count):
        poses.setdefault(NodeId(robot, k), Pose.identity(d))
    return poses


def odometry_trajectories(
    graph: MultiRobotGraph, anchors: Optional[Dict[int, Pose]] = None
) -> Dict[NodeId, Pose]:
    """Per-robot dead reckoning; each robot starts at its anchor or the identity."""
    poses: Dict[NodeId, Pose] = {}
    for robot in range(graph.num_robots):
        local = _odometry_order(graph, robot)
        anchor = (anchors or {}).get(robot)
        if anchor is not None:
            local = {node: anchor @ pose for node, pose in local.items()}
        poses.update(local)
    return poses


def one_time_fusion(graph: MultiRobotGraph) -> Dict[NodeId, Pose]:
    """Odometry per robot, then each robot mapped into robot 0's frame with its first rendezvous only."""
    local = odometry_trajectories(graph)
    mapped = {0}
    transforms: Dict[int, Pose] = {0: Pose.identity(graph.dimension)}
    inter = graph.rendezvous_edges()

    progress = True
    while progress and len(mapped) < graph.num_robots:
        progress = False
        for edge in inter:
            a, b = edge.source.robot, edge.target.robot
            if (a in mapped) == (b in mapped):
                continue
            if a in mapped:
                known, new = edge.source, edge.target
                predicted = transforms[a] @ local[known] @ edge.measurement
            else:
                known, new = edge.target, edge.source
                predicted = transforms[b] @ local[known] @ edge.measurement.inverse()
            transforms[new.robot] = rendezvous_align([(local[new], predicted)])
            mapped.add(new.robot)
            logger.debug(f"Robot {new.robot} aligned through rendezvous {edge.source} -> {edge.target}")
            progress = True
            break

    unmapped = sorted(set(range(graph.num_robots)) - mapped)
    if unmapped:
        raise InsufficientMatches(f"No rendezvous connects robots {unmapped} to robot 0")
    return {node: transforms[node.robot] @ pose for node, pose in local.items()}


def _residuals_and_jacobian(
    graph: MultiRobotGraph, rotations: np.ndarray, translations: np.ndarray
) -> Tuple[np.ndarray, sp.csr_matrix]:
    """Whitened residuals and sparse Jacobian w.r.t. right-perturbations (dtheta_i, dt_i)."""
    d = graph.dimension
    k = tangent_dim(d)
    block = k + d
    gens = generators(d)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    residuals: List[np.ndarray] = []
    offset = 0

    def put(row0: int, col0: int, J: np.ndarray):
        r_idx, c_idx = np.nonzero(J)
        rows.append(row0 + r_idx)
        cols.append(col0 + c_idx)
        vals.append(J[r_idx, c_idx])

    for edge in graph.edges:
        i = graph.global_index(edge.source)
        j = graph.global_index(edge.target)
        Ri, Rj = rotations[i], rotations[j]
        ti, tj = translations[i], translations[j]
        Rm, tm = edge.rotation, edge.translation
        sk, ss = np.sqrt(edge.kappa), np.sqrt(edge.sigma)

        residuals.append(sk * (Rj - Ri @ Rm).reshape(-1))
        residuals.append(ss * (tj - ti - Ri @ tm))

        rot_rows = d * d
        J_rot_i = np.stack([-(Ri @ G @ Rm).reshape(-1) for G in gens], axis=1) * sk
        J_rot_j = np.stack([(Rj @ G).reshape(-1) for G in gens], axis=1) * sk
        put(offset, i * block, J_rot_i)
        put(offset, j * block, J_rot_j)

        J_tr_i = np.zeros((d, block))
        J_tr_i[:, :k] = np.stack([-(Ri @ G @ tm) for G in gens], axis=1) * ss
        J_tr_i[:, k:] = -ss * np.eye(d)
        J_tr_j = np.zeros((d, block))
        J_tr_j[:, k:] = ss * np.eye(d)
        put(offset + rot_rows, i * block, J_tr_i)
        put(offset + rot_rows, j * block, J_tr_j)
        offset += rot_rows + d

    r = np.concatenate(residuals) if residuals else np.zeros(0)
    shape = (offset, block * graph.num_nodes)
    if rows:
        J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape).tocsr()
    else:
        J = sp.csr_matrix(shape)
    return r, J


def _apply_increment(rotations: np.ndarray, translations: np.ndarray, delta: np.ndarray, d: int):
    k = tangent_dim(d)
    steps = delta.reshape(-1, k + d)
    new_rot = np.stack([R @ exp_so(step[:k], d) for R, step in zip(rotations, steps)])
    return new_rot, translations + steps[:, k:]


def gauss_newton_pgo(
    graph: MultiRobotGraph,
    init: Dict[NodeId, Pose],
    max_iters: Optional[int] = None,
    damping: Optional[float] = None,
) -> Tuple[Dict[NodeId, Pose], bool, GaussNewtonTrace]:
    """Levenberg-damped Gauss-Newton on the exact objective with node (0, 0) held fixed."""
    max_iters = settings.GN_MAX_ITERS if max_iters is None else max_iters
    lam = settings.GN_INITIAL_DAMPING if damping is None else damping
    d = graph.dimension
    block = tangent_dim(d) + d
    rotations, translations = poses_to_arrays(graph, init)
    f = objective(graph, arrays_to_poses(graph, rotations, translations))
    trace = GaussNewtonTrace(costs=[f])
    converged = False
    free = np.arange(block, block * graph.num_nodes)

    for _ in range(max_iters):
        r, J = _residuals_and_jacobian(graph, rotations, translations)
        g = J.T @ r
        if np.linalg.norm(2.0 * g[free]) <= settings.GN_GRAD_TOL_REL * (1.0 + f):
            converged = True
            break
        Jf = J[:, free]
        H = (Jf.T @ Jf).tocsc()
        accepted = False
        while lam <= settings.GN_MAX_DAMPING:
            system = H + lam * sp.diags(H.diagonal() + 1.0, format="csc")
            step = spla.spsolve(system, -g[free])
            delta = np.zeros(block * graph.num_nodes)
            delta[free] = step
            cand_rot, cand_trans = _apply_increment(rotations, translations, delta, d)
            f_new = objective(graph, arrays_to_poses(graph, cand_rot, cand_trans))
            trace.iterations += 1
            if np.isfinite(f_new) and f_new <= f:
                rotations, translations, f = cand_rot, cand_trans, f_new
                trace.costs.append(f)
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            trace.rejected_steps += 1
            lam *= 10.0
        if not accepted:
            logger.warning(f"Gauss-Newton damping exceeded {settings.GN_MAX_DAMPING:.1e}")
            break

    trace.final_damping = lam
    logger.info(f"Gauss-Newton finished: cost {f:.6e}, converged={converged}, {trace.iterations} solves")
    return arrays_to_poses(graph, rotations, translations), converged, trace


def ate_rmse(
    estimate: Dict[NodeId, Pose],
    truth: Dict[NodeId, Pose],
    per_robot: bool = True,
    align: bool = True,
) -> List[float]:
    """Absolute trajectory error after one global rigid alignment (no scale), in meters."""
    if set(estimate) != set(truth):
        missing = sorted(set(truth) - set(estimate))
        extra = sorted(set(estimate) - set(truth))
        raise KeyMismatch(f"Estimate and ground truth differ: missing {missing[:3]}, extra {extra[:3]}")
    nodes = sorted(truth)
    est = np.array([estimate[node].translation for node in nodes])
    ref = np.array([truth[node].translation for node in nodes])
    if align and len(nodes) > 0:
        R, t = rigid_alignment(est, ref)
        est = est @ R.T + t
    errors = np.sum((est - ref) ** 2, axis=1)
    if not per_robot:
        return [float(np.sqrt(errors.mean()))]
    robots = np.array([node.robot for node in nodes])
    return [float(np.sqrt(errors[robots == robot].mean())) for robot in sorted(set(robots.tolist()))]
