"""
Connection Laplacian of the joint multi-robot PGO problem, and cost, gradient
and Hessian of the lifted objective tr(X L X^T).

Column layout: node i (global index order) owns columns
[i(d+1), i(d+1)+d) for its frame Y_i and column i(d+1)+d for its translation p_i.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from config.settings import settings
from core import stiefel
from models.errors import DimensionMismatch, InvalidGraph
from models.pose_graph import EdgeKind, MultiRobotGraph, NodeId, Pose, poses_to_arrays
from utils.logger import get_logger

logger = get_logger("quadratic")


@dataclass
class ConnectionLaplacian:
    """Sparse symmetric PSD matrix with the graph partition it was assembled from."""
    matrix: sp.csr_matrix
    d: int
    num_nodes: int
    robot_offsets: np.ndarray
    # (owner robot, neighbor robot) -> owner's nodes incident to inter edges with neighbor
    separators: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_robots(self) -> int:
        return len(self.robot_offsets) - 1

    @property
    def inf_norm(self) -> float:
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=1).max())

    def columns_of(self, nodes: np.ndarray) -> np.ndarray:
        return node_columns(nodes, self.d)

    def robot_columns(self, robot: int) -> slice:
        b = self.d + 1
        return slice(int(self.robot_offsets[robot]) * b, int(self.robot_offsets[robot + 1]) * b)

    def scaled(self, factor: float) -> "ConnectionLaplacian":
        return ConnectionLaplacian(self.matrix * factor, self.d, self.num_nodes, self.robot_offsets, self.separators)


@dataclass
class LiftedState:
    """Rank-r lifted variable: r x (d+1)n matrix with orthonormal-column frames."""
    matrix: np.ndarray
    d: int

    @property
    def r(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[1] // (self.d + 1)

    def Y(self, i: int) -> np.ndarray:
        b = self.d + 1
        return self.matrix[:, i * b:i * b + self.d]

    def p(self, i: int) -> np.ndarray:
        b = self.d + 1
        return self.matrix[:, i * b + self.d]

    def frames(self) -> Tuple[np.ndarray, np.ndarray]:
        return stiefel.split_blocks(self.matrix, self.d)

    def orthonormality_error(self) -> float:
        return stiefel.orthonormality_error(self.matrix, self.d)

    def is_feasible(self, tol: float = 1e-9) -> bool:
        return self.orthonormality_error() <= tol

    def copy(self) -> "LiftedState":
        return LiftedState(self.matrix.copy(), self.d)

    def padded(self, r_new: int) -> "LiftedState":
        """Same state embedded at a higher rank with zero rows."""
        if r_new < self.r:
            raise DimensionMismatch(f"Cannot pad rank {self.r} down to {r_new}")
        extra = np.zeros((r_new - self.r, self.matrix.shape[1]))
        return LiftedState(np.vstack([self.matrix, extra]), self.d)

    @classmethod
    def from_poses(cls, graph: MultiRobotGraph, poses: Dict[NodeId, Pose], r: int) -> "LiftedState":
        """Embed SE(d) poses at rank r by zero-padding each frame."""
        d = graph.dimension
        if r < d:
            raise DimensionMismatch(f"Rank {r} is below dimension {d}")
        rotations, translations = poses_to_arrays(graph, poses)
        n = graph.num_nodes
        Y = np.zeros((n, r, d))
        p = np.zeros((n, r))
        Y[:, :d, :] = rotations
        p[:, :d] = translations
        return cls(stiefel.join_blocks(Y, p), d)


def node_columns(nodes: np.ndarray, d: int) -> np.ndarray:
    """Lifted column indices of the given global nodes, node-major."""
    nodes = np.asarray(nodes, dtype=int)
    return (nodes[:, None] * (d + 1) + np.arange(d + 1)[None, :]).reshape(-1)


def assemble(graph: MultiRobotGraph) -> ConnectionLaplacian:
    """Edge-additive assembly of the connection Laplacian."""
    report = graph.validate()
    if not report.is_valid:
        raise InvalidGraph(f"Cannot assemble an invalid graph: {report.summary()}")

    d = graph.dimension
    b = d + 1
    size = b * graph.num_nodes
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []

    def put(row0: int, col0: int, block: np.ndarray):
        r_idx, c_idx = np.nonzero(np.ones_like(block, dtype=bool))
        rows.append(row0 + r_idx)
        cols.append(col0 + c_idx)
        vals.append(block[r_idx, c_idx])

    separators: Dict[Tuple[int, int], set] = {}

    for edge in graph.edges:
        i = graph.global_index(edge.source)
        j = graph.global_index(edge.target)
        Rm, tm = edge.rotation, edge.translation
        kappa, sigma = edge.kappa, edge.sigma

        L_ii = np.zeros((b, b))
        L_ii[:d, :d] = kappa * (Rm @ Rm.T) + sigma * np.outer(tm, tm)
        L_ii[:d, d] = sigma * tm
        L_ii[d, :d] = sigma * tm
        L_ii[d, d] = sigma

        L_jj = np.zeros((b, b))
        L_jj[:d, :d] = kappa * np.eye(d)
        L_jj[d, d] = sigma

        L_ij = np.zeros((b, b))
        L_ij[:d, :d] = -kappa * Rm
        L_ij[:d, d] = -sigma * tm
        L_ij[d, d] = -sigma

        put(i * b, i * b, L_ii)
        put(j * b, j * b, L_jj)
        put(i * b, j * b, L_ij)
        put(j * b, i * b, L_ij.T)

        if edge.kind == EdgeKind.INTER:
            separators.setdefault((edge.source.robot, edge.target.robot), set()).add(i)
            separators.setdefault((edge.target.robot, edge.source.robot), set()).add(j)

    if rows:
        matrix = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
        ).tocsr()
    else:
        matrix = sp.csr_matrix((size, size))
    matrix.sum_duplicates()

    logger.debug(f"Assembled connection Laplacian: size={size}, nnz={matrix.nnz}, edges={len(graph.edges)}")
    return ConnectionLaplacian(
        matrix=matrix,
        d=d,
        num_nodes=graph.num_nodes,
        robot_offsets=graph.robot_offsets.copy(),
        separators={key: np.array(sorted(nodes), dtype=int) for key, nodes in separators.items()},
    )


def _check_shape(L: ConnectionLaplacian, M: np.ndarray):
    if M.ndim != 2 or M.shape[1] != L.size:
        raise DimensionMismatch(f"State has shape {M.shape}, Laplacian expects {L.size} columns")


def cost(L: ConnectionLaplacian, X: LiftedState) -> float:
    """trace(X L X^T)."""
    _check_shape(L, X.matrix)
    return quadratic_value(L.matrix, X.matrix)


def quadratic_value(Q: sp.spmatrix, M: np.ndarray, C: Optional[np.ndarray] = None) -> float:
    """tr(M Q M^T) + 2 tr(C M^T), clamped at zero when there is no linear term."""
    value = float(np.sum(M * (Q @ M.T).T))
    if C is not None:
        return value + 2.0 * float(np.sum(C * M))
    return max(value, 0.0)


def half_gradient(Q: sp.spmatrix, M: np.ndarray, C: Optional[np.ndarray] = None) -> np.ndarray:
    """M Q + C, i.e. half the Euclidean gradient."""
    G = (Q @ M.T).T
    if C is not None:
        G = G + C
    return G


def quadratic_change(Q: sp.spmatrix, G: np.ndarray, delta: np.ndarray) -> float:
    """f(M + delta) - f(M) for f = tr(M Q M^T) + 2 tr(C M^T), G the half gradient at M.

    Evaluated from the step alone so that small decreases survive when f itself is large.
    """
    return float(np.sum(delta * (2.0 * G + (Q @ delta.T).T)))


def riemannian_gradient(L: ConnectionLaplacian, X: LiftedState) -> np.ndarray:
    """Projection of the Euclidean gradient 2XL onto the tangent space at X."""
    _check_shape(L, X.matrix)
    G = 2.0 * half_gradient(L.matrix, X.matrix)
    return stiefel.project_tangent(X.matrix, G, L.d)


def hessian_apply(Q: sp.spmatrix, M: np.ndarray, G: np.ndarray, xi: np.ndarray, d: int) -> np.ndarray:
    """Riemannian Hessian 2 Proj(xi Q - xi_Y Lambda) with G the half gradient at M."""
    Lam = stiefel.symmetric_multipliers(M, G, d)
    xi_Y, _ = stiefel.split_blocks(xi, d)
    correction = stiefel.join_blocks(np.einsum("nrd,nde->nre", xi_Y, Lam), np.zeros(xi_Y.shape[:2]))
    return 2.0 * stiefel.project_tangent(M, (Q @ xi.T).T - correction, d)


def riemannian_hessian(L: ConnectionLaplacian, X: LiftedState, xi: np.ndarray) -> np.ndarray:
    """Hessian-vector product of the lifted cost along tangent direction xi."""
    _check_shape(L, X.matrix)
    G = half_gradient(L.matrix, X.matrix)
    return hessian_apply(L.matrix, X.matrix, G, xi, L.d)


def objective(graph: MultiRobotGraph, poses: Dict[NodeId, Pose]) -> float:
    """Direct edge-loop evaluation of the PGO objective on SE(d) poses."""
    total = 0.0
    for edge in graph.edges:
        Pi, Pj = poses[edge.source], poses[edge.target]
        rot_res = Pj.rotation - Pi.rotation @ edge.rotation
        trans_res = Pj.translation - Pi.translation - Pi.rotation @ edge.translation
        total += edge.kappa * float(np.sum(rot_res ** 2)) + edge.sigma * float(trans_res @ trans_res)
    return total


@dataclass
class CouplingBlock:
    """Off-diagonal coupling of one robot to a neighbor's separator poses."""
    neighbor: int
    nodes: np.ndarray
    columns: np.ndarray
    block: sp.csr_matrix


@dataclass
class BlockProblem:
    """Per-robot data for block updates: L_bb, neighbor couplings and solver caches."""
    robot: int
    d: int
    nodes: np.ndarray
    columns: slice
    L_bb: sp.csr_matrix
    couplings: Dict[int, CouplingBlock]
    own_separators: Dict[int, np.ndarray]
    _factor: Optional[object] = field(default=None, repr=False)
    _lipschitz: Optional[float] = field(default=None, repr=False)

    @property
    def neighbors(self) -> List[int]:
        return sorted(self.couplings)

    def linear_term(self, separator_states: Dict[int, np.ndarray]) -> Optional[np.ndarray]:
        """C = sum_c Z_c L_cb from neighbor separator columns Z_c (r x |cols_c|)."""
        C = None
        for neighbor, coupling in self.couplings.items():
            term = (coupling.block.T @ separator_states[neighbor].T).T
            C = term if C is None else C + term
        return C

    def gather_separators(self, M: np.ndarray) -> Dict[int, np.ndarray]:
        """Neighbor separator columns read from a full state (centralized mode)."""
        return {neighbor: M[:, coupling.columns] for neighbor, coupling in self.couplings.items()}

    def preconditioner(self):
        """Cached sparse LU of L_bb + mu I."""
        if self._factor is None:
            diag = self.L_bb.diagonal()
            mu = settings.PRECONDITIONER_SHIFT_REL * max(float(diag.max()) if diag.size else 1.0, 1e-12)
            shifted = (self.L_bb + mu * sp.identity(self.L_bb.shape[0], format="csr")).tocsc()
            self._factor = spla.splu(shifted)
        return self._factor

    def lipschitz_bound(self) -> float:
        """Cached upper bound on lambda_max(L_bb): power iteration, inflated and capped by Gershgorin."""
        if self._lipschitz is None:
            size = self.L_bb.shape[0]
            gershgorin = float(abs(self.L_bb).sum(axis=1).max()) if self.L_bb.nnz else 1.0
            rng = np.random.default_rng(self.robot)
            v = rng.normal(size=size)
            estimate = 0.0
            for _ in range(settings.POWER_ITERATIONS):
                w = self.L_bb @ v
                norm = np.linalg.norm(w)
                if norm == 0:
                    break
                estimate = float(v @ w) / float(v @ v)
                v = w / norm
            self._lipschitz = max(min(1.05 * estimate, gershgorin), 1e-12)
        return self._lipschitz


def block_submatrices(L: ConnectionLaplacian, robot: int) -> BlockProblem:
    """Principal block of one robot and its couplings to neighbor separator poses."""
    if not 0 <= robot < L.num_robots:
        raise DimensionMismatch(f"Robot {robot} outside [0, {L.num_robots})")
    columns = L.robot_columns(robot)
    L_bb = L.matrix[columns, columns].tocsr()
    couplings: Dict[int, CouplingBlock] = {}
    own: Dict[int, np.ndarray] = {}
    for (owner, neighbor), nodes in sorted(L.separators.items()):
        if neighbor == robot:
            cols = L.columns_of(nodes)
            couplings[owner] = CouplingBlock(
                neighbor=owner,
                nodes=nodes,
                columns=cols,
                block=L.matrix[cols, :][:, columns].tocsr(),
            )
        elif owner == robot:
            own[neighbor] = nodes
    return BlockProblem(
        robot=robot,
        d=L.d,
        nodes=np.arange(int(L.robot_offsets[robot]), int(L.robot_offsets[robot + 1])),
        columns=columns,
        L_bb=L_bb,
        couplings=couplings,
        own_separators=own,
    )
