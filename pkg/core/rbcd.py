"""
Riemannian block-coordinate descent over robot blocks, initialization,
saddle escape and the rank staircase.
"""
from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from config.settings import settings
from core import stiefel
from core.certifier import Certificate, assemble_dual, indeterminate, verify
from core.quadratic import (
    BlockProblem,
    ConnectionLaplacian,
    LiftedState,
    assemble,
    block_submatrices,
    cost,
    half_gradient,
    hessian_apply,
    quadratic_change,
    quadratic_value,
    riemannian_gradient,
)
from models.errors import (
    DimensionMismatch,
    IncompleteSolution,
    InvalidPose,
    RankLimitReached,
    SaddleEscapeFailed,
    StationarityViolation,
)
from models.pose_graph import MultiRobotGraph, NodeId, Pose, missing_nodes
from models.schemas import (
    BlockRule,
    InitStrategy,
    SolverOptions,
    SolveTrace,
    StepRule,
    SweepRecord,
    TerminationReason,
    Verdict,
)
from utils.logger import get_logger

logger = get_logger("rbcd")

# default gradient tolerance never drops below this multiple of ||L||_inf
GRAD_TOL_FLOOR_REL = 1e-10

# (state, options) -> (state, trace); the staircase drives either the
# centralized sweeps or the network simulator through it
LocalSolver = Callable[[LiftedState, SolverOptions], Tuple[LiftedState, SolveTrace]]


@dataclass
class BlockStepInfo:
    """Outcome of one block update."""
    robot: int
    initial_cost: float
    final_cost: float
    gradient_norm: float
    steps_taken: int
    backtracks: int
    null_step: bool

    @property
    def decrease(self) -> float:
        return self.initial_cost - self.final_cost


def spanning_tree_poses(graph: MultiRobotGraph, root: NodeId = NodeId(0, 0)) -> Dict[NodeId, Pose]:
    """Compose measurements along a BFS tree from root; unreached nodes get the identity."""
    d = graph.dimension
    adjacency: Dict[NodeId, List[Tuple[NodeId, Pose]]] = {node: [] for node in graph.node_ids()}
    for edge in graph.edges:
        adjacency[edge.source].append((edge.target, edge.measurement))
        adjacency[edge.target].append((edge.source, edge.measurement.inverse()))

    poses: Dict[NodeId, Pose] = {}
    if graph.num_nodes == 0:
        return poses
    poses[root] = Pose.identity(d)
    queue = deque([root])
    while queue:
        node = queue.popleft()
        for neighbor, relative in adjacency[node]:
            if neighbor not in poses:
                poses[neighbor] = poses[node] @ relative
                queue.append(neighbor)
    for node in graph.node_ids():
        poses.setdefault(node, Pose.identity(d))
    return poses


def initialize(
    graph: MultiRobotGraph,
    strategy: InitStrategy,
    r: int,
    poses: Optional[Dict[NodeId, Pose]] = None,
    seed: int = 0,
) -> LiftedState:
    """Initial lifted state at rank r."""
    d = graph.dimension
    if r < d:
        raise DimensionMismatch(f"Rank {r} is below dimension {d}")
    strategy = InitStrategy(strategy)
    if strategy == InitStrategy.SPANNING_TREE:
        return LiftedState.from_poses(graph, spanning_tree_poses(graph), r)
    if strategy == InitStrategy.GIVEN:
        given = poses if poses is not None else graph.initial_guess
        if given is None:
            raise IncompleteSolution("No initial poses were given")
        missing = missing_nodes(graph, given)
        if missing:
            raise IncompleteSolution(f"Initial guess misses {len(missing)} nodes, first {missing[0]}")
        return LiftedState.from_poses(graph, given, r)
    rng = np.random.default_rng(seed)
    return LiftedState(stiefel.random_state(rng, r, d, graph.num_nodes), d)


def _newton_direction(problem: BlockProblem, M: np.ndarray, G: np.ndarray, rgrad: np.ndarray) -> np.ndarray:
    """Truncated preconditioned CG on the block Hessian; stops on negative curvature."""
    d = problem.d
    factor = problem.preconditioner()

    def hess(v: np.ndarray) -> np.ndarray:
        return hessian_apply(problem.L_bb, M, G, v, d)

    def precondition(v: np.ndarray) -> np.ndarray:
        return stiefel.project_tangent(M, 0.5 * factor.solve(np.ascontiguousarray(v.T)).T, d)

    g_norm = np.linalg.norm(rgrad)
    target = g_norm * min(0.5, np.sqrt(g_norm))
    eta = np.zeros_like(M)
    residual = -rgrad
    z = precondition(residual)
    p = z
    rz = stiefel.inner(residual, z)
    for k in range(settings.CG_MAX_ITERS):
        Hp = hess(p)
        curvature = stiefel.inner(p, Hp)
        if curvature <= 0:
            if k == 0:
                return p
            break
        alpha = rz / curvature
        eta = eta + alpha * p
        residual = residual - alpha * Hp
        if np.linalg.norm(residual) <= target:
            break
        z = precondition(residual)
        rz_next = stiefel.inner(residual, z)
        if rz <= 0:
            break
        p = z + (rz_next / rz) * p
        rz = rz_next
    return eta


def improve_block(
    problem: BlockProblem,
    M: np.ndarray,
    C: Optional[np.ndarray],
    options: SolverOptions,
    tol: float = 0.0,
) -> Tuple[np.ndarray, BlockStepInfo]:
    """
    Up to options.inner_steps retracted Armijo steps on
    f_b(M) = tr(M L_bb M^T) + 2 tr(C M^T).

    Shared by the centralized sweeps and the decentralized agents.
    """
    d = problem.d
    Q = problem.L_bb
    f0 = f = quadratic_value(Q, M, C)
    steps = backtracks = 0
    null_step = False
    gradient_norm = 0.0

    for step in range(options.inner_steps):
        G = half_gradient(Q, M, C)
        rgrad = 2.0 * stiefel.project_tangent(M, G, d)
        g_norm = float(np.linalg.norm(rgrad))
        if step == 0:
            gradient_norm = g_norm
        if g_norm <= tol or g_norm == 0.0:
            break

        fallback = -rgrad / (2.0 * problem.lipschitz_bound())
        if options.step_rule == StepRule.NEWTON_CG:
            direction = _newton_direction(problem, M, G, rgrad)
            slope = stiefel.inner(rgrad, direction)
            if not np.isfinite(slope) or slope >= 0:
                direction = fallback
                slope = stiefel.inner(rgrad, direction)
        else:
            direction = fallback
            slope = stiefel.inner(rgrad, direction)

        # storing a candidate perturbs f by up to eps * |G| * |M| entrywise
        slack = 4.0 * np.finfo(float).eps * float(np.sum(np.abs(G * M)))
        t = 1.0
        accepted = False
        for _ in range(settings.MAX_BACKTRACKS):
            candidate = stiefel.retract(M, t * direction, d)
            change = quadratic_change(Q, G, candidate - M)
            if change <= settings.ARMIJO_C * t * slope + slack:
                accepted = True
                break
            t *= 0.5
            backtracks += 1
        if not accepted:
            null_step = steps == 0
            break
        M, f = candidate, f + change
        steps += 1

    if null_step:
        logger.warning(f"Null step on robot {problem.robot} (block gradient {gradient_norm:.3e})")
    return M, BlockStepInfo(
        robot=problem.robot,
        initial_cost=f0,
        final_cost=f,
        gradient_norm=gradient_norm,
        steps_taken=steps,
        backtracks=backtracks,
        null_step=null_step,
    )


def block_update(
    L: ConnectionLaplacian,
    X: LiftedState,
    robot: int,
    options: SolverOptions,
    problem: Optional[BlockProblem] = None,
    tol: float = 0.0,
) -> Tuple[LiftedState, BlockStepInfo]:
    """Improve one robot's columns with all other columns held fixed."""
    if X.matrix.shape[1] != L.size:
        raise DimensionMismatch(f"State has {X.matrix.shape[1]} columns, Laplacian has {L.size}")
    problem = problem or block_submatrices(L, robot)
    C = problem.linear_term(problem.gather_separators(X.matrix)) if problem.couplings else None
    M_new, info = improve_block(problem, X.matrix[:, problem.columns], C, options, tol=tol)
    updated = X.copy()
    updated.matrix[:, problem.columns] = M_new
    return updated, info


def _block_gradient_norms(L: ConnectionLaplacian, rgrad: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(rgrad[:, L.robot_columns(b)]) for b in range(L.num_robots)])


def resolve_grad_tol(options: SolverOptions, initial_cost: float, laplacian_norm: float = 0.0) -> float:
    """Explicit tolerance, else 1e-6 (1 + initial cost) floored at the round-off level of L."""
    if options.grad_tol is not None:
        return options.grad_tol
    return max(1e-6 * (1.0 + initial_cost), GRAD_TOL_FLOOR_REL * laplacian_norm)


def solve(
    graph: MultiRobotGraph,
    options: SolverOptions,
    init: LiftedState,
    laplacian: Optional[ConnectionLaplacian] = None,
) -> Tuple[LiftedState, SolveTrace]:
    """Block sweeps until the full Riemannian gradient norm reaches grad_tol."""
    L = laplacian if laplacian is not None else assemble(graph)
    if init.matrix.shape[1] != L.size or init.d != L.d:
        raise DimensionMismatch(f"Initial state has shape {init.matrix.shape}, expected (r, {L.size})")
    if not init.is_feasible(1e-6):
        raise InvalidPose(f"Initial state is off the manifold (error {init.orthonormality_error():.3e})")

    X = init.copy()
    f = cost(L, X)
    grad_tol = resolve_grad_tol(options, f, L.inf_norm)
    trace = SolveTrace(grad_tol=grad_tol)
    problems = [block_submatrices(L, b) for b in range(L.num_robots)]
    local_tol = grad_tol / np.sqrt(max(L.num_robots, 1))

    rgrad = riemannian_gradient(L, X)
    g_norm = float(np.linalg.norm(rgrad))
    logger.debug(f"Solve at rank {X.r}: initial cost {f:.6e}, gradient {g_norm:.3e}, tol {grad_tol:.3e}")
    if g_norm <= grad_tol:
        trace.termination = TerminationReason.CONVERGED
        return X, trace

    for sweep in range(options.max_sweeps):
        if options.block_rule == BlockRule.ROUND_ROBIN:
            for robot in range(L.num_robots):
                X, info = block_update(L, X, robot, options, problem=problems[robot], tol=local_tol)
                trace.null_steps += int(info.null_step)
        else:
            for _ in range(L.num_robots):
                robot = int(np.argmax(_block_gradient_norms(L, rgrad)))
                X, info = block_update(L, X, robot, options, problem=problems[robot], tol=local_tol)
                trace.null_steps += int(info.null_step)
                rgrad = riemannian_gradient(L, X)

        f = cost(L, X)
        rgrad = riemannian_gradient(L, X)
        g_norm = float(np.linalg.norm(rgrad))
        trace.sweeps.append(SweepRecord(cost=f, gradient_norm=g_norm, rank=X.r))
        logger.debug(f"Sweep {sweep + 1}: cost {f:.9e}, gradient {g_norm:.3e}")
        if g_norm <= grad_tol:
            trace.termination = TerminationReason.CONVERGED
            break
    else:
        trace.termination = TerminationReason.MAX_SWEEPS
        logger.warning(f"Stopped after {options.max_sweeps} sweeps with gradient {g_norm:.3e} > {grad_tol:.3e}")

    return X, trace


def escape_saddle(
    L: ConnectionLaplacian,
    X: LiftedState,
    eigvec: np.ndarray,
    eigval: float,
    r_max: Optional[int] = None,
) -> LiftedState:
    """
    Lift X to rank r+1 and move along [0; v^T], a tangent direction of
    negative curvature 2*eigval, until the cost strictly decreases.
    Raises SaddleEscapeFailed when no step length gives a decrease.
    """
    if r_max is not None and X.r >= r_max:
        raise RankLimitReached(f"Rank {X.r} already at the limit {r_max}")
    if eigval >= 0:
        raise ValueError(f"Escape needs a negative eigenvalue, got {eigval:.3e}")
    v = np.asarray(eigvec, dtype=float).reshape(-1)
    if v.shape[0] != L.size:
        raise DimensionMismatch(f"Eigenvector has length {v.shape[0]}, expected {L.size}")
    v = v / np.linalg.norm(v)

    lifted = X.padded(X.r + 1)
    f0 = cost(L, lifted)
    G = half_gradient(L.matrix, lifted.matrix)
    direction = np.zeros_like(lifted.matrix)
    direction[-1, :] = v

    t = np.sqrt(max(X.num_nodes, 1))
    for _ in range(60):
        candidate = LiftedState(stiefel.retract(lifted.matrix, t * direction, L.d), L.d)
        change = quadratic_change(L.matrix, G, candidate.matrix - lifted.matrix)
        if -change > 1e-12 * (1.0 + f0):
            f_new = f0 + change
            logger.info(f"Escaped saddle to rank {candidate.r}: cost {f0:.6e} -> {f_new:.6e} (step {t:.3e})")
            return candidate
        t *= 0.5
    raise SaddleEscapeFailed(f"No decrease along the escape direction at rank {lifted.r} (cost {f0:.6e})")


def solve_staircase(
    graph: MultiRobotGraph,
    options: SolverOptions,
    init: Optional[LiftedState] = None,
    local_solver: Optional[LocalSolver] = None,
    laplacian: Optional[ConnectionLaplacian] = None,
) -> Tuple[LiftedState, SolveTrace, Certificate]:
    """Solve, certify, and escape to a higher rank until certified or at r_max."""
    L = laplacian if laplacian is not None else assemble(graph)
    d = graph.dimension
    r_init, r_max = options.ranks_for(d)
    X = init if init is not None else initialize(graph, InitStrategy.SPANNING_TREE, r_init, seed=options.seed)
    if X.r < r_init:
        X = X.padded(r_init)

    grad_tol = resolve_grad_tol(options, cost(L, X), L.inf_norm)
    stage_options = options.model_copy(update={"grad_tol": grad_tol})
    if local_solver is None:
        def local_solver(state: LiftedState, opts: SolverOptions) -> Tuple[LiftedState, SolveTrace]:
            return solve(graph, opts, state, laplacian=L)

    trace = SolveTrace(grad_tol=grad_tol)
    logger.info(f"Staircase start: n={graph.num_nodes}, robots={graph.num_robots}, ranks {X.r}..{r_max}")
    while True:
        remaining = options.max_sweeps - trace.iterations
        if remaining <= 0:
            trace.termination = TerminationReason.MAX_SWEEPS
            certificate = indeterminate("sweep budget exhausted before certification")
            break
        X, stage = local_solver(X, stage_options.model_copy(update={"max_sweeps": remaining}))
        trace.extend(stage)
        try:
            certificate = verify(assemble_dual(L, X, grad_tol=grad_tol), X)
        except StationarityViolation as e:
            logger.warning(f"Cannot certify rank-{X.r} state: {e}")
            certificate = indeterminate(str(e))
            break
        logger.info(f"Rank {X.r}: verdict {certificate.verdict.value}, lambda {certificate.lambda_d_plus_1:.3e}")
        if certificate.verdict != Verdict.NOT_CERTIFIED:
            break
        if X.r >= r_max:
            trace.termination = TerminationReason.ESCAPED_RANK_LIMIT
            break
        try:
            X = escape_saddle(L, X, certificate.escape_eigvec, certificate.lambda_d_plus_1, r_max=r_max)
        except SaddleEscapeFailed as e:
            logger.warning(str(e))
            trace.termination = TerminationReason.ESCAPE_FAILED
            break
        trace.escapes += 1

    logger.info(
        f"Staircase finished at rank {X.r}: {trace.termination.value}, {trace.iterations} sweeps, "
        f"{trace.escapes} escapes"
    )
    return X, trace, certificate
