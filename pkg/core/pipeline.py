"""
Pipeline coordinator tying graph, solvers, certificate, baselines and
reports together; the command line calls into this module.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from agents.orchestrator import DecentralizedRun, merge_traffic, run_decentralized, write_message_log
from core.baseline import ate_rmse, gauss_newton_pgo, odometry_trajectories, one_time_fusion
from core.certifier import Certificate
from core.quadratic import LiftedState, assemble, objective
from core.rbcd import initialize, solve_staircase, spanning_tree_poses
from core.rounding import gauge_fix, round_solution
from models.errors import IncompleteSolution, InsufficientMatches
from models.pose_graph import MultiRobotGraph, NodeId, Pose, RelativeMeasurement, missing_nodes
from models.schemas import (
    GaussNewtonTrace,
    InitStrategy,
    NetworkProfile,
    SolveMode,
    SolverOptions,
    SolveReport,
    SolveTrace,
    TrafficStats,
    Verdict,
)
from utils.helpers import improvements
from utils.lie import random_rotation
from utils.logger import get_logger

logger = get_logger("pipeline")


@dataclass
class SolveResult:
    """Poses and diagnostics of one pipeline run."""
    mode: SolveMode
    graph: MultiRobotGraph
    poses: Dict[NodeId, Pose]
    final_cost: float
    iterations: int
    termination: str
    state: Optional[LiftedState] = None
    certificate: Optional[Certificate] = None
    trace: Optional[SolveTrace] = None
    gn_trace: Optional[GaussNewtonTrace] = None
    traffic: Optional[TrafficStats] = None
    runs: List[DecentralizedRun] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.certificate is not None and self.certificate.certified

    def message_log(self) -> str:
        return "".join(write_message_log(run) for run in self.runs)


def initial_poses(graph: MultiRobotGraph, strategy: InitStrategy, seed: int = 0) -> Dict[NodeId, Pose]:
    """SE(d) starting poses for the local-search baseline."""
    strategy = InitStrategy(strategy)
    if strategy == InitStrategy.SPANNING_TREE:
        return spanning_tree_poses(graph)
    if strategy == InitStrategy.GIVEN:
        if graph.initial_guess is None or missing_nodes(graph, graph.initial_guess):
            raise IncompleteSolution("The graph carries no complete initial guess")
        return dict(graph.initial_guess)
    rng = np.random.default_rng(seed)
    d = graph.dimension
    scale = max(1.0, float(np.sqrt(graph.num_nodes)))
    return {
        node: Pose(random_rotation(rng, d, np.pi), rng.normal(0.0, scale, size=d))
        for node in graph.node_ids()
    }


def initial_state(graph: MultiRobotGraph, options: SolverOptions, strategy: InitStrategy) -> LiftedState:
    r_init, _ = options.ranks_for(graph.dimension)
    return initialize(graph, strategy, r_init, seed=options.seed)


def run_certified(
    graph: MultiRobotGraph,
    options: SolverOptions,
    init: Optional[LiftedState] = None,
    decentralized: bool = False,
    profile: Optional[NetworkProfile] = None,
    seed: int = 0,
) -> SolveResult:
    """Rank staircase with certification, rounded and gauge-fixed to SE(d)."""
    L = assemble(graph)
    runs: List[DecentralizedRun] = []
    local_solver = None
    if decentralized:
        network = profile or NetworkProfile()

        def local_solver(state: LiftedState, opts: SolverOptions):
            run = run_decentralized(graph, opts, network, seed=seed + len(runs), init=state, laplacian=L)
            runs.append(run)
            return run.state, run.trace

    X, trace, certificate = solve_staircase(graph, options, init=init, local_solver=local_solver, laplacian=L)
    poses = gauge_fix(round_solution(graph, X))
    return SolveResult(
        mode=SolveMode.CERTIFIED,
        graph=graph,
        poses=poses,
        final_cost=objective(graph, poses),
        iterations=trace.iterations,
        termination=trace.termination.value,
        state=X,
        certificate=certificate,
        trace=trace,
        traffic=merge_traffic(runs),
        runs=runs,
    )


def run_gauss_newton(
    graph: MultiRobotGraph, init: Dict[NodeId, Pose], max_iters: Optional[int] = None
) -> SolveResult:
    poses, converged, gn_trace = gauss_newton_pgo(graph, init, max_iters=max_iters)
    poses = gauge_fix(poses)
    return SolveResult(
        mode=SolveMode.GAUSS_NEWTON,
        graph=graph,
        poses=poses,
        final_cost=objective(graph, poses),
        iterations=gn_trace.iterations,
        termination="converged" if converged else "not_converged",
        gn_trace=gn_trace,
    )


def run_one_time(graph: MultiRobotGraph) -> SolveResult:
    poses = gauge_fix(one_time_fusion(graph))
    return SolveResult(
        mode=SolveMode.ONE_TIME,
        graph=graph,
        poses=poses,
        final_cost=objective(graph, poses),
        iterations=0,
        termination="aligned",
    )


def resolve_with_rendezvous(
    previous: SolveResult,
    new_edges: Iterable[RelativeMeasurement],
    options: SolverOptions,
    decentralized: bool = False,
    profile: Optional[NetworkProfile] = None,
    seed: int = 0,
) -> SolveResult:
    """Re-solve after new rendezvous, warm-started from the previous solution."""
    graph = previous.graph.with_edges(new_edges)
    if previous.state is not None:
        warm = previous.state
    else:
        r_init, _ = options.ranks_for(graph.dimension)
        warm = LiftedState.from_poses(graph, previous.poses, r_init)
    logger.info(f"Re-solving with {len(graph.edges) - len(previous.graph.edges)} new edges from a rank-{warm.r} warm start")
    return run_certified(graph, options, init=warm, decentralized=decentralized, profile=profile, seed=seed)


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not np.isfinite(value):
        return None
    return float(value)


def build_report(result: SolveResult, ground_truth: Optional[Dict[NodeId, Pose]] = None) -> SolveReport:
    """Report with per-robot ATE against ground truth and the one-time fusion baseline."""
    report = SolveReport(
        mode=result.mode,
        final_cost=result.final_cost,
        iterations=result.iterations,
        termination=result.termination,
        traffic=result.traffic,
    )
    if result.certificate is not None:
        report.certified = result.certified
        report.verdict = result.certificate.verdict
        report.lambda_d_plus_1 = _finite_or_none(result.certificate.lambda_d_plus_1)
        report.final_rank = result.state.r if result.state is not None else None

    if ground_truth is not None:
        report.per_robot_rmse = ate_rmse(result.poses, ground_truth, per_robot=True)
        try:
            report.baseline_rmse = ate_rmse(one_time_fusion(result.graph), ground_truth, per_robot=True)
            report.improvement_percent = improvements(report.baseline_rmse, report.per_robot_rmse)
        except InsufficientMatches as e:
            logger.warning(f"No one-time fusion baseline: {e}")
    return report


def exit_status(result: SolveResult) -> str:
    """Key into settings.EXIT_CODES for a finished run."""
    if result.mode == SolveMode.CERTIFIED and result.certificate.verdict != Verdict.CERTIFIED:
        return "uncertified"
    return "success"


def compare(
    graph: MultiRobotGraph,
    ground_truth: Dict[NodeId, Pose],
    seeds: Sequence[int],
    options: Optional[SolverOptions] = None,
) -> pd.DataFrame:
    """
    Per-robot ATE of every method and seed, with the improvement over
    odometry-only dead reckoning.
    """
    options = options or SolverOptions()
    anchors = {robot: ground_truth[NodeId(robot, 0)] for robot in range(graph.num_robots)}
    odometry = ate_rmse(odometry_trajectories(graph, anchors), ground_truth)
    one_time = ate_rmse(one_time_fusion(graph), ground_truth)

    rows = []

    def add(method: str, seed: int, rmse: List[float]):
        for robot, value in enumerate(rmse):
            rows.append({
                "robot": robot,
                "method": method,
                "seed": seed,
                "rmse_m": value,
                "improvement_percent": improvements([odometry[robot]], [value])[0],
            })

    for seed in seeds:
        add("odometry", seed, odometry)
        add("one-time", seed, one_time)
        gn = run_gauss_newton(graph, initial_poses(graph, InitStrategy.RANDOM, seed))
        add("gauss-newton", seed, ate_rmse(gn.poses, ground_truth))
        seeded = options.model_copy(update={"seed": seed})
        certified = run_certified(graph, seeded, init=initial_state(graph, seeded, InitStrategy.RANDOM))
        add("certified", seed, ate_rmse(certified.poses, ground_truth))
        logger.info(f"Seed {seed}: gauss-newton cost {gn.final_cost:.6e}, certified cost {certified.final_cost:.6e}")

    table = pd.DataFrame(rows, columns=["robot", "method", "seed", "rmse_m", "improvement_percent"])
    return table.sort_values(["robot", "method", "seed"], kind="stable").reset_index(drop=True)
