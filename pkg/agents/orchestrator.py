"""
Decentralized execution harness: schedules robot agents over the simulated
network and collects the trace and traffic statistics.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from agents.network import LogEntry, Message, MessageKind, SimulatedNetwork
from agents.robot_agent import RobotAgent
from core.quadratic import ConnectionLaplacian, LiftedState, assemble, block_submatrices, cost, riemannian_gradient
from core.rbcd import initialize, resolve_grad_tol
from models.errors import DimensionMismatch
from models.pose_graph import MultiRobotGraph
from models.schemas import (
    InitStrategy,
    NetworkMode,
    NetworkProfile,
    SolverOptions,
    SolveTrace,
    SweepRecord,
    TerminationReason,
    TrafficStats,
)
from utils.logger import get_logger

logger = get_logger("orchestrator")

CONSECUTIVE_QUIET_ROUNDS = 2


@dataclass
class DecentralizedRun:
    """Result of one decentralized solve."""
    state: LiftedState
    trace: SolveTrace
    traffic: TrafficStats
    message_log: List[LogEntry] = field(default_factory=list)


class DecentralizedOrchestrator:
    """Runs one agent per robot on a shared simulated network."""

    def __init__(
        self,
        L: ConnectionLaplacian,
        X0: LiftedState,
        options: SolverOptions,
        profile: NetworkProfile,
        seed: int,
        grad_tol: float,
    ):
        self.L = L
        self.options = options
        self.profile = profile
        self.grad_tol = grad_tol
        self.num_robots = L.num_robots
        self.network = SimulatedNetwork(profile, np.random.default_rng([seed, 0]))
        self.scheduler = np.random.default_rng([seed, 1])
        self.r = X0.r
        local_tol = grad_tol / np.sqrt(max(self.num_robots, 1))

        self.agents: List[RobotAgent] = []
        for robot in range(self.num_robots):
            problem = block_submatrices(L, robot)
            cache = {neighbor: X0.matrix[:, coupling.columns] for neighbor, coupling in problem.couplings.items()}
            self.agents.append(RobotAgent(problem, X0.matrix[:, problem.columns], cache, options, local_tol))

        self.tick = 0
        self.messages_sent = 0
        self.retransmissions = 0
        self.acks_sent = 0
        self.per_robot_sent = [0] * self.num_robots
        self.per_robot_received = [0] * self.num_robots
        self.bytes_modeled = 0

    def state(self) -> LiftedState:
        matrix = np.zeros((self.r, self.L.size))
        for agent in self.agents:
            matrix[:, agent.problem.columns] = agent.block
        return LiftedState(matrix, self.L.d)

    def _send(self, message: Message, retransmission: bool = False):
        if message.kind == MessageKind.SEPARATOR:
            self.messages_sent += 1
            self.retransmissions += int(retransmission)
            self.per_robot_sent[message.sender] += 1
            self.bytes_modeled += message.size_bytes
            self.agents[message.sender].track(message, self.tick)
        else:
            self.acks_sent += 1
        self.network.send(message, self.tick)

    def _deliver(self):
        """Hand every message due by the current tick to its receiver."""
        while True:
            message = self.network.pop_due(self.tick)
            if message is None:
                return
            if message.kind == MessageKind.SEPARATOR:
                self.per_robot_received[message.receiver] += 1
            ack = self.agents[message.receiver].receive(message)
            if ack is not None:
                self._send(ack)

    def _activate(self, robot: int, sweep: int):
        self._deliver()
        for agent in self.agents:
            for message in agent.due_retransmissions(self.tick):
                self._send(message, retransmission=True)
        for message in self.agents[robot].act(sweep):
            self._send(message)
        self._deliver()
        self.tick += 1

    def run(self) -> DecentralizedRun:
        trace = SolveTrace(grad_tol=self.grad_tol)
        quiet_rounds = 0
        rounds = 0
        while rounds < self.options.max_sweeps:
            for slot in range(self.num_robots):
                if self.profile.mode == NetworkMode.SYNCHRONOUS_ROUNDS:
                    robot = slot
                else:
                    robot = int(self.scheduler.integers(self.num_robots))
                self._activate(robot, rounds)
            rounds += 1

            X = self.state()
            g_norm = float(np.linalg.norm(riemannian_gradient(self.L, X)))
            trace.sweeps.append(SweepRecord(cost=cost(self.L, X), gradient_norm=g_norm, rank=self.r))
            logger.debug(f"Round {rounds}: cost {trace.sweeps[-1].cost:.9e}, gradient {g_norm:.3e}, tick {self.tick}")

            quiet_rounds = quiet_rounds + 1 if all(agent.converged for agent in self.agents) else 0
            if quiet_rounds >= CONSECUTIVE_QUIET_ROUNDS:
                trace.termination = TerminationReason.CONVERGED
                break
        else:
            trace.termination = TerminationReason.MAX_SWEEPS
            logger.warning(f"Decentralized solve stopped after {rounds} rounds without quiescence")

        trace.null_steps = sum(agent.null_steps for agent in self.agents)
        traffic = TrafficStats(
            messages_sent=self.messages_sent,
            retransmissions=self.retransmissions,
            acks_sent=self.acks_sent,
            dropped=self.network.dropped,
            bytes_modeled=self.bytes_modeled,
            per_robot_sent=self.per_robot_sent,
            per_robot_received=self.per_robot_received,
            rounds=rounds,
            ticks=self.tick,
        )
        logger.info(
            f"Decentralized solve {trace.termination.value} after {rounds} rounds: "
            f"{self.messages_sent} messages, {self.network.dropped} dropped, {self.bytes_modeled} bytes"
        )
        return DecentralizedRun(state=self.state(), trace=trace, traffic=traffic, message_log=list(self.network.log))


def run_decentralized(
    graph: MultiRobotGraph,
    options: SolverOptions,
    profile: NetworkProfile,
    seed: int = 0,
    init: Optional[LiftedState] = None,
    laplacian: Optional[ConnectionLaplacian] = None,
) -> DecentralizedRun:
    """Solve at a fixed rank with one message-passing agent per robot."""
    L = laplacian if laplacian is not None else assemble(graph)
    if init is None:
        r_init, _ = options.ranks_for(graph.dimension)
        init = initialize(graph, InitStrategy.SPANNING_TREE, r_init, seed=options.seed)
    if init.matrix.shape[1] != L.size:
        raise DimensionMismatch(f"Initial state has {init.matrix.shape[1]} columns, Laplacian has {L.size}")
    grad_tol = resolve_grad_tol(options, cost(L, init), L.inf_norm)
    return DecentralizedOrchestrator(L, init, options, profile, seed, grad_tol).run()


def traffic_report(run: DecentralizedRun) -> TrafficStats:
    """Communication statistics of a finished run."""
    return run.traffic.model_copy(deep=True)


def write_message_log(run: DecentralizedRun) -> str:
    """One "tick from to sweep size" line per transmitted separator message."""
    lines = [entry.line() for entry in run.message_log if entry.kind == MessageKind.SEPARATOR]
    return "\n".join(lines) + ("\n" if lines else "")


def merge_traffic(runs: List[DecentralizedRun]) -> Optional[TrafficStats]:
    """Sum the statistics of consecutive runs (one per staircase rank)."""
    if not runs:
        return None
    total = runs[0].traffic.model_copy(deep=True)
    for run in runs[1:]:
        t = run.traffic
        total.messages_sent += t.messages_sent
        total.retransmissions += t.retransmissions
        total.acks_sent += t.acks_sent
        total.dropped += t.dropped
        total.bytes_modeled += t.bytes_modeled
        total.per_robot_sent = [a + b for a, b in zip(total.per_robot_sent, t.per_robot_sent)]
        total.per_robot_received = [a + b for a, b in zip(total.per_robot_received, t.per_robot_received)]
        total.rounds += t.rounds
        total.ticks += t.ticks
    return total
