"""
Robot agent: owns one block of the lifted state and a cache of neighbor
separator poses, improves its block with the shared block solver and keeps
its neighbors informed.
"""
from typing import Dict, List, Optional

import numpy as np

from agents.network import Message, MessageKind
from config.settings import settings
from core.quadratic import BlockProblem
from core.rbcd import improve_block
from models.schemas import SolverOptions
from utils.logger import get_logger

logger = get_logger("robot_agent")


class RobotAgent:
    """One robot in the decentralized solve."""

    def __init__(
        self,
        problem: BlockProblem,
        block: np.ndarray,
        separator_cache: Dict[int, np.ndarray],
        options: SolverOptions,
        local_tol: float,
    ):
        self.problem = problem
        self.robot = problem.robot
        self.block = block.copy()
        self.cache = {neighbor: value.copy() for neighbor, value in separator_cache.items()}
        self.options = options
        self.local_tol = local_tol
        self.width = problem.d + 1
        self.first_node = int(problem.nodes[0]) if len(problem.nodes) else 0

        self.sequence = 0
        self.latest_received: Dict[int, int] = {neighbor: 0 for neighbor in problem.couplings}
        self.outstanding: Dict[int, Message] = {}
        self.sent_tick: Dict[int, int] = {}
        self.dirty = {neighbor: False for neighbor in problem.own_separators}
        self.last_gradient_norm = float("inf")
        self.null_steps = 0
        self.rejected = 0

    @property
    def converged(self) -> bool:
        return self.last_gradient_norm <= self.local_tol and not self.outstanding

    def _local_columns(self, node: int) -> slice:
        start = (node - self.first_node) * self.width
        return slice(start, start + self.width)

    def _payload_for(self, neighbor: int) -> Dict[int, np.ndarray]:
        return {int(node): self.block[:, self._local_columns(int(node))].copy()
                for node in self.problem.own_separators[neighbor]}

    def receive(self, message: Message) -> Optional[Message]:
        """Apply a delivered message; separator updates are answered with an ack."""
        if message.kind == MessageKind.ACK:
            pending = self.outstanding.get(message.sender)
            if pending is not None and message.sequence >= pending.sequence:
                del self.outstanding[message.sender]
                self.sent_tick.pop(message.sender, None)
            return None

        coupling = self.problem.couplings.get(message.sender)
        if coupling is None or not set(message.payload).issubset(set(coupling.nodes.tolist())):
            logger.warning(f"Robot {self.robot} rejected a payload from {message.sender} outside its separator set")
            self.rejected += 1
            return None

        if message.sequence > self.latest_received[message.sender]:
            self.latest_received[message.sender] = message.sequence
            positions = {int(node): k for k, node in enumerate(coupling.nodes)}
            cached = self.cache[message.sender]
            for node, value in message.payload.items():
                k = positions[node]
                cached[:, k * self.width:(k + 1) * self.width] = value
        return Message(
            sender=self.robot,
            receiver=message.sender,
            sweep=message.sweep,
            sequence=message.sequence,
            kind=MessageKind.ACK,
        )

    def act(self, sweep: int) -> List[Message]:
        """Improve the own block against the cached neighbor state and emit fresh separator messages."""
        C = self.problem.linear_term(self.cache) if self.problem.couplings else None
        self.block, info = improve_block(self.problem, self.block, C, self.options, tol=self.local_tol)
        self.last_gradient_norm = info.gradient_norm
        self.null_steps += int(info.null_step)
        if info.steps_taken > 0:
            for neighbor in self.dirty:
                self.dirty[neighbor] = True

        messages: List[Message] = []
        for neighbor, dirty in self.dirty.items():
            if not dirty:
                continue
            self.sequence += 1
            messages.append(Message(
                sender=self.robot,
                receiver=neighbor,
                sweep=sweep,
                sequence=self.sequence,
                kind=MessageKind.SEPARATOR,
                payload=self._payload_for(neighbor),
            ))
            self.dirty[neighbor] = False
        return messages

    def track(self, message: Message, tick: int):
        """Remember the latest separator message per neighbor until it is acknowledged."""
        self.outstanding[message.receiver] = message
        self.sent_tick[message.receiver] = tick

    def due_retransmissions(self, tick: int) -> List[Message]:
        due = [
            message for neighbor, message in self.outstanding.items()
            if tick - self.sent_tick[neighbor] >= settings.RETRANSMIT_TIMEOUT_TICKS
        ]
        for message in due:
            self.sent_tick[message.receiver] = tick
        return due
