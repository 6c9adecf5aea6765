"""
Deterministic lossy network with integer-tick latency for the agent harness.
"""
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from config.settings import settings
from models.schemas import NetworkProfile
from utils.logger import get_logger

logger = get_logger("network")


class MessageKind(str, Enum):
    """Message kind enumeration."""
    SEPARATOR = "separator"
    ACK = "ack"


@dataclass
class Message:
    """Separator update or acknowledgement between two robots."""
    sender: int
    receiver: int
    sweep: int
    sequence: int
    kind: MessageKind
    payload: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def entries(self) -> int:
        return int(sum(block.size for block in self.payload.values()))

    @property
    def size_bytes(self) -> int:
        return self.entries * settings.BYTES_PER_ENTRY


@dataclass
class LogEntry:
    """One transmission as written to the message log."""
    tick: int
    sender: int
    receiver: int
    sweep: int
    size: int
    kind: MessageKind
    dropped: bool

    def line(self) -> str:
        return f"{self.tick} {self.sender} {self.receiver} {self.sweep} {self.size}"


@dataclass(order=True)
class _Delivery:
    due: int
    order: int
    message: Message = field(compare=False)


class SimulatedNetwork:
    """Priority queue of in-flight messages; drops and latencies come from a seeded generator."""

    def __init__(self, profile: NetworkProfile, rng: np.random.Generator):
        self.profile = profile
        self.rng = rng
        self._queue: List[_Delivery] = []
        self._counter = 0
        self.log: List[LogEntry] = []
        self.dropped = 0

    def send(self, message: Message, tick: int) -> bool:
        """Queue a message; returns False when the link drops it."""
        dropped = self.profile.drop_prob > 0 and self.rng.random() < self.profile.drop_prob
        self.log.append(LogEntry(
            tick=tick,
            sender=message.sender,
            receiver=message.receiver,
            sweep=message.sweep,
            size=message.size_bytes,
            kind=message.kind,
            dropped=dropped,
        ))
        if dropped:
            self.dropped += 1
            return False
        latency = int(self.rng.integers(self.profile.latency_min, self.profile.latency_max + 1))
        heapq.heappush(self._queue, _Delivery(tick + latency, self._counter, message))
        self._counter += 1
        return True

    def pop_due(self, tick: int) -> Optional[Message]:
        """Next message due at or before tick, in send order for equal due ticks."""
        if self._queue and self._queue[0].due <= tick:
            return heapq.heappop(self._queue).message
        return None

    @property
    def in_flight(self) -> int:
        return len(self._queue)
