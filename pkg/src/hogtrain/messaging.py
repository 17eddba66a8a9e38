"""Control messages and the FIFO queues that carry them.

Coordinator and workers exchange small control records; bulk data (batches,
models) travels by reference through shared memory.  Queues are unbounded
FIFO with an explicit close: sending to a closed queue is an error, while
receiving from a closed, drained queue returns None as the shutdown signal
instead of blocking forever.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum

from .data import BatchRef


class QueueClosedError(RuntimeError):
    """Raised when sending on a queue that has been closed."""


class MessageQueue:
    """Thread-safe unbounded FIFO with close semantics and traffic counters."""

    def __init__(self, name: str = ""):
        self.name = name
        self._items: deque = deque()
        self._lock = threading.Lock()
        self._nonempty = threading.Condition(self._lock)
        self._closed = False
        self.sent = 0
        self.received = 0

    def send(self, msg) -> None:
        with self._lock:
            if self._closed:
                raise QueueClosedError(f"queue {self.name!r} is closed")
            self._items.append(msg)
            self.sent += 1
            self._nonempty.notify()

    def receive(self, timeout: float | None = None):
        """Next message in FIFO order; blocks while open and empty.

        Returns None once the queue is closed and drained.  A timeout is
        only for tests: expiry raises TimeoutError rather than being
        conflated with shutdown.
        """
        with self._lock:
            while not self._items:
                if self._closed:
                    return None
                if not self._nonempty.wait(timeout=timeout):
                    raise TimeoutError(f"receive timed out on queue {self.name!r}")
            self.received += 1
            return self._items.popleft()

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._nonempty.notify_all()

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


class ToCoordinator(Enum):
    SCHEDULE_WORK = "schedule_work"
    PARTIAL_LOSS = "partial_loss"
    HALT = "halt"


class ToWorker(Enum):
    EXECUTE_WORK = "execute_work"
    EVALUATE_LOSS = "evaluate_loss"
    STOP = "stop"


@dataclass(frozen=True)
class MessageToCoordinator:
    kind: ToCoordinator
    worker_id: str
    update_count: float = 0.0  # cumulative, fractional when beta < 1
    partial_loss_sum: float = 0.0
    example_count: int = 0


@dataclass(frozen=True)
class MessageToWorker:
    kind: ToWorker
    batch: BatchRef | None = None
    learning_rate: float = 0.0
    epoch_id: int = 0
