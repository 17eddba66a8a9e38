"""Worker execution: batch gradient steps against the shared model.

Two worker flavors emulate a heterogeneous machine on plain threads:

* HOGWILD_SHARDED splits its batch across `threads` sub-batches, each
  computing a gradient against the shared model by reference and applying
  it with no mutual exclusion (the lock-free many-small-updates pool).
* BATCH_REPLICA snapshots the model, computes one gradient on the
  snapshot, then merges it into the current shared model (the
  large-batch device with a private copy and a stale merge).

`speed_factor` sleeps that many multiples of the measured compute time
after each batch, emulating a slower device at a configurable ratio.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from enum import Enum

from .data import BatchRef
from .messaging import (
    MessageQueue,
    MessageToCoordinator,
    MessageToWorker,
    ToCoordinator,
    ToWorker,
)
from .nn import Model, apply_update, backward, deep_copy, forward, loss_sum

log = logging.getLogger(__name__)


class WorkerMode(Enum):
    HOGWILD_SHARDED = "hogwild_sharded"
    BATCH_REPLICA = "batch_replica"


class ReplicaMode(Enum):
    REFERENCE = "reference"
    DEEP_COPY = "deep_copy"


_REQUIRED_REPLICA = {
    WorkerMode.HOGWILD_SHARDED: ReplicaMode.REFERENCE,
    WorkerMode.BATCH_REPLICA: ReplicaMode.DEEP_COPY,
}


@dataclass(frozen=True)
class WorkerConfig:
    worker_id: str
    mode: WorkerMode
    threads: int = 1
    replica_mode: ReplicaMode | None = None  # derived from mode when omitted
    speed_factor: float = 0.0  # sleep speed_factor x compute time per batch
    min_batch: int = 1
    max_batch: int = 1

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.speed_factor < 0:
            raise ValueError("speed_factor must be >= 0")
        if not (1 <= self.min_batch <= self.max_batch):
            raise ValueError(
                f"need 1 <= min_batch <= max_batch, got [{self.min_batch}, {self.max_batch}]"
            )
        required = _REQUIRED_REPLICA[self.mode]
        if self.replica_mode is None:
            object.__setattr__(self, "replica_mode", required)
        elif self.replica_mode is not required:
            raise ValueError(f"{self.mode.value} workers require replica_mode={required.value}")


def split_batch(n: int, parts: int) -> list[tuple[int, int]]:
    """(start, length) sub-ranges: at most `parts`, remainder spread one-extra
    per leading sub-range, fewer ranges when n < parts."""
    k = min(parts, n)
    base, extra = divmod(n, k)
    bounds = []
    start = 0
    for i in range(k):
        length = base + (1 if i < extra else 0)
        bounds.append((start, length))
        start += length
    return bounds


def execute_hogwild_sharded(
    model: Model,
    batch: BatchRef,
    threads: int,
    eta: float,
    beta: float,
    pool: ThreadPoolExecutor | None = None,
) -> float:
    """Split the batch across threads; each shard updates the shared model
    by reference with no locking.  Returns the update-count delta t' * beta,
    t' being the number of shards actually processed."""
    x, y = batch.x, batch.y
    bounds = split_batch(batch.length, threads)

    def shard_step(start: int, length: int) -> None:
        sub_x = x[start : start + length]
        sub_y = y[start : start + length]
        tape = forward(model, sub_x)
        grad = backward(model, tape, sub_y)
        apply_update(model, grad, eta)

    if pool is None or len(bounds) == 1:
        for start, length in bounds:
            shard_step(start, length)
    else:
        futures = [pool.submit(shard_step, start, length) for start, length in bounds]
        wait(futures)
        for f in futures:
            f.result()
    return len(bounds) * beta


def execute_batch_replica(model: Model, batch: BatchRef, eta: float, speed_factor: float = 0.0) -> float:
    """Gradient on a deep-copied snapshot, then a stale merge: the update is
    applied to whatever the shared model holds by merge time.  A positive
    speed_factor sleeps that many multiples of the measured compute time,
    emulating a proportionally slower device."""
    start = time.perf_counter()
    replica = deep_copy(model)
    tape = forward(replica, batch.x)
    grad = backward(replica, tape, batch.y)
    apply_update(model, grad, eta)
    if speed_factor > 0:
        time.sleep(speed_factor * (time.perf_counter() - start))
    return 1.0


@dataclass
class RunContext:
    """State shared between the coordinator and its workers by reference."""

    model: Model
    beta: float = 1.0
    eval_model: Model | None = None  # frozen snapshot, set before each evaluation


class WorkerThread(threading.Thread):
    """One asynchronous worker: requests work, executes batches, reports back."""

    def __init__(self, cfg: WorkerConfig, ctx: RunContext, inbox: MessageQueue, coordinator_inbox: MessageQueue):
        super().__init__(name=f"worker-{cfg.worker_id}", daemon=True)
        self.cfg = cfg
        self.ctx = ctx
        self.inbox = inbox
        self.coordinator_inbox = coordinator_inbox
        self.update_count = 0.0
        self.busy_seconds = 0.0
        self.examples_processed = 0
        self.error: BaseException | None = None
        self._pool: ThreadPoolExecutor | None = None

    def run(self) -> None:
        try:
            if self.cfg.mode is WorkerMode.HOGWILD_SHARDED and self.cfg.threads > 1:
                self._pool = ThreadPoolExecutor(
                    max_workers=self.cfg.threads,
                    thread_name_prefix=f"{self.name}-shard",
                )
            self._send(ToCoordinator.SCHEDULE_WORK)
            while True:
                msg = self.inbox.receive()
                if msg is None or msg.kind is ToWorker.STOP:
                    break
                if msg.kind is ToWorker.EXECUTE_WORK:
                    self._execute(msg)
                elif msg.kind is ToWorker.EVALUATE_LOSS:
                    self._evaluate(msg)
            self._send(ToCoordinator.HALT)
        except BaseException as exc:  # surface worker death to the coordinator
            self.error = exc
            log.exception("worker %s failed", self.cfg.worker_id)
            try:
                self._send(ToCoordinator.HALT)
            except Exception:
                pass
        finally:
            if self._pool is not None:
                self._pool.shutdown(wait=True)

    def _execute(self, msg: MessageToWorker) -> None:
        start = time.perf_counter()
        if self.cfg.mode is WorkerMode.HOGWILD_SHARDED:
            delta = execute_hogwild_sharded(
                self.ctx.model, msg.batch, self.cfg.threads, msg.learning_rate,
                self.ctx.beta, self._pool,
            )
            compute = time.perf_counter() - start
            if self.cfg.speed_factor > 0:
                time.sleep(self.cfg.speed_factor * compute)
        else:
            delta = execute_batch_replica(
                self.ctx.model, msg.batch, msg.learning_rate, self.cfg.speed_factor
            )
        self.busy_seconds += time.perf_counter() - start
        self.update_count += delta
        self.examples_processed += msg.batch.length
        self._send(ToCoordinator.SCHEDULE_WORK)

    def _evaluate(self, msg: MessageToWorker) -> None:
        batch = msg.batch
        total = loss_sum(self.ctx.eval_model, batch.x, batch.y)
        self.coordinator_inbox.send(
            MessageToCoordinator(
                kind=ToCoordinator.PARTIAL_LOSS,
                worker_id=self.cfg.worker_id,
                partial_loss_sum=total,
                example_count=batch.length,
            )
        )

    def _send(self, kind: ToCoordinator) -> None:
        self.coordinator_inbox.send(
            MessageToCoordinator(kind=kind, worker_id=self.cfg.worker_id, update_count=self.update_count)
        )
