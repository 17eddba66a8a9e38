"""Coordinator runtime: sequential message loop driving asynchronous workers.

One coordinator thread owns the global model, the epoch's shuffled data and
all scheduling state.  Workers request work; the coordinator answers each
request before touching the next message, handing out contiguous batch
references until the epoch is exhausted.  Loss is evaluated on a frozen
model snapshot while every worker is quiescent, and that evaluation time is
excluded from the training clock so wall-clock comparisons only count
training.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .data import BatchRef, Dataset, reorder, shuffle_epoch
from .messaging import MessageQueue, MessageToWorker, ToCoordinator, ToWorker
from .nn import Model, deep_copy, loss_sum
from .policies import PolicyDecision
from .workers import RunContext, WorkerConfig, WorkerThread

log = logging.getLogger(__name__)


class EngineError(RuntimeError):
    """Protocol violation or worker failure; the run aborts."""


@dataclass(frozen=True)
class LossSample:
    wall_ms: float  # training clock, evaluation time excluded
    epoch_fraction: float
    loss: float


@dataclass(frozen=True)
class BatchSizePoint:
    time_ms: float
    worker_id: str
    batch_size: int


@dataclass(frozen=True)
class CoverageRecord:
    epoch: int
    start: int
    length: int
    worker_id: str


@dataclass
class RunMetrics:
    samples: list[LossSample] = field(default_factory=list)
    per_worker_updates: dict[str, float] = field(default_factory=dict)
    per_worker_busy_ms: dict[str, float] = field(default_factory=dict)
    per_worker_examples: dict[str, int] = field(default_factory=dict)
    batch_size_trace: list[BatchSizePoint] = field(default_factory=list)
    coverage: list[CoverageRecord] = field(default_factory=list)
    n_examples: int = 0
    epochs_completed: int = 0
    training_wall_ms: float = 0.0
    stop_reason: str = ""
    messages_sent: int = 0
    messages_received: int = 0
    worker_reported_updates: dict[str, float] = field(default_factory=dict)

    @property
    def final_loss(self) -> float:
        return self.samples[-1].loss


def epoch_shuffle_seed(run_seed: int, epoch: int) -> tuple[int, int]:
    """Entropy for the per-epoch reshuffle; stable across engine and oracles."""
    return (run_seed, epoch)


def evaluate_loss(model: Model, ds: Dataset) -> float:
    """Mean cross-entropy of the model over a dataset (single-threaded)."""
    return loss_sum(model, ds.features, ds.labels) / ds.n_examples


def aggregate_partial_losses(partials: list[tuple[float, int]]) -> float:
    """Global mean from (sum, count) partials; independent of the split."""
    total = sum(p for p, _ in partials)
    count = sum(c for _, c in partials)
    if count == 0:
        raise ValueError("no examples in partial losses")
    return total / count


class _Coordinator:
    def __init__(
        self,
        dataset: Dataset,
        model: Model,
        roster: list[WorkerConfig],
        policy,
        *,
        epochs: int,
        wall_clock_budget_s: float | None,
        seed: int,
        beta: float,
        shuffle_each_epoch: bool,
        drain_tail: bool,
        loss_every_batches: int | None,
    ):
        if not roster:
            raise ValueError("need at least one worker")
        if dataset.n_examples < 1:
            raise ValueError("empty dataset")
        if len({cfg.worker_id for cfg in roster}) != len(roster):
            raise ValueError("duplicate worker ids")
        if epochs < 0:
            raise ValueError("epochs must be >= 0")
        self.dataset = dataset
        self.model = model
        self.roster = roster
        self.policy = policy
        self.epochs = epochs
        self.budget_s = wall_clock_budget_s
        self.seed = seed
        self.shuffle_each_epoch = shuffle_each_epoch
        self.drain_tail = drain_tail
        self.loss_every_batches = loss_every_batches

        self.ctx = RunContext(model=model, beta=beta)
        self.inbox = MessageQueue("to-coordinator")
        self.queues = {cfg.worker_id: MessageQueue(f"to-{cfg.worker_id}") for cfg in roster}
        self.threads = {
            cfg.worker_id: WorkerThread(cfg, self.ctx, self.queues[cfg.worker_id], self.inbox)
            for cfg in roster
        }

        self.updates: dict[str, float] = {cfg.worker_id: 0.0 for cfg in roster}
        self.decisions: dict[str, PolicyDecision] = {}
        self.parked: set[str] = set()
        self.last_served: dict[str, tuple[float, int]] = {}  # (perf time, batch length)
        self.speed: dict[str, float] = {}  # examples/second estimate

        self.epoch_index = 0
        self.epoch_features = None
        self.epoch_labels = None
        self.cursor = 0
        self.epochs_completed = 0
        self.batches_since_eval = 0
        self.eval_pending = False
        self.finishing = False
        self.stop_reason = ""

        self.train_seconds = 0.0
        self._phase_start: float | None = None
        self.metrics = RunMetrics(n_examples=dataset.n_examples)

    # -- time bookkeeping ------------------------------------------------

    def _train_ms(self) -> float:
        live = 0.0 if self._phase_start is None else time.perf_counter() - self._phase_start
        return (self.train_seconds + live) * 1000.0

    def _enter_train(self) -> None:
        self._phase_start = time.perf_counter()

    def _leave_train(self) -> None:
        if self._phase_start is not None:
            self.train_seconds += time.perf_counter() - self._phase_start
            self._phase_start = None

    def _budget_hit(self) -> bool:
        return self.budget_s is not None and self._train_ms() >= self.budget_s * 1000.0

    # -- run -------------------------------------------------------------

    def run(self) -> RunMetrics:
        for t in self.threads.values():
            t.start()
        try:
            self.decisions = self.policy.prepare(self.roster)
            for wid, d in self.decisions.items():
                self._trace(wid, d.batch_size)
            self._evaluate_and_sample(0.0)
            while self.epochs_completed < self.epochs and not self.finishing:
                self._begin_epoch()
                self._train_epoch()
                interrupted = self.finishing and self.cursor < self._epoch_len()
                if interrupted:
                    fraction = self.epochs_completed + self.cursor / self._epoch_len()
                else:
                    # Done either by serving every example or, in strict-tail
                    # mode, because no worker's batch fits the remainder.
                    self.epochs_completed += 1
                    fraction = float(self.epochs_completed)
                self.epoch_index += 1
                self._evaluate_and_sample(fraction)
            if not self.stop_reason:
                self.stop_reason = "epochs"
            self._shutdown()
        except BaseException:
            self._abort()
            raise
        return self._finalize()

    def _fraction(self) -> float:
        if self.epoch_features is None or self.cursor >= self._epoch_len():
            return float(self.epochs_completed)
        return self.epochs_completed + self.cursor / self._epoch_len()

    def _epoch_len(self) -> int:
        return 0 if self.epoch_features is None else self.epoch_features.shape[0]

    # -- epoch machinery ---------------------------------------------------

    def _begin_epoch(self) -> None:
        if self.epoch_features is None or self.shuffle_each_epoch:
            shuffle_epoch_index = self.epoch_index if self.shuffle_each_epoch else 0
            perm = shuffle_epoch(self.dataset, epoch_shuffle_seed(self.seed, shuffle_epoch_index))
            epoch_ds = reorder(self.dataset, perm)
            self.epoch_features = epoch_ds.features
            self.epoch_labels = epoch_ds.labels
        self.cursor = 0

    def _train_epoch(self) -> None:
        self._enter_train()
        try:
            for wid in sorted(self.parked):
                self._answer(wid)
            while not self._epoch_done():
                if self.eval_pending and len(self.parked) == len(self.roster):
                    self._leave_train()
                    self._evaluate_and_sample(self._fraction())
                    self.eval_pending = False
                    self.batches_since_eval = 0
                    self._enter_train()
                    for wid in sorted(self.parked):
                        self._answer(wid)
                    continue
                msg = self.inbox.receive()
                if msg is None:
                    raise EngineError("coordinator inbox closed mid-run")
                if msg.kind is ToCoordinator.SCHEDULE_WORK:
                    self._on_schedule_work(msg.worker_id, msg.update_count)
                elif msg.kind is ToCoordinator.HALT:
                    raise EngineError(f"worker {msg.worker_id} died mid-run")
                else:
                    raise EngineError(f"unexpected {msg.kind} during training")
        finally:
            self._leave_train()

    def _epoch_done(self) -> bool:
        if len(self.parked) != len(self.roster):
            return False
        if self.eval_pending:
            return False
        if self.finishing:
            return True
        if self.cursor >= self._epoch_len():
            return True
        if not self.drain_tail:
            # No worker can fit a full batch in the remainder.
            remaining = self._epoch_len() - self.cursor
            return all(self.decisions[w.worker_id].batch_size > remaining for w in self.roster)
        return False

    def _register_report(self, wid: str, reported_u: float) -> None:
        """Book a worker's cumulative update count and refresh its decision."""
        if wid not in self.updates:
            raise EngineError(f"schedule request from unknown worker {wid!r}")
        if reported_u < self.updates[wid]:
            raise EngineError(f"update count for {wid} went backwards")
        self._update_speed(wid)
        self.updates[wid] = reported_u
        decision = self.policy.decide(wid, reported_u)
        if decision.batch_size != self.decisions[wid].batch_size:
            self._trace(wid, decision.batch_size)
        self.decisions[wid] = decision

    def _on_schedule_work(self, wid: str, reported_u: float) -> None:
        self._register_report(wid, reported_u)
        if self._budget_hit() and not self.finishing:
            self.finishing = True
            self.stop_reason = "budget"
        self._answer(wid)

    def _answer(self, wid: str) -> None:
        """Serve a batch to the requesting worker, or park it when no work fits."""
        if self.finishing or self.eval_pending:
            self.parked.add(wid)
            return
        remaining = self._epoch_len() - self.cursor
        if remaining <= 0:
            self.parked.add(wid)
            return
        b = self.decisions[wid].batch_size
        if remaining < b and not self.drain_tail:
            self.parked.add(wid)
            return
        length = min(b, remaining)
        batch = BatchRef(self.epoch_features, self.epoch_labels, self.cursor, length)
        self.cursor += length
        self.metrics.coverage.append(
            CoverageRecord(self.epoch_index, batch.start, batch.length, wid)
        )
        self.queues[wid].send(
            MessageToWorker(
                kind=ToWorker.EXECUTE_WORK,
                batch=batch,
                learning_rate=self.decisions[wid].learning_rate,
                epoch_id=self.epoch_index,
            )
        )
        self.parked.discard(wid)
        self.last_served[wid] = (time.perf_counter(), length)
        self.batches_since_eval += 1
        if self.loss_every_batches and self.batches_since_eval >= self.loss_every_batches:
            self.eval_pending = True

    def _update_speed(self, wid: str) -> None:
        served = self.last_served.pop(wid, None)
        if served is None:
            return
        t0, length = served
        elapsed = time.perf_counter() - t0
        if elapsed <= 0:
            return
        rate = length / elapsed
        prev = self.speed.get(wid)
        self.speed[wid] = rate if prev is None else 0.5 * prev + 0.5 * rate

    def _trace(self, wid: str, batch_size: int) -> None:
        self.metrics.batch_size_trace.append(BatchSizePoint(self._train_ms(), wid, batch_size))

    # -- loss evaluation ---------------------------------------------------

    def _eval_slices(self) -> list[tuple[str, int, int]]:
        """(worker, start, length) covering the dataset, sized by observed speed."""
        n = self.dataset.n_examples
        ids = [cfg.worker_id for cfg in self.roster]
        weights = [max(self.speed.get(wid, 0.0), 0.0) for wid in ids]
        if sum(weights) <= 0:
            weights = [1.0] * len(ids)
        total = sum(weights)
        sizes = [int(n * w / total) for w in weights]
        sizes[0] += n - sum(sizes)
        out = []
        start = 0
        for wid, size in zip(ids, sizes):
            if size > 0:
                out.append((wid, start, size))
                start += size
        return out

    def _evaluate_and_sample(self, fraction: float) -> None:
        self.ctx.eval_model = deep_copy(self.model)
        slices = self._eval_slices()
        for wid, start, length in slices:
            self.queues[wid].send(
                MessageToWorker(
                    kind=ToWorker.EVALUATE_LOSS,
                    batch=BatchRef(self.dataset.features, self.dataset.labels, start, length),
                )
            )
        partials: list[tuple[float, int]] = []
        while len(partials) < len(slices):
            msg = self.inbox.receive()
            if msg is None:
                raise EngineError("coordinator inbox closed during evaluation")
            if msg.kind is ToCoordinator.PARTIAL_LOSS:
                partials.append((msg.partial_loss_sum, msg.example_count))
            elif msg.kind is ToCoordinator.SCHEDULE_WORK:
                # Quiescent workers asking for the next epoch's work.
                self._register_report(msg.worker_id, msg.update_count)
                self.parked.add(msg.worker_id)
            else:
                raise EngineError(f"worker {msg.worker_id} died during evaluation")
        loss = aggregate_partial_losses(partials)
        self.metrics.samples.append(LossSample(self._train_ms(), fraction, loss))
        log.debug("loss sample: t=%.1fms epoch=%.3f loss=%.6f", self._train_ms(), fraction, loss)

    # -- shutdown ----------------------------------------------------------

    def _shutdown(self) -> None:
        for wid, q in self.queues.items():
            q.send(MessageToWorker(kind=ToWorker.STOP))
        acked = 0
        while acked < len(self.roster):
            msg = self.inbox.receive()
            if msg is None:
                break
            if msg.kind is ToCoordinator.HALT:
                acked += 1
            elif msg.kind is ToCoordinator.SCHEDULE_WORK:
                self.updates[msg.worker_id] = msg.update_count
                self.parked.add(msg.worker_id)
            else:
                raise EngineError(f"unexpected {msg.kind} during shutdown")
        self._close_all()
        for t in self.threads.values():
            t.join(timeout=30.0)
        failed = [wid for wid, t in self.threads.items() if t.error is not None]
        if failed:
            raise EngineError(f"workers failed: {failed}")

    def _abort(self) -> None:
        self._close_all()
        for t in self.threads.values():
            t.join(timeout=5.0)

    def _close_all(self) -> None:
        self.inbox.close()
        for q in self.queues.values():
            q.close()

    def _finalize(self) -> RunMetrics:
        m = self.metrics
        m.per_worker_updates = dict(self.updates)
        m.per_worker_busy_ms = {
            wid: t.busy_seconds * 1000.0 for wid, t in self.threads.items()
        }
        m.per_worker_examples = {
            wid: t.examples_processed for wid, t in self.threads.items()
        }
        m.worker_reported_updates = {wid: t.update_count for wid, t in self.threads.items()}
        m.epochs_completed = self.epochs_completed
        m.training_wall_ms = self.train_seconds * 1000.0
        m.stop_reason = self.stop_reason
        queues = [self.inbox, *self.queues.values()]
        m.messages_sent = sum(q.sent for q in queues)
        m.messages_received = sum(q.received for q in queues)
        return m


def run_training(
    dataset: Dataset,
    model: Model,
    roster: list[WorkerConfig],
    policy,
    *,
    epochs: int,
    wall_clock_budget_s: float | None = None,
    seed: int = 0,
    beta: float = 1.0,
    shuffle_each_epoch: bool = True,
    drain_tail: bool = True,
    loss_every_batches: int | None = None,
) -> RunMetrics:
    """Train `model` in place on `dataset` with the given workers and policy.

    Runs until `epochs` complete passes or until the training clock crosses
    `wall_clock_budget_s`, whichever comes first; loss is sampled before
    training and after every epoch (plus every `loss_every_batches` batches
    when set).  The labels must already be dense 0-based class indices that
    fit the model's output layer.
    """
    if dataset.class_count > model.arch.class_count:
        raise ValueError(
            f"dataset has {dataset.class_count} classes but the model only"
            f" emits {model.arch.class_count}"
        )
    coordinator = _Coordinator(
        dataset,
        model,
        roster,
        policy,
        epochs=epochs,
        wall_clock_budget_s=wall_clock_budget_s,
        seed=seed,
        beta=beta,
        shuffle_each_epoch=shuffle_each_epoch,
        drain_tail=drain_tail,
        loss_every_batches=loss_every_batches,
    )
    return coordinator.run()
