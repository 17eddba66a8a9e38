"""Batch-size scheduling policies consulted on every work request.

Three policies govern what batch a requesting worker receives:

* uniform: one fixed batch size for everybody, constant learning rate.
* fixed heterogeneous: small per-thread batches for the lock-free sharded
  pool, one large batch for replica workers, learning rate proportional
  to batch size.
* adaptive: batch sizes move by a factor alpha, clamped to per-worker
  thresholds, driven by each worker's cumulative update count relative
  to the slowest/fastest counts seen so far.

All functions are pure decision logic over explicit state; only the
coordinator thread ever calls them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .workers import WorkerConfig, WorkerMode


@dataclass(frozen=True)
class PolicyDecision:
    batch_size: int
    learning_rate: float

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def scaled_learning_rate(base_eta: float, batch_size: int, reference_batch: int) -> float:
    """Learning rate proportional to batch size, anchored at the reference batch."""
    return base_eta * (batch_size / reference_batch)


def reference_batch(roster: list[WorkerConfig]) -> int:
    """Anchor for the proportional learning-rate rule: smallest configured min batch."""
    if not roster:
        raise ValueError("empty worker roster")
    return min(cfg.min_batch for cfg in roster)


def initial_batch_size(cfg: WorkerConfig) -> int:
    """Replica workers start at their upper threshold; sharded pools start at
    one example per thread (clamped to their thresholds)."""
    if cfg.mode is WorkerMode.BATCH_REPLICA:
        return cfg.max_batch
    return min(max(cfg.threads, cfg.min_batch), cfg.max_batch)


@dataclass
class WorkerSlot:
    batch_size: int
    min_batch: int
    max_batch: int
    update_count: float = 0.0
    reported_once: bool = False


@dataclass
class AdaptiveState:
    """Per-worker batch sizes plus the running update-count thresholds."""

    alpha: float = 2.0
    workers: dict[str, WorkerSlot] = field(default_factory=dict)
    min_updates: float = 0.0
    max_updates: float = 0.0

    def __post_init__(self):
        if self.alpha <= 1.0:
            raise ValueError("alpha must be > 1")

    def register(self, cfg: WorkerConfig) -> int:
        b = initial_batch_size(cfg)
        self.workers[cfg.worker_id] = WorkerSlot(
            batch_size=b, min_batch=cfg.min_batch, max_batch=cfg.max_batch
        )
        return b


def adaptive_update(
    state: AdaptiveState,
    worker_id: str,
    reported_u: float,
    strict_thresholds: bool = False,
) -> int:
    """Resize a worker's batch from its reported cumulative update count.

    Below the minimum threshold the batch shrinks by alpha (speeding the
    worker up), above the maximum it grows by alpha (slowing it down);
    inside the band nothing changes.  Sizes floor to integers and clamp to
    the worker's thresholds.

    With strict_thresholds the min/max thresholds are recomputed per call
    over all *other* workers' counts; the default maintains them as
    running scalars reassigned only when a report crosses them.
    """
    slot = state.workers[worker_id]
    if reported_u < slot.update_count:
        raise ValueError(
            f"update count for {worker_id} went backwards:"
            f" {reported_u} < {slot.update_count}"
        )
    slot.update_count = reported_u
    if not slot.reported_once:
        # A worker's very first report carries no speed information yet.
        slot.reported_once = True
        return slot.batch_size

    if strict_thresholds:
        others = [s.update_count for wid, s in state.workers.items() if wid != worker_id]
        if not others:
            return slot.batch_size
        min_u, max_u = min(others), max(others)
    else:
        min_u, max_u = state.min_updates, state.max_updates

    if reported_u < min_u:
        slot.batch_size = max(int(slot.batch_size / state.alpha), slot.min_batch)
        if not strict_thresholds:
            state.min_updates = reported_u
    elif reported_u > max_u:
        slot.batch_size = min(int(slot.batch_size * state.alpha), slot.max_batch)
        if not strict_thresholds:
            state.max_updates = reported_u
    return slot.batch_size


class UniformHogbatch:
    """Every worker always gets the same batch size and learning rate."""

    def __init__(self, fixed_b: int, eta: float):
        if fixed_b < 1:
            raise ValueError("fixed batch size must be >= 1")
        self.fixed_b = fixed_b
        self.eta = eta

    def prepare(self, roster: list[WorkerConfig]) -> dict[str, PolicyDecision]:
        return {cfg.worker_id: PolicyDecision(self.fixed_b, self.eta) for cfg in roster}

    def decide(self, worker_id: str, reported_u: float) -> PolicyDecision:
        return PolicyDecision(self.fixed_b, self.eta)


class FixedHeterogeneous:
    """Static split: sharded pools get threads x per-thread examples, replica
    workers get one large batch; learning rates scale with batch size."""

    def __init__(self, base_eta: float, cpu_batch_per_thread: int = 1, gpu_batch: int = 8192):
        if cpu_batch_per_thread < 1 or gpu_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        self.base_eta = base_eta
        self.cpu_batch_per_thread = cpu_batch_per_thread
        self.gpu_batch = gpu_batch
        self._decisions: dict[str, PolicyDecision] = {}

    def prepare(self, roster: list[WorkerConfig]) -> dict[str, PolicyDecision]:
        ref = reference_batch(roster)
        for cfg in roster:
            if cfg.mode is WorkerMode.HOGWILD_SHARDED:
                b = cfg.threads * self.cpu_batch_per_thread
            else:
                b = self.gpu_batch
            self._decisions[cfg.worker_id] = PolicyDecision(
                b, scaled_learning_rate(self.base_eta, b, ref)
            )
        return dict(self._decisions)

    def decide(self, worker_id: str, reported_u: float) -> PolicyDecision:
        try:
            return self._decisions[worker_id]
        except KeyError:
            raise ValueError(f"unknown worker {worker_id!r}") from None


class AdaptiveHogbatch:
    """Batch sizes follow the update-count balancing rule, thresholds per worker."""

    def __init__(self, base_eta: float, alpha: float = 2.0, strict_thresholds: bool = False):
        self.base_eta = base_eta
        self.strict_thresholds = strict_thresholds
        self.state = AdaptiveState(alpha=alpha)
        self._ref = 1

    def prepare(self, roster: list[WorkerConfig]) -> dict[str, PolicyDecision]:
        self._ref = reference_batch(roster)
        out = {}
        for cfg in roster:
            b = self.state.register(cfg)
            out[cfg.worker_id] = PolicyDecision(
                b, scaled_learning_rate(self.base_eta, b, self._ref)
            )
        return out

    def decide(self, worker_id: str, reported_u: float) -> PolicyDecision:
        if worker_id not in self.state.workers:
            raise ValueError(f"unknown worker {worker_id!r}")
        b = adaptive_update(self.state, worker_id, reported_u, self.strict_thresholds)
        return PolicyDecision(b, scaled_learning_rate(self.base_eta, b, self._ref))
