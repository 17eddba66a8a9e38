"""Experiment driver: flat key=value run configs, seeded runs, CSV outputs.

A run config fully determines a training run (dataset, architecture,
policy, worker roster, seed, budget).  Each run writes a loss series CSV, a
batch-size trace CSV and a per-worker summary CSV; a suite additionally
writes one summary row per run with losses normalized to the best loss
reached anywhere in the suite.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .data import (
    Dataset,
    LabelMapping,
    load_libsvm,
    remap_labels_dense,
    subsample,
    synthetic_blobs,
)
from .engine import RunMetrics, run_training
from .nn import Architecture, InitScheme, Model, init_model
from .policies import AdaptiveHogbatch, FixedHeterogeneous, UniformHogbatch
from .workers import WorkerConfig, WorkerMode

log = logging.getLogger(__name__)

LOSS_HEADER = ["wall_ms", "epoch", "loss", "loss_normalized"]
TRACE_HEADER = ["wall_ms", "worker", "batch_size"]
WORKER_HEADER = ["worker", "updates", "update_share", "busy_ms", "utilization"]
SUMMARY_HEADER = [
    "name",
    "status",
    "final_loss",
    "min_loss",
    "loss_normalized",
    "samples",
    "total_updates",
    "training_wall_ms",
    "error",
]


class UsageError(ValueError):
    """Bad configuration or command line; maps to exit code 1."""


@dataclass
class RunConfig:
    name: str = "run"
    seed: int = 0
    # dataset
    dataset_kind: str = "synthetic"
    dataset_path: str | None = None
    feature_dim: int | None = None
    label_mapping: LabelMapping = LabelMapping.ZERO_ONE
    remap_labels: bool = True
    minmax_scale: bool = False
    subsample_n: int | None = None
    synth_n: int = 2000
    synth_dim: int = 10
    synth_classes: int = 2
    synth_separation: float = 3.0
    # model
    arch: tuple[int, ...] = ()
    init_scheme: InitScheme = InitScheme.SCALED_GAUSSIAN
    # policy
    policy: str = "uniform"
    fixed_batch: int = 32
    cpu_batch_per_thread: int = 1
    gpu_batch: int = 8192
    alpha: float = 2.0
    beta: float = 1.0
    strict_thresholds: bool = False
    base_eta: float = 0.01
    # run control
    epochs: int = 1
    budget_s: float | None = None
    loss_every_batches: int | None = None
    shuffle_each_epoch: bool = True
    drain_tail: bool = True
    workers: list[WorkerConfig] = field(default_factory=list)


def parse_kv_file(path) -> dict[str, str]:
    """Flat `key=value` lines; blank lines and '#' comments ignored."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def apply_overrides(kv: dict[str, str], overrides: list[str]) -> dict[str, str]:
    """Apply `key=value` strings on top of a parsed config; overrides win."""
    merged = dict(kv)
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        merged[key.strip()] = value.strip()
    return merged


def _parse_bool(key: str, value: str) -> bool:
    low = value.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{key}: expected a boolean, got {value!r}")


def _parse_enum(key: str, value: str, enum_cls):
    for member in enum_cls:
        if member.value == value.lower():
            return member
    choices = ", ".join(m.value for m in enum_cls)
    raise UsageError(f"{key}: expected one of {choices}, got {value!r}")


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{key}: expected an integer, got {value!r}") from None


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise UsageError(f"{key}: expected a number, got {value!r}") from None


def _parse_workers(kv: dict[str, str]) -> list[WorkerConfig]:
    indices = set()
    for key in kv:
        if key.startswith("worker."):
            parts = key.split(".")
            if len(parts) != 3:
                raise UsageError(f"bad worker key {key!r}")
            indices.add(_parse_int(key, parts[1]))
    workers = []
    for idx in sorted(indices):
        prefix = f"worker.{idx}."

        def get(name: str, default: str | None = None) -> str | None:
            return kv.get(prefix + name, default)

        mode_s = get("mode")
        if mode_s is None:
            raise UsageError(f"worker.{idx}.mode is required")
        mode = _parse_enum(prefix + "mode", mode_s, WorkerMode)
        workers.append(
            WorkerConfig(
                worker_id=get("id", f"w{idx}"),
                mode=mode,
                threads=_parse_int(prefix + "threads", get("threads", "1")),
                speed_factor=_parse_float(prefix + "speed_factor", get("speed_factor", "0")),
                min_batch=_parse_int(prefix + "min_batch", get("min_batch", "1")),
                max_batch=_parse_int(prefix + "max_batch", get("max_batch", "1")),
            )
        )
    return workers


def config_from_kv(kv: dict[str, str]) -> RunConfig:
    """Validate a flat key=value mapping into a RunConfig."""
    cfg = RunConfig()
    known_simple = {
        "name": lambda v: setattr(cfg, "name", v),
        "seed": lambda v: setattr(cfg, "seed", _parse_int("seed", v)),
        "dataset.kind": lambda v: setattr(cfg, "dataset_kind", v),
        "dataset.path": lambda v: setattr(cfg, "dataset_path", v),
        "dataset.feature_dim": lambda v: setattr(cfg, "feature_dim", _parse_int("dataset.feature_dim", v)),
        "dataset.label_mapping": lambda v: setattr(
            cfg, "label_mapping", _parse_enum("dataset.label_mapping", v, LabelMapping)
        ),
        "dataset.remap_labels": lambda v: setattr(cfg, "remap_labels", _parse_bool("dataset.remap_labels", v)),
        "dataset.minmax_scale": lambda v: setattr(cfg, "minmax_scale", _parse_bool("dataset.minmax_scale", v)),
        "dataset.subsample": lambda v: setattr(cfg, "subsample_n", _parse_int("dataset.subsample", v)),
        "dataset.synthetic.n": lambda v: setattr(cfg, "synth_n", _parse_int("dataset.synthetic.n", v)),
        "dataset.synthetic.dim": lambda v: setattr(cfg, "synth_dim", _parse_int("dataset.synthetic.dim", v)),
        "dataset.synthetic.classes": lambda v: setattr(
            cfg, "synth_classes", _parse_int("dataset.synthetic.classes", v)
        ),
        "dataset.synthetic.separation": lambda v: setattr(
            cfg, "synth_separation", _parse_float("dataset.synthetic.separation", v)
        ),
        "arch": lambda v: setattr(
            cfg, "arch", tuple(_parse_int("arch", part) for part in v.split(",") if part.strip())
        ),
        "init.scheme": lambda v: setattr(cfg, "init_scheme", _parse_enum("init.scheme", v, InitScheme)),
        "policy": lambda v: setattr(cfg, "policy", v),
        "policy.fixed_batch": lambda v: setattr(cfg, "fixed_batch", _parse_int("policy.fixed_batch", v)),
        "policy.cpu_batch_per_thread": lambda v: setattr(
            cfg, "cpu_batch_per_thread", _parse_int("policy.cpu_batch_per_thread", v)
        ),
        "policy.gpu_batch": lambda v: setattr(cfg, "gpu_batch", _parse_int("policy.gpu_batch", v)),
        "policy.alpha": lambda v: setattr(cfg, "alpha", _parse_float("policy.alpha", v)),
        "policy.beta": lambda v: setattr(cfg, "beta", _parse_float("policy.beta", v)),
        "policy.strict_thresholds": lambda v: setattr(
            cfg, "strict_thresholds", _parse_bool("policy.strict_thresholds", v)
        ),
        "base_eta": lambda v: setattr(cfg, "base_eta", _parse_float("base_eta", v)),
        "epochs": lambda v: setattr(cfg, "epochs", _parse_int("epochs", v)),
        "budget_s": lambda v: setattr(cfg, "budget_s", _parse_float("budget_s", v) if v else None),
        "loss_every_batches": lambda v: setattr(
            cfg, "loss_every_batches", _parse_int("loss_every_batches", v) if v else None
        ),
        "shuffle_each_epoch": lambda v: setattr(
            cfg, "shuffle_each_epoch", _parse_bool("shuffle_each_epoch", v)
        ),
        "drain_tail": lambda v: setattr(cfg, "drain_tail", _parse_bool("drain_tail", v)),
    }
    for key, value in kv.items():
        if key.startswith("worker."):
            continue
        if key not in known_simple:
            raise UsageError(f"unknown config key {key!r}")
        known_simple[key](value)
    cfg.workers = _parse_workers(kv)

    if not cfg.workers:
        raise UsageError("at least one worker.N.mode entry is required")
    if cfg.dataset_kind not in ("synthetic", "libsvm"):
        raise UsageError(f"dataset.kind must be synthetic or libsvm, got {cfg.dataset_kind!r}")
    if cfg.dataset_kind == "libsvm":
        if not cfg.dataset_path:
            raise UsageError("dataset.path is required for libsvm datasets")
        if not cfg.feature_dim:
            raise UsageError("dataset.feature_dim is required for libsvm datasets")
    if len(cfg.arch) < 2:
        raise UsageError("arch must list input, hidden and output layer sizes")
    if cfg.policy not in ("uniform", "fixed_heterogeneous", "adaptive"):
        raise UsageError(f"unknown policy {cfg.policy!r}")
    return cfg


def load_run_dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset_kind == "synthetic":
        ds = synthetic_blobs(
            cfg.synth_n, cfg.synth_dim, cfg.synth_classes, cfg.synth_separation, seed=cfg.seed
        )
    else:
        ds = load_libsvm(
            cfg.dataset_path,
            feature_dim=cfg.feature_dim,
            label_mapping=cfg.label_mapping,
            minmax_scale=cfg.minmax_scale,
        )
        if cfg.remap_labels:
            ds = remap_labels_dense(ds)
    if cfg.subsample_n is not None and cfg.subsample_n < ds.n_examples:
        ds = subsample(ds, cfg.subsample_n, seed=cfg.seed)
    return ds


def build_model(cfg: RunConfig, ds: Dataset) -> Model:
    arch = Architecture(cfg.arch)
    if arch.input_dim != ds.feature_dim:
        raise UsageError(
            f"arch input dim {arch.input_dim} does not match dataset dim {ds.feature_dim}"
        )
    if arch.class_count < ds.class_count:
        raise UsageError(
            f"arch output {arch.class_count} smaller than dataset classes {ds.class_count}"
        )
    return init_model(arch, seed=cfg.seed, scheme=cfg.init_scheme)


def build_policy(cfg: RunConfig):
    if cfg.policy == "uniform":
        return UniformHogbatch(fixed_b=cfg.fixed_batch, eta=cfg.base_eta)
    if cfg.policy == "fixed_heterogeneous":
        return FixedHeterogeneous(
            base_eta=cfg.base_eta,
            cpu_batch_per_thread=cfg.cpu_batch_per_thread,
            gpu_batch=cfg.gpu_batch,
        )
    return AdaptiveHogbatch(
        base_eta=cfg.base_eta, alpha=cfg.alpha, strict_thresholds=cfg.strict_thresholds
    )


def execute_run(cfg: RunConfig) -> RunMetrics:
    """Load data, initialize the model and train per the config."""
    ds = load_run_dataset(cfg)
    model = build_model(cfg, ds)
    policy = build_policy(cfg)
    log.info("run %s: %s, %d workers, policy=%s", cfg.name, ds.name, len(cfg.workers), cfg.policy)
    return run_training(
        ds,
        model,
        cfg.workers,
        policy,
        epochs=cfg.epochs,
        wall_clock_budget_s=cfg.budget_s,
        seed=cfg.seed,
        beta=cfg.beta,
        shuffle_each_epoch=cfg.shuffle_each_epoch,
        drain_tail=cfg.drain_tail,
        loss_every_batches=cfg.loss_every_batches,
    )


def utilization_proxy(metrics: RunMetrics) -> dict[str, float]:
    """Per-worker busy fraction: batch-processing time over training wall time."""
    wall = metrics.training_wall_ms
    out = {}
    for wid, busy in metrics.per_worker_busy_ms.items():
        out[wid] = 0.0 if wall <= 0 else min(busy / wall, 1.0)
    return out


def update_ratio(metrics: RunMetrics) -> dict[str, float]:
    """Per-worker share of all model updates; shares sum to one."""
    total = sum(metrics.per_worker_updates.values())
    if total <= 0:
        raise ValueError("no updates were applied; update ratio is undefined")
    return {wid: u / total for wid, u in metrics.per_worker_updates.items()}


def write_run_csvs(cfg: RunConfig, metrics: RunMetrics, out_dir) -> dict[str, Path]:
    """Write the loss series, batch trace and worker summary for one run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "loss": out_dir / f"{cfg.name}_loss.csv",
        "trace": out_dir / f"{cfg.name}_batch_trace.csv",
        "workers": out_dir / f"{cfg.name}_workers.csv",
    }
    run_min = min(s.loss for s in metrics.samples)
    with open(paths["loss"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOSS_HEADER)
        for s in metrics.samples:
            w.writerow([f"{s.wall_ms:.3f}", repr(s.epoch_fraction), repr(s.loss), repr(s.loss / run_min)])
    with open(paths["trace"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for p in metrics.batch_size_trace:
            w.writerow([f"{p.time_ms:.3f}", p.worker_id, p.batch_size])
    shares = update_ratio(metrics) if sum(metrics.per_worker_updates.values()) > 0 else {}
    utilization = utilization_proxy(metrics)
    with open(paths["workers"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WORKER_HEADER)
        for wid in sorted(metrics.per_worker_updates):
            w.writerow(
                [
                    wid,
                    repr(metrics.per_worker_updates[wid]),
                    repr(shares.get(wid, 0.0)),
                    f"{metrics.per_worker_busy_ms.get(wid, 0.0):.3f}",
                    f"{utilization.get(wid, 0.0):.4f}",
                ]
            )
    return paths


@dataclass
class SuiteResult:
    name: str
    status: str  # "ok" or "failed"
    metrics: RunMetrics | None = None
    error: str = ""


def run_experiment_suite(configs: list[RunConfig], out_dir) -> list[SuiteResult]:
    """Execute every config, writing per-run CSVs and a suite summary.

    A failing run is recorded in the summary and the suite continues.
    Summary losses are normalized to the minimum loss reached by any
    successful run in the suite.
    """
    if not configs:
        raise UsageError("experiment suite needs at least one run config")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: list[SuiteResult] = []
    for cfg in configs:
        try:
            metrics = execute_run(cfg)
            write_run_csvs(cfg, metrics, out_dir)
            results.append(SuiteResult(name=cfg.name, status="ok", metrics=metrics))
        except Exception as exc:
            log.exception("run %s failed", cfg.name)
            results.append(SuiteResult(name=cfg.name, status="failed", error=str(exc)))
    ok = [r for r in results if r.status == "ok"]
    suite_min = min(min(s.loss for s in r.metrics.samples) for r in ok) if ok else float("nan")
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in results:
            if r.metrics is None:
                w.writerow([r.name, r.status, "", "", "", 0, "", "", r.error])
                continue
            run_min = min(s.loss for s in r.metrics.samples)
            w.writerow(
                [
                    r.name,
                    r.status,
                    repr(r.metrics.final_loss),
                    repr(run_min),
                    repr(run_min / suite_min),
                    len(r.metrics.samples),
                    repr(sum(r.metrics.per_worker_updates.values())),
                    f"{r.metrics.training_wall_ms:.3f}",
                    "",
                ]
            )
    return results
