"""Continual meta-learning of generator/discriminator initialisations (first-order Reptile)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import UsageError
from .nn import Network
from .training import Batch, SpikeGenerator, TrainConfig, spikegan_step

# make_batch(x, labels, rng) -> Batch; turns stored examples into a training batch
BatchFn = Callable[[np.ndarray, np.ndarray, np.random.Generator], Batch]

METRIC_COLUMNS = (
    "t",
    "i",
    "task_id",
    "within_task_iters",
    "trts_accuracy",
    "mean_D_real",
    "mean_D_synth",
)


@dataclass
class HyperParams:
    """Shared initialisation: generator (topology, params, decoder) and discriminator."""

    gen: SpikeGenerator
    disc: Network

    def copy(self) -> "HyperParams":
        return HyperParams(self.gen.with_params(self.gen.params.copy()), self.disc.copy())

    def vectors(self) -> tuple[np.ndarray, np.ndarray]:
        return self.gen.params.vector(), self.disc.vector()


@dataclass
class TaskDataBuffer:
    """Batches observed so far for the current task; append-only."""

    x: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def append(self, x: np.ndarray, labels: np.ndarray) -> None:
        x = np.asarray(x)
        labels = np.asarray(labels)
        if len(x) != len(labels):
            raise UsageError("examples and labels differ in length")
        self.x.append(x)
        self.labels.append(labels)

    def __len__(self):
        return sum(len(b) for b in self.labels)

    @property
    def n_batches(self) -> int:
        return len(self.labels)

    def examples(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.x:
            raise UsageError("task-data buffer is empty")
        return np.concatenate(self.x), np.concatenate(self.labels)


@dataclass
class MetaDataBuffer:
    """Archived data of completed tasks; append-only."""

    tasks: list = field(default_factory=list)  # list of (x, labels)
    task_ids: list = field(default_factory=list)

    def archive(self, buf: TaskDataBuffer, task_id=None) -> None:
        self.tasks.append(buf.examples())
        self.task_ids.append(task_id)

    def __len__(self):
        return len(self.tasks)


def within_task_update(
    init: HyperParams,
    data: TaskDataBuffer,
    k_steps: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
    make_batch: BatchFn,
    history: list | None = None,
) -> tuple:
    """Adapt fresh copies of ``init`` with ``k_steps`` adversarial steps on buffer batches.

    Each step draws ``cfg.batch_size`` examples with replacement from the
    buffer.  Returns ``(generator params, discriminator)``; ``init`` is left
    untouched.  Per-step metrics are appended to ``history`` when given.
    """
    if len(data) == 0:
        raise UsageError("within-task update needs a non-empty task-data buffer")
    if k_steps < 0:
        raise UsageError("k_steps must be >= 0")
    x, labels = data.examples()
    gen, disc = init.gen, init.disc
    for _ in range(k_steps):
        idx = rng.integers(0, len(labels), size=cfg.batch_size)
        batch = make_batch(x[idx], labels[idx], rng)
        gen, disc, m = spikegan_step(gen, disc, batch, cfg, rng)
        if history is not None:
            history.append(m)
    if k_steps == 0:
        return init.gen.params.copy(), init.disc.copy()
    return gen.params, disc


def reptile(hp: HyperParams, adapted: Sequence[tuple], mu_meta: float) -> HyperParams:
    """``theta + mu * mean_n(phi_n - theta)`` for both networks."""
    if not adapted:
        return hp.copy()
    g0 = hp.gen.params.arrays()
    d0 = hp.disc.params()
    g_new, d_new = [], []
    for k, base in enumerate(g0):
        delta = np.mean([a[0].arrays()[k] - base for a in adapted], axis=0)
        g_new.append(base + mu_meta * delta)
    for k, base in enumerate(d0):
        delta = np.mean([a[1].params()[k] - base for a in adapted], axis=0)
        d_new.append(base + mu_meta * delta)
    gen = hp.gen.with_params(hp.gen.params.with_arrays(g_new))
    return HyperParams(gen, hp.disc.with_params(d_new))


def meta_update(
    hp: HyperParams,
    meta_buf: MetaDataBuffer,
    N: int,
    M: int,
    k_steps: int,
    mu_meta: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
    make_batch: BatchFn,
) -> HyperParams:
    """Reptile step over ``N`` stored tasks (sampled with replacement), ``M`` examples each.

    An empty meta buffer leaves ``hp`` unchanged.
    """
    if N < 1 or M < 1:
        raise UsageError("N and M must be >= 1")
    if len(meta_buf) == 0:
        return hp
    inner = replace(cfg, batch_size=M)
    adapted = []
    for _ in range(N):
        x, labels = meta_buf.tasks[int(rng.integers(len(meta_buf)))]
        pick = rng.choice(len(labels), size=M, replace=len(labels) < M)
        buf = TaskDataBuffer()
        buf.append(x[pick], labels[pick])
        adapted.append(within_task_update(hp, buf, k_steps, inner, rng, make_batch))
    return reptile(hp, adapted, mu_meta)


@dataclass
class Schedule:
    batches_per_task: int = 1
    batch_size: int = 32
    N: int = 10
    M: int = 5
    k_steps: int = 10  # within-task updates, both for serving and inside meta_update
    mu_meta: float = 0.1
    snapshot_every: int = 0  # meta-time steps between snapshots; 0 disables
    eval_every: int = 0  # meta-time steps between serving-model evaluations; 0 disables

    def __post_init__(self):
        if min(self.batches_per_task, self.batch_size, self.N, self.M) < 1:
            raise UsageError("schedule counts must be >= 1")
        if self.k_steps < 0 or not 0.0 <= self.mu_meta <= 1.0:
            raise UsageError("k_steps must be >= 0 and mu_meta in [0, 1]")


@dataclass
class Snapshot:
    """State after meta-time step ``t``; enough to resume the run bit-exactly."""

    t: int
    hp: HyperParams
    meta_buf: MetaDataBuffer
    rng_state: dict


@dataclass
class ContinualResult:
    hp: HyperParams
    snapshots: list  # Snapshot per snapshot_every meta-time steps
    rows: list  # metric dicts keyed by METRIC_COLUMNS


def run_continual(
    task_stream: Iterable,
    schedule: Schedule,
    cfg: TrainConfig,
    rng: np.random.Generator,
    hp: HyperParams,
    make_batch: BatchFn,
    evaluate: Callable | None = None,
    metrics_path=None,
    resume: Snapshot | None = None,
) -> ContinualResult:
    """Online-within-online loop over tasks ``(task_id, x, labels)``.

    For every incoming batch the serving model is re-adapted from the current
    initialisation on the task buffer, then the initialisation takes one
    Reptile step on completed tasks.  ``evaluate(gen, disc, x, labels, rng)``
    returns a TRTS accuracy for the serving model.

    With ``resume`` the first ``resume.t`` tasks of the (identical) stream
    are skipped and state is restored from the snapshot; metric rows are
    appended to an existing ``metrics_path``.
    """
    meta_buf = MetaDataBuffer()
    start = 0
    if resume is not None:
        hp = resume.hp.copy()
        meta_buf = MetaDataBuffer(list(resume.meta_buf.tasks), list(resume.meta_buf.task_ids))
        rng.bit_generator.state = resume.rng_state
        start = resume.t
    snapshots, rows = [], []
    writer = fh = None
    if metrics_path is not None:
        fh = open(metrics_path, "a" if resume is not None else "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        if resume is None:
            writer.writeheader()
    serve_cfg = replace(cfg, batch_size=schedule.batch_size)
    try:
        for t, (task_id, x, labels) in enumerate(task_stream, start=1):
            if t <= start:
                continue
            buf = TaskDataBuffer()
            for i in range(1, schedule.batches_per_task + 1):
                pick = rng.choice(len(labels), size=schedule.batch_size, replace=len(labels) < schedule.batch_size)
                buf.append(x[pick], labels[pick])
                hist: list = []
                phi, Phi = within_task_update(hp, buf, schedule.k_steps, serve_cfg, rng, make_batch, hist)
                trts = float("nan")
                if evaluate is not None and schedule.eval_every and t % schedule.eval_every == 0:
                    trts = float(evaluate(hp.gen.with_params(phi), Phi, x, labels, rng))
                row = {
                    "t": t,
                    "i": i,
                    "task_id": task_id,
                    "within_task_iters": schedule.k_steps,
                    "trts_accuracy": trts,
                    "mean_D_real": float(np.mean([m["d_real"] for m in hist])) if hist else float("nan"),
                    "mean_D_synth": float(np.mean([m["d_synth"] for m in hist])) if hist else float("nan"),
                }
                rows.append(row)
                if writer is not None:
                    writer.writerow({k: _fmt(v) for k, v in row.items()})
                hp = meta_update(
                    hp, meta_buf, schedule.N, schedule.M, schedule.k_steps, schedule.mu_meta, cfg, rng, make_batch
                )
            meta_buf.archive(buf, task_id)
            if schedule.snapshot_every and t % schedule.snapshot_every == 0:
                tasks = MetaDataBuffer(list(meta_buf.tasks), list(meta_buf.task_ids))
                snapshots.append(Snapshot(t, hp.copy(), tasks, rng.bit_generator.state))
    finally:
        if fh is not None:
            fh.close()
    return ContinualResult(hp, snapshots, rows)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
