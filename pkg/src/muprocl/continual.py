"""Class-incremental protocol: task construction, exemplar memory, per-task
training under each method mode, evaluation after every phase, and the
Avg / Last / forgetting metrics.

Method modes:
  baseline_trainable  trainable linear head, grows per task, joint SGD with encoder
  lingocl             frozen bank, one bare-name prompt target per class
  muprocl             frozen bank, multi-prototype targets from the prompt pipeline
  oracle              single joint task over all classes, trainable head, no memory

Seed streams are tagged so that world, class order, memory picks, and batch
shuffles are identical across method modes for the same seed; lingocl and
muprocl therefore see byte-identical data and differ only through the bank.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .agent import (AgentSpec, PromptSet, SelectConfig, build_prompt_sets,
                    select_from_pool)
from .classifier import (TrainableHead, batch_ce_loss_grad_z, batch_ce_loss_grads,
                         build_bank, extend_bank, extend_head, head_sgd_step,
                         init_head, predict_batch)
from .datagen import Sample
from .encoder import backward_batch, forward_batch, init_params, make_optim, sgd_step
from .errors import ConfigError, InputError

MODE_NAMES = ("baseline_trainable", "lingocl", "muprocl", "oracle")

_ORDER_STREAM = 1
_ENCODER_STREAM = 2
_HEAD_STREAM = 3
_MEMORY_STREAM = 4
_BATCH_STREAM = 5


def _rng(seed: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(tag)))


@dataclass(frozen=True)
class TaskSpec:
    index: int
    class_ids: tuple[int, ...]


@dataclass(frozen=True)
class MethodMode:
    name: str
    disambiguation: bool = True
    expansion: bool = True
    k_max: int | None = None

    def __post_init__(self):
        if self.name not in MODE_NAMES:
            raise InputError(f"unknown method mode {self.name!r}")
        if self.name != "muprocl" and (not self.disambiguation or not self.expansion
                                       or self.k_max is not None):
            raise InputError("ablation flags and k_max override apply to muprocl only")


@dataclass
class MemoryBuffer:
    capacity: int
    store: dict = field(default_factory=dict)   # class_id -> tuple of Samples

    def all_samples(self) -> list:
        out = []
        for cid in sorted(self.store):
            out.extend(self.store[cid])
        return out


@dataclass
class AccuracyMatrix:
    per_task: list      # per_task[p][j]: accuracy on task j after phase p, j <= p
    overall: list       # pooled seen-class accuracy per phase


@dataclass(frozen=True)
class MetricsReport:
    avg: float
    last: float
    forgetting: float | None    # None: not applicable (oracle / single phase)
    overall: tuple


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    decay_epochs: tuple = (50, 75)
    decay_factor: float = 0.1
    memory_capacity: int = 20
    hidden_sizes: tuple = (32,)
    feature_dim: int = 8
    scale: float = 1.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.memory_capacity < 0:
            raise InputError("epochs, batch_size, memory_capacity must be sane")
        if self.learning_rate <= 0:
            raise InputError("learning rate must be positive")

    @property
    def schedule(self) -> tuple:
        return tuple((e, self.decay_factor) for e in self.decay_epochs)


@dataclass
class ExperimentResult:
    mode: MethodMode
    seed: int
    tasks: list
    matrix: AccuracyMatrix
    report: MetricsReport
    epoch_losses: list          # epoch_losses[t]: mean loss per epoch of task t
    prompt_sets: list | None    # frozen modes only
    encoder: object
    model: object


def make_task_sequence(class_order, B: int, C: int) -> list[TaskSpec]:
    """Task 0 gets B classes, every later task gets C, in the given order."""
    order = [int(c) for c in class_order]
    if len(set(order)) != len(order):
        raise InputError("class order must not repeat classes")
    if B < 1 or C < 1:
        raise InputError("B and C must be >= 1")
    if len(order) < B or (len(order) - B) % C != 0:
        raise ConfigError(f"{len(order)} classes do not split as B={B} plus k*C={C}")
    tasks = [TaskSpec(0, tuple(order[:B]))]
    for t, start in enumerate(range(B, len(order), C), start=1):
        tasks.append(TaskSpec(t, tuple(order[start:start + C])))
    return tasks


def update_memory(buffer: MemoryBuffer, task_samples, seed: int) -> MemoryBuffer:
    """Store up to `capacity` seeded-uniform exemplars per new class, in place."""
    by_class: dict[int, list] = {}
    for s in task_samples:
        by_class.setdefault(s.label, []).append(s)
    for cid in sorted(by_class):
        if cid in buffer.store:
            raise InputError(f"class {cid} already has exemplars")
        samples = by_class[cid]
        n_keep = min(buffer.capacity, len(samples))
        idx = _rng(seed, _MEMORY_STREAM, cid).choice(len(samples), size=n_keep, replace=False)
        buffer.store[cid] = tuple(samples[i] for i in np.sort(idx))
    return buffer


def compute_metrics(matrix: AccuracyMatrix, mode) -> MetricsReport:
    """Avg/Last over per-phase overall accuracy; forgetting = peak minus final.

    Forgetting averages, over every task but the last, the drop from that
    task's best accuracy across phases (final included, so F >= 0) to its
    final accuracy. Oracle and single-phase runs report it as not applicable.
    """
    if not matrix.overall:
        raise InputError("empty accuracy matrix")
    name = mode.name if isinstance(mode, MethodMode) else str(mode)
    final = len(matrix.overall) - 1
    avg = float(np.mean(matrix.overall))
    last = float(matrix.overall[final])
    if name == "oracle" or final == 0:
        forgetting = None
    else:
        drops = []
        for j in range(final):
            peak = max(matrix.per_task[p][j] for p in range(j, final + 1))
            drops.append(peak - matrix.per_task[final][j])
        forgetting = float(np.mean(drops))
    return MetricsReport(avg=avg, last=last, forgetting=forgetting,
                         overall=tuple(float(a) for a in matrix.overall))


def _group_by_task(samples, tasks):
    by_class: dict[int, list] = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s)
    grouped = []
    for task in tasks:
        members = []
        for cid in task.class_ids:
            members.extend(by_class.get(cid, []))
        grouped.append(members)
    return grouped


def _stack(samples):
    X = np.stack([s.x for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


def evaluate(encoder_params, model, test_by_task, n_tasks_seen: int, scale: float = 1.0):
    """Accuracy on each seen task plus pooled accuracy, after the current phase."""
    per_task, correct_total, n_total = [], 0, 0
    for j in range(n_tasks_seen):
        X, y = test_by_task[j]
        Z, _ = forward_batch(encoder_params, X)
        preds = predict_batch(model, Z, scale)
        correct = int(np.sum(preds == y))
        per_task.append(correct / len(y))
        correct_total += correct
        n_total += len(y)
    return per_task, correct_total / n_total


def _select_config_for(mode: MethodMode, base: SelectConfig) -> SelectConfig:
    if mode.name == "lingocl":
        return replace(base, k_max=1, disambiguation_enabled=False, expansion_enabled=False)
    cfg = replace(base, disambiguation_enabled=mode.disambiguation,
                  expansion_enabled=mode.expansion)
    if mode.k_max is not None:
        cfg = replace(cfg, k_max=mode.k_max)
    return cfg


def run_experiment(train_samples, test_samples, class_names, mode: MethodMode,
                   select_cfg: SelectConfig, settings: TrainSettings,
                   B: int, C: int, seed: int,
                   embedder=None, agent: AgentSpec | None = None,
                   candidate_pool=None, per_task_epochs=None) -> ExperimentResult:
    """One full class-incremental run for one method mode.

    World/data, class order, memory picks, and batch shuffles depend only on
    the seed, never on the mode, so runs with a shared seed are paired.
    """
    names = tuple(class_names)
    n_classes = len(names)
    if n_classes < 1:
        raise InputError("need at least one class")
    for s in train_samples + test_samples:
        if not (0 <= s.label < n_classes):
            raise InputError(f"sample label {s.label} outside 0..{n_classes - 1}")

    order = _rng(seed, _ORDER_STREAM).permutation(n_classes)
    if mode.name == "oracle":
        tasks = [TaskSpec(0, tuple(int(c) for c in order))]
    else:
        tasks = make_task_sequence(order, B, C)

    frozen = mode.name in ("lingocl", "muprocl")
    if frozen:
        if embedder is None:
            raise InputError("frozen-target modes need an embedder")
        if embedder.spec.dim != settings.feature_dim:
            raise ConfigError(f"embedder dim {embedder.spec.dim} != feature_dim "
                              f"{settings.feature_dim}")
        agent = agent if agent is not None else AgentSpec(kind="stub")
        eff_cfg = _select_config_for(mode, select_cfg)

    train_by_task = _group_by_task(train_samples, tasks)
    test_by_task = [_stack(members) if members else (None, None)
                    for members in _group_by_task(test_samples, tasks)]
    for t, (X, _) in enumerate(test_by_task):
        if X is None:
            raise InputError(f"task {t} has no test samples")
        if not train_by_task[t]:
            raise InputError(f"task {t} has no train samples")

    n_in = train_by_task[0][0].x.shape[0]
    encoder_params = init_params((n_in, *settings.hidden_sizes, settings.feature_dim),
                                 _rng(seed, _ENCODER_STREAM))
    model = None
    memory = MemoryBuffer(capacity=settings.memory_capacity)
    matrix = AccuracyMatrix(per_task=[], overall=[])
    epoch_losses: list[list[float]] = []
    all_sets: list[PromptSet] = []

    for t, task in enumerate(tasks):
        if frozen:
            if candidate_pool is not None:
                new_sets = select_from_pool(candidate_pool, embedder, eff_cfg,
                                            class_ids=task.class_ids)
            else:
                new_sets = build_prompt_sets(agent, [names[c] for c in task.class_ids],
                                             embedder, eff_cfg, class_ids=task.class_ids)
            all_sets.extend(new_sets)
            model = build_bank(new_sets, embedder) if model is None \
                else extend_bank(model, new_sets, embedder)
        else:
            head_rng = _rng(seed, _HEAD_STREAM, t)
            model = init_head(task.class_ids, settings.feature_dim, head_rng) if model is None \
                else extend_head(model, task.class_ids, head_rng)

        pool = list(train_by_task[t])
        if mode.name != "oracle":
            pool.extend(memory.all_samples())
        X_pool, y_pool = _stack(pool)
        y_idx = np.array([model.class_index(label) for label in y_pool], dtype=np.int64)

        epochs = settings.epochs if per_task_epochs is None else int(per_task_epochs[t])
        optim = make_optim(encoder_params, settings.learning_rate, settings.momentum,
                           settings.schedule)
        batch_rng = _rng(seed, _BATCH_STREAM, t)
        losses_t = []
        for epoch in range(epochs):
            perm = batch_rng.permutation(len(pool))
            loss_sum = 0.0
            for start in range(0, len(pool), settings.batch_size):
                sel = perm[start:start + settings.batch_size]
                Z, cache = forward_batch(encoder_params, X_pool[sel])
                if frozen:
                    losses, grad_Z = batch_ce_loss_grad_z(model, Z, y_idx[sel],
                                                          settings.scale)
                else:
                    losses, grad_Z, grad_W = batch_ce_loss_grads(model, Z, y_idx[sel],
                                                                 settings.scale)
                grads = backward_batch(encoder_params, cache, grad_Z)
                sgd_step(encoder_params, grads, optim, epoch)
                if not frozen:
                    head_sgd_step(model, grad_W, optim.effective_lr(epoch),
                                  settings.momentum)
                loss_sum += float(losses.sum())
            losses_t.append(loss_sum / len(pool))
        epoch_losses.append(losses_t)

        if mode.name != "oracle":
            update_memory(memory, train_by_task[t], seed)

        per_task, overall = evaluate(encoder_params, model, test_by_task, t + 1,
                                     settings.scale)
        matrix.per_task.append(per_task)
        matrix.overall.append(overall)

    report = compute_metrics(matrix, mode)
    return ExperimentResult(mode=mode, seed=seed, tasks=tasks, matrix=matrix,
                            report=report, epoch_losses=epoch_losses,
                            prompt_sets=all_sets if frozen else None,
                            encoder=encoder_params, model=model)


# ---------------------------------------------------------------------------
# Results CSV: one row per (phase, task) accuracy, task == -1 for the pooled
# per-phase accuracy. Floats use repr so reruns are byte-identical and the
# summary recomputes exactly from the detail rows.
# ---------------------------------------------------------------------------

RESULTS_HEADER = ("run_id", "seed", "method", "B", "C", "K_max", "phase", "task", "accuracy")
SUMMARY_HEADER = ("run_id", "avg", "last", "forgetting")


def results_rows(run_id: str, seed: int, method: str, B: int, C: int, k_max: int,
                 matrix: AccuracyMatrix) -> list[tuple]:
    rows = []
    for p, accs in enumerate(matrix.per_task):
        for j, acc in enumerate(accs):
            rows.append((run_id, seed, method, B, C, k_max, p, j, acc))
        rows.append((run_id, seed, method, B, C, k_max, p, -1, matrix.overall[p]))
    return rows


def write_results_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(RESULTS_HEADER) + "\n")
        for run_id, seed, method, B, C, k_max, phase, task, acc in rows:
            fh.write(f"{run_id},{seed},{method},{B},{C},{k_max},{phase},{task},{acc!r}\n")


def write_summary_csv(path, entries) -> None:
    """entries: iterable of (run_id, MetricsReport); absent forgetting -> NA."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for run_id, report in entries:
            f = "NA" if report.forgetting is None else repr(report.forgetting)
            fh.write(f"{run_id},{report.avg!r},{report.last!r},{f}\n")


def read_results_csv(path) -> list[dict]:
    import csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise InputError(f"unexpected results header in {path}")
        out = []
        for row in reader:
            out.append({"run_id": row["run_id"], "seed": int(row["seed"]),
                        "method": row["method"], "B": int(row["B"]), "C": int(row["C"]),
                        "K_max": int(row["K_max"]), "phase": int(row["phase"]),
                        "task": int(row["task"]), "accuracy": float(row["accuracy"])})
        return out


def read_summary_csv(path) -> list[dict]:
    import csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_HEADER:
            raise InputError(f"unexpected summary header in {path}")
        return [{"run_id": row["run_id"], "avg": float(row["avg"]),
                 "last": float(row["last"]),
                 "forgetting": None if row["forgetting"] == "NA"
                 else float(row["forgetting"])}
                for row in reader]


def matrix_from_rows(rows, run_id: str) -> AccuracyMatrix:
    """Rebuild an AccuracyMatrix from detail rows (summary verification path)."""
    mine = [r for r in rows if r["run_id"] == run_id]
    if not mine:
        raise InputError(f"no rows for run_id {run_id!r}")
    n_phases = max(r["phase"] for r in mine) + 1
    per_task, overall = [], []
    for p in range(n_phases):
        phase_rows = {r["task"]: r["accuracy"] for r in mine if r["phase"] == p}
        if -1 not in phase_rows or set(phase_rows) != set(range(p + 1)) | {-1}:
            raise InputError(f"phase {p} rows incomplete for {run_id!r}")
        per_task.append([phase_rows[j] for j in range(p + 1)])
        overall.append(phase_rows[-1])
    return AccuracyMatrix(per_task=per_task, overall=overall)
