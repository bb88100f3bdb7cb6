"""Incremental training engine: the split/bridge loop plus the STD, CE-only,
and double-distillation baselines, exemplar memory, and teacher snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, metrics, partition
from .data import LabeledDataset, Task, TaskSequence
from .losses import TaskRange, lambda_schedule
from .net import DenseNet, SgdConfig, SgdState, build_net, sgd_step

SCHEMES = ("sb", "std", "ce", "dd")


@dataclass
class ExemplarMemory:
    """Fixed-capacity rehearsal store of previously seen labeled samples."""

    capacity: int
    x: np.ndarray = None
    y: np.ndarray = None

    def __post_init__(self):
        if self.x is None:
            self.x = np.zeros((0, 0))
            self.y = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return self.y.shape[0]


@dataclass
class TeacherSnapshot:
    """Frozen network used to produce tempered soft labels over its class range."""

    net: DenseNet
    tau: float
    class_range: TaskRange

    @classmethod
    def of(cls, net: DenseNet, tau: float) -> "TeacherSnapshot":
        frozen = net.clone()
        return cls(frozen, tau, TaskRange(0, frozen.num_classes))

    def soft_labels(self, x: np.ndarray) -> np.ndarray:
        return losses.softmax(self.net.forward(x), self.tau)


@dataclass
class SchemeConfig:
    scheme: str = "sb"
    tau: float = 2.0
    gamma: float = 1e-2
    rho: float = 1.0
    split_index: int = 2          # first partitioned layer of the MLP
    hidden: tuple[int, ...] = (16, 16, 16, 16)
    memory_capacity: int = 24
    balanced_memory: bool = False
    epochs_first: int = 30
    epochs_sparsify: int = 30
    epochs_branched: int = 40
    epochs_bridge: int = 40
    epochs_std: int = 30
    learning_rate: float = 0.05
    sparsify_learning_rate: float | None = None
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.tau <= 0 or self.rho <= 0 or self.gamma < 0:
            raise ValueError("need tau > 0, rho > 0, gamma >= 0")

    def sgd(self, epochs: int, lr: float | None = None) -> SgdConfig:
        return SgdConfig(
            learning_rate=lr if lr is not None else self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            epochs=epochs,
            seed=self.seed,
        )


def _train(net, x, cfg: SgdConfig, rng, batch_loss, weight_penalty=None) -> None:
    """Generic seeded minibatch loop.

    batch_loss(logits, idx) returns (value, grad wrt logits) for the batch
    selected by idx; weight_penalty(net) optionally returns (value, per-layer
    weight grads) added each step.
    """
    n = x.shape[0]
    state = SgdState()
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = x[idx]
            logits = net.forward(xb)
            _, grad = batch_loss(logits, idx)
            grads = net.backward(xb, grad)
            if weight_penalty is not None:
                _, wgrads = weight_penalty(net)
                grads.add_weight_grads(wgrads)
            sgd_step(net, grads, cfg, state)


def run_first_task(net: DenseNet, d1: LabeledDataset, cfg: SchemeConfig) -> DenseNet:
    """Plain CE training on the first task's data."""
    if len(d1) == 0:
        raise ValueError("first task dataset is empty")
    rng = np.random.default_rng([cfg.seed, 0, 0])

    def batch_loss(logits, idx):
        lv = losses.ce_loss(logits, d1.y[idx])
        return lv.value, lv.grad_logits

    _train(net, d1.x, cfg.sgd(cfg.epochs_first), rng, batch_loss)
    return net


def _pool(d_t: LabeledDataset, mem: ExemplarMemory):
    """Training pool D_t with M_t appended; is_new flags the D_t rows."""
    if len(mem) == 0:
        x, y = d_t.x, d_t.y
        is_new = np.ones(len(d_t), dtype=bool)
    else:
        x = np.vstack([d_t.x, mem.x])
        y = np.concatenate([d_t.y, mem.y])
        is_new = np.zeros(x.shape[0], dtype=bool)
        is_new[: len(d_t)] = True
    return x, y, is_new


def run_split_phase(
    net: DenseNet,
    d_t: LabeledDataset,
    mem: ExemplarMemory,
    teacher: TeacherSnapshot,
    cfg: SchemeConfig,
    step: int,
):
    """Sparsify cross-partition weights, disconnect, then train the branches.

    Stage 1 minimizes KD (old logits, all pool samples) + LCE (new logits,
    new-task samples) + the sparsity penalty on the full network. Stage 2
    disconnects and minimizes KD + LCE on the branched network. The teacher
    is the previous-step model in both stages.

    Returns (net, plan, groups, diagnostics).
    """
    c_old = teacher.class_range.width
    c_new = net.num_classes - c_old
    if c_old == 0:
        raise ValueError("split phase requires at least one old class")
    old_range = teacher.class_range
    new_range = TaskRange(c_old, c_old + c_new)

    plan = partition.make_plan(net, cfg.split_index, c_old, c_new, cfg.rho)
    x, y, is_new = _pool(d_t, mem)
    soft = teacher.soft_labels(x)
    new_rows = np.flatnonzero(is_new)

    def batch_loss(logits, idx):
        kd = losses.kd_loss(logits, soft[idx], old_range, cfg.tau)
        sel = np.isin(idx, new_rows)
        grad = kd.grad_logits.copy()
        value = kd.value
        if sel.any():
            lce = losses.lce_loss(logits[sel], y[idx][sel], new_range)
            grad[sel] += lce.grad_logits
            value += lce.value
        return value, grad

    diagnostics = {"cross_norm_start": losses.cross_frobenius(net, plan)}

    penalty = None
    if cfg.gamma > 0:
        penalty = lambda n: losses.sparsify_penalty(n, plan, cfg.gamma)
    rng = np.random.default_rng([cfg.seed, step, 1])
    _train(net, x, cfg.sgd(cfg.epochs_sparsify, cfg.sparsify_learning_rate), rng,
           batch_loss, weight_penalty=penalty)

    diagnostics["cross_norm_at_disconnect"] = losses.cross_frobenius(net, plan)

    groups = partition.cross_groups(plan, net)
    partition.disconnect(net, groups)

    rng = np.random.default_rng([cfg.seed, step, 2])
    _train(net, x, cfg.sgd(cfg.epochs_branched), rng, batch_loss)
    return net, plan, groups, diagnostics


def run_bridge_phase(
    net: DenseNet,
    plan: partition.PartitionPlan,
    groups: partition.CrossGroups,
    d_t: LabeledDataset,
    mem: ExemplarMemory,
    cfg: SchemeConfig,
    step: int,
) -> DenseNet:
    """Re-enable the cut weights at zero and train the composite loss.

    The KD teacher is the shared-trunk-plus-old-branch subnetwork, frozen
    before any bridge update.
    """
    c_old = plan.c_old
    c_new = plan.c_new
    old_range = TaskRange(0, c_old)
    teacher = TeacherSnapshot(partition.extract_subnet(net, plan, "old"), cfg.tau, old_range)

    partition.bridge_reconnect(net, groups)

    lam = lambda_schedule(c_old, c_new)
    x, y, _ = _pool(d_t, mem)
    soft = teacher.soft_labels(x)

    def batch_loss(logits, idx):
        lv = losses.std_composite_loss(logits, y[idx], soft[idx], old_range, lam, cfg.tau)
        return lv.value, lv.grad_logits

    rng = np.random.default_rng([cfg.seed, step, 3])
    _train(net, x, cfg.sgd(cfg.epochs_bridge), rng, batch_loss)
    return net


def run_std_step(
    net: DenseNet,
    d_t: LabeledDataset,
    mem: ExemplarMemory,
    teacher: TeacherSnapshot,
    cfg: SchemeConfig,
    step: int,
    lam: float | None = None,
) -> DenseNet:
    """Single-phase composite-loss training (the standard KD-based scheme)."""
    c_old = teacher.class_range.width
    c_new = net.num_classes - c_old
    if lam is None:
        lam = lambda_schedule(c_old, c_new)
    x, y, _ = _pool(d_t, mem)
    soft = teacher.soft_labels(x)
    old_range = teacher.class_range

    def batch_loss(logits, idx):
        lv = losses.std_composite_loss(logits, y[idx], soft[idx], old_range, lam, cfg.tau)
        return lv.value, lv.grad_logits

    rng = np.random.default_rng([cfg.seed, step, 1])
    _train(net, x, cfg.sgd(cfg.epochs_std), rng, batch_loss)
    return net


def run_ce_step(
    net: DenseNet,
    d_t: LabeledDataset,
    mem: ExemplarMemory,
    cfg: SchemeConfig,
    step: int,
) -> DenseNet:
    """CE-only ablation: plain cross entropy over the pool, no distillation."""
    x, y, _ = _pool(d_t, mem)

    def batch_loss(logits, idx):
        lv = losses.ce_loss(logits, y[idx])
        return lv.value, lv.grad_logits

    rng = np.random.default_rng([cfg.seed, step, 1])
    _train(net, x, cfg.sgd(cfg.epochs_std), rng, batch_loss)
    return net


def run_dd_step(
    net: DenseNet,
    d_t: LabeledDataset,
    mem: ExemplarMemory,
    teacher_old: TeacherSnapshot,
    cfg: SchemeConfig,
    step: int,
) -> DenseNet:
    """Double distillation: train a throwaway network on the new task alone,
    then merge via two KD losses (old teacher over old logits, new teacher
    over new logits) mixed against CE with the usual schedule. The extra
    network is dropped when the step returns."""
    c_old = teacher_old.class_range.width
    c_new = net.num_classes - c_old
    old_range = teacher_old.class_range
    new_range = TaskRange(c_old, c_old + c_new)

    aux = build_net(net.in_dim, list(cfg.hidden), c_new, seed=hash((cfg.seed, step, "dd")) % 2**32)
    local_labels = d_t.y - c_old

    def aux_loss(logits, idx):
        lv = losses.ce_loss(logits, local_labels[idx])
        return lv.value, lv.grad_logits

    rng = np.random.default_rng([cfg.seed, step, 4])
    _train(aux, d_t.x, cfg.sgd(cfg.epochs_std), rng, aux_loss)
    teacher_new = TeacherSnapshot(aux, cfg.tau, new_range)

    lam = lambda_schedule(c_old, c_new)
    x, y, _ = _pool(d_t, mem)
    soft_old = teacher_old.soft_labels(x)
    soft_new = teacher_new.soft_labels(x)

    def batch_loss(logits, idx):
        kd_o = losses.kd_loss(logits, soft_old[idx], old_range, cfg.tau)
        kd_n = losses.kd_loss(logits, soft_new[idx], new_range, cfg.tau)
        ce = losses.ce_loss(logits, y[idx])
        value = lam * 0.5 * (kd_o.value + kd_n.value) + (1 - lam) * ce.value
        grad = (lam * 0.5 * (kd_o.grad_logits + kd_n.grad_logits)
                + (1 - lam) * ce.grad_logits)
        return value, grad

    rng = np.random.default_rng([cfg.seed, step, 1])
    _train(net, x, cfg.sgd(cfg.epochs_std), rng, batch_loss)
    return net


def update_exemplars(mem: ExemplarMemory, d_t: LabeledDataset, seed: int,
                     balanced: bool = False) -> ExemplarMemory:
    """Next-step memory: a seeded random capacity-sized subset of M_t and D_t.

    Uniform sampling without replacement by default; the balanced variant
    takes an equal per-class quota first and fills the remainder uniformly.
    """
    if mem.capacity == 0:
        return ExemplarMemory(0)
    if len(mem) == 0:
        x, y = d_t.x, d_t.y
    else:
        x = np.vstack([mem.x, d_t.x])
        y = np.concatenate([mem.y, d_t.y])
    n = y.shape[0]
    if n <= mem.capacity:
        return ExemplarMemory(mem.capacity, x.copy(), y.copy())
    rng = np.random.default_rng([seed, n])
    if not balanced:
        keep = rng.choice(n, size=mem.capacity, replace=False)
    else:
        classes = np.unique(y)
        quota = mem.capacity // classes.size
        keep_parts = []
        for c in classes:
            rows = np.flatnonzero(y == c)
            take = min(quota, rows.size)
            keep_parts.append(rng.choice(rows, size=take, replace=False))
        keep = np.concatenate(keep_parts)
        rest = np.setdiff1d(np.arange(n), keep)
        short = mem.capacity - keep.size
        if short > 0 and rest.size:
            keep = np.concatenate([keep, rng.choice(rest, size=min(short, rest.size),
                                                    replace=False)])
    keep.sort()
    return ExemplarMemory(mem.capacity, x[keep], y[keep])


@dataclass
class StepResult:
    step: int                      # 1-based task index
    net: DenseNet                  # checkpoint after the step
    report: "metrics.EvalReport"
    plan_summary: dict | None = None
    diagnostics: dict = field(default_factory=dict)


def run_sequence(seq: TaskSequence, cfg: SchemeConfig) -> list[StepResult]:
    """Run the full incremental loop for the configured scheme.

    The first task is always trained by CE; later tasks follow the scheme.
    The exemplar memory is updated after every task and the model is
    evaluated once per task.
    """
    for t in seq.tasks:
        if t.classes.size == 0:
            raise ValueError("task with zero classes")
    mem = ExemplarMemory(cfg.memory_capacity)
    net = build_net(seq.feature_dim, list(cfg.hidden), seq.tasks[0].classes.size, cfg.seed)
    results = []
    for t, task in enumerate(seq.tasks, start=1):
        plan_summary = None
        diagnostics = {}
        if t == 1:
            run_first_task(net, task.train, cfg)
        else:
            teacher = TeacherSnapshot.of(net, cfg.tau)
            net.widen_output(task.classes.size)
            if cfg.scheme == "ce":
                run_ce_step(net, task.train, mem, cfg, t)
            elif cfg.scheme == "std":
                run_std_step(net, task.train, mem, teacher, cfg, t)
            elif cfg.scheme == "dd":
                run_dd_step(net, task.train, mem, teacher, cfg, t)
            else:
                net, plan, groups, diagnostics = run_split_phase(
                    net, task.train, mem, teacher, cfg, t)
                run_bridge_phase(net, plan, groups, task.train, mem, cfg, t)
                plan_summary = plan.summary()
        mem = update_exemplars(mem, task.train, cfg.seed + t, cfg.balanced_memory)
        report = metrics.evaluate(net, [tk.test for tk in seq.tasks[:t]], t)
        results.append(StepResult(t, net.clone(), report, plan_summary, diagnostics))
    return results
