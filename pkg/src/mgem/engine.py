"""The continual-learning loop: per-task SGD with projected updates.

For each task in order, ``run`` takes seeded minibatch SGD steps where the
raw batch gradient is replaced by the method's projected direction, stores
an episodic memory when the task finishes, and fills one row of the retained
accuracy matrix ``R`` (``R[i, j]`` = test accuracy on task ``j+1`` after
learning task ``i+1``; future-task entries are present but excluded from
the summary metrics).

Tracing (for the inner-product trade-off protocol) records, at every step of
a task with at least one predecessor, the inner products of the update
direction with the *full training set* gradients of the current and each
past task, plus solver diagnostics.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import qp
from .constraints import (
    MethodSpec,
    assemble_direction,
    build_instances,
    resolve_partition,
    split_memory,
)
from .mlp import Dataset, MlpSpec, accuracy, init_params, loss_and_grad
from .seeds import derive_seed, rng_from
from .taskgen import TaskStream

DEGRADED_BUDGET = 0.01  # unconverged fraction of constrained steps tolerated


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    iters_per_task: int
    batch_size: int
    memory_per_task: int
    method: MethodSpec
    partition_mode: str = "by_layer"
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.iters_per_task < 1 or self.batch_size < 1:
            raise ValueError("iters_per_task and batch_size must be >= 1")
        if self.memory_per_task < self.method.d_data:
            raise ValueError("memory_per_task must be >= the method's d_data")


@dataclass(eq=False)
class EpisodicMemory:
    """Stored samples for one finished task, with fixed split assignment."""

    task: int
    data: Dataset
    splits: tuple


@dataclass(eq=False)
class StepTrace:
    task: int
    iteration: int
    fwd_inner: float          # <g_t, z>, current-task full training gradient
    bwd_inners: tuple         # <g_s, z> per past task, full training gradients
    min_memory_inner: float   # min_s <ghat_s, z> over stored-memory gradients
    solver_converged: bool
    solver_iterations: int
    rows_dropped: int


@dataclass(eq=False)
class RunResult:
    accuracy: np.ndarray      # (T, T) retained-accuracy matrix
    traces: list
    constrained_steps: int
    unconverged_steps: int
    rows_dropped: int
    degraded: bool
    final_params: object = None


def _solve(inst, method: MethodSpec):
    if method.solver == "approx":
        return qp.solve_approx(inst)
    return qp.solve_exact(inst)


def run(stream: TaskStream, mlp: MlpSpec, cfg: TrainConfig, trace: bool = False) -> RunResult:
    """Train through the stream; returns the R matrix and step traces.

    Unconverged solver steps fall back to the clamped (still feasible) dual
    iterate rather than aborting; the run is flagged degraded when more than
    ``DEGRADED_BUDGET`` of constrained steps fail to converge.
    """
    for task in stream.tasks:
        if cfg.memory_per_task > task.train.n_samples:
            raise ValueError(
                f"memory_per_task {cfg.memory_per_task} exceeds task "
                f"{task.descriptor} training size {task.train.n_samples}"
            )

    method = cfg.method
    params = init_params(mlp, cfg.seed)
    partition = resolve_partition(params.layout, cfg.partition_mode, method.d_param)

    T = stream.n_tasks
    R = np.zeros((T, T))
    memories = []
    traces = []
    constrained = 0
    unconverged = 0
    rows_dropped = 0

    for t_pos, task in enumerate(stream.tasks, start=1):
        batch_rng = rng_from(cfg.seed, "batch", t_pos)
        n_train = task.train.n_samples
        for it in range(cfg.iters_per_task):
            idx = batch_rng.integers(0, n_train, size=cfg.batch_size)
            _, g_t = loss_and_grad(params, mlp, task.train.take(idx))

            if method.kind == "single" or not memories:
                z = g_t.data
                batch = None
                step_conv, step_iters = True, 0
            else:
                batch = build_instances(method, memories, g_t, params, mlp, partition)
                sols = [_solve(inst, method) for inst in batch.instances]
                z = assemble_direction(sols, partition)
                constrained += 1
                step_conv = all(s.converged for s in sols)
                step_iters = sum(s.iterations for s in sols)
                if not step_conv:
                    unconverged += 1
                rows_dropped += batch.rows_dropped

            if trace and t_pos >= 2:
                _, g_cur = loss_and_grad(params, mlp, task.train)
                bwd = tuple(
                    float(loss_and_grad(params, mlp, stream.tasks[s].train)[1].data @ z)
                    for s in range(t_pos - 1)
                )
                if batch is not None:
                    mem_grads = batch.memory_grads
                else:  # unconstrained step: diagnostic still well defined
                    mem_grads = [loss_and_grad(params, mlp, mem.data)[1].data
                                 for mem in memories]
                mem_inner = min(float(g @ z) for g in mem_grads)
                traces.append(StepTrace(
                    task=t_pos,
                    iteration=it,
                    fwd_inner=float(g_cur.data @ z),
                    bwd_inners=bwd,
                    min_memory_inner=mem_inner,
                    solver_converged=step_conv,
                    solver_iterations=step_iters,
                    rows_dropped=0 if batch is None else batch.rows_dropped,
                ))

            params.data -= cfg.lr * z

        if not np.all(np.isfinite(params.data)):
            raise FloatingPointError(
                f"parameters became non-finite during task {task.descriptor}; lower lr"
            )

        mem_rng = rng_from(cfg.seed, "memory", t_pos)
        sel = np.sort(mem_rng.choice(n_train, size=cfg.memory_per_task, replace=False))
        memories.append(EpisodicMemory(
            task=task.descriptor,
            data=task.train.take(sel),
            splits=tuple(split_memory(cfg.memory_per_task, method.d_data,
                                      derive_seed(cfg.seed, "memsplit", t_pos))),
        ))

        for j, other in enumerate(stream.tasks):
            R[t_pos - 1, j] = accuracy(params, mlp, other.test)

    degraded = constrained > 0 and unconverged > DEGRADED_BUDGET * constrained
    return RunResult(
        accuracy=R,
        traces=traces,
        constrained_steps=constrained,
        unconverged_steps=unconverged,
        rows_dropped=rows_dropped,
        degraded=degraded,
        final_params=params,
    )


@dataclass(eq=False)
class ParetoPoint:
    method: MethodSpec
    seed: int
    mean_bwd_inner: float
    mean_fwd_inner: float
    degraded: bool = field(default=False)


def _pareto_one(stream2, mlp, cfg):
    result = run(stream2, mlp, cfg, trace=True)
    steps = [tr for tr in result.traces if tr.task == 2]
    bwd = float(np.mean([tr.bwd_inners[0] for tr in steps]))
    fwd = float(np.mean([tr.fwd_inner for tr in steps]))
    return ParetoPoint(cfg.method, cfg.seed, bwd, fwd, result.degraded)


def pareto_sweep(stream: TaskStream, mlp: MlpSpec, base_cfg: TrainConfig,
                 grid, seeds=None, threads: int = 1):
    """Sweep (method, strength) grid points over the first two tasks.

    Each grid point runs tasks 1-2 with tracing on task 2 and reports the
    mean inner products of the update direction with the past-task gradient
    (backward axis) and current-task gradient (forward axis), averaged over
    task-2 iterations. Rows come back in grid-major, then seed, order.
    """
    if stream.n_tasks < 2:
        raise ValueError("pareto requires >= 2 tasks")
    stream2 = TaskStream(stream.tasks[:2])
    if seeds is None:
        seeds = [base_cfg.seed]

    cfgs = []
    for method, q in grid:
        for seed in seeds:
            cfgs.append(replace(
                base_cfg, method=replace(method, strength=float(q)), seed=seed,
            ))
    if threads > 1 and len(cfgs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda c: _pareto_one(stream2, mlp, c), cfgs))
    return [_pareto_one(stream2, mlp, cfg) for cfg in cfgs]
