"""Assembly of QP instances for the GEM method family.

Turns episodic memories, the current gradient, and a parameter partition
into the per-module inequality systems each method variant needs:

* ``gem``     -- one instance, one row per past task (full-memory gradient).
* ``p_mgem``  -- one instance per parameter module; rows are block slices of
                 the same per-task gradients (one backward pass per task,
                 then slicing).
* ``d_mgem``  -- one instance, ``d_data`` rows per past task, each from a
                 disjoint split of that task's memory (``d_data`` backward
                 passes per task).
* ``md_mgem`` -- both: one instance per module, split rows sliced per block.

Per-module problems are independent (the joint QP is block-diagonal), so
solving them separately and concatenating the directions equals the joint
solve; ``assemble_direction`` does the concatenation.
"""

from dataclasses import dataclass

import numpy as np

from .layout import BlockLayout, ParamVector
from .mlp import MlpSpec, loss_and_grad
from .qp import BOX_FORM, MIN_ROW_SQNORM, QpInstance, drop_degenerate_rows
from .seeds import rng_from

METHOD_KINDS = ("single", "gem", "p_mgem", "d_mgem", "md_mgem")
PARTITION_MODES = ("by_layer", "equal_flat")
SOLVERS = ("exact", "approx")


@dataclass(frozen=True)
class MethodSpec:
    """A method variant: kind, module counts, memory strength, solver.

    ``gem`` and ``single`` require ``d_param == d_data == 1``; ``p_mgem``
    partitions parameters only, ``d_mgem`` memories only. A modular kind
    with a module count of 1 is permitted and reduces to plain GEM.
    """

    kind: str
    d_param: int = 1
    d_data: int = 1
    strength: float = 0.0
    solver: str = "exact"

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.d_param < 1 or self.d_data < 1:
            raise ValueError("module counts must be >= 1")
        if self.strength < 0.0:
            raise ValueError("strength must be >= 0")
        if self.kind in ("single", "gem") and (self.d_param != 1 or self.d_data != 1):
            raise ValueError(f"{self.kind} requires d_param == d_data == 1")
        if self.kind == "p_mgem" and self.d_data != 1:
            raise ValueError("p_mgem partitions parameters only (d_data must be 1)")
        if self.kind == "d_mgem" and self.d_param != 1:
            raise ValueError("d_mgem partitions memories only (d_param must be 1)")

    @property
    def label(self) -> str:
        """Report label; the approximate solver gets its own method name."""
        return self.kind if self.solver == "exact" else f"approx_{self.kind}"


@dataclass(frozen=True)
class PartitionSpec:
    """A resolved split of the parameter blocks into modules.

    ``groups`` holds one tuple of block names per module, indexing into
    ``layout`` (the model layout for ``by_layer``; a synthetic re-blocking
    of the same flat range for ``equal_flat``). Groups are disjoint, cover
    every block, and are contiguous in the flat index space.
    """

    mode: str
    d: int
    layout: BlockLayout
    groups: tuple

    @property
    def n_modules(self) -> int:
        return len(self.groups)


def _near_equal_chunks(items, d):
    """Split a sequence into d contiguous chunks, remainder to the earliest."""
    n = len(items)
    d = min(d, n)
    base, rem = divmod(n, d)
    chunks = []
    start = 0
    for i in range(d):
        size = base + (1 if i < rem else 0)
        chunks.append(items[start:start + size])
        start += size
    return chunks


def resolve_partition(layout: BlockLayout, mode: str, d: int) -> PartitionSpec:
    """Group the layout's blocks into ``d`` parameter modules.

    ``by_layer`` groups consecutive blocks; ``equal_flat`` re-blocks the flat
    index range into ``d`` near-equal contiguous spans (named ``F0..``).
    The effective module count is capped by the number of blocks (or flat
    length), remainder always to the earliest groups.
    """
    if mode not in PARTITION_MODES:
        raise ValueError(f"unknown partition mode {mode!r}")
    if d < 1:
        raise ValueError("module count must be >= 1")
    if mode == "by_layer":
        chunks = _near_equal_chunks(list(layout.blocks), d)
        groups = tuple(tuple(b.name for b in chunk) for chunk in chunks)
        return PartitionSpec(mode, d, layout, groups)
    sizes = _near_equal_chunks(list(range(layout.total_len)), d)
    flat = BlockLayout.from_sizes((f"F{i}", len(span)) for i, span in enumerate(sizes))
    groups = tuple((f"F{i}",) for i in range(len(sizes)))
    return PartitionSpec(mode, d, flat, groups)


def module_span(partition: PartitionSpec, i: int) -> slice:
    """Flat slice of module ``i`` (groups are contiguous by construction)."""
    blocks = [partition.layout.block(name) for name in partition.groups[i]]
    start = blocks[0].offset
    stop = blocks[-1].offset + blocks[-1].length
    return slice(start, stop)


def split_memory(n_samples: int, d_data: int, seed: int):
    """Deterministic disjoint split of ``range(n_samples)`` into d_data sets.

    A seeded shuffle followed by contiguous near-equal chunks; the union of
    the (sorted) index sets is exactly ``range(n_samples)``.
    """
    if d_data < 1:
        raise ValueError("d_data must be >= 1")
    if n_samples < d_data:
        raise ValueError(f"memory of {n_samples} samples cannot form {d_data} splits")
    perm = rng_from(seed, "memsplit").permutation(n_samples)
    return [np.sort(chunk) for chunk in _near_equal_chunks(perm, d_data)]


@dataclass(eq=False)
class ConstraintBatch:
    """Instances for one update step plus gradient bookkeeping.

    ``memory_grads`` holds the full-length per-past-task memory gradient
    (for data-split methods: the size-weighted mean of the split gradients,
    which equals the full-memory gradient under the mean-loss convention).
    """

    instances: list
    memory_grads: list
    rows_dropped: int


def build_instances(method: MethodSpec, memories, g_t: ParamVector,
                    params: ParamVector, spec: MlpSpec,
                    partition: PartitionSpec) -> ConstraintBatch:
    """Assemble one QpInstance per parameter module for this step.

    ``memories`` is the ordered list of past-task EpisodicMemory objects;
    an empty list yields an empty batch (first task: the caller uses the
    plain gradient). Degenerate rows are dropped per the solver policy; an
    instance whose rows all drop degenerates to the unconstrained problem.
    """
    if method.kind == "single":
        raise ValueError("the single baseline does not assemble constraints")
    if not memories:
        return ConstraintBatch([], [], 0)
    for mem in memories:
        if mem.data.n_samples < 1:
            raise ValueError("episodic memory is empty")

    split_rows = method.kind in ("d_mgem", "md_mgem")
    row_vecs = []
    row_tags = []
    memory_grads = []
    for mem in memories:
        if split_rows:
            if len(mem.splits) != method.d_data:
                raise ValueError(
                    f"memory for task {mem.task} has {len(mem.splits)} splits, "
                    f"method wants {method.d_data}"
                )
            split_grads = []
            weights = []
            for d, idx in enumerate(mem.splits):
                _, grad = loss_and_grad(params, spec, mem.data.take(idx))
                split_grads.append(grad.data)
                weights.append(len(idx))
                row_vecs.append(grad.data)
                row_tags.append((mem.task, d))
            w = np.asarray(weights, dtype=np.float64)
            memory_grads.append((w / w.sum()) @ np.vstack(split_grads))
        else:
            _, grad = loss_and_grad(params, spec, mem.data)
            row_vecs.append(grad.data)
            row_tags.append((mem.task, 0))
            memory_grads.append(grad.data)

    all_rows = np.vstack(row_vecs)
    instances = []
    dropped_total = 0
    for i in range(partition.n_modules):
        span = module_span(partition, i)
        rows = all_rows[:, span]
        strength = np.full(rows.shape[0], method.strength)
        kept_rows, kept_strength, dropped = drop_degenerate_rows(rows, strength)
        dropped_total += dropped
        if dropped:
            sq = np.einsum("ij,ij->i", rows, rows)
            tags = tuple(t for t, s in zip(row_tags, sq) if s >= MIN_ROW_SQNORM)
        else:
            tags = tuple(row_tags)
        instances.append(QpInstance(
            constraint_rows=kept_rows,
            target=g_t.data[span].copy(),
            strength=kept_strength,
            form=BOX_FORM,
            row_tags=tags,
            module_index=i,
        ))
    return ConstraintBatch(instances, memory_grads, dropped_total)


def assemble_direction(solutions, partition: PartitionSpec) -> np.ndarray:
    """Scatter per-module directions back into one flat update vector."""
    if len(solutions) != partition.n_modules:
        raise ValueError(
            f"got {len(solutions)} solutions for {partition.n_modules} modules"
        )
    z = np.empty(partition.layout.total_len)
    for i, sol in enumerate(solutions):
        span = module_span(partition, i)
        if sol.direction.shape[0] != span.stop - span.start:
            raise ValueError(f"module {i} direction has the wrong length")
        z[span] = sol.direction
    return z
