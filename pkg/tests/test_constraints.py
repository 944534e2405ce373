import numpy as np
import pytest

from mgem import qp
from mgem.constraints import (
    MethodSpec,
    assemble_direction,
    build_instances,
    module_span,
    resolve_partition,
    split_memory,
)
from mgem.engine import EpisodicMemory
from mgem.layout import ParamVector
from mgem.mlp import Dataset, MlpSpec, build_layout, init_params, loss_and_grad
from mgem.seeds import derive_seed, rng_from
from mgem.selfcheck import check_block_consistency

MLP = MlpSpec((3, 5, 3))


def make_memories(n_tasks, d_data, n_per=8, seed=0):
    rng = rng_from(seed, "mem")
    mems = []
    for t in range(1, n_tasks + 1):
        data = Dataset(rng.standard_normal((n_per, 3)), rng.integers(0, 3, size=n_per))
        splits = tuple(split_memory(n_per, d_data, derive_seed(seed, "memsplit", t)))
        mems.append(EpisodicMemory(task=t, data=data, splits=splits))
    return mems


def batch_grad(params, seed=1):
    rng = rng_from(seed, "batch")
    data = Dataset(rng.standard_normal((6, 3)), rng.integers(0, 3, size=6))
    return loss_and_grad(params, MLP, data)[1]


# --- MethodSpec --------------------------------------------------------------

def test_method_spec_validation():
    with pytest.raises(ValueError):
        MethodSpec("mer")
    with pytest.raises(ValueError):
        MethodSpec("gem", d_param=2)
    with pytest.raises(ValueError):
        MethodSpec("p_mgem", d_data=2)
    with pytest.raises(ValueError):
        MethodSpec("d_mgem", d_param=3)
    with pytest.raises(ValueError):
        MethodSpec("gem", strength=-0.1)
    with pytest.raises(ValueError):
        MethodSpec("gem", solver="cvxpy")
    assert MethodSpec("p_mgem", d_param=1).kind == "p_mgem"  # D=1 reduces to GEM
    assert MethodSpec("gem", solver="approx").label == "approx_gem"


# --- partitions --------------------------------------------------------------

def test_partition_d1_is_single_group():
    layout = build_layout(MLP)
    part = resolve_partition(layout, "by_layer", 1)
    assert part.groups == (layout.names,)


def test_partition_by_layer_near_equal():
    layout = build_layout(MLP)  # 4 blocks
    part = resolve_partition(layout, "by_layer", 2)
    assert part.groups == (("L0.w", "L0.b"), ("L1.w", "L1.b"))
    part3 = resolve_partition(layout, "by_layer", 3)
    assert [len(g) for g in part3.groups] == [2, 1, 1]


def test_partition_one_block_per_group():
    layout = build_layout(MLP)
    part = resolve_partition(layout, "by_layer", 4)
    assert part.n_modules == 4
    assert all(len(g) == 1 for g in part.groups)
    # more groups than blocks: effective D capped
    assert resolve_partition(layout, "by_layer", 9).n_modules == 4


def test_partition_equal_flat_spans():
    layout = build_layout(MLP)  # total 38
    part = resolve_partition(layout, "equal_flat", 4)
    spans = [module_span(part, i) for i in range(part.n_modules)]
    sizes = [s.stop - s.start for s in spans]
    assert sum(sizes) == layout.total_len
    assert max(sizes) - min(sizes) <= 1
    assert spans[0].start == 0 and spans[-1].stop == layout.total_len


def test_partition_rejects_bad_args():
    layout = build_layout(MLP)
    with pytest.raises(ValueError):
        resolve_partition(layout, "by_layer", 0)
    with pytest.raises(ValueError):
        resolve_partition(layout, "by_neuron", 2)


# --- memory splits -----------------------------------------------------------

def test_split_memory_shapes_and_determinism():
    one = split_memory(10, 1, seed=3)
    assert len(one) == 1 and np.array_equal(one[0], np.arange(10))
    halves = split_memory(10, 2, seed=3)
    assert [len(s) for s in halves] == [5, 5]
    assert np.array_equal(np.sort(np.concatenate(halves)), np.arange(10))
    again = split_memory(10, 2, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(halves, again))
    assert not all(np.array_equal(a, b)
                   for a, b in zip(halves, split_memory(10, 2, seed=4)))


def test_split_memory_rejects_too_small():
    with pytest.raises(ValueError):
        split_memory(1, 2, seed=0)


# --- instance assembly -------------------------------------------------------

def test_no_past_tasks_yields_empty_batch():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    batch = build_instances(MethodSpec("gem"), [], batch_grad(params), params, MLP, part)
    assert batch.instances == [] and batch.memory_grads == []


def test_single_method_refuses_assembly():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    with pytest.raises(ValueError):
        build_instances(MethodSpec("single"), make_memories(1, 1),
                        batch_grad(params), params, MLP, part)


def test_gem_instance_rows_are_memory_gradients():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    mems = make_memories(2, 1)
    g_t = batch_grad(params)
    batch = build_instances(MethodSpec("gem", strength=0.3), mems, g_t, params, MLP, part)
    assert len(batch.instances) == 1
    inst = batch.instances[0]
    assert inst.m == 2 and inst.form == qp.BOX_FORM
    for s, mem in enumerate(mems):
        _, grad = loss_and_grad(params, MLP, mem.data)
        assert np.array_equal(inst.constraint_rows[s], grad.data)
        assert np.array_equal(batch.memory_grads[s], grad.data)
    assert np.all(inst.strength == 0.3)
    assert inst.row_tags == ((1, 0), (2, 0))


def test_pmgem_d1_identical_to_gem():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    mems = make_memories(2, 1)
    g_t = batch_grad(params)
    a = build_instances(MethodSpec("gem", strength=0.1), mems, g_t, params, MLP, part)
    b = build_instances(MethodSpec("p_mgem", d_param=1, strength=0.1),
                        mems, g_t, params, MLP, part)
    assert np.array_equal(a.instances[0].constraint_rows, b.instances[0].constraint_rows)
    assert np.array_equal(a.instances[0].target, b.instances[0].target)


def test_pmgem_slices_one_backprop_per_task():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 2)
    mems = make_memories(2, 1)
    g_t = batch_grad(params)
    batch = build_instances(MethodSpec("p_mgem", d_param=2), mems, g_t, params, MLP, part)
    assert len(batch.instances) == 2
    full = build_instances(MethodSpec("gem"), mems, g_t, params, MLP,
                           resolve_partition(params.layout, "by_layer", 1)).instances[0]
    for i, inst in enumerate(batch.instances):
        span = module_span(part, i)
        assert np.array_equal(inst.constraint_rows, full.constraint_rows[:, span])
        assert np.array_equal(inst.target, g_t.data[span])


def test_dmgem_row_count():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    mems = make_memories(3, 2)
    batch = build_instances(MethodSpec("d_mgem", d_data=2), mems,
                            batch_grad(params), params, MLP, part)
    assert len(batch.instances) == 1
    assert batch.instances[0].m == 6
    assert batch.instances[0].row_tags == (
        (1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1))


def test_dmgem_memory_grad_is_weighted_split_mean():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    mems = make_memories(1, 2)
    batch = build_instances(MethodSpec("d_mgem", d_data=2), mems,
                            batch_grad(params), params, MLP, part)
    _, full = loss_and_grad(params, MLP, mems[0].data)
    np.testing.assert_allclose(batch.memory_grads[0], full.data, rtol=1e-12, atol=1e-15)


def test_mdmgem_instance_grid():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 2)
    mems = make_memories(2, 2)
    batch = build_instances(MethodSpec("md_mgem", d_param=2, d_data=2), mems,
                            batch_grad(params), params, MLP, part)
    assert len(batch.instances) == 2
    assert all(inst.m == 4 for inst in batch.instances)


def test_split_mismatch_rejected():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    mems = make_memories(1, 2)
    with pytest.raises(ValueError):
        build_instances(MethodSpec("d_mgem", d_data=3), mems,
                        batch_grad(params), params, MLP, part)


def test_degenerate_rows_dropped_and_counted():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    mems = make_memories(2, 1)
    g_t = batch_grad(params)
    batch = build_instances(MethodSpec("gem"), mems, g_t, params, MLP, part)
    # near-zero rows (a fully fit past task) must vanish before solving
    rows = batch.instances[0].constraint_rows.copy()
    rows[0] = 1e-8
    kept, _, dropped = qp.drop_degenerate_rows(rows, np.zeros(2))
    assert dropped == 1 and kept.shape[0] == 1


def test_fully_fit_memory_degenerates_to_unconstrained():
    # a saturated model has a ~zero gradient on a perfectly classified
    # memory; the row drops, its tag goes with it, and the step falls back
    # to the plain gradient
    spec = MlpSpec((2, 4, 2))
    params = init_params(spec, 0)
    params.data[:] = 0.0
    params.block("L1.b")[:] = np.array([50.0, -50.0])
    part = resolve_partition(params.layout, "by_layer", 1)
    rng = rng_from(6, "fit")
    fit_mem = EpisodicMemory(1, Dataset(rng.standard_normal((6, 2)),
                                        np.zeros(6, dtype=int)),
                             tuple(split_memory(6, 1, 0)))
    live_mem = EpisodicMemory(2, Dataset(rng.standard_normal((6, 2)),
                                         rng.integers(0, 2, size=6)),
                              tuple(split_memory(6, 1, 1)))
    g_t = ParamVector(rng.standard_normal(params.layout.total_len), params.layout)

    batch = build_instances(MethodSpec("gem"), [fit_mem], g_t, params, spec, part)
    assert batch.rows_dropped == 1
    assert batch.instances[0].m == 0
    sol = qp.solve_exact(batch.instances[0])
    assert np.array_equal(sol.direction, g_t.data)

    both = build_instances(MethodSpec("gem"), [fit_mem, live_mem],
                           g_t, params, spec, part)
    assert both.instances[0].m == 1
    assert both.instances[0].row_tags == ((2, 0),)


# --- direction assembly ------------------------------------------------------

def test_assemble_single_module_verbatim():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 1)
    direction = rng_from(1, "z").standard_normal(params.layout.total_len)
    sol = qp.DualSolution(np.zeros(0), direction, 0, 0.0, True)
    assert np.array_equal(assemble_direction([sol], part), direction)


def test_assemble_all_modules_unconstrained_returns_target():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 2)
    g_t = batch_grad(params)
    sols = []
    for i in range(2):
        span = module_span(part, i)
        inst = qp.QpInstance(np.zeros((0, span.stop - span.start)),
                             g_t.data[span], np.zeros(0))
        sols.append(qp.solve_exact(inst))
    assert np.array_equal(assemble_direction(sols, part), g_t.data)


def test_assemble_validates_counts_and_lengths():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 2)
    sol = qp.DualSolution(np.zeros(0), np.zeros(3), 0, 0.0, True)
    with pytest.raises(ValueError):
        assemble_direction([sol], part)
    with pytest.raises(ValueError):
        assemble_direction([sol, sol], part)


def test_per_module_solve_equals_joint_solve():
    """The block-diagonal equality behind parameter-wise splitting."""
    params = init_params(MLP, 4)
    part = resolve_partition(params.layout, "by_layer", 2)
    mems = make_memories(2, 1, seed=4)
    g_t = batch_grad(params, seed=5)
    batch = build_instances(MethodSpec("p_mgem", d_param=2, strength=0.2),
                            mems, g_t, params, MLP, part)
    z_blocks = assemble_direction(
        [qp.solve_exact(inst, tol=1e-12) for inst in batch.instances], part)

    joint_rows = []
    joint_strength = []
    n = params.layout.total_len
    for i, inst in enumerate(batch.instances):
        span = module_span(part, i)
        for r in range(inst.m):
            row = np.zeros(n)
            row[span] = inst.constraint_rows[r]
            joint_rows.append(row)
            joint_strength.append(inst.strength[r])
    joint = qp.QpInstance(np.vstack(joint_rows), g_t.data,
                          np.asarray(joint_strength), form=qp.BOX_FORM)
    z_joint = qp.solve_exact(joint, tol=1e-12).direction
    assert np.max(np.abs(z_joint - z_blocks)) <= 1e-8


def test_block_consistency_battery():
    passed, detail = check_block_consistency(n_cases=40)
    assert passed, detail


def test_dmgem_direction_meets_pooled_margin():
    """Data-split solutions keep the pooled memory constraint at the
    weakest split margin (equal splits, margin form)."""
    rng = rng_from(21, "nest")
    for _ in range(30):
        n, D = 8, 2
        g_hat = rng.standard_normal(n)
        t = rng.standard_normal((D, n))
        splits = g_hat + (t - t.mean(axis=0))
        gamma = rng.uniform(0.0, 0.8, size=D)
        inst = qp.QpInstance(splits, rng.standard_normal(n), gamma,
                             form=qp.REGULARIZED_FORM)
        z = qp.solve_exact(inst, tol=1e-12).direction
        assert g_hat @ z >= gamma.min() - 1e-8


def test_pipeline_determinism():
    params = init_params(MLP, 0)
    part = resolve_partition(params.layout, "by_layer", 2)
    mems = make_memories(2, 1)
    g_t = batch_grad(params)
    a = build_instances(MethodSpec("p_mgem", d_param=2), mems, g_t, params, MLP, part)
    b = build_instances(MethodSpec("p_mgem", d_param=2), mems, g_t, params, MLP, part)
    for x, y in zip(a.instances, b.instances):
        assert np.array_equal(x.constraint_rows, y.constraint_rows)
        assert np.array_equal(x.target, y.target)
