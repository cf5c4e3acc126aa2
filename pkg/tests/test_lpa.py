import numpy as np
import pytest

from volabel import (
    Connectivity,
    ConvergenceError,
    LabeledVolume,
    LpaConfig,
    ccl_oracle,
    compact_labels,
    init_labels,
    per_class_instances,
    propagate_step,
    run_lpa,
)

from conftest import rand_binary, rand_semantic, shifted_views


def vol(data, role="binary"):
    return LabeledVolume(np.asarray(data, dtype=np.uint8), role=role)


# ---------------------------------------------------------------- init_labels

def test_init_labels_no_foreground():
    out = init_labels(vol(np.zeros((2, 2, 2))))
    assert np.all(out.data == 0)


def test_init_labels_uid_formula():
    out = init_labels(vol([[[1, 0, 1]]]))
    assert list(out.data.ravel()) == [1, 0, 3]
    out = init_labels(vol([[[1, 1]]]))
    assert list(out.data.ravel()) == [1, 2]


def test_init_labels_rejects_instance_role():
    with pytest.raises(ValueError):
        init_labels(LabeledVolume(np.zeros((1, 1, 1), dtype=np.uint8), role="instance"))


# ------------------------------------------------------------- propagate_step

def test_propagate_step_fixed_point():
    s = vol([[[1, 0, 1]]])
    labels = init_labels(s)
    out, changed = propagate_step(labels, s, Connectivity.C6)
    assert list(out.data.ravel()) == [1, 0, 3]
    assert changed == 0


def test_propagate_step_min_over_neighborhood():
    s = vol([[[1, 1]]])
    labels = init_labels(s)
    out, changed = propagate_step(labels, s, Connectivity.C6)
    assert list(out.data.ravel()) == [1, 1]
    assert changed == 1


def test_propagate_step_is_synchronous():
    # voxel 2 must see the OLD label of voxel 1, not the freshly lowered one
    s = vol([[[1, 1, 1]]])
    labels = init_labels(s)
    out, changed = propagate_step(labels, s, Connectivity.C6)
    assert list(out.data.ravel()) == [1, 1, 2]
    assert changed == 2


def test_propagate_step_shape_mismatch():
    s = vol([[[1, 1]]])
    labels = init_labels(vol([[[1, 1, 1]]]))
    with pytest.raises(ValueError):
        propagate_step(labels, s, Connectivity.C6)


def test_propagate_step_rejects_inconsistent_labels():
    s = vol([[[0, 1]]])
    bad = LabeledVolume(np.array([[[5, 1]]], dtype=np.uint64), role="instance")
    with pytest.raises(ValueError):
        propagate_step(bad, s, Connectivity.C6)


# -------------------------------------------------------------------- run_lpa

def test_run_lpa_two_singletons():
    res = run_lpa(vol([[[1, 0, 1]]]))
    assert list(res.instances.data.ravel()) == [1, 0, 2]
    assert res.num_instances == 2
    assert res.converged


def test_run_lpa_single_block():
    res = run_lpa(vol(np.ones((2, 2, 2))))
    assert res.num_instances == 1
    assert np.all(res.instances.data == 1)


def test_run_lpa_connectivity_sensitivity():
    # two voxels touching only diagonally in-plane
    data = np.zeros((1, 2, 2), dtype=np.uint8)
    data[0, 0, 0] = 1
    data[0, 1, 1] = 1
    v = vol(data)
    assert run_lpa(v, LpaConfig(connectivity=Connectivity.C6)).num_instances == 2
    assert run_lpa(v, LpaConfig(connectivity=Connectivity.C26)).num_instances == 1
    assert ccl_oracle(v, Connectivity.C6).num_instances == 2
    assert ccl_oracle(v, Connectivity.C26).num_instances == 1


def test_run_lpa_space_diagonal():
    # (1,1,1) offset is corner adjacency: C18 splits it, C26 joins it
    data = np.zeros((2, 2, 2), dtype=np.uint8)
    data[0, 0, 0] = 1
    data[1, 1, 1] = 1
    v = vol(data)
    assert run_lpa(v, LpaConfig(connectivity=Connectivity.C18)).num_instances == 2
    assert run_lpa(v, LpaConfig(connectivity=Connectivity.C26)).num_instances == 1


def test_run_lpa_empty_volume():
    res = run_lpa(vol(np.zeros((3, 3, 3))))
    assert res.num_instances == 0
    assert res.iterations_used == 0
    assert res.converged


def test_run_lpa_nonconvergence_error():
    line = vol(np.ones((1, 1, 64)))
    with pytest.raises(ConvergenceError):
        run_lpa(line, LpaConfig(schedule="synchronous", max_iterations=2))


def test_run_lpa_iteration_bound():
    for seed in range(10):
        v = rand_binary(seed, dims=(12, 12, 12), density=0.5)
        res = run_lpa(v, LpaConfig(schedule="synchronous"))
        assert res.iterations_used <= max(1, v.foreground_count())


def test_monotone_descent_synchronous():
    for seed in range(5):
        s = rand_binary(seed, dims=(10, 10, 10), density=0.6)
        fg = s.data > 0
        labels = init_labels(s)
        for _ in range(s.foreground_count()):
            nxt, changed = propagate_step(labels, s, Connectivity.C26)
            assert np.all(nxt.data[fg] <= labels.data[fg])
            labels = nxt
            if changed == 0:
                break
        assert changed == 0


def test_fixed_point_shares_component_minimum():
    s = rand_binary(7, dims=(8, 8, 8), density=0.5)
    labels = init_labels(s)
    while True:
        labels, changed = propagate_step(labels, s, Connectivity.C26)
        if changed == 0:
            break
    # adjacent foreground voxels agree at the fixed point
    lab = labels.data
    fg = s.data > 0
    for off in Connectivity.C26.offsets():
        a, b = shifted_views(lab, off)
        fa, fb = shifted_views(fg, off)
        both = fa & fb
        assert np.all(a[both] == b[both])


# -------------------------------------------------------------------- compact

def test_compact_order_preserving():
    raw = LabeledVolume(np.array([[[0, 5, 900]]], dtype=np.uint64), role="instance")
    out, k = compact_labels(raw)
    assert list(out.data.ravel()) == [0, 1, 2]
    assert k == 2


def test_compact_all_zero():
    raw = LabeledVolume(np.zeros((2, 2, 2), dtype=np.uint64), role="instance")
    out, k = compact_labels(raw)
    assert k == 0
    assert np.all(out.data == 0)


def test_compact_single_label():
    raw = LabeledVolume(np.array([[[0, 3]]], dtype=np.uint64), role="instance")
    out, k = compact_labels(raw)
    assert list(out.data.ravel()) == [0, 1]
    assert k == 1


# -------------------------------------------------------- oracle and schedule

def test_oracle_equivalence_random():
    for seed in range(20):
        v = rand_binary(seed, dims=(16, 16, 16), density=[0.2, 0.5, 0.8][seed % 3])
        for conn in Connectivity:
            a = run_lpa(v, LpaConfig(connectivity=conn))
            b = ccl_oracle(v, conn)
            assert a.num_instances == b.num_instances
            assert np.array_equal(a.instances.data, b.instances.data)


def test_oracle_trivial_cases():
    assert ccl_oracle(vol([[[1, 0, 1]]])).num_instances == 2
    assert ccl_oracle(vol(np.ones((3, 3, 3)))).num_instances == 1


def test_schedule_independence():
    for seed in range(20):
        v = rand_binary(100 + seed, dims=(12, 12, 12), density=0.5)
        for conn in Connectivity:
            sync = run_lpa(v, LpaConfig(connectivity=conn, schedule="synchronous"))
            sweep = run_lpa(v, LpaConfig(connectivity=conn, schedule="raster_sweeps"))
            assert np.array_equal(sync.instances.data, sweep.instances.data)
            assert sweep.iterations_used <= sync.iterations_used


def test_label_set_is_contiguous():
    res = run_lpa(rand_binary(42, density=0.5))
    present = np.unique(res.instances.data)
    assert list(present) == list(range(res.num_instances + 1)) or (
        res.num_instances == 0 and list(present) == [0])


# -------------------------------------------------------- per-class instances

def test_per_class_touching_blobs_stay_apart():
    data = np.zeros((1, 1, 4), dtype=np.uint8)
    data[0, 0, :2] = 1
    data[0, 0, 2:] = 2
    inst, id_class = per_class_instances(LabeledVolume(data, role="semantic"))
    assert len(id_class) == 2
    assert set(id_class.values()) == {1, 2}
    # the two instances are adjacent but distinct
    assert inst.data[0, 0, 1] != inst.data[0, 0, 2]
    assert inst.data[0, 0, 1] != 0 and inst.data[0, 0, 2] != 0


def test_per_class_single_class_reduces_to_binary():
    s = rand_binary(5, dims=(10, 10, 10), density=0.4)
    inst, id_class = per_class_instances(s.with_data(s.data, role="semantic"))
    ref = run_lpa(s)
    assert np.array_equal(inst.data, ref.instances.data)
    assert all(c == 1 for c in id_class.values())


def test_per_class_empty():
    inst, id_class = per_class_instances(
        LabeledVolume(np.zeros((2, 2, 2), dtype=np.uint8), role="semantic"))
    assert id_class == {}
    assert np.all(inst.data == 0)


def test_per_class_no_cross_class_ids():
    s = rand_semantic(11, dims=(12, 12, 12), num_classes=3, density=0.6)
    inst, id_class = per_class_instances(s, Connectivity.C26)
    for i in np.unique(inst.data):
        if i == 0:
            continue
        mask = inst.data == i
        classes = np.unique(s.data[mask])
        assert classes.size == 1
        assert int(classes[0]) == id_class[int(i)]


def test_per_class_same_class_instances_not_adjacent():
    s = rand_semantic(13, dims=(10, 10, 10), num_classes=2, density=0.5)
    inst, id_class = per_class_instances(s, Connectivity.C26)
    lab = inst.data
    for off in Connectivity.C26.offsets():
        a, b = shifted_views(lab, off)
        both = (a > 0) & (b > 0) & (a != b)
        for ia, ib in zip(a[both].ravel(), b[both].ravel()):
            assert id_class[int(ia)] != id_class[int(ib)]
