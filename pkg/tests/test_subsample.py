import numpy as np
import pytest
from hypothesis import given, strategies as st

from csshred.errors import DimMismatchError, OutOfRangeError
from csshred.field import Field
from csshred.subsample import SubsamplePlan, apply_plan, make_plan, plan_mask


@st.composite
def plans(draw):
    n_x, n_y, n_t = draw(st.integers(1, 5)), draw(st.integers(1, 8)), draw(st.integers(1, 30))
    n_cols = draw(st.integers(0, n_y))
    n_snap = draw(st.integers(1, n_t))
    return make_plan((n_x, n_y, n_t), n_cols, n_snap, draw(st.integers(0, 10_000)))


def test_no_columns_is_identity(rng):
    fld = Field(rng.normal(size=(3, 4, 6)))
    plan = make_plan(fld.dims, 0, 3, seed=1)
    assert plan.y_sub == ()
    assert not plan_mask(plan).any()
    np.testing.assert_array_equal(apply_plan(fld, plan).values, fld.values)


def test_single_snapshot_is_final():
    assert make_plan((2, 3, 9), 2, 1, seed=5).t_sub == (8,)


def test_plan_sizes_at_scale():
    plan = make_plan((2, 324, 600), 324, 518, seed=0)
    assert len(plan.y_sub) == 324 and len(plan.t_sub) == 518


@pytest.mark.parametrize("n_cols, n_snap", [(-1, 1), (5, 1), (1, 0), (1, 11)])
def test_count_violations(n_cols, n_snap):
    with pytest.raises(OutOfRangeError):
        make_plan((2, 4, 10), n_cols, n_snap, seed=0)


def test_hand_case():
    plan = SubsamplePlan((0,), (1,), 0, (2, 2, 2))
    out = apply_plan(Field(np.ones((2, 2, 2))), plan).values
    assert (out == 0).sum() == 2
    assert np.all(out[:, 0, 1] == 0)


def test_single_entry_mask():
    assert plan_mask(SubsamplePlan((0,), (0,), 0, (1, 1, 1))).tolist() == [[[True]]]


def test_dim_mismatch():
    with pytest.raises(DimMismatchError):
        apply_plan(Field(np.ones((2, 2, 3))), SubsamplePlan((0,), (0,), 0, (2, 2, 2)))


def test_zero_count_formula(rng):
    fld = Field(rng.uniform(1.0, 2.0, size=(5, 8, 40)))
    plan = make_plan(fld.dims, 3, 11, seed=2)
    assert (apply_plan(fld, plan).values == 0).sum() == 5 * 3 * 11


def test_input_untouched(rng):
    v = rng.normal(size=(3, 4, 5))
    fld = Field(v.copy())
    apply_plan(fld, make_plan(fld.dims, 2, 2, seed=0))
    np.testing.assert_array_equal(fld.values, v)


@given(plans())
def test_plan_invariants(plan):
    n_x, n_y, n_t = plan.dims
    assert n_t - 1 in plan.t_sub
    assert len(set(plan.y_sub)) == len(plan.y_sub) and len(set(plan.t_sub)) == len(plan.t_sub)
    assert all(0 <= y < n_y for y in plan.y_sub) and all(0 <= t < n_t for t in plan.t_sub)
    assert plan == make_plan(plan.dims, len(plan.y_sub), len(plan.t_sub), plan.seed)
    assert SubsamplePlan.from_text(plan.to_text()) == plan


@given(plans())
def test_mask_consistency_and_idempotence(plan):
    rng = np.random.default_rng(len(plan.t_sub))
    fld = Field(rng.normal(size=plan.dims))
    out = apply_plan(fld, plan)
    mask = plan_mask(plan)
    assert np.all(out.values[mask] == 0)
    np.testing.assert_array_equal(out.values[~mask], fld.values[~mask])
    np.testing.assert_array_equal(apply_plan(out, plan).values, out.values)


def test_other_snapshots_uniform():
    # apart from the forced final snapshot, every index is about equally likely
    counts = np.zeros(9)
    for seed in range(3000):
        for t in make_plan((1, 1, 10), 1, 3, seed).t_sub[:-1]:
            counts[t] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 1 / 9) < 0.02)
