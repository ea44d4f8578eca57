from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creditale.errors import DataError
from creditale.resampling import bootstrap_indices, holdout_indices, mccv_splits, undersample_indices


def test_mccv_splits_disjoint_and_seeded():
    plan = mccv_splits(100, iterations=5, validation_fraction=0.3, base_seed=7)
    assert len(plan) == 5
    for sub, val in plan:
        assert val.size == 30 and sub.size == 70
        assert np.intersect1d(sub, val).size == 0
    again = mccv_splits(100, 5, 0.3, 7)
    for (a, b), (c, d) in zip(plan, again):
        np.testing.assert_array_equal(a, c)
        np.testing.assert_array_equal(b, d)
    first = holdout_indices(100, 0.3, 7)
    np.testing.assert_array_equal(first[1], plan.splits[0][1])


@given(n_pos=st.integers(1, 50), n_neg=st.integers(1, 300), seed=st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_undersample_balances(n_pos, n_neg, seed):
    y = np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)]
    np.random.default_rng(seed).shuffle(y)
    idx = undersample_indices(y, seed)
    kept = y[idx]
    small = min(n_pos, n_neg)
    assert np.unique(idx).size == idx.size == 2 * small
    assert kept.sum() == small
    # every minority row survives
    minority = 1 if n_pos <= n_neg else 0
    assert set(np.flatnonzero(y == minority)) <= set(idx.tolist())


def test_undersample_needs_both_classes():
    with pytest.raises(DataError):
        undersample_indices(np.zeros(5, int), 0)


def test_bootstrap_indices():
    reps = bootstrap_indices(50, 4, base_seed=3)
    assert len(reps) == 4 and all(r.size == 50 and r.max() < 50 for r in reps)
    np.testing.assert_array_equal(reps[1], bootstrap_indices(50, 4, base_seed=3)[1])
