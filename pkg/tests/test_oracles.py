import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routetime.oracles import (BudgetExceeded, implied_weight, median_of_sum_exhaustive,
                               median_of_sum_mc, median_of_sum_rows, sample_median, verify_prop2,
                               verify_prop3)

from conftest import R1, R2, R3


def test_appendix_rows():
    rows = np.column_stack([R1, R2, R3])
    assert median_of_sum_rows(rows) == 24
    assert sum(sample_median(c) for c in (R1, R2, R3)) == 20


def test_small_enumerations():
    assert median_of_sum_exhaustive([[1, 2], [1, 2]]) == 3
    assert median_of_sum_exhaustive([[4, 1, 9]]) == sample_median([4, 1, 9]) == 4
    with pytest.raises(BudgetExceeded):
        median_of_sum_exhaustive([list(range(100))] * 4, budget=10**6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 50), min_size=1, max_size=5), min_size=1, max_size=4))
def test_exhaustive_matches_itertools(lists):
    sums = [sum(c) for c in itertools.product(*lists)]
    assert median_of_sum_exhaustive(lists) == sample_median(sums)


def test_mc_close_to_exact():
    lists = [R1, R2, R3]
    exact = median_of_sum_exhaustive(lists)
    med, se = median_of_sum_mc(lists, 400_000, np.random.default_rng(0))
    assert se >= 0
    assert abs(med - exact) <= max(4 * se, 1.0)


def test_prop2_appendix():
    check = verify_prop2([R1, R2, R3], joint="rows")
    assert check.median_of_sum == 24 and check.sum_of_medians == 20
    assert check.sum_of_means == pytest.approx(23.2)
    assert check.w == pytest.approx(1.25, abs=1e-9)
    assert check.in_range is False


def test_prop2_symmetric_indeterminate():
    check = verify_prop2([[1, 2, 3], [5, 6, 7]], joint="cross")
    assert check.indeterminate and check.in_range is None


def test_prop2_lognormal_in_range():
    rng = np.random.default_rng(1)
    lists = [rng.lognormal(0, 1, 2000) for _ in range(3)]
    check = verify_prop2(lists, joint="mc", rng=rng, n_draws=200_000)
    assert check.in_range
    assert implied_weight(lists, check.median_of_sum).w == check.w


@pytest.mark.parametrize("transform", ["identity", "exp", "cube", "affine"])
def test_prop3_agreement(transform):
    rng = np.random.default_rng(2)
    res = verify_prop3((0.0, 1.0), (0.5, 0.3), transform, 50_000, rng)
    assert not res.inconclusive and res.agreement
    # decreasing transform flips which route is slower
    assert (res.p_a_greater > 0.5) == (transform == "affine")


def test_prop3_deadband_and_trials():
    rng = np.random.default_rng(3)
    res = verify_prop3((0.0, 1.0), (0.0, 1.0), "exp", 10_000, rng, deadband_se=100)
    assert res.inconclusive and res.agreement is None
    with pytest.raises(ValueError):
        verify_prop3((0, 1), (1, 1), "exp", 100, rng)
