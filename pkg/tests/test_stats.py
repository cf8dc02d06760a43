import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from recurrence.errors import DegenerateSample
from recurrence.stats import t_sf, welch_one_sided_t, welch_two_sided_p


def test_hand_computed_example():
    res = welch_one_sided_t([1, 2, 3], [2, 3, 4])
    assert res.t == pytest.approx(-1.224745, abs=1e-6)
    assert res.df == pytest.approx(4.0, rel=1e-12)
    assert res.p == pytest.approx(0.856, abs=1e-3)
    assert 1 - res.p == pytest.approx(0.144, abs=1e-3)


def test_identical_samples():
    res = welch_one_sided_t([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
    assert res.t == 0.0 and res.p == pytest.approx(0.5)


def test_separated_samples():
    rng = np.random.default_rng(0)
    b = rng.normal(0, 1, 30)
    assert welch_one_sided_t(b + 10, b).p < 1e-3


@pytest.mark.parametrize("a, b", [([1.0], [1.0, 2.0]), ([3.0, 3.0], [1.0, 1.0])])
def test_degenerate_samples(a, b):
    with pytest.raises(DegenerateSample):
        welch_one_sided_t(a, b)


@given(
    st.lists(st.floats(-100, 100), min_size=2, max_size=40),
    st.lists(st.floats(-100, 100), min_size=2, max_size=40),
)
def test_matches_reference_implementation(a, b):
    if np.var(a) < 1e-6 and np.var(b) < 1e-6:
        return
    ref = sps.ttest_ind(a, b, equal_var=False, alternative="greater")
    res = welch_one_sided_t(a, b)
    assert res.t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-10)
    two = sps.ttest_ind(a, b, equal_var=False).pvalue
    assert welch_two_sided_p(a, b) == pytest.approx(two, rel=1e-8, abs=1e-10)


@given(st.floats(-50, 50), st.floats(0.5, 500))
def test_t_tail_against_reference(t, df):
    assert t_sf(t, df) == pytest.approx(sps.t.sf(t, df), rel=1e-9, abs=1e-14)


def test_t_tail_symmetry():
    assert t_sf(1.3, 7.0) + t_sf(-1.3, 7.0) == pytest.approx(1.0, rel=1e-14)
    assert t_sf(0.0, 3.0) == 0.5
    assert math.isclose(t_sf(1e6, 10.0), 0.0, abs_tol=1e-30)
