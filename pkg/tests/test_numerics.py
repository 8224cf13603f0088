import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from approxsp.numerics import entropy, scaled_lse, scaled_softmax, soft_max, soft_max_distribution

scores = arrays(np.float64, st.integers(1, 8), elements=st.floats(-20, 20))
scales = st.floats(0.0, 5.0)


class TestSoftMaxExamples:
    def test_single_entry(self):
        assert soft_max([3.5], 0.7) == 3.5
        assert soft_max([3.5], 0.0) == 3.5

    def test_log_four(self):
        assert soft_max([0.0, math.log(3)], 1.0) == pytest.approx(math.log(4), abs=1e-12)
        assert soft_max([0.0, math.log(3)], 1.0) == pytest.approx(1.386294, abs=1e-6)

    def test_max_branch(self):
        assert soft_max([5, 1, 1], 0) == 5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            soft_max([], 1.0)
        with pytest.raises(ValueError):
            soft_max_distribution([], 1.0)

    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError):
            soft_max([1.0, 2.0], -1.0)


class TestDistributionExamples:
    def test_symmetric(self):
        np.testing.assert_allclose(soft_max_distribution([0, 0], 1), [0.5, 0.5])

    def test_unique_argmax(self):
        np.testing.assert_array_equal(soft_max_distribution([1, 0], 0), [1, 0])

    def test_closed_form(self):
        np.testing.assert_allclose(soft_max_distribution([0, math.log(3)], 1), [0.25, 0.75], atol=1e-12)

    def test_ties_uniform_at_zero(self):
        np.testing.assert_allclose(soft_max_distribution([2, 0, 2, 1], 0), [0.5, 0, 0.5, 0])


class TestEntropyExamples:
    def test_point_mass(self):
        assert entropy([0, 1, 0]) == 0

    def test_uniform(self):
        assert entropy(np.full(5, 0.2)) == pytest.approx(math.log(5))

    def test_quarter(self):
        assert entropy([0.25, 0.75]) == pytest.approx(0.562335, abs=1e-6)


@given(scores, scales, st.floats(-50, 50))
def test_shift_equivariance(a, s, c):
    assert soft_max(a + c, s) == pytest.approx(soft_max(a, s) + c, abs=1e-9)


@given(scores, scales, scales)
def test_monotone_in_scale_and_bounds(a, s1, s2):
    lo, hi = sorted((s1, s2))
    v_lo, v_hi = soft_max(a, lo), soft_max(a, hi)
    assert v_lo <= v_hi + 1e-12
    m = float(np.max(a))
    for s, v in ((lo, v_lo), (hi, v_hi)):
        assert m - 1e-12 <= v <= m + s * math.log(a.size) + 1e-9


@given(scores, st.floats(0.01, 5.0), st.integers(0, 2 ** 31))
def test_variational_identity(a, s, seed):
    p_star = soft_max_distribution(a, s)
    value = soft_max(a, s)
    assert p_star @ a + s * entropy(p_star) == pytest.approx(value, abs=1e-10)
    p = np.random.default_rng(seed).dirichlet(np.ones(a.size))
    assert p @ a + s * entropy(p) <= value + 1e-10


@given(scores, scales)
def test_distribution_is_normalized(a, s):
    p = soft_max_distribution(a, s)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-12


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-5, 5), unique=True))
def test_concentrates_on_argmax(a):
    top = np.sort(a)
    if top[-1] - top[-2] < 0.1:
        return
    p = soft_max_distribution(a, 1e-6)
    assert p[np.argmax(a)] > 1 - 1e-3


@given(arrays(np.float64, st.integers(1, 6), elements=st.floats(0, 1)))
def test_entropy_bounds(w):
    if w.sum() <= 0:
        return
    p = w / w.sum()
    assert -1e-12 <= entropy(p) <= math.log(p.size) + 1e-12


class TestScaledKernels:
    def test_per_slice_scales(self):
        a = np.array([[0.0, 1.0], [2.0, 0.0], [0.0, 0.0]])
        s = np.array([1.0, 0.0, 0.5])
        out = scaled_lse(a, s, axis=-1)
        np.testing.assert_allclose(out, [np.logaddexp(0, 1), 2.0, 0.5 * np.log(2)])

    def test_negative_scale_is_soft_min(self):
        a = np.array([1.0, 3.0])
        assert scaled_lse(a, -1.0) == pytest.approx(-np.logaddexp(-1, -3))

    @pytest.mark.parametrize("masked", [False, True])
    def test_small_negative_scale_stays_finite(self, masked):
        a = np.array([[0.0, 1.0, 5.0], [2.0, 0.0, 3.0]])
        s = np.array([-0.01, 0.01])
        with np.errstate(over="raise"):
            out = scaled_lse(a, s, masked=masked)
            p = scaled_softmax(a, s, masked=masked)
        np.testing.assert_allclose(out, [0.0, 3.0], atol=1e-40)
        np.testing.assert_allclose(p, [[1, 0, 0], [0, 0, 1]], atol=1e-40)

    def test_absent_labels_under_negative_scale(self):
        a = np.array([[1.0, 3.0, -np.inf]])
        np.testing.assert_allclose(scaled_lse(a, np.array([-1.0])), [-np.logaddexp(-1, -3)])
        p = scaled_softmax(a, np.array([-1.0]))
        assert p[0, 2] == 0 and p[0].sum() == pytest.approx(1)

    def test_multi_axis(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(3, 4, 2, 2))
        s = rng.uniform(0.5, 2, size=(3, 4))
        out = scaled_lse(a, s, axis=(2, 3))
        ref = s * np.log(np.exp(a / s[..., None, None]).sum(axis=(2, 3)))
        np.testing.assert_allclose(out, ref)
        p = scaled_softmax(a, s, axis=(2, 3))
        np.testing.assert_allclose(p.sum(axis=(2, 3)), 1)
