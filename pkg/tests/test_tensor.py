import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from sarcnet.errors import DimensionError, DomainError, NumericError
from sarcnet.tensor import (
    Parameter,
    conv1d_valid,
    conv1d_valid_backward,
    conv1d_valid_batch,
    finite_diff_grad,
    matmul,
    matmul_backward,
    max_over_time,
    max_over_time_backward,
    relative_error,
    softmax,
    softmax_backward,
)

from .oracles import conv1d_loops

finite_floats = st.floats(-50, 50, allow_nan=False)


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2], [3, 4]])
        np.testing.assert_array_equal(matmul(np.eye(2), a), a)

    def test_hand_expansion(self):
        np.testing.assert_array_equal(matmul(np.array([[1.0, 2], [3, 4]]), np.array([[5.0], [6]])), [[17], [39]])

    def test_zero_annihilates(self):
        assert not matmul(np.zeros((2, 2)), np.arange(6.0).reshape(2, 3)).any()

    def test_shape_mismatch_names_both(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_backward(self, rng):
        a, b, r = rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal((3, 2))
        da, db = matmul_backward(a, b, r)
        assert relative_error(da, finite_diff_grad(lambda x: np.sum(r * (x @ b)), a)) < 1e-8
        assert relative_error(db, finite_diff_grad(lambda x: np.sum(r * (a @ x)), b)) < 1e-8


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_closed_form(self):
        np.testing.assert_allclose(softmax(np.array([math.log(2), 0.0])), [2 / 3, 1 / 3], atol=1e-15)

    def test_overflow_guard(self):
        np.testing.assert_allclose(softmax(np.array([1000.0, 1000.0, 1000.0])), [1 / 3] * 3)

    def test_empty(self):
        with pytest.raises(DomainError):
            softmax(np.array([]))

    def test_masked_entries_exactly_zero(self):
        p = softmax(np.array([1.0, -np.inf, 0.5]))
        assert p[1] == 0.0 and abs(p.sum() - 1) < 1e-12

    @given(hnp.arrays(np.float64, st.integers(1, 12), elements=finite_floats), st.floats(-100, 100))
    def test_properties(self, scores, shift):
        p = softmax(scores)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) < 1e-6
        # argmax preserved up to ties that rounding can create
        assert scores[np.argmax(p)] >= scores.max() - 1e-9
        np.testing.assert_allclose(softmax(scores + shift), p, atol=1e-9)

    def test_backward(self, rng):
        x, r = rng.standard_normal(6), rng.standard_normal(6)
        analytic = softmax_backward(softmax(x), r)
        assert relative_error(analytic, finite_diff_grad(lambda z: np.sum(r * softmax(z)), x)) < 1e-8


class TestConv1d:
    def test_sliding_sums(self):
        out = conv1d_valid(np.array([[1.0], [2.0], [3.0]]), np.ones((1, 2, 1)), np.zeros(1))
        np.testing.assert_array_equal(out, [[3.0], [5.0]])

    def test_zero_sequence_gives_bias(self, rng):
        bias = np.array([0.5, -2.0])
        out = conv1d_valid(np.zeros((6, 3)), rng.standard_normal((2, 3, 3)), bias)
        np.testing.assert_array_equal(out, np.tile(bias, (4, 1)))

    def test_matches_triple_loop(self, rng):
        seq, fil, b = rng.standard_normal((5, 3)), rng.standard_normal((2, 3, 3)), rng.standard_normal(2)
        np.testing.assert_allclose(conv1d_valid(seq, fil, b), conv1d_loops(seq.tolist(), fil.tolist(), b.tolist()),
                                   atol=1e-12, rtol=0)

    @given(st.integers(1, 5), st.integers(0, 11), st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
    def test_matches_triple_loop_property(self, width, extra, dim, n_filters, seed):
        r = np.random.default_rng(seed)
        seq = r.standard_normal((width + extra, dim))
        fil, b = r.standard_normal((n_filters, width, dim)), r.standard_normal(n_filters)
        np.testing.assert_allclose(conv1d_valid(seq, fil, b), conv1d_loops(seq.tolist(), fil.tolist(), b.tolist()),
                                   atol=1e-12, rtol=0)

    def test_too_short(self):
        with pytest.raises(DomainError, match="shorter than filter width"):
            conv1d_valid(np.ones((2, 3)), np.ones((1, 3, 3)), np.zeros(1))

    def test_backward(self, rng):
        seq, fil, b = rng.standard_normal((1, 7, 2)), rng.standard_normal((3, 4, 2)), rng.standard_normal(3)
        r = rng.standard_normal((1, 4, 3))
        _, win = conv1d_valid_batch(seq, fil, b)
        dseq, dfil, db = conv1d_valid_backward(win, fil, r, 7)
        assert relative_error(dseq, finite_diff_grad(lambda x: np.sum(r * conv1d_valid_batch(x, fil, b)[0]), seq)) < 1e-8
        assert relative_error(dfil, finite_diff_grad(lambda x: np.sum(r * conv1d_valid_batch(seq, x, b)[0]), fil)) < 1e-8
        assert relative_error(db, finite_diff_grad(lambda x: np.sum(r * conv1d_valid_batch(seq, fil, x)[0]), b)) < 1e-8


class TestMaxOverTime:
    def test_inspection(self):
        vals, idx = max_over_time(np.array([[1.0, 9], [5, 2]]))
        np.testing.assert_array_equal(vals, [5, 9])
        assert idx == [1, 0]

    def test_single_row(self):
        vals, idx = max_over_time(np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal(vals, [3, 4])
        assert idx == [0, 0]

    def test_tie_goes_to_first(self):
        assert max_over_time(np.array([[7.0], [7.0]]))[1] == [0]

    def test_empty(self):
        with pytest.raises(DomainError):
            max_over_time(np.zeros((0, 3)))

    @given(hnp.arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 5)), elements=finite_floats),
           st.integers(0, 2**31))
    def test_backward_routes_only_to_argmax(self, fmap, seed):
        d = np.random.default_rng(seed).standard_normal(fmap.shape[1])
        _, idx = max_over_time(fmap)
        g = max_over_time_backward(d, idx, fmap.shape[0])
        hit = np.zeros_like(g, dtype=bool)
        hit[idx, np.arange(fmap.shape[1])] = True
        assert np.all(g[~hit] == 0.0)
        np.testing.assert_array_equal(g[idx, np.arange(fmap.shape[1])], d)


class TestFiniteDiff:
    def test_square(self):
        g = finite_diff_grad(lambda x: np.sum(x ** 2), np.array([1.0, 2.0]), 1e-5)
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)

    def test_constant(self):
        assert not finite_diff_grad(lambda x: 3.0, np.ones(4)).any()

    def test_softmax_cross_entropy(self, rng):
        logits, label = rng.standard_normal(5), 2

        def ce(z):
            return -np.log(softmax(z)[label])

        expected = softmax(logits) - np.eye(5)[label]
        np.testing.assert_allclose(finite_diff_grad(ce, logits), expected, atol=1e-6)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda x: np.inf if x[0] < 0 else x[0], np.array([0.0]))

    def test_eps_positive(self):
        with pytest.raises(DomainError):
            finite_diff_grad(lambda x: 0.0, np.ones(1), eps=0.0)


class TestParameter:
    def test_shapes_and_accumulators(self):
        p = Parameter(np.ones((2, 3), dtype=np.float32))
        assert p.grad.shape == p.accum_sq_grad.shape == p.accum_sq_delta.shape == (2, 3)
        assert not p.accum_sq_grad.any() and not p.accum_sq_delta.any()

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            Parameter(np.ones(3), grad=np.ones(2))
