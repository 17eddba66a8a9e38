import numpy as np
import pytest

from hogtrain.linalg import (
    as_matrix,
    axpy_in_place,
    gemm,
    sigmoid,
    sigmoid_deriv_from_output,
    softmax_rows,
)


def naive_gemm(a, b):
    """Triple-loop oracle with explicit per-element summation."""
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


class TestGemm:
    def test_identity(self):
        a = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(gemm(np.eye(3), a), a)

    def test_hand_computed(self):
        a = as_matrix([[1.0, 2.0], [3.0, 4.0]])
        b = as_matrix([[5.0], [6.0]])
        assert np.array_equal(gemm(a, b), [[17.0], [39.0]])

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            m, k, n = rng.integers(1, 17, size=3)
            a = rng.normal(size=(m, k))
            b = rng.normal(size=(k, n))
            assert np.abs(gemm(a, b) - naive_gemm(a, b)).max() <= 1e-12

    def test_transpose_flags_match_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(4, 5))
        c = rng.normal(size=(5, 6))
        d = rng.normal(size=(6, 3))
        assert np.abs(gemm(a, b, transpose_a=True, transpose_b=True) - naive_gemm(a.T, b.T)).max() <= 1e-12
        assert np.abs(gemm(a, c, transpose_a=True) - naive_gemm(a.T, c)).max() <= 1e-12
        assert np.abs(gemm(a, d, transpose_b=True) - naive_gemm(a, d.T)).max() <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            gemm(np.ones((2, 3)), np.ones((4, 2)))
        with pytest.raises(ValueError):
            gemm(np.ones((2, 3)), np.ones((2, 3)), transpose_a=True, transpose_b=True)


class TestSigmoid:
    def test_zero_is_half(self):
        assert sigmoid(as_matrix([[0.0]]))[0, 0] == 0.5

    def test_large_negative_saturates_without_nan(self):
        v = sigmoid(as_matrix([[-100.0]]))[0, 0]
        assert 0.0 < v <= 1e-40
        assert np.isfinite(sigmoid(as_matrix([[-1e4, 1e4]]))).all()

    def test_scalar_value(self):
        assert sigmoid(as_matrix([[1.0]]))[0, 0] == pytest.approx(0.7310585786, abs=1e-10)

    def test_symmetry_property(self):
        rng = np.random.default_rng(3)
        x = rng.normal(scale=5.0, size=(20, 20))
        total = sigmoid(x) + sigmoid(-x)
        assert np.abs(total - 1.0).max() <= 1e-15


class TestSigmoidDeriv:
    def test_maximum_at_half(self):
        assert sigmoid_deriv_from_output(as_matrix([[0.5]]))[0, 0] == 0.25

    def test_saturation_endpoints(self):
        out = sigmoid_deriv_from_output(as_matrix([[0.0, 1.0]]))
        assert np.array_equal(out, [[0.0, 0.0]])

    def test_scalar_value(self):
        v = sigmoid_deriv_from_output(as_matrix([[0.7310585786]]))[0, 0]
        assert v == pytest.approx(0.1966119332, abs=1e-10)


class TestSoftmaxRows:
    def test_equal_values_give_uniform(self):
        out = softmax_rows(as_matrix([[3.0] * 5]))
        assert np.abs(out - 0.2).max() <= 1e-15

    def test_large_logit_is_stable(self):
        out = softmax_rows(as_matrix([[1000.0, 0.0]]))
        assert np.isfinite(out).all()
        assert out[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert out[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_scalar_values(self):
        out = softmax_rows(as_matrix([[1.0, 2.0, 3.0]]))
        expected = [0.09003057, 0.24472847, 0.66524096]
        assert np.abs(out[0] - expected).max() <= 1e-8

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(11)
        out = softmax_rows(rng.normal(scale=10.0, size=(50, 7)))
        assert np.abs(out.sum(axis=1) - 1.0).max() <= 1e-12

    def test_shift_invariance(self):
        rng = np.random.default_rng(12)
        m = rng.normal(size=(10, 4))
        shifted = m + rng.normal(size=(10, 1))
        assert np.abs(softmax_rows(m) - softmax_rows(shifted)).max() <= 1e-12


class TestAxpy:
    def test_zero_scale_keeps_target(self):
        t = as_matrix([[1.0, 2.0], [3.0, 4.0]])
        before = t.copy()
        axpy_in_place(t, np.ones_like(t), 0.0)
        assert np.array_equal(t, before)

    def test_self_cancellation(self):
        t = as_matrix([[1.5, -2.0], [0.25, 8.0]])
        axpy_in_place(t, t.copy(), -1.0)
        assert np.array_equal(t, np.zeros((2, 2)))

    def test_hand_arithmetic(self):
        t = as_matrix([[1.0, 1.0]])
        axpy_in_place(t, as_matrix([[2.0, 4.0]]), 0.5)
        assert np.array_equal(t, [[2.0, 3.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            axpy_in_place(np.ones((2, 2)), np.ones((2, 3)), 1.0)
