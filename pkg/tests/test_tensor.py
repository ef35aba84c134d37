"""Kernel-level tests: hand-checked values, invariants, and determinism."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttfr import tensor
from ttfr.errors import NumericsError, ParameterError, ShapeError


def f32(x):
    return np.asarray(x, dtype=np.float32)


class TestMatmul:
    def test_hand_product(self):
        # [[1,2],[3,4]] @ [[1],[1]]: rows give 1+2=3 and 3+4=7
        out = tensor.matmul(f32([[1, 2], [3, 4]]), f32([[1], [1]]))
        assert out.tolist() == [[3.0], [7.0]]

    def test_identity(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((5, 5)).astype(np.float32)
        assert np.array_equal(tensor.matmul(a, np.eye(5, dtype=np.float32)), a)

    def test_zero_block_annihilates_padded_dim(self):
        # Hand product: third input dim hits an all-zero column block
        a = f32([[1, 2, 0], [3, 4, 0], [0, 0, 0]])
        x = f32([[1], [1], [9]])
        assert tensor.matmul(a, x).tolist() == [[3.0], [7.0], [0.0]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tensor.matmul(f32([[1, 2]]), f32([[1, 2]]))

    def test_matmul_nt_matches_transposed(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 6)).astype(np.float32)
        b = rng.standard_normal((5, 6)).astype(np.float32)
        assert np.array_equal(tensor.matmul_nt(a, b), tensor.matmul(a, tensor.transpose(b)))

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((9, 13)).astype(np.float32)
        b = rng.standard_normal((13, 7)).astype(np.float32)
        assert tensor.matmul(a, b).tobytes() == tensor.matmul(a, b).tobytes()

    def test_non_finite_rejected(self):
        big = np.full((2, 2), 3e38, dtype=np.float32)
        with pytest.raises(NumericsError):
            tensor.matmul(big, big)


class TestPadZeros:
    def test_pad_to_3x3(self):
        out = tensor.pad_zeros(f32([[1, 2], [3, 4]]), 3, 3)
        assert out.tolist() == [[1, 2, 0], [3, 4, 0], [0, 0, 0]]

    def test_same_shape_unchanged(self):
        a = f32([[1, 2], [3, 4]])
        assert np.array_equal(tensor.pad_zeros(a, 2, 2), a)

    def test_single_entry(self):
        assert tensor.pad_zeros(f32([[5]]), 1, 2).tolist() == [[5, 0]]

    def test_shrink_rejected(self):
        with pytest.raises(ShapeError):
            tensor.pad_zeros(f32([[1, 2], [3, 4]]), 1, 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_block_padding_exactness(seed):
    """Padded affine map equals the zero-extended source result exactly.

    matmul's fixed ascending-k order makes the padded product bit-identical
    on the original block, so the 1e-6 relative bound holds trivially.
    """
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 9, size=2)
    m2 = m + rng.integers(0, 6)
    n2 = n + rng.integers(0, 6)
    w = rng.standard_normal((m, n)).astype(np.float32)
    x = rng.standard_normal((n, 1)).astype(np.float32)
    b = rng.standard_normal((m, 1)).astype(np.float32)
    base = tensor.matmul(w, x) + b
    grown = tensor.matmul(tensor.pad_zeros(w, m2, n2), tensor.pad_zeros(x, n2, 1))
    grown = grown + tensor.pad_zeros(b, m2, 1)
    assert np.array_equal(grown, tensor.pad_zeros(base, m2, 1))


class TestSoftmax:
    def test_symmetry(self):
        assert tensor.softmax_rows(f32([[0, 0]])).tolist() == [[0.5, 0.5]]

    def test_large_logit_no_overflow(self):
        out = tensor.softmax_rows(f32([[1000.0, 0.0]]))
        assert out[0, 0] == pytest.approx(1.0)
        assert out[0, 1] == pytest.approx(0.0, abs=1e-30)

    def test_ln2_closed_form(self):
        # softmax([ln 2, 0]) = [2, 1] / 3
        out = tensor.softmax_rows(f32([[math.log(2.0), 0.0]]))
        assert np.allclose(out, [[2 / 3, 1 / 3]], atol=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        a = (rng.standard_normal((5, 17)) * 10).astype(np.float32)
        out = tensor.softmax_rows(a)
        assert np.all(out >= 0) and np.all(out <= 1)
        assert np.abs(out.sum(axis=1) - 1.0).max() <= 1e-6


class TestLayerNorm:
    def test_unit_variance_pair(self):
        # mu=0, biased var=1: output equals input
        out = tensor.layer_norm(f32([1, -1]), f32([1, 1]), f32([0, 0]), eps=0.0)
        assert np.allclose(out, [1, -1], atol=1e-6)

    def test_zero_padded_pair_rescales(self):
        # mu=0, var=(1+1)/4=0.5: the live entries become +-sqrt(2)
        out = tensor.layer_norm(f32([1, -1, 0, 0]), np.ones(4, np.float32),
                                np.zeros(4, np.float32), eps=0.0)
        assert np.allclose(out, [math.sqrt(2), -math.sqrt(2), 0, 0], atol=1e-6)

    def test_constant_input_gives_bias(self):
        out = tensor.layer_norm(f32([3, 3, 3]), f32([2, 2, 2]), f32([5, -1, 0]))
        assert np.allclose(out, [5, -1, 0], atol=1e-4)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            tensor.layer_norm(f32([1, 2]), f32([1]), f32([0, 0]))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_normalizes_mean_and_variance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((4, 64)).astype(np.float32)
        if x.var(axis=1).min() < 0.1:
            return
        d = x.shape[1]
        out = tensor.layer_norm_rows(x, np.ones(d, np.float32), np.zeros(d, np.float32))
        assert np.abs(out.mean(axis=1)).max() <= 1e-5
        assert np.abs(out.var(axis=1) - 1.0).max() <= 1e-3


class TestGelu:
    def test_zero(self):
        assert tensor.gelu(0.0) == 0.0

    def test_asymptote(self):
        assert abs(tensor.gelu(10.0) - 10.0) <= 1e-6

    def test_normative_formula_at_one(self):
        # independent evaluation of the tanh form in double precision
        expected = 0.5 * 1.0 * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (1.0 + 0.044715)))
        assert tensor.gelu(1.0) == pytest.approx(expected, abs=1e-6)
        assert tensor.gelu(1.0) == pytest.approx(0.84119, abs=1e-4)

    def test_matches_double_reference_elementwise(self):
        xs = np.linspace(-6, 6, 101).astype(np.float32)
        ref = [0.5 * float(x) * (1.0 + math.tanh(math.sqrt(2.0 / math.pi)
               * (float(x) + 0.044715 * float(x) ** 3))) for x in xs]
        assert np.allclose(tensor.gelu(xs), ref, atol=1e-5)


class TestRng:
    def test_same_seed_same_stream(self):
        a = tensor.Rng(123)
        b = tensor.Rng(123)
        assert [a.next_u64() for _ in range(32)] == [b.next_u64() for _ in range(32)]

    def test_different_seeds_differ(self):
        assert tensor.Rng(1).next_u64() != tensor.Rng(2).next_u64()

    def test_uniform_in_half_open_unit(self):
        r = tensor.Rng(9)
        us = [r.uniform() for _ in range(1000)]
        assert all(0.0 < u <= 1.0 for u in us)

    def test_below_range(self):
        r = tensor.Rng(5)
        assert all(0 <= r.below(7) < 7 for _ in range(1000))
        with pytest.raises(ParameterError):
            r.below(0)


class TestSampleNormal:
    def test_std_zero_is_constant(self):
        out = tensor.sample_normal(tensor.Rng(1), 2.5, 0.0, 3, 4)
        assert np.all(out == np.float32(2.5))

    def test_same_seed_identical(self):
        a = tensor.sample_normal(tensor.Rng(42), 0.0, 1.0, 8, 8)
        b = tensor.sample_normal(tensor.Rng(42), 0.0, 1.0, 8, 8)
        assert a.tobytes() == b.tobytes()

    def test_moments(self):
        # law-of-large-numbers check on 1e5 draws
        out = tensor.sample_normal(tensor.Rng(7), 0.0, 1.0, 100, 1000)
        assert abs(out.mean()) <= 0.02
        assert abs(out.std() - 1.0) <= 0.02

    def test_negative_std_rejected(self):
        with pytest.raises(ParameterError):
            tensor.sample_normal(tensor.Rng(1), 0.0, -1.0, 2, 2)


def test_kernels_are_pure_under_threads():
    # pure functions over immutable inputs: concurrent calls agree
    from concurrent.futures import ThreadPoolExecutor

    rng = np.random.default_rng(0)
    a = rng.standard_normal((16, 16)).astype(np.float32)
    b = rng.standard_normal((16, 16)).astype(np.float32)
    expected = tensor.matmul(a, b)
    with ThreadPoolExecutor(max_workers=4) as ex:
        results = list(ex.map(lambda _: tensor.matmul(a, b), range(16)))
    assert all(np.array_equal(r, expected) for r in results)
