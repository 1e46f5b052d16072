"""Tensor-core numeric kernels, checked on both backends."""

import numpy as np
import pytest

from danube import kernels
from danube.errors import ConfigError, ShapeError
from danube.quant import QuantType, dequantize_rows, quantize_rows_q8_0
from danube.tensor import RopeParams, Tensor, matmul, rms_norm, rope_apply, silu, softmax_rows

RNG = np.random.default_rng(1234)


class TestMatmul:
    def test_identity(self, lane):
        a = np.ones((1, 4), dtype=np.float32)
        b = Tensor.from_f32(np.eye(4, dtype=np.float32))
        assert np.array_equal(matmul(a, b), np.ones((1, 4), dtype=np.float32))

    def test_zero_annihilation(self, lane):
        a = np.zeros((2, 8), dtype=np.float32)
        b = Tensor.from_f32(RNG.standard_normal((2, 8)).astype(np.float32))
        assert np.array_equal(matmul(a, b), np.zeros((2, 2), dtype=np.float32))

    def test_q8_0_matches_dequant_oracle(self, lane):
        a = RNG.standard_normal((3, 64)).astype(np.float32)
        w = RNG.standard_normal((5, 64)).astype(np.float32)
        b = Tensor.from_f32(w, QuantType.Q8_0)
        got = matmul(a, b)
        oracle = a.astype(np.float64) @ b.to_f32().astype(np.float64).T
        assert np.allclose(got, oracle, rtol=1e-6, atol=1e-7)

    def test_q4_0_matches_dequant_oracle(self, lane):
        a = RNG.standard_normal((4, 128)).astype(np.float32)
        b = Tensor.from_f32(RNG.standard_normal((6, 128)).astype(np.float32), QuantType.Q4_0)
        oracle = a.astype(np.float64) @ b.to_f32().astype(np.float64).T
        assert np.allclose(matmul(a, b), oracle, rtol=1e-6, atol=1e-7)

    def test_f16_weights(self, lane):
        a = RNG.standard_normal((2, 16)).astype(np.float32)
        w = RNG.standard_normal((3, 16)).astype(np.float32)
        b = Tensor.from_f32(w, QuantType.F16)
        oracle = a @ w.astype(np.float16).astype(np.float32).T
        assert np.allclose(matmul(a, b), oracle, rtol=1e-6)

    def test_dimension_mismatch(self, lane):
        a = np.ones((2, 8), dtype=np.float32)
        b = Tensor.from_f32(np.ones((2, 4), dtype=np.float32))
        with pytest.raises(ShapeError):
            matmul(a, b)

    def test_quantized_k_not_divisible(self):
        from danube.errors import FormatError

        with pytest.raises(FormatError):
            Tensor.from_f32(np.ones((2, 20), dtype=np.float32), QuantType.Q8_0)

    def test_thread_count_invariance(self, lane):
        a = RNG.standard_normal((7, 96)).astype(np.float32)
        b = Tensor.from_f32(RNG.standard_normal((9, 96)).astype(np.float32), QuantType.Q8_0)
        bf = Tensor.from_f32(RNG.standard_normal((9, 96)).astype(np.float32))
        results = []
        for n in (1, 2, 8):
            kernels.set_num_threads(n)
            results.append((matmul(a, b), matmul(a, bf)))
        for rq, rf in results[1:]:
            assert np.array_equal(rq, results[0][0])
            assert np.array_equal(rf, results[0][1])


class TestRmsNorm:
    def test_unit_rms(self, lane):
        x = np.array([[1.0, 1.0, 1.0, 1.0]], dtype=np.float32)
        w = np.ones(4, dtype=np.float32)
        assert np.allclose(rms_norm(x, w, 0.0), x)

    def test_scale_invariance_at_zero_eps(self, lane):
        x = np.array([[2.0, 2.0, 2.0, 2.0]], dtype=np.float32)
        w = np.ones(4, dtype=np.float32)
        assert np.allclose(rms_norm(x, w, 0.0), np.ones((1, 4)))

    @pytest.mark.parametrize("alpha", [2.0, 10.0, 100.0])
    def test_scale_invariance_random(self, lane, alpha):
        x = RNG.standard_normal((3, 32)).astype(np.float32)
        w = RNG.standard_normal(32).astype(np.float32)
        assert np.allclose(rms_norm(alpha * x, w, 0.0), rms_norm(x, w, 0.0), atol=1e-5)

    def test_float64_oracle(self, lane):
        x = RNG.standard_normal((1, 3840)).astype(np.float32)
        w = RNG.standard_normal(3840).astype(np.float32)
        got = rms_norm(x, w, 1e-5)
        x64 = x.astype(np.float64)
        oracle = x64 / np.sqrt((x64 * x64).mean(axis=-1, keepdims=True) + 1e-5) * w
        assert np.allclose(got, oracle, rtol=1e-6, atol=1e-6)

    def test_length_mismatch(self, lane):
        with pytest.raises(ShapeError):
            rms_norm(np.ones((1, 4), dtype=np.float32), np.ones(3, dtype=np.float32), 1e-5)


class TestSoftmax:
    def test_uniform(self, lane):
        out = softmax_rows(np.zeros((1, 4), dtype=np.float32))
        assert np.allclose(out, 0.25)

    def test_mask_and_overflow(self, lane):
        out = softmax_rows(np.array([[1000.0, -np.inf]], dtype=np.float32))
        assert np.allclose(out, [[1.0, 0.0]])

    def test_float64_oracle(self, lane):
        x = (RNG.standard_normal((5, 100)) * 10).astype(np.float32)
        x64 = x.astype(np.float64)
        e = np.exp(x64 - x64.max(axis=-1, keepdims=True))
        oracle = e / e.sum(axis=-1, keepdims=True)
        assert np.allclose(softmax_rows(x), oracle, atol=1e-6)

    def test_rows_sum_to_one(self, lane):
        x = (RNG.standard_normal((20, 64)) * 50).astype(np.float32)
        assert np.allclose(softmax_rows(x).sum(axis=-1), 1.0, atol=1e-6)

    def test_shift_invariance(self, lane):
        x = RNG.standard_normal((4, 32)).astype(np.float32)
        for c in (1.0, 100.0, -50.0):
            assert np.allclose(softmax_rows(x + c), softmax_rows(x), atol=1e-6)

    def test_argmax_preserved(self, lane):
        x = RNG.standard_normal((16, 40)).astype(np.float32)
        assert np.array_equal(
            np.argmax(softmax_rows(x), axis=-1), np.argmax(x, axis=-1)
        )


class TestSilu:
    def test_zero(self, lane):
        assert silu(np.zeros(3, dtype=np.float32))[0] == 0.0

    def test_large_positive(self, lane):
        got = silu(np.array([20.0], dtype=np.float32))[0]
        assert abs(got - 20.0 / (1.0 + np.exp(-20.0))) < 1e-6

    def test_float64_oracle(self, lane):
        x = RNG.standard_normal(1000).astype(np.float32)
        x64 = x.astype(np.float64)
        assert np.allclose(silu(x), x64 / (1.0 + np.exp(-x64)), atol=1e-6)


class TestRope:
    PARAMS = RopeParams(theta=100000.0, head_size=8)

    def test_position_zero_identity(self, lane):
        x = RNG.standard_normal((2, 3, 8)).astype(np.float32)
        out = rope_apply(x, [0, 0, 0], self.PARAMS)
        assert np.array_equal(out, x)

    def test_single_pair_analytic(self, lane):
        # head_size 2: pair (1, 0) at position m -> (cos m, sin m)
        params = RopeParams(theta=123.0, head_size=2)
        for m in (1, 5, 17):
            x = np.array([[[1.0, 0.0]]], dtype=np.float32)
            out = rope_apply(x, [m], params)
            assert np.allclose(out, [[[np.cos(m), np.sin(m)]]], atol=1e-6)

    def test_norm_preserved_per_pair(self, lane):
        x = RNG.standard_normal((4, 6, 8)).astype(np.float32)
        out = rope_apply(x, list(range(6)), self.PARAMS)
        for i in range(4):
            n_in = np.hypot(x[:, :, i], x[:, :, i + 4])
            n_out = np.hypot(out[:, :, i], out[:, :, i + 4])
            assert np.allclose(n_in, n_out, atol=1e-6)

    def test_relative_position_dot_product(self, lane):
        q = RNG.standard_normal((1, 1, 8)).astype(np.float32)
        k = RNG.standard_normal((1, 1, 8)).astype(np.float32)
        d1 = np.dot(
            rope_apply(q, [7], self.PARAMS).ravel(),
            rope_apply(k, [3], self.PARAMS).ravel(),
        )
        d2 = np.dot(
            rope_apply(q, [12], self.PARAMS).ravel(),
            rope_apply(k, [8], self.PARAMS).ravel(),
        )
        assert abs(d1 - d2) < 1e-5

    def test_relative_shift_invariance(self, lane):
        q = RNG.standard_normal((2, 1, 8)).astype(np.float32)
        k = RNG.standard_normal((2, 1, 8)).astype(np.float32)
        base = [
            np.dot(rope_apply(q, [m], self.PARAMS).ravel(), rope_apply(k, [n], self.PARAMS).ravel())
            for m, n in [(9, 4), (30, 25), (104, 99)]
        ]
        assert max(base) - min(base) < 1e-5

    def test_odd_head_size_rejected(self):
        with pytest.raises(ConfigError):
            RopeParams(theta=100.0, head_size=7)


def test_vec_dot_quant_long_rows(lane):
    from danube.quant import vec_dot_quant

    for k in (32, 320, 10240):
        a = RNG.standard_normal(k).astype(np.float32)
        w = RNG.standard_normal(k).astype(np.float32)
        row = quantize_rows_q8_0(w.reshape(1, -1))[0]
        oracle = float(
            a.astype(np.float64)
            @ dequantize_rows(row.reshape(1, -1), QuantType.Q8_0, k)[0].astype(np.float64)
        )
        got = vec_dot_quant(a, row, QuantType.Q8_0)
        assert abs(got - oracle) <= 1e-6 * max(1.0, abs(oracle))


def test_backend_reports_name():
    assert kernels.backend() in ("numpy", "numba")
