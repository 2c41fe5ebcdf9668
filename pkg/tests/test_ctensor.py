"""Complex tensor kernels against hand values and naive-loop oracles."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvnn.ctensor import CTensor, conv2d, elementwise, matmul, modulus_arg
from cvnn.errors import DimensionError, SingularityError

finite_complex = st.complex_numbers(
    min_magnitude=0, max_magnitude=1e6, allow_nan=False, allow_infinity=False
)


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.complex128)
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


def naive_conv2d(x, k, stride=(1, 1)):
    h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    sh, sw = stride
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    out = np.zeros((ho, wo, cout), dtype=np.complex128)
    for p in range(ho):
        for q in range(wo):
            for o in range(cout):
                for u in range(kh):
                    for v in range(kw):
                        for c in range(cin):
                            out[p, q, o] += x[p * sh + u, q * sw + v, c] * k[u, v, c, o]
    return out


class TestElementwise:
    def test_hand_product(self):
        out = elementwise("mul", CTensor([1 + 2j]), CTensor([3 + 4j]))
        np.testing.assert_allclose(out.array, [-5 + 10j])

    def test_z_times_conj_is_modulus_squared(self):
        z = CTensor([3 + 4j])
        out = z * z.conj()
        np.testing.assert_allclose(out.array, [25 + 0j])

    def test_conj_involution_exact(self):
        z = CTensor([3 - 2j, 0.25 + 1e-9j])
        assert np.all(z.conj().conj().array == z.array)

    @given(st.lists(finite_complex, min_size=1, max_size=8),
           st.lists(finite_complex, min_size=1, max_size=8))
    def test_conj_distributes(self, za, zb):
        n = min(len(za), len(zb))
        a, b = np.array(za[:n]), np.array(zb[:n])
        np.testing.assert_allclose(np.conj(a * b), np.conj(a) * np.conj(b), rtol=1e-15, atol=1e-30)
        assert np.all(np.conj(a + b) == np.conj(a) + np.conj(b))
        assert np.all(np.conj(a - b) == np.conj(a) - np.conj(b))

    def test_z_conj_z_real(self):
        rng = np.random.default_rng(0)
        z = CTensor(rng.standard_normal(64) + 1j * rng.standard_normal(64))
        prod = z * z.conj()
        assert np.max(np.abs(prod.array.imag)) < 1e-12

    def test_scalar_operand_and_scale(self):
        z = CTensor([1 + 1j, 2 + 0j])
        np.testing.assert_allclose((z + 1).array, [2 + 1j, 3 + 0j])
        np.testing.assert_allclose(elementwise("scale", z, 2j).array, [-2 + 2j, 4j])

    def test_exp_and_neg(self):
        z = CTensor([1j * np.pi])
        np.testing.assert_allclose(elementwise("exp", z).array, [-1 + 0j], atol=1e-15)
        np.testing.assert_allclose((-z).array, [-1j * np.pi])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            elementwise("add", CTensor([1, 2]), CTensor([1, 2, 3]))

    def test_division_by_zero_names_index(self):
        with pytest.raises(SingularityError, match="index 2"):
            elementwise("div", CTensor([1, 1, 1]), CTensor([1, 2, 0]))


class TestModulusArg:
    def test_unit_imaginary(self):
        mod, arg = modulus_arg(CTensor([1j]))
        np.testing.assert_allclose(mod.array.real, [1.0])
        np.testing.assert_allclose(arg.array.real, [np.pi / 2])

    def test_polar_conversion(self):
        mod, arg = modulus_arg(CTensor([1 + 1j]))
        np.testing.assert_allclose(mod.array.real, [np.sqrt(2)])
        np.testing.assert_allclose(arg.array.real, [np.pi / 4])

    def test_origin_convention(self):
        mod, arg = modulus_arg(CTensor([0j, complex(-0.0, 0.0)]))
        assert np.all(mod.array == 0)
        assert np.all(arg.array == 0)

    def test_range_is_half_open(self):
        _, arg = modulus_arg(CTensor([-1 + 0j, complex(-1, -0.0)]))
        np.testing.assert_allclose(arg.array.real, [np.pi, np.pi])

    def test_outputs_flagged_real(self):
        mod, arg = modulus_arg(CTensor([2 - 3j]))
        assert mod.real_only and arg.real_only


class TestMatmul:
    def test_identity(self):
        a = CTensor([[1 + 2j, 3 - 1j], [0 + 1j, 2 + 2j]])
        eye = CTensor(np.eye(2))
        assert (matmul(eye, a).array == a.array).all()

    def test_i_squared(self):
        out = matmul(CTensor([[1j]]), CTensor([[1j]]))
        np.testing.assert_allclose(out.array, [[-1 + 0j]])

    def test_against_naive_loops(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            a = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
            b = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
            got = matmul(CTensor(a), CTensor(b)).array
            want = naive_matmul(a, b)
            np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_large_random_against_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        b = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        got = matmul(CTensor(a), CTensor(b)).array
        want = naive_matmul(a, b)
        assert np.max(np.abs(got - want)) / np.max(np.abs(want)) < 1e-12

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            matmul(CTensor(np.ones((2, 3))), CTensor(np.ones((2, 3))))


class TestConv2d:
    def test_one_by_one_identity(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 4, 1)) + 1j * rng.standard_normal((4, 4, 1))
        k = np.ones((1, 1, 1, 1), dtype=np.complex128)
        out = conv2d(CTensor(x), CTensor(k))
        np.testing.assert_allclose(out.array, x)

    def test_all_ones_with_i_kernel(self):
        x = CTensor(np.ones((2, 2, 1)))
        k = CTensor(np.full((2, 2, 1, 1), 1j))
        out = conv2d(x, k)
        np.testing.assert_allclose(out.array, [[[4j]]])

    def test_against_naive_loops(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((5, 5, 2)) + 1j * rng.standard_normal((5, 5, 2))
        k = rng.standard_normal((3, 3, 2, 1)) + 1j * rng.standard_normal((3, 3, 2, 1))
        got = conv2d(CTensor(x), CTensor(k)).array
        want = naive_conv2d(x, k)
        assert np.max(np.abs(got - want)) / np.max(np.abs(want)) < 1e-12

    def test_strided_against_naive_loops(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((8, 7, 2)) + 1j * rng.standard_normal((8, 7, 2))
        k = rng.standard_normal((2, 3, 2, 3)) + 1j * rng.standard_normal((2, 3, 2, 3))
        got = conv2d(CTensor(x), CTensor(k), stride=(2, 2)).array
        want = naive_conv2d(x, k, (2, 2))
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("ksize", [1, 2, 3, 4, 5])
    def test_same_padding_preserves_shape(self, ksize):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5, 5, 1)) + 0j
        k = rng.standard_normal((ksize, ksize, 1, 2)) + 0j
        out = conv2d(CTensor(x), CTensor(k), padding="same")
        assert out.shape == (5, 5, 2)

    def test_valid_output_extent(self):
        x = CTensor(np.ones((7, 6, 1)))
        k = CTensor(np.ones((3, 2, 1, 1)))
        out = conv2d(x, k, stride=(2, 2))
        assert out.shape == ((7 - 3) // 2 + 1, (6 - 2) // 2 + 1, 1)

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError):
            conv2d(CTensor(np.ones((2, 2, 1))), CTensor(np.ones((3, 3, 1, 1))))


class TestCTensorType:
    def test_flat_is_row_major(self):
        t = CTensor([[1, 2], [3, 4]])
        np.testing.assert_allclose(t.flat, [1, 2, 3, 4])

    def test_shape_product_matches_data(self):
        t = CTensor(np.zeros((2, 3, 4)))
        assert int(np.prod(t.shape)) == t.flat.shape[0]

    def test_real_only_enforced(self):
        with pytest.raises(DimensionError):
            CTensor([1 + 1j], real_only=True)

    def test_f32_dtype(self):
        t = CTensor([1 + 1j], dtype=np.complex64)
        assert t.dtype == np.complex64
