import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feasprox.operators import (BlurOp, BlurSaturateOp, CountingOperator, DownsampleOp,
                                HdrClipOp, IdentityOp, MagnitudeOp, MaskOp, MatrixOp,
                                OperatorSpec, SquareOp, as_matrix, build_operator,
                                gaussian_kernel)


def test_identity_apply_vjp_jvp():
    op = IdentityOp(3)
    assert np.array_equal(op.apply([1, 2, 3]), [1, 2, 3])
    assert np.array_equal(IdentityOp(2).vjp([7, 8], [1, -2]), [1, -2])
    assert np.array_equal(IdentityOp(2).jvp([7, 8], [0, 0]), [0, 0])


def test_mask_selects_and_scatters():
    op = MaskOp(3, [0, 2])
    assert np.array_equal(op.apply([5, 6, 7]), [5, 7])
    assert np.array_equal(op.vjp([5, 6, 7], [2.5, -1.0]), [2.5, 0.0, -1.0])
    assert np.array_equal(MaskOp.from_bitmap([[1, 0], [0, 1]]).apply([1, 2, 3, 4]), [1, 4])


def test_hdr_clip_pointwise():
    op = HdrClipOp(2, gain=2.0)
    assert np.allclose(op.apply([0.3, 0.8]), [0.6, 1.0])
    assert np.allclose(op.jvp([0.3, 0.8], [1.0, 1.0]), [2.0, 0.0])


def test_square_derivatives_match_finite_differences():
    op = SquareOp(2)
    x, r, h = np.array([1.0, 2.0]), np.array([1.0, 1.0]), 1e-5
    # central differences of <r, A(x)> give [2.0000000000131, 4.0000000000262]
    fd = [(r @ op.apply(x + h * e) - r @ op.apply(x - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(op.vjp(x, r), [2.0, 4.0])
    assert np.allclose(op.vjp(x, r), fd, atol=1e-9)
    # Richardson-extrapolated forward differences of A along g
    g = np.array([1.0, 1.0])
    d = lambda s: (op.apply(x + s * g) - op.apply(x)) / s
    richardson = 2 * d(1e-4) - d(2e-4)
    assert np.allclose(op.jvp(x, g), [2.0, 4.0])
    assert np.allclose(op.jvp(x, g), richardson, atol=1e-7)


def test_matrix_jvp_is_product():
    H = np.arange(6.0).reshape(2, 3)
    g = np.array([1.0, -1.0, 0.5])
    assert np.allclose(MatrixOp(H).jvp(np.zeros(3), g), H @ g)


def test_fd_probe_on_square():
    assert np.allclose(SquareOp(1).fd_probe([1.0], [1.0], 0.5), [1.25])


def test_fd_probe_is_exact_for_linear():
    rng = np.random.default_rng(0)
    H = rng.normal(size=(4, 6))
    op = MatrixOp(H)
    x, g = rng.normal(size=6), rng.normal(size=6)
    eta = 1e-3
    assert np.allclose(op.fd_probe(x, g, eta), eta * op.jvp(x, g), rtol=1e-10, atol=1e-15)


def test_fd_probe_error_halves_with_eta():
    op = SquareOp(5)
    rng = np.random.default_rng(1)
    x, g = rng.normal(size=5), rng.normal(size=5)
    etas = np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3])
    errs = [np.linalg.norm(op.fd_probe(x, g, e) / e - op.jvp(x, g)) for e in etas]
    slope = np.polyfit(np.log(etas), np.log(errs), 1)[0]
    assert 0.95 < slope < 1.05


def test_downsample_averages_blocks():
    op = build_operator(OperatorSpec("downsample", 4, {"factor": 2}))
    assert op.output_dim == 2
    assert np.allclose(op.apply([1, 3, 5, 7]), [2, 6])


def test_circular_blur_small_kernel():
    op = build_operator(OperatorSpec("blur", 4, {"kernel": [0.25, 0.5, 0.25]}))
    assert np.allclose(op.apply([1, 0, 0, 0]), [0.5, 0.25, 0.0, 0.25])


def test_blur_is_convolution_not_correlation():
    op = BlurOp((5,), [0.0, 0.0, 1.0, 0.5, 0.0])
    # the kernel's right tap shifts mass forward under convolution
    assert np.allclose(op.apply([1, 0, 0, 0, 0]), [1.0, 0.5, 0.0, 0.0, 0.0])


def test_magnitude_of_complex_pair():
    op = build_operator(OperatorSpec("magnitude", 2, {"matrix": np.eye(2)[[0, 1]].reshape(2, 2)}))
    assert np.allclose(op.apply([3, 4]), [5.0])
    zero = MagnitudeOp(np.eye(2))
    assert np.array_equal(zero.vjp([0.0, 0.0], [1.0]), [0.0, 0.0])


def test_gaussian_kernel_normalised():
    k = gaussian_kernel(1.5, 9)
    assert k.shape == (9,) and np.isclose(k.sum(), 1.0) and np.allclose(k, k[::-1])
    assert np.isclose(gaussian_kernel(1.0, 5, ndim=2).sum(), 1.0)


def _random_linear(draw_seed):
    rng = np.random.default_rng(draw_seed)
    n = 12
    ops = [IdentityOp(n), MaskOp(n, rng.choice(n, 6, replace=False)), BlurOp((n,), gaussian_kernel(1.2, 5)),
           DownsampleOp((n,), 3), BlurOp((3, 4), gaussian_kernel(0.8, 3, ndim=2)),
           MatrixOp(rng.normal(size=(5, n)))]
    return rng, ops


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linear_operators_are_linear_and_adjoint(seed, a, b):
    rng, ops = _random_linear(seed)
    for op in ops:
        x, z = rng.normal(size=op.input_dim), rng.normal(size=op.input_dim)
        r = rng.normal(size=op.output_dim)
        assert np.allclose(op.apply(a * x + b * z), a * op.apply(x) + b * op.apply(z), atol=1e-12)
        assert np.isclose(op.apply(x) @ r, x @ op.vjp(x, r), rtol=1e-12, atol=1e-12)
        assert np.allclose(op.jvp(x, z), op.apply(z), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_nonlinear_vjp_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    n = 10
    ops = [SquareOp(n), BlurSaturateOp((n,), gaussian_kernel(1.0, 5), 1.5),
           MagnitudeOp(rng.normal(size=(2 * n, n))), HdrClipOp(n, 2.0)]
    for op in ops:
        x = 0.3 * rng.normal(size=n)
        r, g = rng.normal(size=op.output_dim), rng.normal(size=n)
        h = 1e-6
        fd = r @ (op.apply(x + h * g) - op.apply(x - h * g)) / (2 * h)
        assert np.isclose(fd, op.vjp(x, r) @ g, rtol=1e-5, atol=1e-6)


def test_blur_saturate_jvp_falls_back_to_probe():
    op = BlurSaturateOp((8,), gaussian_kernel(1.0, 3), 1.0)
    assert not op.has_exact_jvp
    x, g = np.linspace(-1, 1, 8), np.ones(8)
    assert np.allclose(op.jvp(x, g), op.fd_probe(x, g, op.default_eta) / op.default_eta)


def test_counting_operator_tallies_calls():
    op = CountingOperator(SquareOp(3))
    x = np.ones(3)
    ax = op.apply(x)
    op.vjp(x, x)
    op.jvp(x, x)
    op.fd_probe(x, x, 1e-3, ax=ax)
    op.fd_probe(x, x, 1e-3)
    assert op.counts == {"apply": 2, "vjp": 1, "jvp": 1, "probe": 2}
    op.reset()
    assert sum(op.counts.values()) == 0


def test_as_matrix_reproduces_apply():
    op = BlurOp((6,), gaussian_kernel(1.0, 3))
    x = np.arange(6.0)
    assert np.allclose(as_matrix(op) @ x, op.apply(x))
    with pytest.raises(ValueError):
        as_matrix(SquareOp(2))


def test_shape_errors():
    with pytest.raises(ValueError):
        IdentityOp(3).apply([1.0, 2.0])
    with pytest.raises(ValueError):
        IdentityOp(2).vjp([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        build_operator(OperatorSpec("fourier", 4, {}))
    with pytest.raises(ValueError):
        build_operator(OperatorSpec("blur", 4, {"shape": (3,)}))
    with pytest.raises(ValueError):
        SquareOp(1).fd_probe([1.0], [1.0], 0.0)


def test_mask_rejects_boolean_keep():
    with pytest.raises(ValueError):
        MaskOp(3, np.array([True, False, True]))
