import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alocc.errors import DimensionError, NonFiniteError, UsageError
from alocc.tensor import (
    Adam,
    AdamState,
    BatchNormState,
    Tape,
    Tensor,
    adam_step,
    backward,
    batch_norm,
    bce_loss,
    check_finite,
    conv2d,
    conv2d_transpose,
    leaky_relu,
    mse_loss,
    no_grad,
    sample_gaussian,
    sigmoid,
    tanh,
)
from oracles import adam_trace, naive_conv2d, naive_conv2d_transpose, numerical_grad, rel_error


# -- conv2d -------------------------------------------------------------------

def test_conv2d_scalar_kernel_scales_input():
    out = conv2d(np.ones((1, 1, 3, 3)), np.full((1, 1, 1, 1), 2.0))
    np.testing.assert_array_equal(out.data, np.full((1, 1, 3, 3), 2.0))


def test_conv2d_identity_diagonal_kernel():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    k = np.array([[[[1.0, 0.0], [0.0, 1.0]]]])
    out = conv2d(x, k)
    assert out.shape == (1, 1, 1, 1)
    assert out.data[0, 0, 0, 0] == 5.0


def test_conv2d_matches_naive_oracle():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    out = conv2d(x, k, stride=2, padding=1)
    ref = naive_conv2d(x.astype(np.float64), k.astype(np.float64), 2, 1)
    assert out.shape == ref.shape == (1, 3, 3, 3)
    np.testing.assert_allclose(out.data, ref, atol=1e-6)


def test_conv2d_errors():
    with pytest.raises(DimensionError):
        conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)))
    with pytest.raises(DimensionError):
        conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))
    with pytest.raises(DimensionError):
        conv2d(np.ones((1, 1, 4, 4)), np.ones((1, 1, 3, 3)), stride=0)


# -- conv2d_transpose -----------------------------------------------------------

def test_conv2d_transpose_single_pixel_broadcast():
    k = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
    out = conv2d_transpose(np.full((1, 1, 1, 1), 2.5), k)
    np.testing.assert_array_equal(out.data, 2.5 * k)


def test_conv2d_transpose_unit_kernel_is_identity():
    x = np.array([[[[1.0, -2.0], [3.5, 4.0]]]])
    out = conv2d_transpose(x, np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("stride,padding,output_padding", [(1, 0, 0), (2, 1, 0), (2, 2, 1), (3, 1, 2)])
def test_conv2d_transpose_matches_scatter_oracle(stride, padding, output_padding):
    rng = np.random.default_rng(stride * 10 + padding)
    x = rng.standard_normal((2, 3, 4, 3))
    k = rng.standard_normal((3, 2, 5, 5))
    out = conv2d_transpose(x, k, stride, padding, output_padding)
    ref = naive_conv2d_transpose(x, k, stride, padding, output_padding)
    np.testing.assert_allclose(out.data, ref, atol=1e-12)


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-6), (np.float64, 1e-12)])
def test_conv_adjoint_identity(dtype, tol):
    rng = np.random.default_rng(1)
    for stride, padding in [(1, 0), (1, 1), (2, 1), (2, 2)]:
        x = rng.standard_normal((2, 3, 8, 8)).astype(dtype)
        k = rng.standard_normal((4, 3, 5, 5)).astype(dtype) * 0.1
        y = rng.standard_normal(conv2d(x, k, stride, padding).shape).astype(dtype)
        op = 1 if (8 + 2 * padding - 5) % stride else 0
        ax = conv2d(x, k, stride, padding).data.astype(np.float64)
        back = conv2d_transpose(y, k, stride, padding, output_padding=op)
        assert back.shape == x.shape
        lhs = float(np.sum(ax * y))
        rhs = float(np.sum(x.astype(np.float64) * back.data))
        # scale-aware dot-product test: |<Ax,y> - <x,A'y>| relative to ||Ax|| ||y||
        assert abs(lhs - rhs) <= tol * np.linalg.norm(ax) * np.linalg.norm(y)


def test_conv2d_transpose_negative_output_rejected():
    with pytest.raises(DimensionError):
        conv2d_transpose(np.ones((1, 1, 1, 1)), np.ones((1, 1, 1, 1)), padding=1)


# -- batch norm ---------------------------------------------------------------

def test_batch_norm_zero_variance_returns_beta():
    x = np.full((4, 1, 2, 2), 7.0)
    st_ = BatchNormState.create(1, np.float64)
    out = batch_norm(x, np.ones(1), np.full(1, 3.0), st_)
    np.testing.assert_allclose(out.data, 3.0)


def test_batch_norm_unit_variance():
    x = np.array([-1.0, 1.0]).reshape(2, 1, 1, 1)
    out = batch_norm(x, np.ones(1), np.zeros(1), BatchNormState.create(1, np.float64))
    expected = np.array([-1.0, 1.0]) / math.sqrt(1 + 1e-6)
    np.testing.assert_allclose(out.data.ravel(), expected, rtol=1e-12)


def test_batch_norm_running_mean_ema():
    state = BatchNormState.create(1, np.float64)
    m1, m2 = 2.0, -4.0
    batch_norm(np.full((2, 1, 2, 2), m1), np.ones(1), np.zeros(1), state)
    batch_norm(np.full((2, 1, 2, 2), m2), np.ones(1), np.zeros(1), state)
    assert state.running_mean[0] == pytest.approx(0.9 * (0.9 * 0 + 0.1 * m1) + 0.1 * m2, abs=1e-12)


def test_batch_norm_eval_uses_running_stats_and_is_pure():
    state = BatchNormState(np.array([1.0]), np.array([4.0]))
    x = np.full((1, 1, 1, 1), 3.0)
    out = batch_norm(x, np.ones(1), np.zeros(1), state, training=False)
    assert out.data.item() == pytest.approx(2.0 / math.sqrt(4 + 1e-6))
    assert state.running_mean[0] == 1.0 and state.running_var[0] == 4.0


def test_batch_norm_channel_mismatch():
    with pytest.raises(DimensionError):
        batch_norm(np.ones((2, 3, 2, 2)), np.ones(2), np.zeros(3), BatchNormState.create(3))


# -- activations and losses ---------------------------------------------------

def test_activation_values():
    assert sigmoid(np.array([0.0])).data[0] == 0.5
    assert tanh(np.array([0.0])).data[0] == 0.0
    assert leaky_relu(np.array([-2.0]), 0.2).data[0] == pytest.approx(-0.4)
    assert leaky_relu(np.array([3.0]), 0.2).data[0] == 3.0


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_activation_ranges(xs):
    x = np.array(xs)
    s, t = sigmoid(x).data, tanh(x).data
    assert np.all((s >= 0) & (s <= 1))
    assert np.all((t >= -1) & (t <= 1))
    small = np.abs(x) < 15
    assert np.all((s[small] > 0) & (s[small] < 1))


def test_mse_loss_examples():
    x = np.array([[1.0, 2.0]])
    assert mse_loss(x, x).item() == 0.0
    assert mse_loss(x, np.zeros((1, 2))).item() == 5.0
    assert mse_loss(np.array([[1.0, 0.0], [0.0, 0.0]]), np.zeros((2, 2))).item() == 0.5
    with pytest.raises(DimensionError):
        mse_loss(np.ones((2, 3)), np.ones((3, 2)))


def test_bce_loss_examples():
    assert bce_loss(np.array([0.5]), 1).item() == pytest.approx(0.693147, abs=1e-6)
    assert bce_loss(np.array([0.5]), 0).item() == pytest.approx(0.693147, abs=1e-6)
    near_one = bce_loss(np.array([1.0], dtype=np.float64), 1).item()
    assert 0 < near_one <= -math.log(1 - 1e-7) + 1e-15
    assert math.isfinite(bce_loss(np.array([0.0]), 1).item())


# -- autodiff -----------------------------------------------------------------

def test_backward_sum():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, [1, 1, 1])


def test_backward_mse_scalar():
    x = Tensor(np.array([2.0]), requires_grad=True)
    backward(mse_loss(x, np.zeros(1)))
    np.testing.assert_allclose(x.grad, [4.0])


def test_grads_accumulate_until_zeroed():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    backward((x * 3.0).sum())
    backward((x * 3.0).sum())
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])
    x.zero_grad()
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, [1.0, 1.0])


def test_backward_requires_taped_scalar():
    with pytest.raises(UsageError):
        backward(Tensor(np.array(1.0)))
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        backward(x * 2.0)
    with no_grad():
        y = (x * 2.0).sum()
    with pytest.raises(UsageError):
        backward(y)


def test_tape_topological_order_and_single_visit():
    x = Tensor(np.ones(3), requires_grad=True)
    y = x * 2.0
    z = y + y  # y used twice, visited once
    loss = z.sum()
    tape = Tape.from_output(loss)
    seqs = [n.seq for n in tape]
    assert seqs == sorted(seqs)
    assert [n.op for n in tape] == ["mul", "add", "sum"]
    backward(loss)
    np.testing.assert_array_equal(x.grad, [4.0, 4.0, 4.0])


def test_check_finite():
    check_finite(Tensor(np.ones(2)))
    with pytest.raises(NonFiniteError):
        check_finite(Tensor(np.array([1.0, np.nan])))


def _gradcheck(build, arrays, tol=1e-5):
    """Compare tape gradients of build(*tensors) against central differences."""
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    backward(build(*tensors))
    analytic = [t.grad for t in tensors]
    with no_grad():
        numeric = numerical_grad(lambda *a: build(*[Tensor(v, dtype=np.float64) for v in a]).item(),
                                 [a.copy() for a in arrays])
    for a, n in zip(analytic, numeric):
        assert rel_error(a, n) < tol


def _projected(t, w):
    return (t * w).sum()


@pytest.mark.parametrize("seed", range(3))
def test_gradcheck_conv_pair(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 5, 5))
    k = rng.standard_normal((3, 2, 3, 3))
    w = rng.standard_normal(conv2d(x, k, 2, 1).shape)
    _gradcheck(lambda a, b: _projected(conv2d(a, b, 2, 1), w), [x, k])
    kt = rng.standard_normal((2, 3, 3, 3))
    wt = rng.standard_normal(conv2d_transpose(x, kt, 2, 1, 1).shape)
    _gradcheck(lambda a, b: _projected(conv2d_transpose(a, b, 2, 1, 1), wt), [x, kt])


def test_gradcheck_batch_norm_train():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 2, 3, 3))
    w = rng.standard_normal(x.shape)
    build = lambda a, g, b: _projected(batch_norm(a, g, b, BatchNormState.create(2, np.float64)), w)  # noqa: E731
    _gradcheck(build, [x, rng.standard_normal(2), rng.standard_normal(2)])


# -- Adam ---------------------------------------------------------------------

def test_adam_first_step_is_lr_times_sign():
    for g in (3.7, -0.02):
        p = Tensor(np.array([1.0]), dtype=np.float64)
        p.grad = np.array([g])
        adam_step([p], AdamState(lr=1e-3))
        assert p.data[0] - 1.0 == pytest.approx(-1e-3 * np.sign(g), rel=1e-4)


def test_adam_zero_grad_leaves_params():
    p = Tensor(np.array([0.3, -0.2]), dtype=np.float64)
    p.grad = np.zeros(2)
    state = AdamState()
    adam_step([p], state)
    np.testing.assert_array_equal(p.data, [0.3, -0.2])
    assert state.step == 1


def test_adam_missing_grad():
    with pytest.raises(UsageError):
        adam_step([Tensor(np.ones(2))], AdamState())


def test_adam_quadratic_trace_matches_reference():
    w = Tensor(np.array([1.0]), requires_grad=True, dtype=np.float64)
    opt = Adam([w], lr=0.1)
    trace = []
    for _ in range(10):
        opt.zero_grad()
        backward((w * w).sum())
        opt.step()
        trace.append(w.data[0])
    ref = adam_trace(lambda v: 2 * v, 1.0, 0.1, 10)
    np.testing.assert_allclose(trace, ref, rtol=1e-12)
    mags = [1.0] + [abs(v) for v in trace]
    assert all(b < a for a, b in zip(mags, mags[1:]))


# -- noise --------------------------------------------------------------------

def test_sample_gaussian_zero_sigma():
    assert not np.any(sample_gaussian((4, 4), 0.0, 3).data)


def test_sample_gaussian_deterministic():
    a = sample_gaussian((5, 7), 0.3, 42).data
    b = sample_gaussian((5, 7), 0.3, 42).data
    assert a.tobytes() == b.tobytes()


def test_sample_gaussian_moments():
    x = sample_gaussian((100_000,), 0.1, 7, dtype=np.float64).data
    assert abs(x.mean()) <= 0.002
    assert 0.098 <= x.std() <= 0.102


def test_sample_gaussian_negative_sigma():
    with pytest.raises(ValueError):
        sample_gaussian((2,), -1.0, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2), st.integers(4, 9))
def test_conv_shape_algebra(stride, cin, padding, size):
    k = np.zeros((2, cin, 3, 3))
    x = np.zeros((1, cin, size, size))
    out = conv2d(x, k, stride, padding)
    assert out.shape[2] == (size + 2 * padding - 3) // stride + 1
    if padding <= 2:
        back = conv2d_transpose(out.data, np.zeros((2, cin, 3, 3)), stride, padding)
        assert back.shape[2] == (out.shape[2] - 1) * stride - 2 * padding + 3
