import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nuwave import tensor as T
from conftest import central_difference, rel_err


def naive_conv1d(x, w, b, dilation):
    c_out, c_in, k = w.shape
    length = x.shape[1]
    half = (k - 1) // 2
    out = np.zeros((c_out, length))
    for o in range(c_out):
        for l in range(length):
            acc = b[o]
            for i in range(c_in):
                for j in range(k):
                    src = l + (j - half) * dilation
                    if 0 <= src < length:
                        acc += w[o, i, j] * x[i, src]
            out[o, l] = acc
    return out


# ---------------------------------------------------------------- conv1d

def test_conv1d_identity_kernel(np_rng):
    x = np_rng.normal(size=(1, 20))
    out = T.conv1d(T.Tensor(x), T.Tensor(np.ones((1, 1, 1))), T.Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv1d_zero_input_gives_bias():
    b = np.array([0.5, -2.0, 3.0])
    w = np.random.default_rng(0).normal(size=(3, 2, 3))
    out = T.conv1d(T.Tensor(np.zeros((2, 11))), T.Tensor(w), T.Tensor(b), dilation=2)
    np.testing.assert_array_equal(out.data, np.repeat(b[:, None], 11, axis=1))


def test_conv1d_matches_loop_oracle(np_rng):
    x = np_rng.normal(size=(2, 16))
    w = np_rng.normal(size=(3, 2, 3))
    b = np_rng.normal(size=3)
    got = T.conv1d(T.Tensor(x), T.Tensor(w), T.Tensor(b), dilation=4).data
    want = naive_conv1d(x, w, b, 4)
    assert rel_err(got, want) < 1e-12


@settings(max_examples=40, deadline=None)
@given(length=st.integers(1, 40), dilation=st.integers(1, 12), k=st.sampled_from([1, 3, 5]),
       c_in=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_conv1d_same_length_and_oracle(length, dilation, k, c_in, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(c_in, length))
    w = r.normal(size=(2, c_in, k))
    b = r.normal(size=2)
    got = T.conv1d(T.Tensor(x), T.Tensor(w), T.Tensor(b), dilation=dilation).data
    assert got.shape == (2, length)
    np.testing.assert_allclose(got, naive_conv1d(x, w, b, dilation), rtol=1e-12, atol=1e-12)


def test_conv1d_errors():
    x = T.Tensor(np.zeros((2, 5)))
    with pytest.raises(ValueError, match="channels"):
        T.conv1d(x, T.Tensor(np.zeros((1, 3, 3))), T.Tensor(np.zeros(1)))
    with pytest.raises(ValueError, match="odd"):
        T.conv1d(x, T.Tensor(np.zeros((1, 2, 2))), T.Tensor(np.zeros(1)))
    with pytest.raises(ValueError, match="positive extents"):
        T.Tensor(np.zeros((2, 0)))


# ---------------------------------------------------------------- grad

def test_grad_sum_of_squares():
    x = T.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (g,) = T.grad(T.sum(x * x), [x])
    np.testing.assert_array_equal(g, [2.0, 4.0, 6.0])


def test_disconnected_parameter_gets_zero():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    unused = T.Tensor(np.ones((3, 3)), requires_grad=True)
    gx, gu = T.grad(T.sum(T.tanh(x)), [x, unused])
    assert gu.shape == (3, 3) and not gu.any()
    assert gx.any()


def test_grad_rejects_non_scalar():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        T.grad(x * x, [x])


def test_grad_rejects_unknown_op():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    rogue = T.Tensor([3.0, 4.0], True, op="fft", _parents=(x,), _backward=lambda g: (g,))
    with pytest.raises(T.UnsupportedOperationError):
        T.grad(T.sum(rogue), [x])


def test_backward_populates_leaf_grads():
    x = T.Tensor([0.5, -1.0], requires_grad=True)
    T.sum(x * x * x).backward()
    np.testing.assert_allclose(x.grad, 3 * np.array([0.25, 1.0]))


def test_non_finite_values_are_detected():
    with pytest.raises(T.NonFiniteError):
        T.Tensor([1.0, np.nan])
    with pytest.raises(T.NonFiniteError), np.errstate(over="ignore"):
        T.scale(T.Tensor([1e308]), 10.0)


# Each case: builder(list of input tensors) -> scalar, and input shapes.
def _conv_case(ins):
    x, w, b = ins
    return T.sum(T.tanh(T.conv1d(x, w, b, dilation=2)))


GRAD_CASES = {
    "add": (lambda a: T.sum(T.tanh(a[0] + a[1])), [(5,), (5,)]),
    "sub": (lambda a: T.sum(T.tanh(a[0] - a[1])), [(5,), (5,)]),
    "mul": (lambda a: T.sum(a[0] * a[1]), [(5,), (5,)]),
    "scale_neg": (lambda a: T.sum(T.tanh(-(a[0] * 2.5))), [(4,)]),
    "tanh": (lambda a: T.sum(T.tanh(a[0])), [(6,)]),
    "sigmoid": (lambda a: T.sum(T.sigmoid(a[0]) * a[0]), [(6,)]),
    "abs_mean_log": (lambda a: T.log(T.mean(T.abs(a[0])), floor=1e-9), [(7,)]),
    "log": (lambda a: T.sum(T.log(a[0] * a[0] + 1.0)), [(4,)]),
    "linear": (lambda a: T.sum(T.tanh(T.linear(a[0], a[1], a[2]))), [(4,), (3, 4), (3,)]),
    "conv1d": (_conv_case, [(2, 9), (3, 2, 3), (3,)]),
    "channel_bias_slice": (
        lambda a: T.sum(T.tanh(T.channel_slice(T.channel_bias(a[0], a[1]), 1, 3))),
        [(4, 5), (4,)]),
    "interp_reshape": (lambda a: T.sum(T.tanh(T.reshape(T.interp(a[0], 3), (3, 5)))), [(5,)]),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_grad_matches_finite_differences(name):
    build, shapes = GRAD_CASES[name]
    r = np.random.default_rng(zlib.crc32(name.encode()))
    arrays = [r.normal(size=s) for s in shapes]
    tensors = [T.Tensor(a, requires_grad=True) for a in arrays]
    analytic = T.grad(build(tensors), tensors)
    for i, arr in enumerate(arrays):
        def f(v, i=i):
            ins = [T.Tensor(v if j == i else arrays[j]) for j in range(len(arrays))]
            return build(ins).item()
        fd = central_difference(f, arr)
        numeric = np.array([fd[k] for k in range(arr.size)]).reshape(arr.shape)
        assert rel_err(analytic[i], numeric) < 1e-4, (name, i)


def test_log_floor_blocks_gradient():
    x = T.Tensor([0.0, 0.0], requires_grad=True)
    out = T.log(T.mean(T.abs(x)), floor=1e-9)
    assert out.item() == pytest.approx(np.log(1e-9))
    (g,) = T.grad(out, [x])
    assert not g.any()


def test_no_grad_skips_tape():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    with T.no_grad():
        y = T.tanh(x)
    assert not y.requires_grad


# ---------------------------------------------------------------- rng

def test_rng_determinism():
    a, b = T.Rng(9), T.Rng(9)
    np.testing.assert_array_equal(a.normal(100), b.normal(100))
    assert [a.uniform(0, 1) for _ in range(5)] == [b.uniform(0, 1) for _ in range(5)]


def test_rng_state_round_trip():
    a = T.Rng(3)
    a.normal(17)
    a.integers(0, 10)
    b = T.Rng.from_state(a.get_state())
    np.testing.assert_array_equal(a.normal(50), b.normal(50))


def test_normal_moments():
    x = T.randn(T.Rng(2024), (1_000_000,)).data
    assert abs(x.mean()) < 0.01
    assert abs(x.var() - 1.0) < 0.01


def test_uniform_range():
    r = T.Rng(5)
    draws = np.array([T.rand_uniform(r, 0.3, 0.7) for _ in range(100_000)])
    assert draws.min() >= 0.3 and draws.max() <= 0.7


def test_uniform_bounds_checked():
    with pytest.raises(ValueError):
        T.Rng(0).uniform(1.0, 1.0)


# ---------------------------------------------------------------- adam

def test_adam_zero_gradient_is_fixed_point():
    p = T.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    st = T.AdamState.for_params([p])
    before = p.data.copy()
    for _ in range(3):
        T.adam_step([p], [np.zeros((2, 3))], st)
    np.testing.assert_array_equal(p.data, before)
    assert st.step_count == 3


def test_adam_first_step_is_signed_lr():
    g = np.array([0.3, -2.0, 1e-3, -5.0])
    p = T.Tensor(np.zeros(4), requires_grad=True)
    st = T.AdamState.for_params([p], lr=0.01)
    T.adam_step([p], [g], st)
    # m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps)
    expected = -0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p.data, expected, rtol=1e-12)
    np.testing.assert_allclose(np.abs(p.data), 0.01, rtol=1e-4)
    assert (st.second_moment[0] >= 0).all()


def test_adam_default_lr():
    assert T.AdamState().lr == 3e-5


def test_adam_layout_mismatch():
    p = T.Tensor(np.zeros(3), requires_grad=True)
    st = T.AdamState.for_params([p])
    with pytest.raises(ValueError):
        T.adam_step([p], [np.zeros(4)], st)
