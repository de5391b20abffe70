import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cslr import functional as F
from cslr.errors import DimensionError, SequenceTooShortError, UninitializedStatsError
from cslr.gradcheck import check_gradients, leaf
from cslr.tensor import Tensor
from conftest import SEEDS

KERNEL_TOL = 1e-5


# -- softmax / layer norm --------------------------------------------------

def test_softmax_uniform_row():
    np.testing.assert_allclose(F.softmax_rows(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3])


def test_softmax_large_logits_do_not_overflow():
    out = F.softmax_rows(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-300)


@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    np.testing.assert_allclose(F.softmax_rows(Tensor(x)).data.sum(axis=1), 1.0, atol=1e-12)


def test_log_softmax_matches_log_of_softmax(rng):
    x = Tensor(rng.normal(size=(4, 6)) * 10)
    np.testing.assert_allclose(F.log_softmax(x).data, np.log(F.softmax(x).data), atol=1e-12)


def test_layer_norm_constant_row_is_zero():
    out = F.layer_norm(Tensor(np.full((2, 5), 3.0)), np.ones(5), np.zeros(5))
    np.testing.assert_array_equal(out.data, 0.0)


def test_layer_norm_normalised_row_is_fixed():
    out = F.layer_norm(Tensor([[1.0, -1.0]]), np.ones(2), np.zeros(2), eps=1e-12)
    np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-10)


# -- conv / pool -----------------------------------------------------------

def test_conv1d_unit_kernel_is_identity(rng):
    x = rng.normal(size=(7, 3))
    out = F.conv1d(Tensor(x), np.eye(3)[None])
    np.testing.assert_array_equal(out.data, x)


def test_conv1d_same_padded_average():
    x = Tensor(np.array([[1.0], [2.0], [3.0], [4.0]]))
    out = F.conv1d(x, np.full((3, 1, 1), 1 / 3))
    np.testing.assert_allclose(out.data[:, 0], [1.0, 2.0, 3.0, 7 / 3], rtol=1e-15)


def test_conv1d_stride_and_valid_lengths():
    x = Tensor(np.ones((40, 2)))
    assert F.conv1d(x, np.ones((3, 2, 4)), stride=2).shape == (20, 4)
    assert F.conv1d(x, np.ones((3, 2, 4)), padding=0).shape == (38, 4)
    with pytest.raises(SequenceTooShortError):
        F.conv1d(Tensor(np.ones((2, 2))), np.ones((5, 2, 1)), padding=0)


def test_conv1d_rejects_channel_mismatch():
    with pytest.raises(DimensionError):
        F.conv1d(Tensor(np.ones((4, 3))), np.ones((3, 2, 1)))


def test_depthwise_unit_kernel_is_identity(rng):
    x = rng.normal(size=(6, 4))
    np.testing.assert_array_equal(F.depthwise_conv1d(Tensor(x), np.ones((1, 4))).data, x)


def test_depthwise_channels_are_independent(rng):
    x = rng.normal(size=(8, 2))
    k = rng.normal(size=(3, 2))
    base = F.depthwise_conv1d(Tensor(x), k).data
    x2 = x.copy()
    x2[:, 1] += rng.normal(size=8)
    moved = F.depthwise_conv1d(Tensor(x2), k).data
    np.testing.assert_array_equal(moved[:, 0], base[:, 0])
    assert not np.allclose(moved[:, 1], base[:, 1])


def test_maxpool_shapes_and_values():
    assert F.maxpool1d(Tensor(np.zeros((10, 3))), 2, 2).shape == (5, 3)
    out = F.maxpool1d(Tensor(np.array([[1.0], [3.0], [2.0], [2.0]])), 2, 2)
    np.testing.assert_array_equal(out.data[:, 0], [3.0, 2.0])


def test_maxpool_tie_routes_gradient_to_first():
    x = leaf([[5.0], [5.0]])
    F.maxpool1d(x, 2, 2).sum().backward()
    np.testing.assert_array_equal(x.grad[:, 0], [1.0, 0.0])


def test_maxpool_too_short():
    with pytest.raises(SequenceTooShortError):
        F.maxpool1d(Tensor(np.zeros((1, 2))), 2, 2)


# -- activations -----------------------------------------------------------

def test_relu_values():
    np.testing.assert_array_equal(F.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])


def test_glu_zero_gate_halves():
    first = np.array([[2.0, -4.0]])
    out = F.glu(Tensor(np.concatenate([first, np.zeros((1, 2))], axis=1)))
    np.testing.assert_array_equal(out.data, first * 0.5)


def test_glu_odd_channels():
    with pytest.raises(DimensionError):
        F.glu(Tensor(np.ones((2, 3))))


def test_gelu_gradient_at_points():
    x = leaf([-2.0, 0.0, 3.0])
    assert max(check_gradients(lambda: F.gelu(x), [x], projection=np.ones(3)).values()) < KERNEL_TOL


def test_sigmoid_is_stable_for_large_inputs():
    out = F.sigmoid(Tensor([-800.0, 800.0])).data
    np.testing.assert_array_equal(out, [0.0, 1.0])


# -- batch norm ------------------------------------------------------------

def test_batch_norm_constant_input_is_zero():
    st_ = F.BatchNormState(3)
    out = F.batch_norm1d(Tensor(np.full((2, 4, 3), 7.0)), np.ones(3), np.zeros(3), st_, True)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_batch_norm_train_moments(rng):
    x = rng.normal(3.0, 2.5, size=(4, 9, 5))
    st_ = F.BatchNormState(5, eps=0.0)
    out = F.batch_norm1d(Tensor(x), np.ones(5), np.zeros(5), st_, True).data
    np.testing.assert_allclose(out.mean(axis=(0, 1)), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.var(axis=(0, 1)), 1.0, atol=1e-6)


def test_batch_norm_masked_frames_are_ignored(rng):
    x = rng.normal(size=(2, 6, 3))
    mask = np.ones((2, 6, 1))
    mask[1, 4:] = 0
    a = F.batch_norm1d(Tensor(x), np.ones(3), np.zeros(3), F.BatchNormState(3), True, mask).data
    x2 = x.copy()
    x2[1, 4:] = 1e6
    b = F.batch_norm1d(Tensor(x2), np.ones(3), np.zeros(3), F.BatchNormState(3), True, mask).data
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_array_equal(a[1, 4:], 0.0)


def test_batch_norm_eval_before_update():
    with pytest.raises(UninitializedStatsError):
        F.batch_norm1d(Tensor(np.zeros((3, 2))), np.ones(2), np.zeros(2), F.BatchNormState(2), False)


def test_batch_norm_eval_is_affine(rng):
    st_ = F.BatchNormState(3)
    F.batch_norm1d(Tensor(rng.normal(size=(2, 5, 3))), np.ones(3), np.zeros(3), st_, True)
    g, b = rng.normal(size=3), rng.normal(size=3)
    x = rng.normal(size=(5, 3))
    out1 = F.batch_norm1d(Tensor(x), g, b, st_, False).data
    out2 = F.batch_norm1d(Tensor(x), g, b, st_, False).data
    np.testing.assert_array_equal(out1, out2)
    expect = (x - st_.running_mean) / np.sqrt(st_.running_var + st_.eps) * g + b
    np.testing.assert_allclose(out1, expect, rtol=1e-13)


def test_batch_norm_needs_two_frames():
    with pytest.raises(DimensionError):
        F.batch_norm1d(Tensor(np.zeros((1, 2))), np.ones(2), np.zeros(2), F.BatchNormState(2), True)


# -- gradient suite: every differentiable kernel, 20 seeds -----------------

def _kernel_cases(rng):
    x23 = leaf(rng.normal(size=(2, 3)))
    x48 = leaf(rng.normal(size=(4, 8)))
    g8, b8 = leaf(rng.normal(size=8)), leaf(rng.normal(size=8))
    x62 = leaf(rng.normal(size=(6, 2)))
    k623 = leaf(rng.normal(size=(3, 2, 3)))
    cb = leaf(rng.normal(size=3))
    xd = leaf(rng.normal(size=(2, 7, 3)))
    kd = leaf(rng.normal(size=(5, 3)))
    xb = leaf(rng.normal(size=(2, 5, 3)))
    gb, bb = leaf(rng.normal(size=3)), leaf(rng.normal(size=3))
    mask = np.ones((2, 5, 1))
    mask[1, 3:] = 0
    xa = leaf(rng.normal(size=(3, 4)) * 2)
    # distinct values keep max-pool away from ties
    xp = leaf(rng.permutation(20).reshape(10, 2) * 0.37 + rng.normal(size=(10, 2)) * 0.01)
    xg = leaf(rng.normal(size=(4, 6)))
    return {
        "softmax_rows": (lambda: F.softmax_rows(x23), [x23]),
        "log_softmax": (lambda: F.log_softmax(x23), [x23]),
        "layer_norm": (lambda: F.layer_norm(x48, g8, b8), [x48, g8, b8]),
        "conv1d": (lambda: F.conv1d(x62, k623, cb), [x62, k623, cb]),
        "conv1d_stride2": (lambda: F.conv1d(x62, k623, cb, stride=2), [x62, k623, cb]),
        "depthwise_conv1d": (lambda: F.depthwise_conv1d(xd, kd), [xd, kd]),
        "batch_norm_train": (lambda: F.batch_norm1d(xb, gb, bb, F.BatchNormState(3), True, mask),
                             [xb, gb, bb]),
        "relu": (lambda: F.relu(xa), [xa]),
        "sigmoid": (lambda: F.sigmoid(xa), [xa]),
        "swish": (lambda: F.swish(xa), [xa]),
        "gelu": (lambda: F.gelu(xa), [xa]),
        "glu": (lambda: F.glu(xg), [xg]),
        "maxpool1d": (lambda: F.maxpool1d(xp, 2, 2), [xp]),
        "take_frames": (lambda: F.take_frames(xd, np.array([[0, 0, 1, 6], [3, 2, 2, 1]])), [xd]),
    }


@pytest.mark.parametrize("seed", SEEDS)
def test_kernel_gradients(seed):
    rng = np.random.default_rng(seed)
    worst = {}
    for name, (f, tensors) in _kernel_cases(rng).items():
        # relu has a kink at 0; random normals never land within h of it in practice
        worst[name] = max(check_gradients(f, tensors, seed=seed).values())
    bad = {k: v for k, v in worst.items() if not v < KERNEL_TOL}
    assert not bad, bad


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(1, 4), st.integers(1, 3))
def test_conv1d_matches_direct_sum(T, c_in, c_out):
    rng = np.random.default_rng(T * 100 + c_in * 10 + c_out)
    x = rng.normal(size=(T, c_in))
    k = rng.normal(size=(3, c_in, c_out))
    padded = np.vstack([np.zeros((1, c_in)), x, np.zeros((1, c_in))])
    expect = np.stack([sum(padded[t + j] @ k[j] for j in range(3)) for t in range(T)])
    np.testing.assert_allclose(F.conv1d(Tensor(x), k).data, expect, atol=1e-12)
