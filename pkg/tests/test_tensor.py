import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import memrl.tensor as T
from memrl.errors import ContractError, DimensionError
from memrl.tensor import Tensor

from helpers import assert_grad_close, fd_grad


@pytest.fixture(autouse=True)
def fresh_tape():
    T.reset_tape()
    yield


def param(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), param=True)


# ---------------------------------------------------------------------------
# matmul

def test_matmul_identity():
    out = T.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0], [4.0]]))
    assert np.array_equal(out.data, [[3.0], [4.0]])


def test_matmul_annihilator():
    x = np.arange(6.0).reshape(2, 3)
    out = T.matmul(Tensor(np.zeros((2, 2))), Tensor(x))
    assert np.array_equal(out.data, np.zeros((2, 3)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_gradient_vs_finite_differences():
    rng = np.random.default_rng(0)
    a0 = rng.uniform(-2, 2, (3, 4))
    b0 = rng.uniform(-2, 2, (4, 2))
    a, b = param(a0), param(b0)
    T.backward(T.tsum(T.matmul(a, b)))

    def loss_a(x):
        return float((x @ b0).sum())

    def loss_b(x):
        return float((a0 @ x).sum())

    assert_grad_close(a.grad, fd_grad(loss_a, a0.copy()), 1e-6)
    assert_grad_close(b.grad, fd_grad(loss_b, b0.copy()), 1e-6)


def test_matmul_nt_matches_explicit_transpose():
    rng = np.random.default_rng(5)
    a = rng.uniform(-2, 2, (3, 4))
    w = rng.uniform(-2, 2, (2, 4))
    out = T.matmul_nt(Tensor(a), Tensor(w))
    assert np.array_equal(out.data, a @ w.T)


def test_matmul_nt_gradient_vs_finite_differences():
    rng = np.random.default_rng(6)
    a0 = rng.uniform(-2, 2, (3, 4))
    w0 = rng.uniform(-2, 2, (2, 4))
    a, w = param(a0), param(w0)
    T.backward(T.tsum(T.matmul_nt(a, w)))
    assert_grad_close(
        a.grad, fd_grad(lambda v: float((v @ w0.T).sum()), a0.copy()), 1e-6)
    assert_grad_close(
        w.grad, fd_grad(lambda v: float((a0 @ v.T).sum()), w0.copy()), 1e-6)


def test_matmul_nt_shape_error():
    with pytest.raises(DimensionError):
        T.matmul_nt(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


def test_slice_cols_forward_and_gradient():
    x0 = np.arange(12.0).reshape(3, 4)
    x = param(x0)
    out = T.slice_cols(x, 1, 3)
    assert np.array_equal(out.data, x0[:, 1:3])
    T.backward(T.tsum(out))
    expected = np.zeros((3, 4))
    expected[:, 1:3] = 1.0
    assert np.array_equal(x.grad, expected)


def test_slice_cols_out_of_range():
    with pytest.raises(DimensionError):
        T.slice_cols(Tensor(np.zeros((2, 3))), 1, 4)


# ---------------------------------------------------------------------------
# elementwise

def test_tanh_sigmoid_at_zero():
    assert T.tanh(Tensor([0.0])).data[0] == 0.0
    assert T.sigmoid(Tensor([0.0])).data[0] == 0.5


def test_clamp_forward():
    out = T.clamp(Tensor([-3.0, 0.1, 3.0]), -0.5, 0.5)
    assert np.array_equal(out.data, [-0.5, 0.1, 0.5])


def test_clamp_gradient_boundary_is_one():
    x = param([-1.0, -0.5, 0.0, 0.5, 1.0])
    T.backward(T.tsum(T.clamp(x, -0.5, 0.5)))
    assert np.array_equal(x.grad, [0.0, 1.0, 1.0, 1.0, 0.0])


def test_tanh_mean_gradient_vs_finite_differences():
    rng = np.random.default_rng(1)
    x0 = rng.uniform(-2, 2, (4, 3))
    x = param(x0)
    T.backward(T.mean(T.tanh(x)))
    assert_grad_close(
        x.grad, fd_grad(lambda v: float(np.tanh(v).mean()), x0.copy()), 1e-6)


@pytest.mark.parametrize("op,ref", [
    (T.add, lambda a, b: a + b),
    (T.sub, lambda a, b: a - b),
    (T.mul, lambda a, b: a * b),
])
def test_binary_elementwise_forward(op, ref):
    rng = np.random.default_rng(2)
    a = rng.uniform(-2, 2, (3, 2))
    b = rng.uniform(-2, 2, (3, 2))
    assert np.array_equal(op(Tensor(a), Tensor(b)).data, ref(a, b))


def test_binary_shape_mismatch_without_broadcast():
    with pytest.raises(DimensionError):
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


def test_scalar_broadcast():
    out = T.mul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor(2.0))
    assert np.array_equal(out.data, [[2.0, 4.0], [6.0, 8.0]])
    s = param(2.0)
    T.reset_tape()
    T.backward(T.tsum(T.mul(Tensor([[1.0, 2.0], [3.0, 4.0]]), s)))
    assert s.grad == pytest.approx(10.0)


def test_scale_and_relu_gradients():
    x0 = np.array([-1.0, 2.0, 3.0])
    x = param(x0)
    T.backward(T.tsum(T.scale(T.relu(x), 2.0)))
    assert np.array_equal(x.grad, [0.0, 2.0, 2.0])


def test_add_rowvec():
    a = param(np.zeros((3, 2)))
    v = param(np.array([1.0, 2.0]))
    out = T.add_rowvec(a, v)
    assert np.array_equal(out.data, np.tile([1.0, 2.0], (3, 1)))
    T.backward(T.tsum(out))
    assert np.array_equal(a.grad, np.ones((3, 2)))
    assert np.array_equal(v.grad, [3.0, 3.0])


# ---------------------------------------------------------------------------
# concat

def test_concat_basic():
    out = T.concat(Tensor([1.0, 2.0]), Tensor([3.0]), axis=0)
    assert np.array_equal(out.data, [1.0, 2.0, 3.0])


def test_concat_empty_is_identity():
    x = Tensor([1.0, 2.0])
    out = T.concat(x, Tensor(np.zeros(0)), axis=0)
    assert np.array_equal(out.data, x.data)


def test_concat_gradient_split():
    a = param([1.0, 2.0])
    b = param([3.0])
    T.backward(T.tsum(T.concat(a, b, axis=0)))
    assert np.array_equal(a.grad, [1.0, 1.0])
    assert np.array_equal(b.grad, [1.0])


def test_concat_incompatible_extents():
    with pytest.raises(DimensionError):
        T.concat(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))), axis=0)


# ---------------------------------------------------------------------------
# reductions

def test_mean_trivial():
    assert T.mean(Tensor([2.0, 4.0])).item() == 3.0


def test_min_pairwise_forward():
    out = T.min_pairwise(Tensor([1.0, 5.0]), Tensor([2.0, 3.0]))
    assert np.array_equal(out.data, [1.0, 3.0])


def test_min_pairwise_shape_mismatch():
    with pytest.raises(DimensionError):
        T.min_pairwise(Tensor([1.0]), Tensor([1.0, 2.0]))


def test_min_pairwise_gradient_routing():
    a0 = np.array([1.0, 5.0, 2.0])
    b0 = np.array([2.0, 3.0, 4.0])
    a, b = param(a0), param(b0)
    T.backward(T.tsum(T.min_pairwise(a, b)))
    assert np.array_equal(a.grad, [1.0, 0.0, 1.0])
    assert np.array_equal(b.grad, [0.0, 1.0, 0.0])
    # away from ties the routing agrees with finite differences
    assert_grad_close(
        a.grad, fd_grad(lambda v: float(np.minimum(v, b0).sum()), a0.copy()),
        1e-6)


def test_min_pairwise_tie_goes_to_first():
    a, b = param([2.0]), param([2.0])
    T.backward(T.tsum(T.min_pairwise(a, b)))
    assert a.grad[0] == 1.0 and b.grad[0] == 0.0


# ---------------------------------------------------------------------------
# backward

def test_backward_constant_loss_leaves_grads_zero():
    p = param(np.ones(3))
    T.backward(T.mean(Tensor([5.0])))
    assert np.array_equal(p.grad, np.zeros(3))


def test_backward_sum_of_param_is_ones():
    p = param(np.ones((2, 3)))
    T.backward(T.tsum(p))
    assert np.array_equal(p.grad, np.ones((2, 3)))


def test_backward_rejects_non_scalar_loss():
    p = param(np.ones(3))
    with pytest.raises(ContractError):
        T.backward(T.add(p, p))


def test_backward_is_additive():
    p = param([1.0, 2.0])
    loss = T.tsum(T.mul(p, p))
    T.backward(loss)
    first = p.grad.copy()
    T.backward(loss)
    assert np.array_equal(p.grad, 2.0 * first)


def test_two_layer_mlp_gradient_vs_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, (5, 3))
    w1_0 = rng.uniform(-2, 2, (4, 3))
    b1_0 = rng.uniform(-2, 2, 4)
    w2_0 = rng.uniform(-2, 2, (2, 4))
    b2_0 = rng.uniform(-2, 2, 2)
    params = [param(w1_0), param(b1_0), param(w2_0), param(b2_0)]
    w1, b1, w2, b2 = params

    def forward():
        h = T.tanh(T.add_rowvec(T.matmul(Tensor(x), T.transpose(w1)), b1))
        return T.mean(T.add_rowvec(T.matmul(h, T.transpose(w2)), b2))

    T.backward(forward())

    def ref(w1v, b1v, w2v, b2v):
        h = np.tanh(x @ w1v.T + b1v)
        return float((h @ w2v.T + b2v).mean())

    for p, (i, vals) in zip(params,
                            enumerate([w1_0, b1_0, w2_0, b2_0])):
        def loss(v, i=i):
            args = [w1_0, b1_0, w2_0, b2_0]
            args[i] = v
            return ref(*args)

        assert_grad_close(p.grad, fd_grad(loss, vals.copy()), 1e-4)


def test_forward_is_deterministic():
    x = np.random.default_rng(4).uniform(-2, 2, (3, 3))
    a = T.tanh(T.matmul(Tensor(x), Tensor(x))).data
    T.reset_tape()
    b = T.tanh(T.matmul(Tensor(x), Tensor(x))).data
    assert np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_property_elementwise_gradients_match_fd(seed):
    """Analytic gradients match central differences away from kinks."""
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-2, 2, (2, 3))
    T.reset_tape()
    x = param(x0)
    y = T.mean(T.mul(T.tanh(x), T.sigmoid(T.relu(T.clamp(x, -1.5, 1.5)))))
    T.backward(y)

    def ref(v):
        return float(
            (np.tanh(v) * (1 / (1 + np.exp(-np.maximum(
                np.clip(v, -1.5, 1.5), 0))))).mean())

    near_kink = (np.abs(x0) < 1e-3) | (np.abs(np.abs(x0) - 1.5) < 1e-3)
    assert_grad_close(x.grad, fd_grad(ref, x0.copy()), 1e-4,
                      exclude=near_kink)
