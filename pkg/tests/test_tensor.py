import numpy as np
import pytest

from conftest import numeric_grad, relative_error
from gfolds.errors import ConfigError, EmptyBatchError, ShapeError
from gfolds.tensor import (Tensor, cross_entropy, dropout, embedding, gelu, layer_norm,
                           matmul, softmax, tensor_mean, tensor_sum, transpose)

RNG = np.random.default_rng(2024)


def t64(data, requires_grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad,
                  dtype=np.float64)


# -- forward semantics ---------------------------------------------------------


def test_matmul_identity():
    m = RNG.normal(size=(3, 3))
    out = matmul(t64(np.eye(3)), t64(m))
    np.testing.assert_allclose(out.data, m)


def test_matmul_hand_case():
    out = matmul(t64([[1, 2], [3, 4]]), t64([[0], [1]]))
    np.testing.assert_array_equal(out.data, [[2], [4]])


def test_matmul_grad_of_sum_is_ones_times_bt():
    a = t64(RNG.normal(size=(3, 4)))
    b = t64(RNG.normal(size=(4, 2)))
    matmul(a, b).sum().backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        matmul(t64(np.zeros((2, 3))), t64(np.zeros((2, 3))))
    assert "(2, 3)" in str(err.value)


def test_matmul_batched_either_side():
    a = t64(RNG.normal(size=(5, 3, 4)))
    b = t64(RNG.normal(size=(4, 2)))
    out = matmul(a, b)
    assert out.shape == (5, 3, 2)
    c = t64(RNG.normal(size=(5, 2, 3)))
    d = t64(RNG.normal(size=(5, 3, 4)))
    assert matmul(c, d).shape == (5, 2, 4)


def test_layer_norm_constant_vector_is_zero():
    y = layer_norm(t64([[4.0, 4.0, 4.0]]), t64(np.ones(3)), t64(np.zeros(3)), eps=1e-12)
    np.testing.assert_allclose(y.data, 0.0, atol=1e-5)


def test_layer_norm_two_point_closed_form():
    y = layer_norm(t64([[1.0, 3.0]]), t64(np.ones(2)), t64(np.zeros(2)), eps=1e-15)
    np.testing.assert_allclose(y.data, [[-1.0, 1.0]], atol=1e-6)


def test_layer_norm_rejects_nonpositive_eps():
    with pytest.raises(ConfigError):
        layer_norm(t64([[1.0, 2.0]]), t64(np.ones(2)), t64(np.zeros(2)), eps=0.0)


def test_gelu_at_zero():
    assert gelu(t64([0.0])).data[0] == 0.0


def test_softmax_shift_invariance_and_uniform():
    np.testing.assert_allclose(softmax(t64([[7.0, 7.0, 7.0]])).data, 1 / 3, rtol=1e-6)
    x = RNG.normal(size=(4, 6))
    a = softmax(t64(x)).data
    b = softmax(t64(x + 100.0)).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_softmax_rows_are_distributions():
    for _ in range(20):
        x = RNG.normal(size=(5, 7)) * 10
        s = softmax(t64(x)).data
        assert (s >= 0).all()
        np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)


def test_embedding_gather_exact_row():
    table = t64(RNG.normal(size=(6, 4)))
    out = embedding(table, np.array([3]))
    np.testing.assert_array_equal(out.data[0], table.data[3])


def test_embedding_out_of_range():
    table = t64(np.zeros((4, 2)))
    with pytest.raises(IndexError):
        embedding(table, np.array([4]))
    with pytest.raises(IndexError):
        embedding(table, np.array([-1]))


def test_cross_entropy_uniform_is_log_v():
    v = 11
    loss = cross_entropy(t64(np.zeros((3, v))), [1, 5, 7])
    assert loss.item() == pytest.approx(np.log(v), rel=1e-6)


def test_cross_entropy_saturated_is_near_zero():
    logits = np.zeros((1, 5))
    logits[0, 2] = 1e6
    assert cross_entropy(t64(logits), [2]).item() < 1e-6


def test_cross_entropy_ignore_contract():
    logits = RNG.normal(size=(2, 4))
    both = cross_entropy(t64(logits), [1, 2], ignore_mask=[False, True])
    single = cross_entropy(t64(logits[:1]), [1])
    assert both.item() == pytest.approx(single.item(), rel=1e-12)


def test_cross_entropy_all_ignored_raises():
    with pytest.raises(EmptyBatchError):
        cross_entropy(t64(np.zeros((2, 3))), [0, 0], ignore_mask=[True, True])


# -- gradients against central finite differences -------------------------------


def check_op_grad(build, shapes, rtol=1e-4, n_trials=3):
    """`build(tensors) -> scalar Tensor`; FD-check every input."""
    for trial in range(n_trials):
        rng = np.random.default_rng(100 + trial)
        arrays = [rng.normal(size=s) for s in shapes]
        tensors = [t64(a) for a in arrays]
        out = build(tensors)
        for t in tensors:
            t.zero_grad()
        out.backward()
        for i, t in enumerate(tensors):
            def f(x, i=i):
                probe = [t64(a) for a in arrays]
                probe[i] = t64(x)
                return float(build(probe).data)
            fd = numeric_grad(f, arrays[i].copy())
            assert relative_error(t.grad, fd) < rtol, f"input {i} of {build.__name__}"


def test_grad_add_mul_broadcast():
    check_op_grad(lambda ts: (ts[0] + ts[1]).sum(), [(5, 4), (4,)])
    check_op_grad(lambda ts: (ts[0] * ts[1]).sum(), [(5, 4), (5, 1)])


def test_grad_matmul():
    check_op_grad(lambda ts: matmul(ts[0], ts[1]).sum(), [(5, 4), (4, 3)])
    check_op_grad(lambda ts: matmul(ts[0], ts[1]).sum(), [(2, 5, 4), (4, 3)])
    check_op_grad(lambda ts: matmul(ts[0], ts[1]).sum(), [(2, 5, 4), (2, 4, 3)])


def test_grad_reductions_and_shapes():
    check_op_grad(lambda ts: tensor_sum(ts[0], axis=1).sum(), [(6, 3)])
    check_op_grad(lambda ts: tensor_mean(ts[0], axis=0).sum(), [(6, 3)])
    check_op_grad(lambda ts: transpose(ts[0], (1, 0)).sum(), [(4, 7)])
    check_op_grad(lambda ts: ts[0].reshape(8, 2).sum(), [(4, 4)])


def test_grad_gelu():
    check_op_grad(lambda ts: gelu(ts[0]).sum(), [(6, 6)])


def test_grad_softmax():
    def build(ts):
        s = softmax(ts[0], axis=-1)
        return (s * Tensor(np.arange(5, dtype=np.float64), dtype=np.float64)).sum()
    check_op_grad(build, [(4, 5)])


def test_grad_layer_norm_all_three_inputs():
    def build(ts):
        weights = Tensor(np.linspace(0.5, 1.5, 6 * 5).reshape(6, 5), dtype=np.float64)
        return (layer_norm(ts[0], ts[1], ts[2], eps=1e-8) * weights).sum()
    check_op_grad(build, [(6, 5), (5,), (5,)])


def test_grad_embedding():
    ids = np.array([[0, 2], [2, 1]])

    def build(ts):
        weights = Tensor(np.linspace(-1, 1, 2 * 2 * 3).reshape(2, 2, 3), dtype=np.float64)
        return (embedding(ts[0], ids) * weights).sum()
    check_op_grad(build, [(4, 3)])


def test_grad_cross_entropy():
    targets = np.array([1, 3, 0])
    ignore = np.array([False, False, True])
    check_op_grad(lambda ts: cross_entropy(ts[0], targets, ignore), [(3, 5)])


def test_grad_dropout_mask_passthrough():
    rng_f = np.random.default_rng(7)
    x = t64(RNG.normal(size=(8, 8)))
    out = dropout(x, 0.5, rng_f)
    out.backward(np.ones_like(out.data))
    mask = (out.data != 0).astype(np.float64)
    np.testing.assert_allclose(x.grad, mask * 2.0)


def test_dropout_rate_zero_is_identity():
    x = t64(RNG.normal(size=(3, 3)))
    assert dropout(x, 0.0, np.random.default_rng(0)) is x


# -- tape semantics ---------------------------------------------------------------


def test_shared_subexpression_accumulation_vs_path_oracle():
    """Five-node DAG with a shared node; oracle sums products of local
    partials over every path from output to leaf."""
    x_val, y_val = 1.7, -0.6
    x = t64([x_val])
    y = t64([y_val])
    u = x * y          # u = x*y
    v = u + x          # v = u + x
    w = v * u          # w = v*u  (u is shared)
    w.backward()

    # paths from w to x:
    #   w -> v -> u -> x : dw/dv * dv/du * du/dx = u * 1 * y
    #   w -> v -> x      : u * 1
    #   w -> u -> x      : v * y
    u_val = x_val * y_val
    v_val = u_val + x_val
    expect_x = u_val * y_val + u_val + v_val * y_val
    expect_y = u_val * x_val + v_val * x_val  # w->v->u->y and w->u->y
    assert x.grad[0] == pytest.approx(expect_x, rel=1e-12)
    assert y.grad[0] == pytest.approx(expect_y, rel=1e-12)


def test_backward_visits_each_node_once():
    x = t64([2.0])
    shared = x * x
    out = shared + shared
    calls = {"n": 0}
    original = shared._backward

    def counting(g):
        calls["n"] += 1
        original(g)

    shared._backward = counting
    out.backward()
    assert calls["n"] == 1
    assert x.grad[0] == pytest.approx(8.0)  # d/dx 2x^2


def test_storage_defaults_to_float32():
    t = Tensor([1.0, 2.0])
    assert t.dtype == np.float32
    assert (Tensor([1.0], dtype=np.float64)).dtype == np.float64
