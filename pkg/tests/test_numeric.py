import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mogen.numeric import engine as E
from mogen.numeric import checkpoint, nn
from mogen.numeric.engine import CompGraph, Tensor, backward, forward_eval, no_grad
from mogen.numeric.gradcheck import grad_check, relative_error


def test_matmul_identity():
    a = np.arange(12.0).reshape(3, 4)
    out = E.matmul(Tensor(a), Tensor(np.eye(4)))
    np.testing.assert_array_equal(out.data, a)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    p = E.softmax(Tensor(rng.normal(size=(5, 9)) * 10))
    np.testing.assert_allclose(p.data.sum(axis=-1), 1.0, atol=1e-12)


def _mlp_params(seed):
    ps = nn.ParamStore(np.random.default_rng(seed))
    ps.linear("l1", 4, 8)
    ps.linear("l2", 8, 1)
    return ps


def test_mlp_matches_straight_line_evaluation():
    ps = _mlp_params(3)
    x = np.random.default_rng(4).normal(size=(2, 4))
    P = ps.leaves()
    out = nn.linear(P, "l2", E.tanh(nn.linear(P, "l1", Tensor(x))))
    w1, b1, w2, b2 = (ps.arrays[k] for k in ("l1.w", "l1.b", "l2.w", "l2.b"))
    expected = []
    for row in x:
        hidden = [np.tanh(sum(row[i] * w1[i, j] for i in range(4)) + b1[j]) for j in range(8)]
        expected.append([sum(hidden[j] * w2[j, 0] for j in range(8)) + b2[0]])
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)


def test_gradient_of_sum_is_ones():
    a = Tensor(np.random.default_rng(0).normal(size=(3, 2)), requires_grad=True)
    (g,) = E.grad(E.sum_(a), [a])
    np.testing.assert_array_equal(g, np.ones((3, 2)))


def test_gradient_of_constant_is_zero():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    c = E.sum_(Tensor(np.ones(3)))
    (g,) = E.grad(c, [a])
    np.testing.assert_array_equal(g, np.zeros((2, 2)))


def test_backward_rejects_non_scalar():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(E.ShapeError):
        backward(E.mul(a, 2.0))


def test_non_finite_is_an_error():
    with pytest.raises(E.NonFiniteError):
        E.log(Tensor(np.zeros(2)))


def test_shape_mismatch_is_an_error():
    g = CompGraph(lambda x: E.sum_(x), [(2, 3)])
    with pytest.raises(E.ShapeError):
        forward_eval(g, [np.zeros((3, 2))])


@pytest.mark.parametrize("seed", range(3))
def test_two_layer_net_input_gradient_vs_finite_differences(seed):
    ps = _mlp_params(seed)

    def fn(x):
        P = ps.leaves(requires_grad=False)
        return E.sum_(nn.linear(P, "l2", E.gelu(nn.linear(P, "l1", x))))

    x = np.random.default_rng(seed + 10).normal(size=(3, 4))
    report = grad_check(CompGraph(fn, [(3, 4)]), [x], tolerance=1e-4, step=1e-5)
    assert report.passed, report.errors


def test_quadratic_form_grad_check():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(5, 5))
    g = CompGraph(lambda x: E.sum_(E.mul(x, E.matmul(x, Tensor(M)))), [(1, 5)])
    report = grad_check(g, [rng.normal(size=(1, 5))], tolerance=1e-6)
    assert report.passed, report.errors


def test_masked_attention_grad_check():
    ps = nn.ParamStore(np.random.default_rng(2))
    nn.init_block(ps, "b", 8)
    mask = np.tril(np.ones((4, 4), dtype=bool))

    def fn(h):
        P = ps.leaves(requires_grad=False)
        out = nn.block(P, "b", h, mask, n_heads=2)
        return E.sum_(E.mul(out, Tensor(np.linspace(-1, 1, 32).reshape(1, 4, 8))))

    x = np.random.default_rng(3).normal(size=(1, 4, 8))
    report = grad_check(CompGraph(fn, [(1, 4, 8)]), [x], tolerance=1e-4)
    assert report.passed, report.errors


def test_zero_input_grad_check():
    ps = _mlp_params(5)

    def fn(x):
        P = ps.leaves(requires_grad=False)
        return E.sum_(nn.linear(P, "l2", E.tanh(nn.linear(P, "l1", x))))

    report = grad_check(CompGraph(fn, [(2, 4)]), [np.zeros((2, 4))], tolerance=1e-4)
    assert report.passed


def test_grad_check_flags_instead_of_raising():
    # a deliberately wrong vjp
    def bad(x):
        return E.sum_(E.Tensor._result("bad", x.data * 2.0, (x,), lambda g: (g,)))

    report = grad_check(CompGraph(bad, [(3,)]), [np.ones(3)], tolerance=1e-4)
    assert not report.passed
    assert report.max_error == pytest.approx(0.5)


_UNARY = {
    "exp": E.exp,
    "tanh": E.tanh,
    "sigmoid": E.sigmoid,
    "gelu": E.gelu,
    "square": E.square,
    "log_sigmoid": E.log_sigmoid,
    "layer_norm": E.layer_norm,
    "softmax": E.softmax,
}


@pytest.mark.parametrize("name", sorted(_UNARY))
def test_primitive_jvp_matches_finite_differences(name):
    op = _UNARY[name]
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 5))
        w = rng.normal(size=(2, 5))
        g = CompGraph(lambda t: E.sum_(E.mul(op(t), Tensor(w))), [(2, 5)])
        assert grad_check(g, [x], tolerance=1e-4).passed, (name, seed)


def test_binary_primitives_with_broadcast():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4,)) + 3.0
    w = rng.normal(size=(3, 4))
    for op in (E.add, E.sub, E.mul, E.div):
        g = CompGraph(lambda x, y: E.sum_(E.mul(op(x, y), Tensor(w))), [(3, 4), (4,)])
        rep = grad_check(g, [a, b])
        assert rep.passed, (op.__name__, rep.errors)


def test_matmul_batched_gradients():
    rng = np.random.default_rng(8)
    g = CompGraph(lambda x, y: E.sum_(E.square(E.matmul(x, y))), [(2, 3, 4), (4, 5)])
    assert grad_check(g, [rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))]).passed


def test_take_rows_and_concat_gradients():
    rng = np.random.default_rng(9)
    idx = np.array([0, 2, 2, 1])

    def fn(table, other):
        rows = E.take_rows(table, idx)
        return E.sum_(E.square(E.concat([rows, other], axis=1)))

    assert grad_check(CompGraph(fn, [(3, 2), (4, 3)]), [rng.normal(size=(3, 2)), rng.normal(size=(4, 3))]).passed


def test_backward_is_deterministic():
    ps = nn.ParamStore(np.random.default_rng(0))
    nn.init_block(ps, "b", 8)
    x = np.random.default_rng(1).normal(size=(2, 4, 8))
    mask = np.ones((4, 4), dtype=bool)
    results = []
    for _ in range(2):
        P = ps.leaves()
        out = E.sum_(nn.block(P, "b", Tensor(x), mask, 2))
        g = backward(out)
        results.append(np.concatenate([g[P[k]._id].ravel() for k in ps]))
    assert results[0].tobytes() == results[1].tobytes()


def test_ops_do_not_mutate_inputs():
    a = Tensor(np.ones((2, 2)))
    with pytest.raises(ValueError):
        a.data[0, 0] = 5.0
    src = np.ones(3)
    t = Tensor(src)
    src[0] = 9.0
    assert t.data[0] == 1.0


def test_no_grad_records_nothing():
    a = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        out = E.mul(a, 3.0)
    assert not out.requires_grad


def test_mask_blocks_gradient_to_future_tokens():
    ps = nn.ParamStore(np.random.default_rng(0))
    nn.init_block(ps, "b", 8)
    mask = np.tril(np.ones((5, 5), dtype=bool))
    x = Tensor(np.random.default_rng(2).normal(size=(1, 5, 8)), requires_grad=True)
    out = nn.block(ps.leaves(False), "b", x, mask, 2)
    sel = np.zeros((1, 5, 8))
    sel[0, 1] = 1.0
    (g,) = E.grad(E.sum_(E.mul(out, Tensor(sel))), [x])
    assert np.all(g[0, 2:] == 0.0)
    assert np.any(g[0, :2] != 0.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6))
@settings(max_examples=50, deadline=None)
def test_checkpoint_round_trip(values):
    tensors = {"a": np.array(values), "b.w": np.arange(6.0).reshape(2, 3), "s": np.array(2.5)}
    back = checkpoint.loads(checkpoint.dumps(tensors))
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert back[k].tobytes() == np.asarray(tensors[k], dtype=np.float64).tobytes()


def test_checkpoint_rejects_bad_magic_and_truncation():
    buf = checkpoint.dumps({"a": np.ones(3)})
    assert buf[:4] == b"MGN1"
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"XXXX" + buf[4:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(buf[:-3])


def test_relative_error_zero_case():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
