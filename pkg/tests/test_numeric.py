import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sdtgcn import numeric as nm
from sdtgcn.errors import ConfigError, NumericalError, ShapeError
from sdtgcn.numeric import Tensor


def leaf(a):
    return Tensor(np.asarray(a, dtype=float), requires_grad=True, name="x")


def test_matmul_identity():
    B = np.random.default_rng(0).normal(size=(2, 5))
    np.testing.assert_array_equal(nm.matmul(Tensor(np.eye(2)), Tensor(B)).data, B)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        nm.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_concat_cols_layout():
    a, b = np.arange(6.0).reshape(3, 2), np.ones((3, 4))
    out = nm.concat_cols([Tensor(a), Tensor(b)])
    assert out.shape == (3, 6)
    np.testing.assert_array_equal(out.data[:, :2], a)


def test_relu_backward_hand_values():
    x = leaf([-1.0, 2.0])
    nm.sum_(nm.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_relu_subgradient_at_zero_is_zero():
    x = leaf([0.0])
    nm.sum_(nm.relu(x)).backward()
    assert x.grad[0] == 0.0


def test_non_finite_is_a_hard_error():
    with pytest.raises(NumericalError):
        nm.mul(Tensor([np.inf]), Tensor([1.0]))


def test_no_grad_records_no_tape():
    x = leaf([1.0, 2.0])
    with nm.no_grad():
        y = nm.mul(x, 3.0)
    assert not y.requires_grad and y._parents == ()


# -- dropout


def test_dropout_identity_cases():
    x = Tensor(np.random.default_rng(1).normal(size=(4, 5)))
    rng = np.random.default_rng(0)
    assert nm.dropout(x, 0.0, rng, training=True) is x
    assert nm.dropout(x, 0.5, rng, training=False) is x


def test_dropout_rejects_p_one():
    with pytest.raises(ConfigError):
        nm.dropout(Tensor([1.0]), 1.0, np.random.default_rng(0), True)


def test_dropout_preserves_mean():
    x = Tensor(np.ones(100_000))
    out = nm.dropout(x, 0.5, np.random.default_rng(3), training=True)
    assert 0.98 <= out.data.mean() <= 1.02
    assert set(np.unique(out.data)) <= {0.0, 2.0}


# -- adam


def test_adam_zero_gradient_is_fixed_point():
    p = nm.parameter(np.array([1.5, -2.0]), "p")
    opt = nm.Adam({"p": p}, lr=1e-2)
    for _ in range(10):
        p.grad = np.zeros(2)
        nm.adam_step({"p": p}, opt)
    np.testing.assert_array_equal(p.data, [1.5, -2.0])


def test_adam_first_step_hand_value():
    p = nm.parameter(np.array([0.0]), "p")
    opt = nm.Adam({"p": p}, lr=1e-3)
    p.grad = np.array([1.0])
    opt.step()
    # m_hat = v_hat = 1 after bias correction
    assert p.data[0] == pytest.approx(-1e-3 / (1.0 + 1e-8), rel=1e-15)


def _scalar_adam_reference(x, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
    return x


def test_adam_minimises_quadratic_like_reference():
    p = nm.parameter(np.array([5.0]), "x")
    opt = nm.Adam({"x": p}, lr=1e-2)
    for _ in range(2000):
        opt.zero_grad()
        nm.sum_(nm.square(p)).backward()
        opt.step()
    ref = _scalar_adam_reference(5.0, 2000, 1e-2)
    assert abs(p.data[0]) < 1e-2
    assert p.data[0] == pytest.approx(ref, abs=1e-12)


def test_adam_rejects_non_finite_gradient():
    p = nm.parameter(np.array([0.0]), "weights")
    opt = nm.Adam({"weights": p})
    p.grad = np.array([np.nan])
    with pytest.raises(NumericalError, match="weights"):
        opt.step()


# -- finite differences


def test_finite_diff_quadratic():
    theta = nm.parameter(np.random.default_rng(0).normal(size=7), "theta")
    err = nm.finite_diff_check(lambda: nm.mul(nm.sum_(nm.square(theta)), 0.5), [theta])
    assert err < 1e-9


def test_finite_diff_detects_corrupted_rule(monkeypatch):
    rng = np.random.default_rng(5)
    x = nm.parameter(rng.normal(size=(3, 4)), "x")
    w = nm.parameter(rng.normal(size=(4, 2)), "w")

    def loss():
        return nm.sum_(nm.square(nm.matmul(x, w)))

    assert nm.finite_diff_check(loss, [x, w]) < 1e-6
    real = nm.matmul

    def broken(a, b):
        out = real(a, b)
        if out._backward is not None:
            good = out._backward
            out._backward = lambda g: tuple(None if d is None else 1.1 * d for d in good(g))
        return out

    monkeypatch.setattr(nm, "matmul", broken)
    assert nm.finite_diff_check(lambda: nm.sum_(nm.square(nm.matmul(x, w))), [x, w]) > 1e-2


SHAPES = [(3,), (2, 3), (2, 3, 4)]


@pytest.mark.parametrize("op", ["relu", "square", "standardize", "shift", "swapaxes", "sum", "abs"])
@pytest.mark.parametrize("shape", SHAPES)
def test_unary_ops_pass_gradcheck(op, shape):
    rng = np.random.default_rng(11)
    data = rng.normal(size=shape)
    data[np.abs(data) < 0.05] += 0.2  # keep clear of kinks
    x = nm.parameter(data, "x")
    fns = {
        "relu": nm.relu,
        "square": nm.square,
        "standardize": nm.standardize,
        "shift": lambda t: nm.shift(t, 1, axis=-1),
        "swapaxes": lambda t: nm.swapaxes(t, 0, -1),
        "sum": lambda t: nm.sum_(t, axis=-1),
        "abs": nm.abs_,
    }
    f = fns[op]
    coef = Tensor(rng.normal(size=f(x).shape))

    def loss():
        return nm.sum_(nm.mul(f(x), coef))

    assert nm.finite_diff_check(loss, [x]) < 1e-4


@pytest.mark.parametrize("a_shape,b_shape", [((3, 4), (4, 2)), ((5, 3, 4), (4, 2)), ((5, 3, 4), (5, 4, 2))])
def test_matmul_gradcheck(a_shape, b_shape):
    rng = np.random.default_rng(4)
    a = nm.parameter(rng.normal(size=a_shape), "a")
    b = nm.parameter(rng.normal(size=b_shape), "b")
    c = Tensor(rng.normal(size=np.broadcast_shapes(a_shape[:-1], b_shape[:-2] + (1,))[:-1] + (a_shape[-2], b_shape[-1])))
    assert nm.finite_diff_check(lambda: nm.sum_(nm.mul(nm.matmul(a, b), c)), [a, b]) < 1e-4


def test_add_broadcast_and_concat_gradcheck():
    rng = np.random.default_rng(8)
    x = nm.parameter(rng.normal(size=(4, 3, 2)), "x")
    bias = nm.parameter(rng.normal(size=(2,)), "bias")
    y = nm.parameter(rng.normal(size=(4, 3, 5)), "y")
    c = Tensor(rng.normal(size=(4, 3, 7)))

    def loss():
        return nm.sum_(nm.mul(nm.concat_cols([nm.add(x, bias), nm.sub(y, 0.3)]), c))

    assert nm.finite_diff_check(loss, [x, bias, y]) < 1e-4


def test_sqrt_and_mean_gradcheck():
    x = nm.parameter(np.random.default_rng(2).uniform(0.5, 2.0, size=(3, 4)), "x")
    assert nm.finite_diff_check(lambda: nm.mean(nm.sqrt(x)), [x]) < 1e-4


small = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
               elements=st.floats(-1, 1, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 16), st.integers(1, 16), st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_matmul_associative_and_distributive(m, k, n, p, seed):
    rng = np.random.default_rng(seed)
    A, B, C, D = (rng.uniform(-1, 1, size=s) for s in [(m, k), (k, n), (n, p), (k, n)])
    A, B, C, D = map(Tensor, (A, B, C, D))
    left = nm.matmul(nm.matmul(A, B), C).data
    right = nm.matmul(A, nm.matmul(B, C)).data
    np.testing.assert_allclose(left, right, atol=1e-12, rtol=0)
    np.testing.assert_allclose(nm.matmul(A, nm.add(B, D)).data,
                               nm.add(nm.matmul(A, B), nm.matmul(A, D)).data, atol=1e-12, rtol=0)


@settings(max_examples=40, deadline=None)
@given(small)
def test_dropout_eval_is_bit_identical(a):
    out = nm.dropout(Tensor(a), 0.3, np.random.default_rng(0), training=False)
    assert out.data.tobytes() == a.tobytes()


def test_rng_streams_are_independent_and_reproducible():
    a1 = nm.rng_stream(7, "init").random(5)
    a2 = nm.rng_stream(7, "init").random(5)
    b = nm.rng_stream(7, "dropout").random(5)
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(a1, b)


def test_glorot_limits():
    w = nm.glorot_uniform(np.random.default_rng(0), (30, 20))
    assert np.abs(w).max() <= np.sqrt(6 / 50)
