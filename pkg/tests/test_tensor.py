import numpy as np
import pytest

from webcolor import tensor as T
from webcolor.optim import AdamW, AdamWState, adamw_step
from webcolor.tensor import BackwardError, ShapeError, Tensor

TOL = 1e-4
SHAPES = [(1, 1), (2, 3), (3, 2), (4, 5), (1, 7)]


def param(rng, shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def weighted(out, w):
    """Scalar probe: sum(w * out) so every output entry carries a distinct weight."""
    return T.sum(out * Tensor(w))


def check(f, params, **kw):
    errors = T.check_gradients(f, params, **kw)
    assert max(errors.values()) <= TOL, errors


def probe(rng, shape):
    return rng.normal(size=shape)


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("op", ["add", "sub", "mul", "relu", "sigmoid", "exp", "clip", "neg", "div"])
def test_elementwise_gradients(op, shape, rng):
    a, b = param(rng, shape), param(rng, shape)
    w = probe(rng, shape)
    fns = {
        "add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b,
        "relu": lambda: T.relu(a), "sigmoid": lambda: T.sigmoid(a), "exp": lambda: T.exp(a),
        "clip": lambda: T.clip(a, -0.5, 0.5), "neg": lambda: -a, "div": lambda: a / 3.0,
    }
    check(lambda: weighted(fns[op](), w), {"a": a, "b": b})


@pytest.mark.parametrize("n,k,m", [(1, 1, 1), (2, 3, 4), (5, 2, 3), (3, 3, 3), (4, 1, 6)])
def test_matmul_gradients(n, k, m, rng):
    a, b = param(rng, (n, k)), param(rng, (k, m))
    w = probe(rng, (n, m))
    check(lambda: weighted(a @ b, w), {"a": a, "b": b})
    # batched lhs against a 2-D rhs, and batch x batch
    a3, b3 = param(rng, (2, n, k)), param(rng, (2, k, m))
    w3 = probe(rng, (2, n, m))
    check(lambda: weighted(T.matmul(a3, b), w3), {"a3": a3, "b": b})
    check(lambda: weighted(T.matmul(a3, b3), w3), {"a3": a3, "b3": b3})


def test_row_bias_broadcast_gradient(rng):
    x, bias = param(rng, (4, 3)), param(rng, (3,))
    w = probe(rng, (4, 3))
    check(lambda: weighted(x + bias, w), {"x": x, "bias": bias})


@pytest.mark.parametrize("shape", [(2, 3), (3, 4), (1, 5), (4, 2), (2, 2, 3)])
def test_structural_gradients(shape, rng):
    a, b = param(rng, shape), param(rng, shape)
    n = shape[-1]
    check(lambda: weighted(T.concat([a, b], axis=-1), probe(np.random.default_rng(1), shape[:-1] + (2 * n,))),
          {"a": a, "b": b})
    check(lambda: weighted(T.stack([a, b], axis=0), probe(np.random.default_rng(2), (2,) + shape)), {"a": a, "b": b})
    check(lambda: weighted(T.slice_(a, 0, max(1, n - 1), axis=-1),
                           probe(np.random.default_rng(3), shape[:-1] + (max(1, n - 1),))), {"a": a})
    check(lambda: weighted(T.reshape(a, (-1,)), probe(np.random.default_rng(4), (a.data.size,))), {"a": a})
    axes = tuple(reversed(range(len(shape))))
    check(lambda: weighted(T.transpose(a, axes), probe(np.random.default_rng(5), tuple(shape[i] for i in axes))),
          {"a": a})


@pytest.mark.parametrize("n,d", [(3, 2), (5, 4), (1, 3), (6, 1), (4, 4)])
def test_lookup_and_take_gradients(n, d, rng):
    table = param(rng, (n, d))
    idx = rng.integers(0, n, size=7)  # repeats accumulate
    w = probe(rng, (7, d))
    check(lambda: weighted(T.embedding_lookup(table, idx), w), {"table": table})
    check(lambda: weighted(T.take(table, idx), w), {"table": table})


@pytest.mark.parametrize("shape", SHAPES)
def test_reductions_gradients(shape, rng):
    a = param(rng, shape)
    check(lambda: T.sum(a * a), {"a": a})
    check(lambda: T.mean(a * a), {"a": a})
    w = probe(rng, shape[:1])
    check(lambda: weighted(T.sum(a * a, axis=1), w), {"a": a})
    check(lambda: weighted(T.mean(a * a, axis=1), w), {"a": a})


@pytest.mark.parametrize("shape", [(3, 4), (2, 5, 3), (4, 2), (3, 1), (2, 3, 6)])
def test_softmax_family_gradients(shape, rng):
    a = param(rng, shape, -2, 2)
    w = probe(rng, shape)
    check(lambda: weighted(T.softmax(a), w), {"a": a})
    check(lambda: weighted(T.log_softmax(a), w), {"a": a})


@pytest.mark.parametrize("shape", [(3, 4), (2, 5), (4, 8), (1, 3), (2, 3, 6)])
def test_layer_norm_gradient(shape, rng):
    x = param(rng, shape, -2, 2)
    gain, bias = param(rng, shape[-1:]), param(rng, shape[-1:])
    w = probe(rng, shape)
    check(lambda: weighted(T.layer_norm(x, gain, bias), w), {"x": x, "gain": gain, "bias": bias})


@pytest.mark.parametrize("k,n,d", [(2, 3, 4), (5, 2, 3), (3, 1, 2), (4, 4, 1), (2, 6, 5)])
def test_maxpool_and_segment_max_gradients(k, n, d, rng):
    x = param(rng, (n, k, d))
    w = probe(rng, (n, d))
    check(lambda: weighted(T.maxpool_over_set(x, axis=1), w), {"x": x})
    rows = param(rng, (k + n, d))
    seg = np.concatenate([np.arange(n), rng.integers(0, n, size=k)])
    check(lambda: weighted(T.segment_max(rows, seg, n), probe(np.random.default_rng(9), (n, d))), {"rows": rows})


@pytest.mark.parametrize("shape", SHAPES)
def test_loss_gradients(shape, rng):
    pred, mu, logvar = param(rng, shape), param(rng, shape), param(rng, shape)
    target = rng.random(shape)
    weight = rng.random(shape)
    check(lambda: T.mse(pred, target), {"pred": pred})
    check(lambda: T.mse(pred, target, weight), {"pred": pred})
    check(lambda: T.gaussian_kl(mu, logvar), {"mu": mu, "logvar": logvar})
    check(lambda: T.gaussian_kl(mu, logvar, weight), {"mu": mu, "logvar": logvar})
    noise = rng.normal(size=shape)
    w = probe(rng, shape)
    check(lambda: weighted(T.reparam_sample(mu, logvar, noise), w), {"mu": mu, "logvar": logvar})
    logits = param(rng, shape, -2, 2)
    labels = rng.integers(0, shape[-1], size=shape[:-1])
    check(lambda: T.cross_entropy(logits, labels), {"logits": logits})
    row_w = rng.random(shape[:-1])
    check(lambda: T.cross_entropy(logits, labels, row_w), {"logits": logits})


def test_forward_examples():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal((m @ Tensor(np.eye(2))).data, m.data)
    assert np.allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    assert T.gaussian_kl(Tensor([1.0]), Tensor([0.0])).item() == pytest.approx(0.5)
    assert T.cross_entropy(Tensor([[0.0, 0.0]]), [1]).item() == pytest.approx(np.log(2))


def test_backward_sum_of_squares():
    x = Tensor([1.0, 2.0], requires_grad=True)
    T.backward(T.sum(x * x))
    assert np.array_equal(x.grad, [2.0, 4.0])


def test_small_net_matches_finite_differences(rng):
    w = param(rng, (3, 2))
    x = Tensor(rng.normal(size=(4, 3)))
    y = rng.random((4, 2))
    errors = T.check_gradients(lambda: T.mse(T.sigmoid(x @ w), y), {"w": w}, max_entries=None)
    assert errors["w"] <= 1e-5


def test_detached_input_gets_no_gradient(rng):
    a = param(rng, (2, 2))
    b = a.detach()
    c = param(rng, (2, 2))
    T.backward(T.sum(b * c))
    assert a.grad is None and c.grad is not None


def test_second_backward_raises(rng):
    a = param(rng, (2,))
    loss = T.sum(a * a)
    T.backward(loss)
    with pytest.raises(BackwardError):
        T.backward(loss)


def test_non_scalar_loss_raises(rng):
    with pytest.raises(BackwardError):
        T.backward(param(rng, (2,)) * 2.0)


def test_no_grad_records_nothing(rng):
    a = param(rng, (2,))
    with T.no_grad():
        out = a * a
    assert not out.requires_grad


def test_shape_errors_name_the_op():
    with pytest.raises(ShapeError, match="matmul"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))


def test_backward_is_linear_in_loss_terms(rng):
    a = param(rng, (3, 3))
    f1 = lambda: T.sum(T.sigmoid(a))
    f2 = lambda: T.mean(a * a)
    T.backward(f1())
    g1 = a.grad
    a.grad = None
    T.backward(f2())
    g2 = a.grad
    a.grad = None
    T.backward(f1() + f2())
    assert np.allclose(a.grad, g1 + g2, atol=1e-14)


def test_shared_subexpression_accumulates(rng):
    a = param(rng, (3,))
    b = a * a
    T.backward(T.sum(b + b))
    assert np.allclose(a.grad, 4 * a.data)


def test_adamw_hand_evaluated_step():
    theta = Tensor([1.0], requires_grad=True)
    adamw_step(AdamWState(), [theta], [np.array([1.0])])
    # m_hat = 1, v_hat = 1 after bias correction
    assert theta.data[0] == pytest.approx(1 - 1e-4 * (1 / (1 + 1e-8) + 0.01), abs=1e-15)


def test_adamw_zero_grad_zero_decay_is_noop():
    theta = Tensor([0.3, -2.0], requires_grad=True)
    adamw_step(AdamWState(weight_decay=0.0), [theta], [np.zeros(2)])
    assert np.array_equal(theta.data, [0.3, -2.0])


def test_adamw_params_independent():
    a, b = Tensor([1.0], requires_grad=True), Tensor([1.0], requires_grad=True)
    solo = Tensor([1.0], requires_grad=True)
    adamw_step(AdamWState(), [a, b], [np.array([1.0]), np.array([-3.0])])
    adamw_step(AdamWState(), [solo], [np.array([1.0])])
    assert a.data[0] == solo.data[0]
    assert b.data[0] > 1.0


def test_adamw_shape_mismatch():
    with pytest.raises(ShapeError):
        adamw_step(AdamWState(), [Tensor([1.0, 2.0])], [np.ones(3)])


def test_adamw_class_uses_grads():
    p = Tensor([1.0], requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    p.grad = np.array([2.0])
    opt.step()
    assert p.data[0] == pytest.approx(0.9)
    opt.zero_grad()
    assert p.grad is None


def test_determinism(rng):
    def run():
        r = np.random.default_rng(5)
        w = Tensor(r.normal(size=(4, 4)), requires_grad=True)
        loss = T.sum(T.softmax(w @ w) * Tensor(r.normal(size=(4, 4))))
        T.backward(loss)
        return loss.item(), w.grad.tobytes()
    assert run() == run()


def test_check_gradients_zero_gradient_floor(rng):
    # a constant shift of every softmax input has exactly zero gradient
    logits = param(rng, (1, 4))
    shift = Tensor(np.zeros(1), requires_grad=True)
    w = probe(rng, (1, 4))
    errors = T.check_gradients(lambda: weighted(T.softmax(logits + shift), w), {"shift": shift})
    assert errors["shift"] == 0.0
    # and the floor does not hide a wrong gradient of ordinary size
    assert T.relative_error(np.array([1.0]), np.array([2.0])) > 0.3
