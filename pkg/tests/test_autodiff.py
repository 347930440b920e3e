import numpy as np
import pytest

from audiotag.autodiff import Adam, AdamState, BatchNormState, ShapeError, Tape, Tensor, adam_step, backward, ops
from audiotag.autodiff.gradcheck import check_gradients, numeric_grad, weighted_sum

TOL = 1e-4
SEEDS = range(5)


def t64(rng, *shape, grad=True, scale=1.0):
    return Tensor(scale * rng.normal(size=shape), requires_grad=grad, dtype=np.float64)


def projected(op):
    """Scalar loss from an op via a fixed random projection of its output."""
    cache = {}

    def fn(*args):
        out = op(*args)
        if "w" not in cache:
            cache["w"] = np.random.default_rng(99).normal(size=out.shape)
        return weighted_sum(out, cache["w"])

    return fn


# ---- kernels ---------------------------------------------------------------


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_conv1d(seed):
    rng = np.random.default_rng(seed)
    B, C, O = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    K = int(rng.choice([1, 3, 5]))
    stride, dilation = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    pad = int(rng.integers(0, K))
    L = int(rng.integers(dilation * (K - 1) + 2, 20))
    x, w = t64(rng, B, C, L), t64(rng, O, C, K)
    fn = projected(lambda x, w: ops.conv1d(x, w, stride=stride, dilation=dilation, padding=pad))
    assert check_gradients(fn, [x, w]) < TOL


@pytest.mark.parametrize("stride,dilation", [(1, 1), (5, 1), (1, 2), (1, 4), (3, 2)])
def test_grad_conv1d_stride_dilation_grid(stride, dilation):
    rng = np.random.default_rng(stride * 10 + dilation)
    x, w, b = t64(rng, 2, 2, 23), t64(rng, 3, 2, 3), t64(rng, 3)
    fn = projected(lambda x, w, b: ops.conv1d(x, w, b, stride=stride, dilation=dilation, padding=dilation))
    assert check_gradients(fn, [x, w, b]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_conv2d(seed):
    rng = np.random.default_rng(seed)
    B, C, O = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    K = int(rng.choice([1, 3]))
    H, W = rng.integers(K + 1, 7, size=2)
    x, w, b = t64(rng, B, C, H, W), t64(rng, O, C, K, K), t64(rng, O)
    fn = projected(lambda x, w, b: ops.conv2d(x, w, b, padding=K // 2))
    assert check_gradients(fn, [x, w, b]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_batchnorm_train(seed):
    rng = np.random.default_rng(seed)
    shape = [(4, 3), (2, 3, 5), (2, 2, 3, 4), (3, 1, 4, 2), (2, 4, 6)][seed]
    x = t64(rng, *shape)
    state = BatchNormState.create(shape[1], np.float64)
    state.gamma.data[:] = rng.normal(size=shape[1])
    state.beta.data[:] = rng.normal(size=shape[1])
    fn = projected(lambda x, g, b: ops.batchnorm(x, state, training=True))
    assert check_gradients(fn, [x, state.gamma, state.beta]) < TOL


def test_grad_batchnorm_eval(rng):
    x = t64(rng, 3, 2, 4)
    state = BatchNormState.create(2, np.float64)
    state.running_mean[:] = [0.5, -1]
    state.running_var[:] = [2.0, 0.5]
    fn = projected(lambda x, g, b: ops.batchnorm(x, state, training=False))
    assert check_gradients(fn, [x, state.gamma, state.beta]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_avgpool2d(seed):
    rng = np.random.default_rng(seed)
    H, W = rng.integers(2, 9, size=2)
    x = t64(rng, int(rng.integers(1, 3)), 2, H, W)
    assert check_gradients(projected(lambda x: ops.avgpool2d(x, 2)), [x]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_maxpool1d(seed):
    rng = np.random.default_rng(seed)
    x = t64(rng, 2, 3, int(rng.integers(4, 26)))
    assert check_gradients(projected(lambda x: ops.maxpool1d(x, 4)), [x]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_global_pool(seed):
    rng = np.random.default_rng(seed)
    H, W = rng.integers(1, 6, size=2)
    x = t64(rng, 2, int(rng.integers(1, 4)), H, W)
    assert check_gradients(projected(ops.global_pool), [x]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_linear(seed):
    rng = np.random.default_rng(seed)
    B, I, O = rng.integers(1, 6, size=3)
    x, w, b = t64(rng, B, I), t64(rng, O, I), t64(rng, O)
    assert check_gradients(projected(ops.linear), [x, w, b]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_sigmoid(seed):
    rng = np.random.default_rng(seed)
    x = t64(rng, *rng.integers(1, 6, size=2), scale=3.0)
    assert check_gradients(projected(ops.sigmoid), [x]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_bce(seed):
    rng = np.random.default_rng(seed)
    B, K = rng.integers(1, 6, size=2)
    logits = t64(rng, B, K)
    y = rng.uniform(size=(B, K))
    assert check_gradients(lambda z: ops.bce_loss(ops.sigmoid(z), y), [logits]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_misc_ops(seed):
    rng = np.random.default_rng(seed)
    a, b = t64(rng, 3, 4), t64(rng, 3, 4)
    assert check_gradients(projected(lambda a, b: ops.relu(ops.sub(ops.mul(a, b), ops.add(a, b)))), [a, b]) < TOL
    assert check_gradients(projected(lambda a: ops.softmax(a)), [a]) < TOL
    assert check_gradients(lambda a: ops.softmax_cross_entropy(a, np.eye(4)[[0, 1, 3]]), [a]) < TOL
    assert check_gradients(lambda a: ops.mean(ops.transpose(ops.reshape(a, (2, 6)), (1, 0))), [a]) < TOL
    fn = projected(lambda a, b: ops.slice_axis(ops.concat([a, b], axis=1), 1, 2, 7))
    assert check_gradients(fn, [a, b]) < TOL


# ---- conv forward oracles ----------------------------------------------------


def test_conv1d_forward_matches_loops(rng):
    x, w = rng.normal(size=(2, 3, 17)), rng.normal(size=(4, 3, 3))
    out = ops.conv1d(Tensor(x), Tensor(w), stride=2, dilation=2, padding=2).data
    xp = np.pad(x, ((0, 0), (0, 0), (2, 2)))
    Lo = (17 + 4 - 2 * 2 - 1) // 2 + 1
    want = np.zeros((2, 4, Lo))
    for i in range(Lo):
        for k in range(3):
            want[:, :, i] += np.einsum("bc,oc->bo", xp[:, :, 2 * i + 2 * k], w[:, :, k])
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_conv2d_forward_matches_scipy(rng):
    from scipy.signal import correlate2d

    x, w = rng.normal(size=(1, 2, 6, 5)), rng.normal(size=(3, 2, 3, 3))
    out = ops.conv2d(Tensor(x), Tensor(w), padding=1).data
    for o in range(3):
        want = sum(correlate2d(x[0, c], w[o, c], mode="same") for c in range(2))
        np.testing.assert_allclose(out[0, o], want, atol=1e-12)


def test_conv_shape_errors(rng):
    with pytest.raises(ShapeError):
        ops.conv1d(Tensor(rng.normal(size=(1, 2, 9))), Tensor(rng.normal(size=(1, 3, 3))))
    with pytest.raises(ShapeError):
        ops.conv1d(Tensor(rng.normal(size=(1, 1, 2))), Tensor(rng.normal(size=(1, 1, 5))))
    with pytest.raises((ShapeError, ValueError)):
        ops.conv2d(Tensor(rng.normal(size=(1, 2, 4, 4))), Tensor(rng.normal(size=(1, 3, 3, 3))))


# ---- tape semantics --------------------------------------------------------


def test_no_recording_without_tape_or_grad(rng):
    a = Tensor(rng.normal(size=3), requires_grad=True)
    ops.relu(a)
    with Tape() as tape:
        ops.relu(Tensor(rng.normal(size=3)))
        assert len(tape) == 0
        ops.relu(a)
        assert len(tape) == 1


def test_backward_requires_scalar(rng):
    a = Tensor(rng.normal(size=3), requires_grad=True)
    with Tape() as tape:
        out = ops.relu(a)
    with pytest.raises(ShapeError):
        backward(tape, out)


def test_gradients_accumulate_for_reused_leaf():
    a = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.mul(a, a))
    tape.backward(loss)
    assert a.grad[0] == pytest.approx(4.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_first_nonfinite_names_op():
    a = Tensor(np.array([1.0, np.inf]), requires_grad=True)
    with Tape() as tape:
        ops.sum(ops.mul(a, Tensor(np.array([0.0, 0.0]))))
    assert "mul" in tape.first_nonfinite()


def test_dropout_modes(rng):
    x = Tensor(np.ones((200, 50)))
    np.testing.assert_array_equal(ops.dropout(x, 0.5, rng, training=False).data, x.data)
    out = ops.dropout(x, 0.5, rng, training=True).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.05
    with pytest.raises(ValueError):
        ops.dropout(x, 1.0, rng)


def test_batchnorm_degenerate_and_running_stats():
    state = BatchNormState.create(2, np.float64)
    with pytest.raises(ValueError, match="degenerate"):
        ops.batchnorm(Tensor(np.ones((1, 2))), state, training=True)
    x = np.array([[0.0, 2.0], [2.0, 6.0]])
    ops.batchnorm(Tensor(x), state, training=True)
    np.testing.assert_allclose(state.running_mean, 0.1 * x.mean(0))
    np.testing.assert_allclose(state.running_var, 0.9 + 0.1 * x.var(0, ddof=1))


def test_bce_clipping_and_range():
    pred = Tensor(np.array([[0.0, 1.0]]), requires_grad=True)
    with Tape() as tape:
        loss = ops.bce_loss(pred, np.array([[0.0, 1.0]]))
    tape.backward(loss)
    assert np.isfinite(loss.data) and np.all(pred.grad == 0)
    with pytest.raises(ValueError):
        ops.bce_loss(Tensor(np.array([[0.5]])), np.array([[1.5]]))


def test_numeric_grad_of_known_function():
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True, dtype=np.float64)
    g = numeric_grad(lambda x: ops.sum(ops.mul(x, ops.mul(x, x))), [x], 0)
    np.testing.assert_allclose(g, 3 * x.data**2, rtol=1e-8)


# ---- Adam --------------------------------------------------------------------


def test_adam_first_step_is_lr_times_sign():
    p = np.array([1.0, -1.0, 0.5])
    g = np.array([0.3, -2.0, 1e-3])
    adam_step([p], [g], AdamState.zeros_like([p]), lr=0.01)
    np.testing.assert_allclose(p, [0.99, -0.99, 0.49], atol=1e-6)


def test_adam_matches_reference_recursion(rng):
    p = rng.normal(size=4)
    ref, m, v = p.copy(), np.zeros(4), np.zeros(4)
    state = AdamState.zeros_like([p])
    for t in range(1, 6):
        g = rng.normal(size=4)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        adam_step([p], [g], state)
    np.testing.assert_allclose(p, ref, rtol=1e-12)
    assert state.step == 5


def test_adam_rejects_bad_lr_and_shapes():
    p = np.zeros(2)
    with pytest.raises(ValueError):
        adam_step([p], [p], AdamState.zeros_like([p]), lr=0)
    with pytest.raises(ValueError):
        adam_step([p], [p], AdamState.zeros_like([np.zeros(3)]))
    with pytest.raises(ValueError):
        Adam([], lr=-1)


def test_adam_minimises_quadratic():
    w = Tensor(np.array([3.0, -4.0]), requires_grad=True, dtype=np.float64)
    opt = Adam([w], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        with Tape() as tape:
            loss = ops.sum(ops.mul(w, w))
        tape.backward(loss)
        opt.step()
    assert np.all(np.abs(w.data) < 1e-2)
