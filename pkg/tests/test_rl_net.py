import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rl_oracles import (
    FD_RTOL, SMALL_SHAPE, SMALL_SHAPE_J1, central_diff, random_batch, random_theta, rel_error,
    textbook_adam,
)
from ts_sandbox.rl.adam import AdamState, NonFiniteGradient, adam_step
from ts_sandbox.rl.losses import (
    Batch, LossError, check_alpha, cql_regularizer, dqn_loss, rem_combine, rem_cql_loss,
    sample_alpha, td_loss_rem, td_targets, uniform_alpha,
)
from ts_sandbox.rl.network import (
    FULL_SHAPE, NetShape, ShapeError, combined_forward, conv1d_backward, conv1d_forward,
    dense_backward, dense_forward, forward, init_params, relu_backward, relu_forward,
    trunk_forward, unpack,
)

TRIALS = 100


# -- architecture ---------------------------------------------------------------

def test_full_layer_shapes():
    s = FULL_SHAPE
    shapes = dict(s.layout())
    assert shapes["conv_w"] == (32, 8) and shapes["conv_b"] == (32,)
    assert s.conv_out == 224 and s.flat == 225 and s.n_in == 57
    assert shapes["w1"] == (225, 128) and shapes["w2"] == (128, 32)
    assert shapes["w3"] == (32, 1400) and shapes["b3"] == (1400,)
    assert s.n_params == 32 * 8 + 32 + 225 * 128 + 128 + 128 * 32 + 32 + 32 * 1400 + 1400


def test_forward_activation_shapes():
    theta = init_params(FULL_SHAPE, np.random.default_rng(0))
    x = np.random.default_rng(1).random((5, 57))
    t = trunk_forward(FULL_SHAPE, theta, x)
    assert t.conv_z.shape == (5, 7, 32)
    assert t.flat.shape == (5, 225) and t.z1.shape == (5, 128) and t.h2.shape == (5, 32)
    assert forward(FULL_SHAPE, theta, x).shape == (5, 200, 7)
    assert forward(FULL_SHAPE, theta, x[0]).shape == (200, 7)


def test_zero_weights_give_zero_q():
    q = forward(FULL_SHAPE, np.zeros(FULL_SHAPE.n_params), np.random.default_rng(2).random(57))
    assert q.shape == (200, 7) and not q.any()


def test_flatten_is_position_major_and_extra_bypasses_conv():
    theta = init_params(FULL_SHAPE, np.random.default_rng(3))
    x = np.random.default_rng(4).random(57)
    t = trunk_forward(FULL_SHAPE, theta, x)
    p = unpack(FULL_SHAPE, theta)
    for pos in range(7):
        z = p["conv_w"] @ x[8 * pos: 8 * pos + 8] + p["conv_b"]
        assert np.allclose(t.flat[0, 32 * pos: 32 * pos + 32], np.maximum(z, 0), atol=1e-14)
    assert t.flat[0, 224] == x[56]


def test_toy_network_matches_hand_computed_chain():
    # 3 cells of 2 features, one filter, 1 unit per hidden layer, one head of 2 actions
    shape = NetShape(n_cells=3, n_feat=2, n_filters=1, hidden1=1, hidden2=1, n_heads=1,
                     n_actions=2)
    theta = np.zeros(shape.n_params)
    p = unpack(shape, theta)
    p["conv_w"][...] = [[1.0, -1.0]]
    p["conv_b"][...] = [0.5]
    p["w1"][...] = [[1.0], [2.0], [3.0], [4.0]]
    p["b1"][...] = [-1.0]
    p["w2"][...] = [[0.5]]
    p["b2"][...] = [0.25]
    p["w3"][...] = [[2.0, -1.0]]
    p["b3"][...] = [0.0, 10.0]
    x = np.array([3.0, 1.0, 0.0, 2.0, 1.0, 1.0, 0.1])
    # conv: relu(3-1+.5)=2.5, relu(0-2+.5)=0, relu(1-1+.5)=.5; flat (2.5, 0, .5, .1)
    # dense1: 2.5 + 0 + 1.5 + .4 - 1 = 3.4; dense2: 1.7 + .25 = 1.95
    # out: (3.9, 8.05)
    assert np.allclose(forward(shape, theta, x), [[3.9, 8.05]], rtol=0, atol=1e-12)


def test_forward_rejects_bad_shapes():
    theta = np.zeros(FULL_SHAPE.n_params)
    with pytest.raises(ShapeError):
        forward(FULL_SHAPE, theta, np.zeros(56))
    with pytest.raises(ShapeError):
        forward(FULL_SHAPE, theta[:-1], np.zeros(57))


# -- kernel gradients -----------------------------------------------------------

def test_conv1d_gradients():
    rng = np.random.default_rng(10)
    for _ in range(TRIALS):
        x = rng.normal(size=(3, 12))
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=4)
        g = rng.normal(size=(3, 4, 4))  # stride 3 -> 4 positions
        loss = lambda x_, w_, b_: float(np.sum(conv1d_forward(x_, w_, b_, 3) * g))
        dx, dw, db = conv1d_backward(x, w, 3, g)
        assert rel_error(dx, central_diff(lambda v: loss(v, w, b), x)) < FD_RTOL
        assert rel_error(dw, central_diff(lambda v: loss(x, v, b), w)) < FD_RTOL
        assert rel_error(db, central_diff(lambda v: loss(x, w, v), b)) < FD_RTOL


def test_dense_gradients():
    rng = np.random.default_rng(11)
    for _ in range(TRIALS):
        x = rng.normal(size=(4, 5))
        w = rng.normal(size=(5, 3))
        b = rng.normal(size=3)
        g = rng.normal(size=(4, 3))
        loss = lambda x_, w_, b_: float(np.sum(dense_forward(x_, w_, b_) * g))
        dx, dw, db = dense_backward(x, w, g)
        assert rel_error(dx, central_diff(lambda v: loss(v, w, b), x)) < FD_RTOL
        assert rel_error(dw, central_diff(lambda v: loss(x, v, b), w)) < FD_RTOL
        assert rel_error(db, central_diff(lambda v: loss(x, w, v), b)) < FD_RTOL


def test_relu_gradient():
    rng = np.random.default_rng(12)
    for _ in range(TRIALS):
        z = rng.normal(size=20)
        z[np.abs(z) < 1e-3] = 0.5  # keep clear of the kink
        g = rng.normal(size=20)
        num = central_diff(lambda v: float(np.sum(relu_forward(v) * g)), z)
        assert rel_error(relu_backward(z, g), num) < FD_RTOL


def _loss_fd(fn, shape, seed):
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(TRIALS):
        theta, target = random_theta(rng, shape), random_theta(rng, shape)
        batch = random_batch(rng, shape)
        alpha = sample_alpha(rng, shape.n_heads)
        res = fn(theta, target, batch, alpha)
        num = central_diff(lambda th: fn(th, target, batch, alpha).total, theta)
        errs.append(rel_error(res.grad, num))
    return errs


def test_small_shape_is_about_fifty_weights():
    assert 45 <= SMALL_SHAPE.n_params <= 55


@pytest.mark.parametrize("name, fn", [
    ("td_rem", lambda th, tg, b, al: td_loss_rem(SMALL_SHAPE, th, tg, b, al, 0.99)),
    ("cql_greedy", lambda th, tg, b, al: rem_cql_loss(SMALL_SHAPE, th, tg, b, al, 0.99, 1.0, 1.0)),
    ("cql_logsumexp", lambda th, tg, b, al: rem_cql_loss(SMALL_SHAPE, th, tg, b, al, 0.99, 0.7,
                                                         1.3, "logsumexp")),
    ("regularizer", lambda th, tg, b, al: cql_regularizer(SMALL_SHAPE, th, b, al, 2.0)),
])
def test_loss_gradients_match_finite_differences(name, fn):
    errs = _loss_fd(fn, SMALL_SHAPE, sum(map(ord, name)))
    assert max(errs) < FD_RTOL, (name, max(errs))


def test_dqn_gradient_matches_finite_differences():
    fn = lambda th, tg, b, al: dqn_loss(SMALL_SHAPE_J1, th, tg, b, 0.9)
    assert max(_loss_fd(fn, SMALL_SHAPE_J1, 5)) < FD_RTOL


# -- REM mixing -----------------------------------------------------------------

def test_rem_combine_examples():
    q = np.array([[1.0, 4.0], [3.0, 8.0]])
    assert rem_combine(q, [0.5, 0.5]).tolist() == [2.0, 6.0]
    for k in range(2):
        onehot = np.eye(2)[k]
        assert rem_combine(q, onehot).tolist() == q[k].tolist()


@pytest.mark.parametrize("alpha", [[0.6, 0.6], [1.2, -0.2], [0.5], [[0.5, 0.5]]])
def test_rem_alpha_off_simplex_rejected(alpha):
    with pytest.raises(LossError):
        rem_combine(np.ones((2, 3)), alpha)


def test_alpha_sampling_on_simplex():
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = check_alpha(sample_alpha(rng, 200))
        assert abs(a.sum() - 1) < 1e-12
    assert uniform_alpha(4).tolist() == [0.25] * 4


@settings(max_examples=200)
@given(arrays(np.float64, (5, 3), elements=st.floats(-1e6, 1e6)),
       arrays(np.float64, 5, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-3))
def test_rem_convex_hull(q, raw):
    alpha = raw / raw.sum()
    mixed = rem_combine(q, alpha)
    slack = 1e-9 * (1 + np.abs(q).max())
    assert (mixed >= q.min(axis=0) - slack).all() and (mixed <= q.max(axis=0) + slack).all()


def test_combined_forward_equals_mixed_heads():
    rng = np.random.default_rng(6)
    theta = init_params(FULL_SHAPE, rng)
    x = rng.random((3, 57))
    alpha = sample_alpha(rng, 200)
    q, _ = combined_forward(FULL_SHAPE, theta, x, alpha)
    assert np.allclose(q, rem_combine(forward(FULL_SHAPE, theta, x), alpha), atol=1e-12)


# -- TD targets and CQL term ----------------------------------------------------

def _one_head_constant(shape, values):
    theta = np.zeros(shape.n_params)
    unpack(shape, theta)["b3"][...] = np.tile(values, shape.n_heads)
    return theta


def test_td_target_examples():
    shape = SMALL_SHAPE
    target = _one_head_constant(shape, [2.0, -1.0])
    batch = Batch(np.zeros((2, shape.n_in)), np.array([0, 1]), np.array([1.0, 1.0]),
                  np.zeros((2, shape.n_in)), np.array([False, True]))
    y = td_targets(shape, target, batch, uniform_alpha(2), 0.99)
    assert y[0] == pytest.approx(2.98, abs=1e-15) and y[1] == 1.0


def test_cql_term_zero_when_data_is_greedy():
    shape = SMALL_SHAPE
    theta = _one_head_constant(shape, [5.0, 1.0])
    batch = Batch(np.zeros((4, shape.n_in)), np.zeros(4, dtype=int), np.zeros(4),
                  np.zeros((4, shape.n_in)), np.zeros(4, dtype=bool))
    res = cql_regularizer(shape, theta, batch, uniform_alpha(2))
    assert res.cql_term == 0.0 and res.total == 0.0 and not res.grad.any()


def test_cql_term_zero_for_single_action():
    shape = NetShape(n_cells=2, n_feat=2, n_filters=2, hidden1=3, hidden2=2, n_heads=3, n_actions=1)
    rng = np.random.default_rng(1)
    for _ in range(20):
        theta = random_theta(rng, shape)
        res = cql_regularizer(shape, theta, random_batch(rng, shape), sample_alpha(rng, 3))
        assert res.cql_term == 0.0


def test_cql_term_positive_for_ood_greedy():
    shape = SMALL_SHAPE
    theta = _one_head_constant(shape, [5.0, 1.0])
    batch = Batch(np.zeros((4, shape.n_in)), np.ones(4, dtype=int), np.zeros(4),
                  np.zeros((4, shape.n_in)), np.zeros(4, dtype=bool))
    assert cql_regularizer(shape, theta, batch, uniform_alpha(2)).cql_term == 4.0


def test_unknown_variant_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(LossError):
        rem_cql_loss(SMALL_SHAPE, random_theta(rng, SMALL_SHAPE), random_theta(rng, SMALL_SHAPE),
                     random_batch(rng, SMALL_SHAPE), uniform_alpha(2), 0.9, variant="soft")


def test_single_head_rem_equals_dqn_over_1k_steps():
    rng = np.random.default_rng(7)
    shape = SMALL_SHAPE_J1
    th_rem = random_theta(rng, shape)
    th_dqn = th_rem.copy()
    target = th_rem.copy()
    st_rem, st_dqn = AdamState.zeros(shape.n_params), AdamState.zeros(shape.n_params)
    one = np.ones(1)
    for step in range(1, 1001):
        batch = random_batch(rng, shape, n=32)
        a = td_loss_rem(shape, th_rem, target, batch, one, 0.99)
        b = dqn_loss(shape, th_dqn, target, batch, 0.99)
        assert abs(a.total - b.total) <= 1e-12 * max(1.0, abs(b.total))
        adam_step(th_rem, a.grad, 1e-3, st_rem)
        adam_step(th_dqn, b.grad, 1e-3, st_dqn)
        if step % 100 == 0:
            target = th_dqn.copy()


def test_targets_ignore_online_parameters():
    rng = np.random.default_rng(8)
    shape = SMALL_SHAPE
    target = random_theta(rng, shape)
    batch = random_batch(rng, shape, n=16)
    alpha = sample_alpha(rng, 2)
    y0 = rem_cql_loss(shape, random_theta(rng, shape), target, batch, alpha, 0.99).targets
    for _ in range(10):
        y = rem_cql_loss(shape, random_theta(rng, shape), target, batch, alpha, 0.99).targets
        assert np.array_equal(y, y0)


# -- Adam -----------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    theta = np.array([1.0, -2.0, 3.0])
    state = AdamState.zeros(3)
    adam_step(theta, np.zeros(3), 0.1, state)
    assert theta.tolist() == [1.0, -2.0, 3.0] and state.t == 1


@given(st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]))
def test_adam_first_step_is_lr_sign(mag, sign):
    theta = np.zeros(1)
    adam_step(theta, np.array([sign * mag]), 0.01, AdamState.zeros(1))
    assert theta[0] == pytest.approx(-0.01 * sign, rel=1e-5)


def test_adam_matches_textbook():
    rng = np.random.default_rng(9)
    theta = rng.normal(size=6)
    grads = [rng.normal(size=6) * 10.0 ** rng.integers(-3, 3) for _ in range(50)]
    ref = textbook_adam(theta, grads, 1e-2)
    state = AdamState.zeros(6)
    for g, want in zip(grads, ref):
        adam_step(theta, g, 1e-2, state)
        assert np.allclose(theta, want, rtol=1e-12, atol=1e-15)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(4)
        theta = rng.normal(size=50)
        state = AdamState.zeros(50)
        for _ in range(100):
            adam_step(theta, rng.normal(size=50), 1e-3, state)
        return theta.tobytes()
    assert run() == run()


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_adam_rejects_non_finite_and_leaves_state(bad):
    theta = np.ones(3)
    state = AdamState.zeros(3)
    adam_step(theta, np.ones(3), 0.1, state)
    snap = (theta.copy(), state.m.copy(), state.v.copy(), state.t)
    with pytest.raises(NonFiniteGradient):
        adam_step(theta, np.array([1.0, bad, 0.0]), 0.1, state)
    assert np.array_equal(theta, snap[0]) and np.array_equal(state.m, snap[1])
    assert np.array_equal(state.v, snap[2]) and state.t == snap[3]


def test_adam_rejects_bad_lr():
    with pytest.raises(ValueError):
        adam_step(np.ones(1), np.ones(1), 0.0, AdamState.zeros(1))
