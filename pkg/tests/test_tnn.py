"""Theta neural network layers, networks and the feature classifier."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtbm import core, tnn
from rtbm.core import Phase
from rtbm.errors import DegenerateData, DimensionMismatch, InvalidConfig, ShapeMismatch
from rtbm.training import TrainConfig

seeds = st.integers(0, 2**32 - 1)
phases = st.sampled_from([Phase.I, Phase.II])


def random_layer(seed, n_in=2, n_out=2, diagonal=True, phase=Phase.I):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1, 1, (n_in, n_out))
    b = rng.uniform(-1, 1, n_out)
    if diagonal:
        q = rng.uniform(0.5, 12.0, n_out)
    else:
        x = rng.uniform(-1, 1, (n_out, n_out))
        q = x @ x.T + np.diag(rng.uniform(0.5, 4.0, n_out))
    return tnn.ThetaLayer(w, b, q, diagonal, phase)


def fd_layer_grads(layer, v, up, h=1e-6):
    f = lambda lay, x=v: float((tnn.layer_forward(lay, x) * up).sum())  # noqa: E731
    p = layer.to_vector()
    g = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        g[i] = (f(layer.from_vector(p + e)) - f(layer.from_vector(p - e))) / (2 * h)
    gi = np.empty_like(v)
    for idx in np.ndindex(v.shape):
        e = np.zeros_like(v)
        e[idx] = h
        gi[idx] = (f(layer, v + e) - f(layer, v - e)) / (2 * h)
    return g, gi


# ---------------------------------------------------------------------------
# single layers


@pytest.mark.parametrize("phase", [Phase.I, Phase.II])
def test_zero_argument_gives_zero_output(phase):
    layer = tnn.ThetaLayer(np.ones((2, 3)), np.zeros(3), [2.0, 5.0, 9.0], True, phase)
    assert np.allclose(tnn.layer_forward(layer, [0.0, 0.0]), 0.0, atol=1e-15)


@given(seeds, phases)
def test_diagonal_path_matches_general_path(seed, phase):
    layer = random_layer(seed, 3, 2, True, phase)
    general = tnn.ThetaLayer(layer.w, layer.b_h, np.diag(layer.q), False, phase)
    v = np.random.default_rng(seed).uniform(-5, 5, (8, 3))
    a = tnn.layer_forward(layer, v)
    b = tnn.layer_forward(general, v)
    assert np.max(np.abs(a - b) / np.maximum(1, np.abs(b))) < 1e-10


@given(seeds, phases)
def test_layer_equals_rtbm_expectation(seed, phase):
    layer = random_layer(seed, 2, 3, False, phase)
    v = np.random.default_rng(seed).normal(size=(4, 2))
    assert np.allclose(tnn.layer_forward(layer, v), core.expectation(layer.to_rtbm(), v), atol=1e-12)


@given(seeds)
def test_phase_two_periodicity(seed):
    rng = np.random.default_rng(seed)
    w, q = rng.uniform(0.2, 2.0), rng.uniform(0.3, 15.0)
    layer = tnn.ThetaLayer([[w]], [rng.uniform(-1, 1)], [q], True, Phase.II)
    period = 2 * np.pi / w
    v = rng.uniform(-10, 10, (20, 1))
    assert np.allclose(tnn.layer_forward(layer, v), tnn.layer_forward(layer, v + period), atol=1e-8, rtol=0)


@given(seeds, st.integers(-3, 3))
def test_phase_one_trend(seed, n):
    rng = np.random.default_rng(seed)
    q = rng.uniform(0.3, 15.0)
    layer = tnn.ThetaLayer([[1.0]], [0.0], [q], True, Phase.I)
    y = rng.uniform(-10, 10, (20, 1))
    shifted = tnn.layer_forward(layer, y + q * n)
    assert np.allclose(shifted, tnn.layer_forward(layer, y) - n, atol=1e-8, rtol=0)


def test_phase_one_large_q_is_a_staircase():
    layer = tnn.ThetaLayer([[1.0]], [0.0], [60.0], True, Phase.I)
    out = tnn.layer_forward(layer, np.array([[-50.0], [-10.0], [10.0], [50.0]]))[:, 0]
    assert np.allclose(out, [1.0, 0.0, 0.0, -1.0], atol=1e-3)


@pytest.mark.parametrize("phase", [Phase.I, Phase.II])
@pytest.mark.parametrize("diagonal", [True, False])
def test_layer_backward_matches_finite_differences(phase, diagonal):
    layer = random_layer(3, 2, 2, diagonal, phase)
    rng = np.random.default_rng(1)
    v = rng.uniform(-2, 2, (6, 2))
    up = rng.normal(size=(6, 2))
    g = tnn.layer_backward(layer, v, up)
    num, num_in = fd_layer_grads(layer, v, up)
    an = tnn._layer_grad_vector(layer, g)
    assert np.max(np.abs(an - num) / np.maximum(1, np.abs(num))) < 1e-4
    assert np.max(np.abs(g.input - num_in) / np.maximum(1, np.abs(num_in))) < 1e-4


def test_zero_upstream_gives_zero_gradients():
    layer = random_layer(4, 2, 3, False)
    g = tnn.layer_backward(layer, np.ones((3, 2)), np.zeros((3, 3)))
    for part in g:
        assert np.all(part == 0)


def test_q_gradient_symmetric():
    layer = random_layer(5, 2, 3, False, Phase.II)
    g = tnn.layer_backward(layer, np.ones((2, 2)), np.ones((2, 3)))
    assert np.array_equal(g.q, g.q.T)


def test_single_sample_shapes():
    layer = random_layer(6, 2, 3)
    assert tnn.layer_forward(layer, [0.5, 0.1]).shape == (3,)
    g = tnn.layer_backward(layer, [0.5, 0.1], [1.0, 0.0, 0.0])
    assert g.input.shape == (2,)


def test_layer_dimension_checks():
    layer = random_layer(6, 2, 3)
    with pytest.raises(DimensionMismatch):
        tnn.layer_forward(layer, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatch):
        tnn.layer_backward(layer, [1.0, 2.0], [1.0])
    with pytest.raises(ShapeMismatch):
        tnn.ThetaLayer(np.ones((2, 2)), np.zeros(3), [1.0, 1.0])


def test_affine_backward():
    layer = tnn.AffineLayer(np.array([[0.5, -1.0], [2.0, 0.3]]), [0.1, -0.2], tnn.Activation.TANH)
    rng = np.random.default_rng(2)
    v, up = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    g = tnn.layer_backward(layer, v, up)
    num, num_in = fd_layer_grads(layer, v, up)
    assert np.allclose(tnn._layer_grad_vector(layer, g), num, atol=1e-7)
    assert np.allclose(g.input, num_in, atol=1e-7)


# ---------------------------------------------------------------------------
# networks


def test_paper_architecture_has_38_parameters():
    net = tnn.build_network("1:3-3-2:1")
    assert net.n_params() == 38
    assert all(isinstance(layer, tnn.ThetaLayer) and layer.diagonal_q for layer in net.layers)


def test_q_initialised_in_range():
    q = np.concatenate([layer.q for layer in tnn.build_network("4:6-5:3", seed=3).layers])
    assert np.all((q >= 2) & (q <= 18))


def test_parse_architecture():
    assert tnn.parse_architecture("4:3") == [(4, "input"), (3, "theta")]
    assert tnn.parse_architecture("2:3g-4tanh:1linear") == [
        (2, "input"), (3, "theta_full"), (4, "tanh"), (1, "linear")]
    for bad in ["3", "1:0:1", "1:3x:1", "2t:3", "a:b"]:
        with pytest.raises(InvalidConfig):
            tnn.parse_architecture(bad)


def test_network_dimension_chain_checked():
    a = random_layer(0, 2, 3)
    b = random_layer(0, 2, 1)
    with pytest.raises(ShapeMismatch):
        tnn.TnnNetwork((a, b))


@pytest.mark.parametrize("arch,loss", [("2:3-2tanh:2", "mse"), ("2:2g-3:2", "cross_entropy"),
                                       ("1:3-3-2:1", "mse")])
@pytest.mark.parametrize("phase", [Phase.I, Phase.II])
def test_network_gradient_matches_finite_differences(arch, loss, phase):
    net = tnn.build_network(arch, seed=1, phase=phase, loss=tnn.Loss(loss))
    assert net.n_params() <= 38
    rng = np.random.default_rng(0)
    x = rng.normal(size=(7, net.in_dim))
    y = np.eye(net.out_dim)[rng.integers(0, net.out_dim, 7)] if net.out_dim > 1 else rng.normal(size=(7, 1))
    _, g = tnn.network_loss_and_grad(net, x, y)
    p = net.to_vector()
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = 1e-6
        fd = (tnn.network_loss(net.from_vector(p + e), x, y) - tnn.network_loss(net.from_vector(p - e), x, y)) / 2e-6
        assert abs(g[i] - fd) <= 1e-4 * max(1.0, abs(fd)), (i, g[i], fd)


def test_vector_round_trip_and_json():
    net = tnn.build_network("3:2g-4sigmoid:2", seed=5, phase=Phase.II)
    again = tnn.TnnNetwork.from_dict(net.to_dict())
    assert np.array_equal(again.to_vector(), net.to_vector())
    assert np.array_equal(net.from_vector(net.to_vector()).to_vector(), net.to_vector())


def test_linear_layer_is_least_squares():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(20, 2))
    y = x @ np.array([1.5, -0.7]) + 0.3 + 0.1 * rng.normal(size=20)
    design = np.column_stack([x, np.ones(20)])
    coef = np.linalg.solve(design.T @ design, design.T @ y)
    net = tnn.build_network("2:1linear", seed=0)
    fitted, _ = tnn.network_train(net, x, y, TrainConfig(max_iters=3000, tol=1e-14, seed=0))
    assert np.allclose(fitted.to_vector(), coef, atol=1e-3)
    fitted, _ = tnn.network_train(net, x, y, TrainConfig(optimizer="adam", lr=0.05, max_iters=5000, tol=1e-14))
    assert np.allclose(fitted.to_vector(), coef, atol=1e-3)


def test_cmaes_training_reproducible_and_monotone():
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 10, 60)
    y = np.sin(t)
    net = tnn.build_network("1:2:1", seed=2, w_scale=0.5)
    cfg = TrainConfig(max_iters=40, seed=7)
    a, ra = tnn.network_train(net, t, y, cfg)
    b, rb = tnn.network_train(net, t, y, cfg)
    assert np.array_equal(a.to_vector(), b.to_vector()) and ra == rb
    assert all(x >= z for x, z in zip(ra.cost_history, ra.cost_history[1:]))
    assert a.is_valid()


def test_training_shape_checks():
    net = tnn.build_network("2:1", seed=0)
    with pytest.raises(ShapeMismatch):
        tnn.network_train(net, np.zeros((5, 3)), np.zeros(5))


# ---------------------------------------------------------------------------
# feature classifier


def _blobs(seed, n=120):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    sign = rng.choice([-1.0, 1.0], n)
    centre = np.where(labels[:, None] == 0, np.column_stack([4 * sign, 0 * sign]),
                      np.column_stack([0 * sign, 4 * sign]))
    return centre + rng.normal(size=(n, 2)), labels


def test_feature_classifier_shapes():
    x, labels = _blobs(0)
    clf = tnn.feature_classifier_fit(x, labels, [(0,), (1,)], n_h=2, config=TrainConfig(max_iters=15, seed=0))
    assert clf.features(x).shape == (x.shape[0], 4)
    assert len(clf.models) == 2 and all(m.n_h == 2 for m in clf.models)
    assert 0.0 <= clf.score(x, labels) <= 1.0


def test_feature_classifier_rejects_constant_patch():
    x, labels = _blobs(1)
    x[:, 1] = 2.0
    with pytest.raises(DegenerateData):
        tnn.feature_classifier_fit(x, labels, [(0,), (1,)], config=TrainConfig(max_iters=5))
