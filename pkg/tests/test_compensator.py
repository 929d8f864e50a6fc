import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cosimlab.compensator import (LINEAR, Adam, CompensatorNet, ExtrapolatorParams, TrainerConfig,
                                  activation_pattern, all_region_params, build_training_set, extrapolate_ar,
                                  init_from_linear, leaky_relu, linear_equivalent, load_weights,
                                  loss_and_grad, mlp_forward, mse, region_params, save_weights, train,
                                  training_arrays)
from cosimlab.twomass import A_OPT, A_TRAINED

finite = st.floats(-10, 10, allow_nan=False)
coeffs = arrays(np.float64, 4, elements=finite)


def test_zoh_passes_newest_sample():
    assert extrapolate_ar(ExtrapolatorParams.zoh(4), [3.0, 1.0, 4.0, 1.0]) == 3.0


def test_foh_is_exact_on_ramps_symbolically():
    k, dT, c0, c1, n = sp.symbols("k dT c0 c1 n")
    u = lambda i: c0 + c1 * i * dT
    a = [1 + k, -k, 0, 0]
    window = [u(n - j) for j in range(4)]
    pred = sum(ai * wi for ai, wi in zip(a, window))
    assert sp.simplify(pred - u(n + k)) == 0


def test_foh_params_exact_on_sampled_ramp():
    k, dT = 3, 1e-3
    t = np.arange(20) * dT
    u = 0.7 + 2.5 * t
    for newest in range(3, 16):
        window = u[newest::-1][:4]
        assert extrapolate_ar(ExtrapolatorParams.foh(k, 4), window) == pytest.approx(u[newest + k], abs=1e-12)


def test_window_length_checked():
    with pytest.raises(ValueError):
        extrapolate_ar(ExtrapolatorParams.zoh(4), [1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(coeffs, finite)
def test_constant_signal_exact_when_normalised(a, c):
    # without bias every constant passes; with a bias only the unit constant does
    a0 = a.copy()
    a0[0] = 1.0 - a[1:].sum()
    assert extrapolate_ar(ExtrapolatorParams(a0, 0.0), [c] * 4) == pytest.approx(c, abs=1e-9)
    params = ExtrapolatorParams(a, 1.0 - a.sum())
    assert extrapolate_ar(params, [1.0] * 4) == pytest.approx(1.0, abs=1e-9)


def test_leaky_relu_definition():
    assert leaky_relu(-1.0, 0.01) == pytest.approx(-0.01)
    assert leaky_relu(2.0, 0.01) == 2.0


@pytest.mark.parametrize("law", [A_OPT, A_TRAINED, ExtrapolatorParams([0.5, 0.3, 0.1, 0.1], 0.25)])
def test_init_from_linear_is_exact(law):
    net = init_from_linear(law, 0.01)
    rng = np.random.default_rng(1)
    W = rng.normal(0, 3, (1000, 4))
    assert np.allclose(mlp_forward(net, W), W @ law.a + law.b, rtol=0, atol=1e-12)
    assert np.allclose(net.W1, np.vstack([law.a, -law.a]))
    assert np.allclose(net.w2, [1 / 1.01, -1 / 1.01])


def test_init_zero_a_unit_bias_is_constant():
    net = init_from_linear(ExtrapolatorParams(np.zeros(4), 1.0))
    W = np.random.default_rng(0).normal(size=(50, 4))
    assert np.all(mlp_forward(net, W) == 1.0)


def test_zero_weights_output_bias():
    net = CompensatorNet(np.zeros((2, 4)), np.zeros(2), np.zeros(2), 0.3)
    assert mlp_forward(net, [5.0, -1.0, 2.0, 0.0]) == 0.3


def test_net_shape_and_slope_checks():
    with pytest.raises(ValueError):
        CompensatorNet(np.zeros((2, 4)), np.zeros(3), np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        CompensatorNet(np.zeros((2, 4)), np.zeros(2), np.zeros(2), 0.0, slope=1.0)
    with pytest.raises(ValueError):
        init_from_linear(A_OPT, slope=0.0)


def _fd_grad(net, X, y, h=1e-6):
    theta = net.flat()
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (mse(net.with_flat(theta + e), X, y) - mse(net.with_flat(theta - e), X, y)) / (2 * h)
    return g


def test_gradient_matches_finite_differences_at_init():
    net = init_from_linear(A_OPT)
    rng = np.random.default_rng(3)
    X = rng.normal(size=(1, 4))
    y = np.array([0.37])
    _, g = loss_and_grad(net, X, y)
    assert np.allclose(g, _fd_grad(net, X, y), rtol=1e-6, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gradient_matches_finite_differences_random(seed):
    rng = np.random.default_rng(seed)
    net = CompensatorNet.random(4, rng=rng)
    X = rng.normal(size=(8, 4))
    y = rng.normal(size=8)
    z = X @ net.W1.T + net.b1
    if np.abs(z).min() < 1e-3:
        return  # too close to a kink for a central difference
    _, g = loss_and_grad(net, X, y)
    assert np.allclose(g, _fd_grad(net, X, y), rtol=1e-6, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_linear_network_is_an_ar_law(seed):
    rng = np.random.default_rng(seed)
    net = CompensatorNet.random(4, hidden=3, rng=rng, activation=LINEAR)
    law = linear_equivalent(net)
    W = rng.normal(0, 2, (200, 4))
    assert np.allclose(mlp_forward(net, W), W @ law.a + law.b, atol=1e-10)


def test_leaky_network_has_no_single_ar_law():
    with pytest.raises(ValueError):
        linear_equivalent(init_from_linear(A_OPT))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_regions_are_affine_and_at_most_two_to_the_h(seed, h):
    rng = np.random.default_rng(seed)
    net = CompensatorNet.random(4, hidden=h, rng=rng)
    regions = all_region_params(net)
    assert len(regions) == 2 ** h
    W = rng.normal(0, 2, (300, 4))
    seen = set()
    for w in W:
        pat = activation_pattern(net, w)
        seen.add(pat)
        law = region_params(net, pat)
        assert mlp_forward(net, w) == pytest.approx(extrapolate_ar(law, w), abs=1e-10)
    assert len(seen) <= 2 ** h


def test_init_net_regions_collapse_to_the_linear_law():
    # one unit is always on and the other off, so the two live regions share the law
    net = init_from_linear(A_OPT)
    for pat in [(True, False), (False, True)]:
        law = region_params(net, pat)
        assert np.allclose(law.a, A_OPT.a) and law.b == pytest.approx(A_OPT.b)


def test_training_set_index_arithmetic():
    s = np.arange(10.0)
    samples = build_training_set(s, 4, 3)
    assert list(samples[0].x) == [3.0, 2.0, 1.0, 0.0] and samples[0].y == 6.0
    assert len(samples) == 10 - 3 - 3
    X, y = training_arrays(s, 4, 3)
    assert np.array_equal(X[0], samples[0].x) and np.array_equal(y, [s.y for s in samples])


def test_training_set_constant_and_ramp():
    for smp in build_training_set(np.full(12, 2.5), 4, 3):
        assert np.all(smp.x == 2.5) and smp.y == 2.5
    dT, slope, k = 1e-3, 4.0, 3
    ramp = slope * np.arange(30) * dT
    for smp in build_training_set(ramp, 4, k):
        assert smp.y == pytest.approx(smp.x[0] + k * slope * dT, abs=1e-14)


def test_training_set_limits():
    assert build_training_set(np.arange(6.0), 4, 3) == []
    samples = build_training_set(np.arange(100.0), 4, 3, max_samples=5)
    assert len(samples) == 5 and samples[-1].y == 99.0


def test_trainer_config_validation():
    TrainerConfig().validate(4, 3)
    with pytest.raises(ValueError):
        TrainerConfig(lr=0.0).validate()
    with pytest.raises(ValueError):
        TrainerConfig(beta2=1.0).validate()
    with pytest.raises(ValueError):
        TrainerConfig(max_samples=7).validate(4, 3)


def test_adam_first_step_moves_by_lr():
    opt = Adam(3, lr=1e-3)
    theta = opt.step(np.zeros(3), np.array([2.0, -0.5, 0.0]))
    assert np.allclose(theta, [-1e-3, 1e-3, 0.0], atol=1e-9)


def test_training_recovers_a_linear_law():
    rng = np.random.default_rng(0)
    law = ExtrapolatorParams([1.8, -0.5, -0.2, -0.1], 0.0)
    X = rng.normal(size=(400, 4))
    y = X @ law.a
    net = CompensatorNet.random(4, rng=1)
    res = train(net, (X, y), TrainerConfig(lr=1e-2, epochs=10000), rng=0)
    assert res.accepted and res.loss_after < 1e-6


def test_single_sample_is_fitted():
    net = CompensatorNet.random(4, rng=2)
    X, y = np.array([[0.3, 0.1, -0.2, 0.5]]), np.array([1.7])
    res = train(net, (X, y), TrainerConfig(lr=1e-2, epochs=3000))
    assert abs(mlp_forward(res.net, X[0]) - y[0]) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-4, 1.0))
def test_training_never_worsens_the_cost(seed, lr):
    rng = np.random.default_rng(seed)
    net = CompensatorNet.random(4, rng=rng)
    X = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    res = train(net, (X, y), TrainerConfig(lr=lr, epochs=20, batch_size=7), rng=seed)
    assert mse(res.net, X, y) <= mse(net, X, y)
    if not res.accepted:
        assert np.array_equal(res.net.flat(), net.flat())


def test_non_finite_loss_keeps_old_weights():
    net = init_from_linear(A_OPT)
    X = np.array([[1e200, 1e200, 1e200, 1e200]])
    with np.errstate(all="ignore"):
        res = train(net, (X, np.array([0.0])), TrainerConfig(epochs=3))
    assert not res.accepted
    assert np.array_equal(res.net.flat(), net.flat())


def test_training_needs_samples():
    with pytest.raises(ValueError):
        train(init_from_linear(A_OPT), [], TrainerConfig())


def test_weights_table_round_trip(tmp_path):
    net = CompensatorNet.random(4, rng=5, slope=0.02)
    path = tmp_path / "w.txt"
    save_weights(net, path)
    back = load_weights(path)
    assert np.array_equal(back.flat(), net.flat())
    assert back.slope == 0.02 and back.activation == net.activation
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == 1 + net.flat().size
