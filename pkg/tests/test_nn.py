import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from spikegan.errors import ConfigError, NumericError, UsageError
from spikegan.gradcheck import check_network, fd_gradient, rel_error
from spikegan.nn import (
    ACTIVATIONS,
    Conv1d,
    ConvLayerSpec,
    Dense,
    Flatten,
    Network,
    backward,
    conv_net,
    conv_output_length,
    dense_net,
    forward,
    gan_losses,
    sgd_step,
    sigmoid,
    softmax_cross_entropy,
)


def _kink_free(net, x, margin=1e-4):
    """True when no pre-activation sits within the FD step of a ReLU kink."""
    _, tape = forward(net, x)
    pres = [e[1] for e in tape.entries if len(e) > 1]
    return all(np.min(np.abs(p)) > margin for p in pres)


def _dense(w, b, act="identity"):
    return Network([Dense(np.asarray(w, float), np.asarray(b, float), act)])


class TestForward:
    def test_zero_sigmoid_unit_outputs_half(self):
        net = _dense(np.zeros((1, 2)), np.zeros(1), "sigmoid")
        out, _ = forward(net, np.array([[3.0, -7.0], [0.0, 100.0]]))
        np.testing.assert_array_equal(out, 0.5)

    def test_identity_dense_is_identity(self):
        net = _dense(np.eye(3), np.zeros(3))
        x = np.random.default_rng(0).normal(size=(5, 3))
        out, _ = forward(net, x)
        np.testing.assert_array_equal(out, x)

    def test_conv_output_length_example(self):
        conv = Conv1d(np.ones((1, 1, 4)), np.zeros(1), stride=2)
        out, _ = forward(Network([conv]), np.ones((1, 1, 10)))
        assert out.shape == (1, 1, 4)

    def test_conv_matches_direct_correlation(self):
        rng = np.random.default_rng(1)
        w, b = rng.normal(size=(2, 3, 4)), rng.normal(size=2)
        x = rng.normal(size=(2, 3, 11))
        out, _ = forward(Network([Conv1d(w, b, stride=3)]), x)
        for n in range(2):
            for o in range(2):
                for t in range(out.shape[2]):
                    ref = np.sum(w[o] * x[n, :, 3 * t : 3 * t + 4]) + b[o]
                    assert out[n, o, t] == pytest.approx(ref, rel=1e-12)

    def test_shape_mismatch_is_config_error(self):
        net = dense_net((4, 3, 1), np.random.default_rng(0))
        with pytest.raises(ConfigError):
            forward(net, np.zeros((2, 5)))

    def test_discriminator_output_in_open_unit_interval(self):
        rng = np.random.default_rng(2)
        net = dense_net((6, 8, 1), rng)
        out, _ = forward(net, 50 * rng.normal(size=(20, 6)))
        assert np.all((out >= 0) & (out <= 1)) and np.all(np.isfinite(out))

    def test_forward_is_deterministic(self):
        rng = np.random.default_rng(3)
        net = conv_net(2, 16, [ConvLayerSpec(4, 3, 2)], rng)
        x = rng.normal(size=(3, 2, 16))
        a, _ = forward(net, x)
        b, _ = forward(net, x)
        assert a.tobytes() == b.tobytes()

    def test_sigmoid_stable_at_extremes(self):
        s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


class TestConvLength:
    @given(st.integers(1, 60), st.integers(1, 10), st.integers(1, 5))
    def test_formula(self, L, k, s):
        if L < k:
            with pytest.raises(ConfigError):
                conv_output_length(L, k, s)
            return
        expected = (L - k) // s + 1
        assert conv_output_length(L, k, s) == expected
        conv = Conv1d(np.ones((1, 1, k)), np.zeros(1), stride=s)
        out, _ = forward(Network([conv]), np.ones((1, 1, L)))
        assert out.shape[2] == expected

    def test_invalid_kernel(self):
        with pytest.raises(ConfigError):
            conv_output_length(10, 0, 1)


class TestBackward:
    def test_logistic_bias_gradient(self):
        # loss = -log D for a positive example; d loss / d b = sigma(u) - 1
        rng = np.random.default_rng(0)
        w, b = rng.normal(size=(1, 3)), rng.normal(size=1)
        x = rng.normal(size=(1, 3))
        net = _dense(w, b, "sigmoid")
        out, tape = forward(net, x)
        gw, gb = backward(net, tape, -1.0 / out)
        u = float((x @ w.T + b)[0, 0])
        assert gb[0] == pytest.approx(sigmoid(u) - 1.0, rel=1e-12)
        np.testing.assert_allclose(gw, (sigmoid(u) - 1.0) * x, rtol=1e-12)

    def test_zero_output_grad_gives_zero_grads(self):
        rng = np.random.default_rng(1)
        net = dense_net((4, 5, 1), rng)
        out, tape = forward(net, rng.normal(size=(3, 4)))
        for g in backward(net, tape, np.zeros_like(out)):
            assert not np.any(g)

    def test_two_layer_matches_finite_differences_step_1e5(self):
        rng = np.random.default_rng(2)
        net = dense_net((3, 4, 2), rng, "sigmoid", "sigmoid")
        x = rng.normal(size=(5, 3))
        out, tape = forward(net, x)
        g = rng.normal(size=out.shape)
        analytic = np.concatenate([a.ravel() for a in backward(net, tape, g)])
        numeric = fd_gradient(lambda v: float(np.sum(forward(net.from_vector(v), x)[0] * g)), net.vector(), 1e-5)
        assert np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)) < 1e-5

    @pytest.mark.parametrize("act", ACTIVATIONS)
    def test_dense_all_activations(self, act):
        rng = np.random.default_rng(3)
        res = check_network(dense_net((5, 6, 2), rng, act, "sigmoid"), rng.normal(size=(4, 5)), rng)
        assert res.passed, res.line()

    @pytest.mark.parametrize("act", ACTIVATIONS)
    def test_conv_all_activations(self, act):
        rng = np.random.default_rng(4)
        net = conv_net(2, 13, [ConvLayerSpec(3, 4, 2), ConvLayerSpec(2, 2, 1)], rng, act)
        x = rng.normal(size=(3, 2, 13))
        while not _kink_free(net, x):
            x = rng.normal(size=x.shape)
        res = check_network(net, x, rng)
        assert net.n_params <= 100
        assert res.passed, res.line()

    @settings(max_examples=15, deadline=None)
    @given(
        st.integers(0, 10_000),
        st.integers(1, 3),
        st.integers(1, 4),
        st.integers(1, 3),
        st.sampled_from(ACTIVATIONS),
    )
    def test_random_conv_instances(self, seed, channels, kernel, stride, act):
        rng = np.random.default_rng(seed)
        length = kernel + stride * 3
        net = conv_net(channels, length, [ConvLayerSpec(2, kernel, stride)], rng, act)
        x = rng.normal(size=(2, channels, length))
        assume(_kink_free(net, x))
        res = check_network(net, x, rng)
        assert res.passed, res.line()

    def test_tape_cannot_be_reused(self):
        rng = np.random.default_rng(5)
        net = dense_net((2, 1), rng)
        out, tape = forward(net, np.ones((1, 2)))
        backward(net, tape, np.ones_like(out))
        with pytest.raises(UsageError):
            backward(net, tape, np.ones_like(out))

    def test_tape_from_other_network_rejected(self):
        rng = np.random.default_rng(6)
        a, b = dense_net((2, 1), rng), dense_net((2, 1), rng)
        out, tape = forward(a, np.ones((1, 2)))
        with pytest.raises(UsageError):
            backward(b, tape, np.ones_like(out))

    def test_flatten_passes_gradient_through(self):
        rng = np.random.default_rng(7)
        net = Network([Flatten(), Dense(rng.normal(size=(1, 6)), np.zeros(1))])
        x = rng.normal(size=(2, 2, 3))
        res = check_network(net, x, rng)
        assert res.passed


class TestGanLosses:
    def test_half_half(self):
        d, g = gan_losses(0.5, 0.5, "non_saturating")
        assert d == pytest.approx(2 * np.log(2))
        assert g == pytest.approx(np.log(2))

    def test_saturating_generator_loss(self):
        _, g = gan_losses(0.5, 0.25, "saturating")
        assert g == pytest.approx(np.log(0.75))

    def test_derived_value(self):
        d, _ = gan_losses(0.9, 0.1)
        assert d == pytest.approx(-(np.log(0.9) + np.log(0.9)), rel=1e-12)
        assert d == pytest.approx(0.2107, abs=1e-4)

    def test_clamping_keeps_losses_finite(self):
        d, g = gan_losses(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        assert np.all(np.isfinite(d)) and np.all(np.isfinite(g))
        assert d[0] == pytest.approx(-2 * np.log(1e-7), rel=1e-6)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            gan_losses(0.5, 0.5, "hinge")

    @given(st.floats(0.01, 0.98), st.floats(0.001, 0.01), st.floats(0.01, 0.99))
    def test_monotone(self, a, delta, s):
        assert gan_losses(a + delta, s)[0] < gan_losses(a, s)[0]
        s2 = min(s + delta, 0.999)
        assert gan_losses(a, s2)[0] > gan_losses(a, s)[0]


class TestSgdStep:
    def test_zero_rate(self):
        p = [np.array([1.0, 2.0])]
        out = sgd_step(p, [np.array([5.0, -3.0])], 0.0)
        np.testing.assert_array_equal(out[0], p[0])

    def test_scalar_descent(self):
        (w,) = sgd_step([np.array(1.0)], [np.array(2.0)], 0.1)
        assert float(w) == pytest.approx(0.8)

    def test_ascent(self):
        (w,) = sgd_step([np.array(1.0)], [np.array(2.0)], 0.1, ascent=True)
        assert float(w) == pytest.approx(1.2)

    def test_two_steps_equal_summed_displacement(self):
        p, g = [np.array([0.3, -1.0])], [np.array([0.5, 2.0])]
        twice = sgd_step(sgd_step(p, g, 0.1), g, 0.1)
        once = sgd_step(p, [2 * g[0]], 0.1)
        np.testing.assert_allclose(twice[0], once[0], rtol=1e-15)

    def test_non_finite_aborts(self):
        with pytest.raises(NumericError):
            sgd_step([np.zeros(2)], [np.array([1.0, np.nan])], 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(UsageError):
            sgd_step([np.zeros(2)], [np.zeros(3)], 0.1)


class TestHelpers:
    def test_glorot_bounds_and_zero_bias(self):
        net = dense_net((10, 20), np.random.default_rng(0))
        limit = np.sqrt(6 / 30)
        assert np.all(np.abs(net.layers[0].weight) <= limit)
        assert not np.any(net.layers[0].bias)

    def test_vector_round_trip(self):
        net = conv_net(1, 10, [ConvLayerSpec(2, 3, 1)], np.random.default_rng(0))
        v = net.vector()
        np.testing.assert_array_equal(net.from_vector(v).vector(), v)
        assert v.size == net.n_params

    def test_softmax_cross_entropy_gradient(self):
        rng = np.random.default_rng(1)
        logits, labels = rng.normal(size=(4, 3)), np.array([0, 2, 1, 2])
        _, grad = softmax_cross_entropy(logits, labels)
        numeric = fd_gradient(lambda v: softmax_cross_entropy(v.reshape(4, 3), labels)[0], logits.ravel())
        assert rel_error(grad, numeric) < 1e-7
