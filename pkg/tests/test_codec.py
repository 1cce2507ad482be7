import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikegan.codec import (
    exp_basis,
    identity_basis,
    one_hot,
    one_hot_batch,
    raised_cosine_basis,
    rate_decode,
    rate_encode,
    time_surface_decode,
)
from spikegan.errors import UsageError

# raised cosine, tau_w=5, K=2, evaluated entry-wise from the formula with math.cos
RAISED_COSINE_5_2 = np.array(
    [
        [1.0, 0.0],
        [0.6080342342690028, 0.3919657657309974],
        [0.2286391108359047, 0.7713608891640955],
        [0.04668558309635912, 0.9533144169036409],
        [0.0, 1.0],
    ]
)


class TestExpBasis:
    def test_single_lag(self):
        np.testing.assert_array_equal(exp_basis(1, 3.0), [[1.0]])

    def test_five_lags(self):
        expected = np.exp(-np.arange(5) / 2.0)[:, None]
        np.testing.assert_allclose(exp_basis(5, 2.0), expected, rtol=1e-15)
        assert exp_basis(5, 2.0)[2, 0] == pytest.approx(np.e**-1)

    @given(st.integers(2, 40), st.floats(0.05, 50))
    def test_strictly_decreasing(self, tau_w, tau_f):
        b = exp_basis(tau_w, tau_f)[:, 0]
        assert np.all(np.diff(b) < 0)

    def test_bad_decay(self):
        with pytest.raises(UsageError):
            exp_basis(5, 0.0)


class TestRaisedCosine:
    def test_fixture(self):
        np.testing.assert_allclose(raised_cosine_basis(5, 2), RAISED_COSINE_5_2, rtol=1e-14, atol=1e-15)

    @given(st.integers(1, 40), st.integers(1, 6))
    def test_range_and_nonzero_columns(self, tau_w, k):
        b = raised_cosine_basis(tau_w, k)
        assert b.shape == (tau_w, k)
        assert np.all((b >= 0) & (b <= 1))
        assert b[0, 0] == 1.0

    def test_deterministic(self):
        assert raised_cosine_basis(7, 3).tobytes() == raised_cosine_basis(7, 3).tobytes()

    def test_identity_basis(self):
        np.testing.assert_array_equal(identity_basis(3), np.eye(3))


class TestRateCode:
    def test_extremes(self):
        x = rate_encode(np.array([0.0, 1.0]), 20, np.random.default_rng(0))
        assert not x[0].any() and x[1].all()

    def test_empirical_rate(self):
        n = 10_000
        x = rate_encode(np.array([0.3]), n, np.random.default_rng(1))
        assert abs(x.mean() - 0.3) < 3 * np.sqrt(0.3 * 0.7 / n)

    def test_out_of_range(self):
        with pytest.raises(UsageError):
            rate_encode(np.array([1.2]), 5, np.random.default_rng(0))

    def test_decode_examples(self):
        assert rate_decode(np.zeros(5)) == 0.0
        assert rate_decode(np.ones(5)) == 1.0
        assert rate_decode(np.array([1, 0, 1, 0])) == 0.5

    def test_round_trip_mean(self):
        rng = np.random.default_rng(2)
        v = rng.random(8)
        trials, T = 10_000, 5
        dec = rate_decode(rate_encode(np.tile(v, (trials, 1)), T, rng))
        se = np.sqrt(v * (1 - v) / (trials * T))
        assert np.all(np.abs(dec.mean(axis=0) - v) < 3 * se + 1e-12)


class TestTimeSurface:
    def test_zero(self):
        assert time_surface_decode(np.zeros(6)) == 0.0

    def test_last_spike(self):
        x = np.zeros(6)
        x[-1] = 1
        assert time_surface_decode(x) == 1.0

    def test_two_spikes(self):
        x = np.array([0, 0, 0, 1.0, 1.0])
        assert time_surface_decode(x, 2.0) == pytest.approx(1 + np.exp(-0.5), rel=1e-15)

    @given(st.integers(0, 2**12 - 1), st.integers(0, 2**12 - 1), st.floats(0.1, 10))
    def test_linear_and_bounded(self, a, b, tau):
        xa = np.array([(a >> i) & 1 for i in range(12)], float)
        xb = np.array([(b >> i) & 1 for i in range(12)], float)
        lhs = time_surface_decode(xa + 2 * xb, tau)
        assert lhs == pytest.approx(time_surface_decode(xa, tau) + 2 * time_surface_decode(xb, tau))
        bound = np.exp(-(12 - np.arange(1, 13)) / tau).sum()
        assert time_surface_decode(xa, tau) <= bound + 1e-12


class TestOneHot:
    def test_examples(self):
        np.testing.assert_array_equal(one_hot(0, 10), np.eye(10)[0])
        np.testing.assert_array_equal(one_hot(9, 10), np.eye(10)[9])

    @given(st.integers(1, 20), st.data())
    def test_sums_to_one(self, n, data):
        label = data.draw(st.integers(0, n - 1))
        assert one_hot(label, n).sum() == 1.0

    def test_out_of_range(self):
        with pytest.raises(UsageError):
            one_hot(10, 10)
        with pytest.raises(UsageError):
            one_hot_batch([0, -1], 3)
