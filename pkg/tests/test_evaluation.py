import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikegan.datasets import BURST, TONIC, load_digits, periodic_train, train_test_split
from spikegan.errors import DatasetError, UsageError
from spikegan.evaluation import (
    ClassifierSpec,
    EvalReport,
    accuracy,
    mode_coverage,
    pca_compare,
    train_classifier,
    trts,
    tstr,
    write_reports,
)

SPEC = ClassifierSpec(hidden=(32,), steps=300, lr=0.1, batch_size=64)


@pytest.fixture(scope="module")
def split():
    digits = load_digits()
    return train_test_split(digits, 0.3, seed=0)


def _copy_sampler(pool_x, pool_y):
    """Returns real examples of the requested labels, in order of appearance."""

    def sampler(labels, rng):
        out = np.empty((len(labels), pool_x.shape[1]))
        for c in np.unique(labels):
            idx = np.flatnonzero(pool_y == c)
            want = np.flatnonzero(labels == c)
            out[want] = pool_x[idx[np.arange(len(want)) % len(idx)]]
        return out

    return sampler


class TestTstrTrts:
    def test_copy_generator_matches_baseline(self, split):
        tr, te = split
        base = train_classifier(tr.images, tr.labels, 10, SPEC, np.random.default_rng(1))
        baseline = accuracy(base, te.images, te.labels)
        rep = tstr(_copy_sampler(tr.images, tr.labels), tr.labels, (te.images, te.labels), 10, SPEC,
                   np.random.default_rng(1))
        # sampler draws nothing from rng, so classifier training sees identical draws
        assert rep.value == baseline
        assert rep.n_train == len(tr) and rep.n_test == len(te)

    def test_zero_generator_is_chance(self, split):
        tr, te = split
        rep = tstr(lambda labels, rng: np.zeros((len(labels), 64)), tr.labels, (te.images, te.labels), 10,
                   ClassifierSpec(hidden=(16,), steps=100), np.random.default_rng(0))
        assert rep.value == pytest.approx(0.1, abs=0.05)

    def test_trts_on_real_test_is_baseline(self, split):
        tr, te = split
        clf = train_classifier(tr.images, tr.labels, 10, SPEC, np.random.default_rng(2))
        rep = trts(None, lambda labels, rng: te.images, te.labels, 10, SPEC, np.random.default_rng(0), classifier=clf)
        assert rep.value == accuracy(clf, te.images, te.labels)
        assert rep.value > 0.85

    def test_trts_shuffled_labels_is_chance(self, split):
        tr, te = split
        clf = train_classifier(tr.images, tr.labels, 10, SPEC, np.random.default_rng(2))
        shuffled = np.random.default_rng(5).permutation(te.labels)
        rep = trts(None, lambda labels, rng: te.images, shuffled, 10, SPEC, np.random.default_rng(0), classifier=clf)
        assert rep.value == pytest.approx(0.1, abs=0.05)

    def test_missing_class(self, split):
        tr, te = split
        labels = tr.labels[tr.labels != 4]
        with pytest.raises(DatasetError):
            tstr(_copy_sampler(tr.images, tr.labels), labels, (te.images, te.labels), 10, SPEC,
                 np.random.default_rng(0))

    def test_deterministic(self, split):
        tr, te = split
        two = tr.classes((3, 8))
        y = (two.labels == 8).astype(int)
        args = (_copy_sampler(two.images, y), y, (te.images[:50], np.zeros(50, int)), 2, SPEC)
        a = tstr(*args, np.random.default_rng(4))
        b = tstr(*args, np.random.default_rng(4))
        assert a.value == b.value

    def test_report_csv(self, tmp_path):
        write_reports(tmp_path / "r.csv", [EvalReport("tstr", 0.5, 10, 20, 3), EvalReport("trts", 1.0, 5, 6)])
        rows = list(csv.DictReader(open(tmp_path / "r.csv")))
        assert rows[0] == {"metric": "tstr", "value": "0.5", "n_train": "10", "n_test": "20", "seed": "3"}
        assert rows[1]["seed"] == ""


class TestPca:
    def test_identical_sets(self):
        x = np.random.default_rng(0).normal(size=(30, 5))
        res = pca_compare(x, x)
        np.testing.assert_array_equal(res.real, res.synthetic)

    def test_orthonormal_components(self):
        x = np.random.default_rng(1).normal(size=(40, 6))
        res = pca_compare(x, x[:5], 3)
        np.testing.assert_allclose(res.components @ res.components.T, np.eye(3), atol=1e-12)

    def test_known_covariance(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(2000, 2))
        z = (z - z.mean(0)) @ np.linalg.inv(np.linalg.cholesky(np.cov(z.T))).T  # whiten exactly
        x = z * np.array([2.0, 1.0])  # covariance diag(4, 1)
        res = pca_compare(x, x, 2)
        assert abs(res.components[0, 0]) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(res.eigenvalues, [4.0, 1.0], rtol=1e-9)

    @settings(max_examples=20)
    @given(st.integers(0, 1000), st.integers(3, 20))
    def test_real_projection_zero_mean(self, seed, n):
        x = np.random.default_rng(seed).normal(size=(n, 4)) + 3.0
        res = pca_compare(x, x + 1, 2)
        np.testing.assert_allclose(res.real.mean(axis=0), 0.0, atol=1e-10)

    def test_too_few_samples(self):
        with pytest.raises(UsageError):
            pca_compare(np.zeros((1, 4)), np.zeros((3, 4)), 2)


class TestModeCoverage:
    def test_exact_burst(self):
        res = mode_coverage([periodic_train(BURST, 50)])
        assert res.assignments == [BURST]
        assert res.correlations[0, 0] == pytest.approx(1.0)

    def test_zero_sample(self):
        res = mode_coverage([np.zeros(50)])
        assert res.assignments == ["neither"]
        assert res.fractions["neither"] == 1.0

    @pytest.mark.parametrize("phase", [0, 3, 7, 11])
    def test_phase_shifted_tonic(self, phase):
        res = mode_coverage([periodic_train(TONIC, 50, phase)])
        assert res.assignments == [TONIC]
        assert res.correlations[0, 1] == pytest.approx(1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**50 - 1), st.integers(0, 49))
    def test_cyclic_shift_invariance(self, bits, shift):
        x = np.array([(bits >> i) & 1 for i in range(50)], float)
        a = mode_coverage([x])
        b = mode_coverage([np.roll(x, shift)])
        np.testing.assert_allclose(a.correlations, b.correlations, rtol=1e-12)
        assert a.assignments == b.assignments

    def test_fractions(self):
        xs = [periodic_train(BURST, 50, 2), periodic_train(TONIC, 50, 5), np.zeros(50), periodic_train(BURST, 50)]
        res = mode_coverage(xs)
        assert res.fractions == {BURST: 0.5, TONIC: 0.25, "neither": 0.25}

    def test_too_short(self):
        with pytest.raises(UsageError):
            mode_coverage([np.ones(10)])
