import numpy as np
import pytest

from spikegan import gradcheck
from spikegan.cli.main import main
from spikegan.gradcheck import all_spike_patterns, fd_gradient, rel_error, run_all, within_se


class TestHelpers:
    def test_fd_of_quadratic(self):
        v = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(fd_gradient(lambda x: float(x @ x), v), 2 * v, rtol=1e-8)

    def test_fd_respects_mask(self):
        v = np.ones(3)
        g = fd_gradient(lambda x: float(x.sum()), v, active=np.array([True, False, True]))
        np.testing.assert_allclose(g, [1.0, 0.0, 1.0])

    def test_rel_error(self):
        assert rel_error([1.0, 0.0], [1.0, 0.0]) == 0.0
        assert rel_error([0.0], [0.0]) == 0.0
        assert rel_error([1.0], [2.0]) == pytest.approx(0.5)

    def test_patterns_enumerate_every_train(self):
        p = all_spike_patterns(2, 2)
        assert p.shape == (16, 2, 2)
        assert len({x.tobytes() for x in p}) == 16

    def test_within_se(self):
        ok, z = within_se(np.array([1.0, 2.0]), np.array([0.1, 0.1]), np.array([1.2, 2.0]), np.array([True, True]))
        assert ok and z == pytest.approx(2.0)
        ok, _ = within_se(np.array([1.0]), np.array([0.1]), np.array([1.5]), np.array([True]))
        assert not ok


class TestRunAll:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_every_check_passes(self, seed):
        results = run_all(seed)
        assert len(results) == 14
        assert all(r.passed for r in results), [r.line() for r in results if not r.passed]

    def test_line_format(self):
        r = gradcheck.CheckResult("x", 1e-9, 1e-5, True)
        assert r.line().startswith("PASS x: error=1.000e-09")

    def test_wrong_backprop_is_detected(self, monkeypatch):
        true_backward = gradcheck.backward
        monkeypatch.setattr(gradcheck, "backward", lambda *a: [1.01 * g for g in true_backward(*a)])
        failed = [r.name for r in run_all(0, 2000) if not r.passed]
        assert any(name.startswith("dense") for name in failed)


class TestCommand:
    def _config(self, tmp_path, episodes=2000):
        p = tmp_path / "g.ini"
        p.write_text(f"[experiment]\nid = gradcheck\n[eval]\ngradcheck_episodes = {episodes}\n")
        return p

    def test_exit_zero(self, tmp_path, capsys):
        assert main(["run", str(self._config(tmp_path)), "--out", str(tmp_path / "out")]) == 0
        assert "failed: []" in capsys.readouterr().out
        assert (tmp_path / "out" / "metrics.csv").read_text().count("\n") == 15

    def test_exit_three_on_failure(self, tmp_path, monkeypatch, capsys):
        true_backward = gradcheck.backward
        monkeypatch.setattr(gradcheck, "backward", lambda *a: [-g for g in true_backward(*a)])
        assert main(["run", str(self._config(tmp_path)), "--out", str(tmp_path / "out")]) == 3
        assert "gradient check failed" in capsys.readouterr().err
