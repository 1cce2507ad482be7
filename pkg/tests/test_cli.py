import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from spikegan.cli.config import load_config, parse_conv_spec, parse_dense_spec, to_ini
from spikegan.cli.main import main
from spikegan.errors import ConfigError, NumericError
from spikegan.nn import ConvLayerSpec, DenseLayerSpec

TINY = {
    "digits-gan": """
[train]
iterations = 6
batch_size = 8
[model]
hidden = 4
[eval]
eval_every = 3
n_samples = 20
classifier_steps = 20
""",
    "digits-noise": """
[train]
iterations = 3
batch_size = 8
[model]
hidden = 4
[data]
noise_fractions = 0.0, 0.5
[eval]
classifier_steps = 10
""",
    "neuromorphic-gan": """
[train]
iterations = 2
batch_size = 8
T = 4
[model]
hidden = 3
[data]
classes = 1, 2
[eval]
snn_classifier_hidden = 3
snn_classifier_iters = 3
cnn_disc = c2k2s1x1
""",
    "temporal-gan": """
[train]
iterations = 6
batch_size = 4
T = 20
[data]
n_sequences = 30
[model]
tau_w = 5
disc = c2k3s2x1
[eval]
eval_every = 3
n_samples = 10
""",
    "temporal-bayes": """
[train]
iterations = 4
batch_size = 4
T = 20
[data]
n_sequences = 30
[model]
tau_w = 5
particles = 2
disc = c2k3s2x1
[eval]
eval_every = 2
n_samples = 10
""",
    "temporal-ml": """
[train]
iterations = 4
batch_size = 4
T = 20
[data]
n_sequences = 30
[model]
tau_w = 5
particles = 2
[eval]
eval_every = 2
n_samples = 10
""",
    "meta-continual": """
[train]
batch_size = 4
[model]
hidden = 3
[meta]
meta_steps = 3
N = 2
M = 2
k_steps = 1
held_out = 78
eval_updates = 4
eval_batch = 4
[eval]
eval_every = 0
classifier_steps = 10
""",
    "gradcheck": """
[eval]
gradcheck_episodes = 2000
""",
}


def _write(tmp_path, experiment, extra=""):
    p = tmp_path / f"{experiment}.ini"
    p.write_text(f"[experiment]\nid = {experiment}\n" + TINY[experiment] + extra)
    return p


def _run(tmp_path, experiment, out="out", *args, extra=""):
    return main(["run", str(_write(tmp_path, experiment, extra)), "--out", str(tmp_path / out), *args])


class TestConvSpec:
    def test_published_discriminator(self):
        assert parse_conv_spec("c128k4s2xc1k4s1x1") == [ConvLayerSpec(128, 4, 2), ConvLayerSpec(1, 4, 1),
                                                        DenseLayerSpec(1)]

    def test_single_pointwise_conv(self):
        assert parse_conv_spec("c1k1s1") == [ConvLayerSpec(1, 1, 1)]

    def test_zero_kernel(self):
        with pytest.raises(ConfigError, match="kernel must be >= 1 at position 2"):
            parse_conv_spec("c2k0s1")

    @pytest.mark.parametrize(
        "spec, pos", [("c2k3s1xq7", 7), ("c2k3", 0), ("3", 0), ("c1k1s1x1x1", 7), ("c1k1s0", 4)]
    )
    def test_malformed_positions(self, spec, pos):
        with pytest.raises(ConfigError, match=f"position {pos}"):
            parse_conv_spec(spec)

    def test_empty(self):
        with pytest.raises(ConfigError):
            parse_conv_spec("")

    def test_dense_spec(self):
        assert parse_dense_spec("dense:128") == (128,)
        assert parse_dense_spec("dense:8,4") == (8, 4)
        for bad in ("dense:", "conv:3", "dense:a", "dense:0"):
            with pytest.raises(ConfigError):
                parse_dense_spec(bad)


class TestConfig:
    def test_layering(self, tmp_path):
        p = _write(tmp_path, "digits-gan")
        cfg = load_config(p, seed=7, out="x")
        assert cfg.train.iterations == 6  # file beats preset
        assert cfg.train.lr_gen == 0.2  # desk preset beats default
        assert cfg.train.gen_loss == "non_saturating"  # default
        assert cfg.seed == 7 and cfg.run.out == "x"

    def test_paper_preset(self, tmp_path):
        cfg = load_config(text="[experiment]\nid = digits-gan\n", preset="paper")
        assert cfg.model.hidden == 128 and cfg.data.classes == tuple(range(10))

    def test_ini_round_trip(self, tmp_path):
        cfg = load_config(_write(tmp_path, "temporal-bayes"), seed=3)
        again = load_config(text=to_ini(cfg))
        assert again == cfg

    @pytest.mark.parametrize(
        "text, match",
        [
            ("[experiment]\nid = nope\n", "id must be one of"),
            ("[bogus]\nx = 1\n", "unknown section"),
            ("[train]\nwhat = 1\n", "unknown key 'what'"),
            ("[train]\nbatch_size = many\n", r"\[train\] batch_size: cannot parse"),
            ("[train]\ngen_loss = hinge\n", "gen_loss"),
            ("[model]\ndisc = c2k0s1\n", "kernel"),
            ("[data]\nclasses = 3, 3\n", "two distinct"),
            ("[data]\nnoise_fractions = 0.1, 2\n", "outside"),
            ("[meta]\nheld_out = 77\n", "held_out"),
            ("no section\n", "config"),
        ],
    )
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            load_config(text=text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "none.ini")


class TestExitCodes:
    def test_config_error_is_one(self, tmp_path, capsys):
        p = tmp_path / "bad.ini"
        p.write_text("[train]\nbatch_size = -1\n")
        assert main(["run", str(p)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_dataset_is_one(self, tmp_path, capsys):
        rc = _run(tmp_path, "digits-gan", extra=f"[data]\ndigits_path = {tmp_path / 'absent.csv'}\n")
        assert rc == 1
        assert "path error" in capsys.readouterr().err

    def test_numeric_failure_is_two(self, tmp_path, monkeypatch):
        from spikegan.cli import experiments

        def boom(*a, **k):
            raise NumericError("non-finite loss", {"iteration": 1})

        monkeypatch.setattr(experiments, "spikegan_step", boom)
        assert _run(tmp_path, "digits-gan") == 2

    def test_gradcheck_ok(self, tmp_path):
        assert _run(tmp_path, "gradcheck") == 0

    def test_entry_point(self, tmp_path):
        p = _write(tmp_path, "gradcheck")
        proc = subprocess.run([sys.executable, "-m", "spikegan.cli.main", "run", str(p), "--out", str(tmp_path / "o")],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "checks: 14" in proc.stdout


def _metrics(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRuns:
    @pytest.mark.parametrize("experiment", list(TINY))
    def test_smoke(self, tmp_path, experiment):
        assert _run(tmp_path, experiment) == 0
        out = tmp_path / "out"
        assert (out / "metrics.csv").exists() and (out / "summary.json").exists()
        cfg = load_config(out / "config.ini")
        assert cfg.experiment == experiment
        summary = json.loads((out / "summary.json").read_text())
        assert summary["experiment"] == experiment

    def test_digits_artifacts(self, tmp_path):
        assert _run(tmp_path, "digits-gan", "out", "--seed", "1") == 0
        out = tmp_path / "out"
        for name in ("loss.svg", "pca.svg", "samples.svg", "pca.csv", "checkpoints/final.npz"):
            assert (out / name).exists(), name
        rows = _metrics(out / "metrics.csv")
        assert [int(r["iteration"]) for r in rows] == list(range(1, 7))
        assert [r["tstr"] != "" for r in rows] == [False, False, True, False, False, True]

    def test_temporal_rasters(self, tmp_path):
        assert _run(tmp_path, "temporal-bayes") == 0
        out = tmp_path / "out"
        assert (out / "raster_0.svg").exists() and (out / "raster_1.svg").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["fractions"]) == 2
        for f in summary["fractions"]:
            assert sum(f.values()) == pytest.approx(1.0)

    @pytest.mark.parametrize("experiment", ["digits-gan", "temporal-bayes", "meta-continual"])
    def test_byte_identical_metrics(self, tmp_path, experiment):
        assert _run(tmp_path, experiment, "a") == 0
        assert _run(tmp_path, experiment, "b") == 0
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    def test_seed_changes_metrics(self, tmp_path):
        assert _run(tmp_path, "digits-gan", "a", "--seed", "0") == 0
        assert _run(tmp_path, "digits-gan", "b", "--seed", "1") == 0
        assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()


class TestResume:
    @pytest.mark.parametrize("experiment", ["digits-gan", "temporal-bayes", "temporal-ml"])
    def test_mid_run_resume_is_bit_exact(self, tmp_path, experiment):
        p = _write(tmp_path, experiment)
        p.write_text(p.read_text().replace(f"id = {experiment}\n", f"id = {experiment}\ncheckpoint_every = 2\n"))
        assert main(["run", str(p), "--out", str(tmp_path / "full")]) == 0
        ckpt = tmp_path / "full" / "checkpoints" / "state_000002.npz"
        assert main(["run", str(p), "--out", str(tmp_path / "res"), "--resume", str(ckpt)]) == 0
        assert (tmp_path / "full" / "metrics.csv").read_bytes() == (tmp_path / "res" / "metrics.csv").read_bytes()
        with np.load(tmp_path / "full" / "checkpoints" / "final.npz") as a, \
                np.load(tmp_path / "res" / "checkpoints" / "final.npz") as b:
            assert a.files == b.files
            for k in a.files:
                assert a[k].tobytes() == b[k].tobytes(), k

    def test_resume_rejected_for_multi_run(self, tmp_path):
        assert _run(tmp_path, "digits-gan", "full") == 0
        ckpt = tmp_path / "full" / "checkpoints" / "final.npz"
        assert _run(tmp_path, "digits-noise", "x", "--resume", str(ckpt)) == 1
