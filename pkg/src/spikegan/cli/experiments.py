"""Experiment runners behind ``spikegan run``; each writes CSV metrics, checkpoints and SVG plots."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .. import codec, datasets, gradcheck
from .. import evaluation as ev
from ..checkpoint import TrainState, load_state, save_state
from ..errors import ConfigError
from ..meta import HyperParams, Schedule, TaskDataBuffer, run_continual, within_task_update
from ..nn import Network, conv_net, dense_net
from ..snn import Topology, forward_sample, init_params
from ..training import (
    Batch,
    ParticleSet,
    SpikeGenerator,
    TrainConfig,
    bayes_spikegan_step,
    ml_train_step,
    spikegan_step,
)
from . import plots
from .config import ExperimentConfig, parse_conv_spec, parse_dense_spec

GAN_COLUMNS = ("iteration", "d_real", "d_synth", "disc_loss", "gen_loss")


@dataclass
class RunResult:
    out: Path
    summary: dict
    exit_code: int = 0


class MetricsWriter:
    """Append-only CSV with a fixed column order; floats written with ``repr``."""

    def __init__(self, path, columns, extra: dict | None = None, prior=None, upto: int = 0):
        self.columns = tuple(columns)
        self.rows: list[dict] = []
        kept = _earlier_rows(prior, self.columns, upto) if prior is not None else []
        self._fh = open(path, "w", newline="")
        self._w = csv.DictWriter(self._fh, fieldnames=self.columns, extrasaction="raise", lineterminator="\n")
        self._w.writeheader()
        for raw in kept:
            self._w.writerow(raw)
            self.rows.append({k: _parse(v) for k, v in raw.items()})
        self._extra = extra or {}

    def write(self, row: dict) -> None:
        row = {**self._extra, **row}
        self.rows.append(row)
        self._w.writerow({c: _fmt(row.get(c, "")) for c in self.columns})
        self._fh.flush()

    def set_context(self, **values) -> None:
        """Constant columns (e.g. the noise level) merged into every following row."""
        self._extra = values

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _earlier_rows(path, columns, upto: int) -> list[dict]:
    """Rows of an earlier run's metrics with ``iteration <= upto`` (resume support)."""
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != columns:
            raise ConfigError(f"{path}: columns differ from this experiment's metrics")
        return [r for r in reader if int(r["iteration"]) <= upto]


def _parse(v: str):
    try:
        return float(v) if v != "" else v
    except ValueError:
        return v


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return v


def _eval_rng(cfg: ExperimentConfig, iteration: int, tag: int) -> np.random.Generator:
    """Evaluation randomness is keyed by (seed, iteration, tag) and never touches the training stream."""
    return np.random.default_rng([cfg.seed, iteration, tag])


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


# --- builders ---------------------------------------------------------------


def make_basis(cfg: ExperimentConfig) -> np.ndarray:
    m = cfg.model
    if m.basis == "exp":
        return codec.exp_basis(m.tau_w, m.tau_f)
    if m.basis == "raised_cosine":
        return codec.raised_cosine_basis(m.tau_w, m.basis_k)
    return codec.identity_basis(m.tau_w)


def build_discriminator(desc: str, channels: int, length: int | None, rng: np.random.Generator) -> Network:
    """``dense:128`` on ``channels`` features, or a conv spec over ``(channels, length)``."""
    if desc.startswith("dense"):
        return dense_net((channels, *parse_dense_spec(desc), 1), rng, "relu", "sigmoid")
    if length is None:
        raise ConfigError(f"conv discriminator {desc!r} needs time-series input")
    return conv_net(channels, length, parse_conv_spec(desc), rng, "leaky_relu", "sigmoid")


def load_digit_split(cfg: ExperimentConfig):
    """Train/test split restricted to ``data.classes``; labels remapped to 0..C-1."""
    digits = datasets.load_digits(cfg.data.digits_path or None)
    train, test = datasets.train_test_split(digits, cfg.data.test_fraction, cfg.data.split_seed)
    classes = list(cfg.data.classes)
    remap = {d: k for k, d in enumerate(classes)}

    def restrict(ds):
        sub = ds.classes(classes)
        return datasets.DigitSet(sub.images, np.array([remap[int(l)] for l in sub.labels], dtype=int))

    return restrict(train), restrict(test), len(classes)


def label_spikes(labels, n_classes: int, T: int, rng) -> np.ndarray:
    return codec.rate_encode(codec.one_hot_batch(labels, n_classes), T, rng)


def conditional_sampler(gen: SpikeGenerator, n_classes: int, T: int):
    def sample(labels, rng):
        return gen.generate(label_spikes(labels, n_classes, T, rng), rng)

    return sample


def classifier_spec(cfg: ExperimentConfig) -> ev.ClassifierSpec:
    e = cfg.eval
    return ev.ClassifierSpec(tuple(e.classifier_hidden), e.classifier_steps, e.classifier_lr)


def _prior_metrics(cfg: ExperimentConfig) -> dict:
    """Writer arguments that carry over the rows of the run being resumed.

    Checkpoints live in ``<run>/checkpoints/``, so the earlier metrics are
    ``<run>/metrics.csv``; rows past the checkpoint's iteration are dropped.
    """
    if not cfg.run.resume:
        return {}
    ckpt = Path(cfg.run.resume)
    return {"prior": ckpt.parent.parent / "metrics.csv", "upto": load_state(ckpt).iteration}


def _resume_or(cfg: ExperimentConfig, fresh: Callable[[], TrainState]) -> TrainState:
    if not cfg.run.resume:
        return fresh()
    state = load_state(cfg.run.resume)
    if state.iteration > cfg.train.iterations:
        raise ConfigError(f"checkpoint iteration {state.iteration} beyond configured iterations")
    return state


def _checkpoint_dir(out: Path) -> Path:
    d = out / "checkpoints"
    d.mkdir(parents=True, exist_ok=True)
    return d


def train_loop(
    state: TrainState,
    cfg: ExperimentConfig,
    step: Callable[[TrainState], dict],
    writer: MetricsWriter,
    out: Path,
    evaluate: Callable[[TrainState], dict] | None = None,
) -> TrainState:
    """Run ``step`` until ``train.iterations``; evaluate and checkpoint on their cadences."""
    n = cfg.train.iterations
    every = cfg.eval.eval_every
    ck = cfg.run.checkpoint_every
    ckdir = _checkpoint_dir(out)
    while state.iteration < n:
        metrics = step(state)
        state.iteration += 1
        row = {"iteration": state.iteration, **metrics}
        if evaluate is not None and every and (state.iteration % every == 0 or state.iteration == n):
            row.update(evaluate(state))
        writer.write(row)
        if ck and state.iteration % ck == 0:
            save_state(ckdir / f"state_{state.iteration:06d}.npz", state)
    save_state(ckdir / "final.npz", state)
    return state


def _loss_plot(out: Path, rows: list, keys=("d_real", "d_synth")) -> None:
    if not rows:
        return
    x = np.array([r["iteration"] for r in rows], float)
    series = {k: (x, np.array([r.get(k, np.nan) for r in rows], float)) for k in keys}
    plots.line_plot(out / "loss.svg", series, "discriminator outputs", "iteration", "mean D")


# --- digits -----------------------------------------------------------------


def _digits_models(cfg, n_classes, rng, decode):
    topo = Topology.layered(n_classes, cfg.model.hidden, datasets.N_PIXELS)
    basis = make_basis(cfg)
    gen = SpikeGenerator(topo, init_params(topo, basis, basis, rng, cfg.model.weight_std), decode, cfg.train.tau_s)
    disc = build_discriminator(cfg.model.disc, datasets.N_PIXELS + n_classes, None, rng)
    return gen, disc


def _digits_step(cfg: ExperimentConfig, images, labels, n_classes, tc: TrainConfig):
    def step(state: TrainState) -> dict:
        rng = state.rng
        idx = rng.integers(0, len(labels), size=tc.batch_size)
        oh = codec.one_hot_batch(labels[idx], n_classes)
        batch = Batch(images[idx], codec.rate_encode(oh, tc.T, rng), oh)
        state.model, state.disc, m = spikegan_step(state.model, state.disc, batch, tc, rng)
        return m

    return step


def run_digits_gan(cfg: ExperimentConfig, out: Path) -> RunResult:
    train, test, C = load_digit_split(cfg)
    tc = cfg.train_config()
    spec = classifier_spec(cfg)

    def fresh():
        rng = np.random.default_rng(cfg.seed)
        gen, disc = _digits_models(cfg, C, rng, cfg.train.decode)
        return TrainState(gen, disc, 0, rng)

    state = _resume_or(cfg, fresh)
    real_clf = ev.train_classifier(train.images, train.labels, C, spec, _eval_rng(cfg, 0, 11))
    baseline = ev.accuracy(real_clf, test.images, test.labels)

    def evaluate(st: TrainState) -> dict:
        sampler = conditional_sampler(st.model, C, tc.T)
        r = _eval_rng(cfg, st.iteration, 12)
        a = ev.tstr(sampler, train.labels, (test.images, test.labels), C, spec, r, cfg.seed)
        b = ev.trts(None, sampler, test.labels, C, spec, r, cfg.seed, classifier=real_clf)
        return {"tstr": a.value, "trts": b.value}

    with MetricsWriter(out / "metrics.csv", GAN_COLUMNS + ("tstr", "trts"), **_prior_metrics(cfg)) as w:
        state = train_loop(state, cfg, _digits_step(cfg, train.images, train.labels, C, tc), w, out, evaluate)
        rows = w.rows
    final = evaluate(state)
    r = _eval_rng(cfg, state.iteration, 13)
    synth = conditional_sampler(state.model, C, tc.T)(test.labels, r)
    pca = ev.pca_compare(test.images, synth)
    _write_pca(out / "pca.csv", pca)
    plots.scatter_plot(out / "pca.svg", {"real": pca.real, "synthetic": pca.synthetic}, "PCA (fit on real)")
    grid_labels = np.repeat(np.arange(C), 10)
    plots.image_grid(out / "samples.svg", conditional_sampler(state.model, C, tc.T)(grid_labels, r), 10,
                     title="synthetic samples, one class per row")
    _loss_plot(out, rows)
    summary = {"experiment": cfg.experiment, "seed": cfg.seed, "baseline": baseline, **final,
               "iterations": state.iteration, "n_train": len(train), "n_test": len(test)}
    _write_json(out / "summary.json", summary)
    return RunResult(out, summary)


def _write_pca(path, pca: ev.PcaResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set", "pc1", "pc2"])
        for name, pts in (("real", pca.real), ("synthetic", pca.synthetic)):
            for a, b in pts[:, :2]:
                w.writerow([name, repr(float(a)), repr(float(b))])


def run_digits_noise(cfg: ExperimentConfig, out: Path) -> RunResult:
    if cfg.run.resume:
        raise ConfigError("digits-noise runs several trainings; resume is not supported")
    train, test, C = load_digit_split(cfg)
    tc = cfg.train_config()
    spec = classifier_spec(cfg)
    clean_clf = ev.train_classifier(train.images, train.labels, C, spec, _eval_rng(cfg, 0, 21))
    levels = []
    columns = ("noise",) + GAN_COLUMNS + ("trts",)
    with MetricsWriter(out / "metrics.csv", columns) as w:
        for k, frac in enumerate(cfg.data.noise_fractions):
            level_out = out / f"noise_{k}"
            level_out.mkdir(exist_ok=True)
            rng = np.random.default_rng([cfg.seed, k])
            noisy_train = datasets.corrupt_images(train.images, frac, rng)
            noisy_test = datasets.corrupt_images(test.images, frac, rng)
            gen, disc = _digits_models(cfg, C, rng, cfg.train.decode)
            state = TrainState(gen, disc, 0, rng)

            def evaluate(st: TrainState) -> dict:
                sampler = conditional_sampler(st.model, C, tc.T)
                r = _eval_rng(cfg, st.iteration, 22 + k)
                return {"trts": ev.trts(None, sampler, test.labels, C, spec, r, classifier=clean_clf).value}

            w.set_context(noise=float(frac))
            state = train_loop(state, cfg, _digits_step(cfg, noisy_train, train.labels, C, tc), w, level_out, evaluate)
            final = evaluate(state)["trts"]
            base = ev.accuracy(clean_clf, noisy_test, test.labels)
            levels.append({"noise": float(frac), "trts": final, "baseline": base})
            r = _eval_rng(cfg, state.iteration, 40 + k)
            plots.image_grid(level_out / "samples.svg",
                             conditional_sampler(state.model, C, tc.T)(np.repeat(np.arange(C), 10), r), 10,
                             title=f"synthetic samples, noise fraction {frac}")
    trts = [l["trts"] for l in levels]
    summary = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "levels": levels,
        "non_increasing": bool(all(a >= b for a, b in zip(trts, trts[1:]))),
        "within_20pp": bool(all(abs(l["trts"] - l["baseline"]) <= 0.20 for l in levels)),
    }
    x = np.array([l["noise"] for l in levels])
    plots.line_plot(out / "noise.svg", {"SpikeGAN TRTS": (x, np.array(trts)),
                                        "noisy real": (x, np.array([l["baseline"] for l in levels]))},
                    "TRTS vs noisy-pixel fraction", "fraction of noisy pixels", "accuracy")
    _write_json(out / "summary.json", summary)
    return RunResult(out, summary)


# --- neuromorphic digits --------------------------------------------------


def snn_classifier_train(x_spikes, labels, n_classes, cfg: ExperimentConfig, rng) -> SpikeGenerator:
    """SNN classifier: image spike trains in, visible neurons clamped to rate-coded labels."""
    T = x_spikes.shape[2]
    topo = Topology.layered(x_spikes.shape[1], cfg.eval.snn_classifier_hidden, n_classes)
    basis = make_basis(cfg)
    net = SpikeGenerator(topo, init_params(topo, basis, basis, rng, cfg.model.weight_std))
    tc = TrainConfig(lr_gen=cfg.eval.snn_classifier_lr, batch_size=cfg.train.batch_size, T=T)
    for _ in range(cfg.eval.snn_classifier_iters):
        idx = rng.integers(0, len(labels), size=tc.batch_size)
        target = label_spikes(labels[idx], n_classes, T, rng)
        net, _ = ml_train_step(net, target, x_spikes[idx], tc, rng)
    return net


def snn_classifier_predict(net: SpikeGenerator, x_spikes, rng) -> np.ndarray:
    """Class with the highest mean firing probability of its visible neuron."""
    from ..nn import sigmoid

    trace = forward_sample(net.params, net.topology, x_spikes, rng)
    rates = sigmoid(trace.u[:, net.topology.readout, :]).mean(axis=2)
    return rates.argmax(axis=1)


def run_neuromorphic_gan(cfg: ExperimentConfig, out: Path) -> RunResult:
    if cfg.run.resume:
        raise ConfigError("neuromorphic-gan trains several generators; resume is not supported")
    train, test, C = load_digit_split(cfg)
    T = cfg.train.T
    data_rng = np.random.default_rng([cfg.seed, 1])
    x_train = codec.rate_encode(train.images, T, data_rng)
    x_test = codec.rate_encode(test.images, T, data_rng)
    results = {}
    columns = ("variant",) + GAN_COLUMNS + ("log_likelihood",)
    with MetricsWriter(out / "metrics.csv", columns) as w:
        for k, variant in enumerate(cfg.eval.variants):
            rng = np.random.default_rng([cfg.seed, 100 + k])
            w.set_context(variant=variant)
            vout = out / variant
            vout.mkdir(exist_ok=True)
            if variant == "real":
                synth = x_train
            else:
                gen = _train_neuromorphic_variant(variant, cfg, x_train, train, C, rng, w, vout)
                synth = gen.sample(label_spikes(train.labels, C, T, rng), rng).readout
            plots.raster(vout / "raster.svg", synth[0], f"{variant}: first example")
            clf_rng = np.random.default_rng([cfg.seed, 200 + k])
            clf = snn_classifier_train(synth, train.labels, C, cfg, clf_rng)
            pred = snn_classifier_predict(clf, x_test, clf_rng)
            results[variant] = float(np.mean(pred == test.labels))
    with open(out / "tstr.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["training_data", "tstr"])
        for v, a in results.items():
            wr.writerow([v, repr(a)])
    summary = {"experiment": cfg.experiment, "seed": cfg.seed, "tstr": results}
    _write_json(out / "summary.json", summary)
    return RunResult(out, summary)


def _train_neuromorphic_variant(variant, cfg, x_train, train, C, rng, writer, vout) -> SpikeGenerator:
    T = cfg.train.T
    tc = cfg.train_config()
    topo = Topology.layered(C, cfg.model.hidden, datasets.N_PIXELS)
    basis = make_basis(cfg)
    params = init_params(topo, basis, basis, rng, cfg.model.weight_std)
    labels = train.labels
    if variant == "ml":
        gen = SpikeGenerator(topo, params)
        state = TrainState(gen, None, 0, rng)

        def step(st):
            idx = st.rng.integers(0, len(labels), size=tc.batch_size)
            st.model, m = ml_train_step(st.model, x_train[idx], label_spikes(labels[idx], C, T, st.rng), tc, st.rng)
            return m

        return train_loop(state, cfg, step, writer, vout).model
    if variant == "cnn":
        gen = SpikeGenerator(topo, params, "none")
        disc = build_discriminator(cfg.eval.cnn_disc, datasets.N_PIXELS + C, T, rng)
        source = x_train
    elif variant in ("time_surface", "rate"):
        gen = SpikeGenerator(topo, params, variant, cfg.train.tau_s)
        disc = build_discriminator(cfg.model.disc, datasets.N_PIXELS + C, None, rng)
        source = train.images
    else:
        raise ConfigError(f"unknown variant {variant!r}")
    state = TrainState(gen, disc, 0, rng)

    def step(st):
        idx = st.rng.integers(0, len(labels), size=tc.batch_size)
        ys = label_spikes(labels[idx], C, T, st.rng)
        cond = ys if variant == "cnn" else codec.one_hot_batch(labels[idx], C)
        st.model, st.disc, m = spikegan_step(st.model, st.disc, Batch(source[idx], ys, cond), tc, st.rng)
        return m

    return train_loop(state, cfg, step, writer, vout).model


# --- temporal burst / tonic -------------------------------------------------


def _temporal_data(cfg: ExperimentConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 1])
    return datasets.stack_temporal(datasets.make_burst_tonic(cfg.data.n_sequences, cfg.train.T, rng))


def _coverage_columns(J: int) -> tuple:
    cols = []
    for j in range(J):
        cols += [f"burst_{j}", f"tonic_{j}", f"neither_{j}"]
    return tuple(cols) + ("dual_coverage",)


def coverage_of(particles: ParticleSet, n_samples: int, T: int, rng, threshold: float = 0.70):
    """Mode fractions per particle and whether some particle is >=70% burst and another >=70% tonic."""
    fracs = []
    samples = []
    y = np.ones((n_samples, 1, T))
    for j in range(len(particles)):
        s = particles.generator(j).sample(y, rng).readout[:, 0, :]
        samples.append(s)
        fracs.append(ev.mode_coverage(s).fractions)
    dual = any(f[datasets.BURST] >= threshold for f in fracs) and any(f[datasets.TONIC] >= threshold for f in fracs)
    return fracs, dual, samples


def run_temporal(cfg: ExperimentConfig, out: Path) -> RunResult:
    data = _temporal_data(cfg)
    tc = cfg.train_config()
    T = tc.T
    kind = cfg.experiment
    J = 1 if kind == "temporal-gan" else cfg.model.particles

    def fresh():
        rng = np.random.default_rng(cfg.seed)
        topo = Topology.layered(1, cfg.model.hidden, 1)
        basis = make_basis(cfg)
        parts = [init_params(topo, basis, basis, rng, cfg.model.weight_std) for _ in range(J)]
        if kind == "temporal-gan":
            model = SpikeGenerator(topo, parts[0], "none")
        else:
            model = ParticleSet(topo, parts, "none")
        disc = None if kind == "temporal-ml" else build_discriminator(cfg.model.disc, 1, T, rng)
        return TrainState(model, disc, 0, rng)

    state = _resume_or(cfg, fresh)
    y = np.ones((tc.batch_size, 1, T))

    def as_set(model) -> ParticleSet:
        if isinstance(model, ParticleSet):
            return model
        return ParticleSet(model.topology, [model.params], model.decode)

    def step(st: TrainState) -> dict:
        rng = st.rng
        if kind == "temporal-ml":
            new, lls = [], []
            for j in range(len(st.model)):
                idx = rng.integers(0, len(data), size=tc.batch_size)
                g, m = ml_train_step(st.model.generator(j), data[idx], y, tc, rng)
                new.append(g.params)
                lls.append(m["log_likelihood"])
            st.model = st.model.with_particles(new)
            return {"log_likelihood": float(np.mean(lls))}
        idx = rng.integers(0, len(data), size=tc.batch_size)
        batch = Batch(data[idx], y)
        if kind == "temporal-gan":
            st.model, st.disc, m = spikegan_step(st.model, st.disc, batch, tc, rng)
        else:
            st.model, st.disc, m = bayes_spikegan_step(st.model, st.disc, batch, tc, rng)
        return {k: m[k] for k in ("d_real", "d_synth", "disc_loss", "gen_loss")}

    def evaluate(st: TrainState) -> dict:
        fracs, dual, _ = coverage_of(as_set(st.model), cfg.eval.n_samples, T, _eval_rng(cfg, st.iteration, 31))
        row = {"dual_coverage": dual}
        for j, f in enumerate(fracs):
            row.update({f"burst_{j}": f["burst"], f"tonic_{j}": f["tonic"], f"neither_{j}": f["neither"]})
        return row

    base_cols = ("iteration", "log_likelihood") if kind == "temporal-ml" else GAN_COLUMNS
    with MetricsWriter(out / "metrics.csv", base_cols + _coverage_columns(J), **_prior_metrics(cfg)) as w:
        state = train_loop(state, cfg, step, w, out, evaluate)
        rows = w.rows
    fracs, dual, samples = coverage_of(as_set(state.model), cfg.eval.n_samples, T,
                                       _eval_rng(cfg, state.iteration, 32))
    for j, s in enumerate(samples):
        plots.raster(out / f"raster_{j}.svg", s[:20], f"generator {j}: samples")
    plots.raster(out / "raster_real.svg", data[:20, 0, :], "real burst/tonic examples")
    if kind != "temporal-ml":
        _loss_plot(out, rows)
    summary = {"experiment": kind, "seed": cfg.seed, "fractions": fracs, "dual_coverage": dual,
               "iterations": state.iteration}
    _write_json(out / "summary.json", summary)
    return RunResult(out, summary)


# --- continual meta-learning ------------------------------------------------


def _digits_batch_fn(T: int):
    def make_batch(x, labels, rng):
        oh = codec.one_hot_batch(labels, 2)
        return Batch(x, codec.rate_encode(oh, T, rng), oh)

    return make_batch


def meta_task_stream(train: datasets.DigitSet, digits, n_tasks: int, rng):
    pairs = list(itertools.combinations(sorted(digits), 2))
    for _ in range(n_tasks):
        a, b = pairs[int(rng.integers(len(pairs)))]
        rot = 90 * int(rng.integers(4))
        task = datasets.make_task(a, b, rot, train)
        yield (f"{a}{b}r{rot}", task.images, task.labels)


def heldout_trts(hp: HyperParams, task_train, task_test, cfg: ExperimentConfig, rng, checkpoints) -> dict:
    """TRTS after each number of within-task updates in ``checkpoints`` (cumulative)."""
    spec = classifier_spec(cfg)
    clf = ev.train_classifier(task_train.images, task_train.labels, 2, spec, rng)
    tc = replace(cfg.train_config(), batch_size=cfg.meta.eval_batch)
    buf = TaskDataBuffer()
    buf.append(task_train.images, task_train.labels)
    make_batch = _digits_batch_fn(tc.T)
    out, done, cur = {}, 0, hp
    for n in checkpoints:
        if n > done:
            phi, Phi = within_task_update(cur, buf, n - done, tc, rng, make_batch)
            cur = HyperParams(cur.gen.with_params(phi), Phi)
            done = n
        sampler = conditional_sampler(cur.gen, 2, tc.T)
        out[n] = ev.trts(None, sampler, task_test.labels, 2, spec, rng, classifier=clf).value
    return out


def run_meta_continual(cfg: ExperimentConfig, out: Path) -> RunResult:
    if cfg.run.resume:
        raise ConfigError("meta-continual does not support resume")
    digits = datasets.load_digits(cfg.data.digits_path or None)
    train, test = datasets.train_test_split(digits, cfg.data.test_fraction, cfg.data.split_seed)
    tc = cfg.train_config()
    rng = np.random.default_rng(cfg.seed)
    task_rng = np.random.default_rng([cfg.seed, 2])
    topo = Topology.layered(2, cfg.model.hidden, datasets.N_PIXELS)
    basis = make_basis(cfg)
    gen = SpikeGenerator(topo, init_params(topo, basis, basis, rng, cfg.model.weight_std), "rate", cfg.train.tau_s)
    hp0 = HyperParams(gen, build_discriminator(cfg.model.disc, datasets.N_PIXELS + 2, None, rng))
    m = cfg.meta
    sched = Schedule(m.batches_per_task, tc.batch_size, m.N, m.M, m.k_steps, m.mu_meta)
    spec = classifier_spec(cfg)

    def evaluate(g, d, x, labels, r):
        clf = ev.train_classifier(x, labels, 2, spec, r)
        return ev.trts(None, conditional_sampler(g, 2, tc.T), labels, 2, spec, r, classifier=clf).value

    sched = replace(sched, eval_every=cfg.eval.eval_every if cfg.eval.eval_every else 0)
    res = run_continual(
        meta_task_stream(train, m.train_digits, m.meta_steps, task_rng),
        sched, tc, rng, hp0.copy(), _digits_batch_fn(tc.T), evaluate, out / "metrics.csv",
    )
    checkpoints = sorted({0, m.eval_updates // 4, m.eval_updates // 2, m.eval_updates})
    rows, meta_acc, rand_acc = [], [], []
    for k, pair in enumerate(m.held_out):
        a, b = int(pair[0]), int(pair[1])
        rot = 90 * int(task_rng.integers(4))
        ttr, tte = datasets.make_task(a, b, rot, train), datasets.make_task(a, b, rot, test)
        for name, hp in (("meta", res.hp), ("random", hp0)):
            curve = heldout_trts(hp, ttr, tte, cfg, np.random.default_rng([cfg.seed, 300 + k]), checkpoints)
            for n, acc in curve.items():
                rows.append({"task": f"{pair}r{rot}", "init": name, "updates": n, "trts": acc})
            (meta_acc if name == "meta" else rand_acc).append(curve[m.eval_updates])
    with MetricsWriter(out / "heldout.csv", ("task", "init", "updates", "trts")) as w:
        for r in rows:
            w.write(r)
    series = {}
    for name in ("meta", "random"):
        xs = np.array(checkpoints, float)
        ys = np.array([np.mean([r["trts"] for r in rows if r["init"] == name and r["updates"] == n])
                       for n in checkpoints])
        series[f"{name} init"] = (xs, ys)
    plots.line_plot(out / "heldout.svg", series, "held-out TRTS vs within-task updates", "updates", "TRTS")
    summary = {
        "experiment": cfg.experiment, "seed": cfg.seed, "meta_steps": len({r['t'] for r in res.rows}),
        "meta_trts": meta_acc, "random_trts": rand_acc,
        "mean_meta": float(np.mean(meta_acc)), "mean_random": float(np.mean(rand_acc)),
        "gain": float(np.mean(meta_acc) - np.mean(rand_acc)),
    }
    _write_json(out / "summary.json", summary)
    return RunResult(out, summary)


# --- gradient checks --------------------------------------------------------


def run_gradcheck(cfg: ExperimentConfig, out: Path) -> RunResult:
    results = gradcheck.run_all(cfg.seed, cfg.eval.gradcheck_episodes)
    with MetricsWriter(out / "metrics.csv", ("check", "error", "tolerance", "passed")) as w:
        for r in results:
            w.write({"check": r.name, "error": r.error, "tolerance": r.tolerance, "passed": r.passed})
    failed = [r.name for r in results if not r.passed]
    summary = {"experiment": cfg.experiment, "seed": cfg.seed, "checks": len(results), "failed": failed}
    _write_json(out / "summary.json", summary)
    return RunResult(out, summary, 3 if failed else 0)


RUNNERS = {
    "digits-gan": run_digits_gan,
    "digits-noise": run_digits_noise,
    "neuromorphic-gan": run_neuromorphic_gan,
    "temporal-gan": run_temporal,
    "temporal-bayes": run_temporal,
    "temporal-ml": run_temporal,
    "meta-continual": run_meta_continual,
    "gradcheck": run_gradcheck,
}
