"""INI experiment configuration, presets and the conv-spec mini language."""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError, UsageError
from ..nn import ConvLayerSpec, DenseLayerSpec
from ..training import DECODE_MODES, TrainConfig
from .presets import preset_values

EXPERIMENTS = (
    "digits-gan",
    "digits-noise",
    "neuromorphic-gan",
    "temporal-gan",
    "temporal-bayes",
    "temporal-ml",
    "meta-continual",
    "gradcheck",
)
PRESETS = ("desk", "paper")
BASES = ("exp", "raised_cosine", "identity")


@dataclass
class RunSection:
    id: str = "digits-gan"
    seed: int = 0
    out: str = ""
    preset: str = "desk"
    checkpoint_every: int = 0
    resume: str = ""


@dataclass
class TrainSection:
    lr_disc: float = 1e-3
    lr_gen: float = 1e-2
    batch_size: int = 32
    T: int = 5
    gen_loss: str = "non_saturating"
    svgd_step: float = 1e-2
    kernel_bandwidth: float = 1.0
    iterations: int = 1000
    reward_baseline: str = "none"
    decode: str = "rate"
    tau_s: float = 2.0


@dataclass
class DataSection:
    digits_path: str = ""
    classes: tuple = (3, 8)
    test_fraction: float = 0.3
    split_seed: int = 0
    noise_fractions: tuple = (0.0, 0.1, 0.5)
    n_sequences: int = 2000


@dataclass
class ModelSection:
    hidden: int = 32
    tau_w: int = 5
    basis: str = "exp"
    basis_k: int = 2
    tau_f: float = 2.0
    weight_std: float = 0.1
    particles: int = 1
    disc: str = "dense:128"


@dataclass
class EvalSection:
    eval_every: int = 250
    n_samples: int = 100
    classifier_steps: int = 500
    classifier_hidden: tuple = (100, 100)
    classifier_lr: float = 0.1
    snn_classifier_hidden: int = 16
    snn_classifier_iters: int = 300
    snn_classifier_lr: float = 0.05
    gradcheck_episodes: int = 20000
    variants: tuple = ("real", "cnn", "time_surface", "rate", "ml")
    cnn_disc: str = "c32k4s2xc1k4s1x1"


@dataclass
class MetaSection:
    meta_steps: int = 100
    batches_per_task: int = 1
    N: int = 10
    M: int = 5
    k_steps: int = 10
    mu_meta: float = 0.1
    train_digits: tuple = (0, 1, 2, 3, 4, 5, 6)
    held_out: tuple = ("78", "79", "89")
    eval_updates: int = 200
    eval_batch: int = 100


SECTIONS = {
    "experiment": ("run", RunSection),
    "train": ("train", TrainSection),
    "data": ("data", DataSection),
    "model": ("model", ModelSection),
    "eval": ("eval", EvalSection),
    "meta": ("meta", MetaSection),
}


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    eval: EvalSection = field(default_factory=EvalSection)
    meta: MetaSection = field(default_factory=MetaSection)

    @property
    def experiment(self) -> str:
        return self.run.id

    @property
    def seed(self) -> int:
        return self.run.seed

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            lr_disc=t.lr_disc,
            lr_gen=t.lr_gen,
            batch_size=t.batch_size,
            T=t.T,
            gen_loss=t.gen_loss,
            svgd_step=t.svgd_step,
            kernel_bandwidth=t.kernel_bandwidth,
            iterations=t.iterations,
            seed=self.run.seed,
            reward_baseline=t.reward_baseline,
        )

    def validate(self) -> "ExperimentConfig":
        if self.run.id not in EXPERIMENTS:
            raise ConfigError(f"[experiment] id must be one of {', '.join(EXPERIMENTS)}; got {self.run.id!r}")
        if self.run.preset not in PRESETS:
            raise ConfigError(f"[experiment] preset must be one of {PRESETS}; got {self.run.preset!r}")
        if self.train.decode not in DECODE_MODES:
            raise ConfigError(f"[train] decode must be one of {DECODE_MODES}")
        if self.model.basis not in BASES:
            raise ConfigError(f"[model] basis must be one of {BASES}")
        if self.model.hidden < 0 or self.model.tau_w < 1 or self.model.particles < 1:
            raise ConfigError("[model] hidden >= 0, tau_w >= 1 and particles >= 1 required")
        if self.eval.eval_every < 0 or self.run.checkpoint_every < 0:
            raise ConfigError("eval_every and checkpoint_every must be >= 0")
        for d in self.data.classes:
            if not 0 <= d <= 9:
                raise ConfigError(f"[data] classes: digit {d} outside 0..9")
        if len(set(self.data.classes)) == 1:
            raise ConfigError("[data] classes needs at least two distinct digits")
        for f in self.data.noise_fractions:
            if not 0.0 <= f <= 1.0:
                raise ConfigError(f"[data] noise fraction {f} outside [0, 1]")
        for pair in self.meta.held_out:
            if len(pair) != 2 or not pair.isdigit() or pair[0] == pair[1]:
                raise ConfigError(f"[meta] held_out entries are two distinct digits, got {pair!r}")
        try:
            self.train_config()
        except UsageError as exc:
            raise ConfigError(f"[train] {exc}") from None
        if not self.model.disc.startswith("dense"):
            parse_conv_spec(self.model.disc)
        else:
            parse_dense_spec(self.model.disc)
        parse_conv_spec(self.eval.cnn_disc)
        return self


# --- value conversion -------------------------------------------------------


def _convert(section: str, key: str, default, raw: str):
    raw = raw.strip()
    where = f"[{section}] {key}"
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            proto = default[0] if default else ""
            if isinstance(proto, int):
                return tuple(int(s) for s in items)
            if isinstance(proto, float):
                return tuple(float(s) for s in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def apply_overrides(cfg: ExperimentConfig, values: dict, origin: str = "config") -> ExperimentConfig:
    """``values`` maps section name -> {key: raw string or typed value}."""
    for sec_name, entries in values.items():
        if sec_name not in SECTIONS:
            raise ConfigError(f"{origin}: unknown section [{sec_name}]")
        attr, _ = SECTIONS[sec_name]
        section = getattr(cfg, attr)
        known = {f.name: f for f in fields(section)}
        updates = {}
        for key, raw in entries.items():
            if key not in known:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{sec_name}]")
            default = getattr(section, key)
            updates[key] = _convert(sec_name, key, default, raw) if isinstance(raw, str) else raw
        setattr(cfg, attr, dataclasses.replace(section, **updates))
    return cfg


def read_ini(text: str, origin: str = "config") -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (e.g. N, M, T)
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def to_ini(cfg: ExperimentConfig) -> str:
    """Fully resolved configuration; parsing it back reproduces ``cfg``."""
    lines = []
    for sec_name, (attr, _) in SECTIONS.items():
        lines.append(f"[{sec_name}]")
        section = getattr(cfg, attr)
        for f in fields(section):
            lines.append(f"{f.name} = {_format(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path=None, text: str | None = None, preset: str | None = None, seed: int | None = None,
                out: str | None = None) -> ExperimentConfig:
    """Defaults, then the preset for the experiment, then file values, then explicit overrides."""
    if text is None:
        if path is None:
            raise ConfigError("no configuration given")
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        text = p.read_text()
    origin = str(path) if path is not None else "config"
    values = read_ini(text, origin)
    exp = values.get("experiment", {}).get("id", RunSection.id).strip()
    if exp not in EXPERIMENTS:
        raise ConfigError(f"[experiment] id must be one of {', '.join(EXPERIMENTS)}; got {exp!r}")
    chosen = preset or values.get("experiment", {}).get("preset", "desk").strip()
    if chosen not in PRESETS:
        raise ConfigError(f"preset must be one of {PRESETS}; got {chosen!r}")
    cfg = ExperimentConfig()
    apply_overrides(cfg, preset_values(chosen, exp), f"preset {chosen}")
    apply_overrides(cfg, values, origin)
    run_updates = {"preset": chosen}
    if seed is not None:
        run_updates["seed"] = seed
    if out is not None:
        run_updates["out"] = out
    cfg.run = dataclasses.replace(cfg.run, **run_updates)
    return cfg.validate()


# --- architecture strings ---------------------------------------------------

_CONV_TOKEN = re.compile(r"c(\d+)k(\d+)s(\d+)")


def parse_conv_spec(spec: str) -> list:
    """``"c128k4s2xc1k4s1x1"`` -> two :class:`ConvLayerSpec` plus ``DenseLayerSpec(1)``.

    Layers are separated by ``x``; each is ``c<channels>k<kernel>s<stride>``,
    optionally followed by a trailing integer dense head.  Errors report
    the 0-based character position of the offending token.
    """
    if not spec:
        raise ConfigError("empty conv spec")
    layers: list = []
    pos = 0
    tokens = spec.split("x")
    for n, tok in enumerate(tokens):
        last = n == len(tokens) - 1
        m = _CONV_TOKEN.fullmatch(tok)
        if m:
            c, k, s = (int(g) for g in m.groups())
            if c < 1:
                raise ConfigError(f"conv spec {spec!r}: channels must be >= 1 at position {pos}")
            if k < 1:
                raise ConfigError(f"conv spec {spec!r}: kernel must be >= 1 at position {pos + tok.index('k')}")
            if s < 1:
                raise ConfigError(f"conv spec {spec!r}: stride must be >= 1 at position {pos + tok.index('s')}")
            layers.append(ConvLayerSpec(c, k, s))
        elif tok.isdigit() and last and n > 0:
            if int(tok) < 1:
                raise ConfigError(f"conv spec {spec!r}: dense head size must be >= 1 at position {pos}")
            layers.append(DenseLayerSpec(int(tok)))
        else:
            raise ConfigError(f"conv spec {spec!r}: malformed token {tok!r} at position {pos}")
        pos += len(tok) + 1
    return layers


def parse_dense_spec(spec: str) -> tuple:
    """``"dense:128"`` or ``"dense:128,64"`` -> hidden layer sizes."""
    head, _, body = spec.partition(":")
    if head != "dense" or not body:
        raise ConfigError(f"dense spec {spec!r} must look like 'dense:128'")
    try:
        sizes = tuple(int(s) for s in body.split(","))
    except ValueError:
        raise ConfigError(f"dense spec {spec!r}: sizes must be integers") from None
    if any(s < 1 for s in sizes):
        raise ConfigError(f"dense spec {spec!r}: sizes must be >= 1")
    return sizes
