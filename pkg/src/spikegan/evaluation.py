"""Generator evaluation: TSTR, TRTS, PCA projections and burst/tonic mode coverage."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import datasets
from .errors import DatasetError, UsageError
from .nn import Network, backward, dense_net, forward, sgd_step, softmax_cross_entropy

# sampler(labels, rng) -> synthetic examples, one per requested label
Sampler = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass
class ClassifierSpec:
    hidden: tuple = (100, 100)
    steps: int = 1500
    lr: float = 0.1
    batch_size: int = 64


@dataclass
class EvalReport:
    metric: str
    value: float
    n_train: int
    n_test: int
    seed: int | None = None
    aux: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "metric": self.metric,
            "value": repr(float(self.value)),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seed": "" if self.seed is None else self.seed,
        }


def write_reports(path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["metric", "value", "n_train", "n_test", "seed"], lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def train_classifier(
    x: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    spec: ClassifierSpec,
    rng: np.random.Generator,
) -> Network:
    """ReLU MLP trained with mini-batch SGD on softmax cross-entropy."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    labels = np.asarray(labels, dtype=int)
    net = dense_net((x.shape[1], *spec.hidden, n_classes), rng, "relu", "identity")
    n = len(x)
    for _ in range(spec.steps):
        idx = rng.integers(0, n, size=min(spec.batch_size, n))
        logits, tape = forward(net, x[idx])
        _, grad = softmax_cross_entropy(logits, labels[idx])
        net = net.with_params(sgd_step(net.params(), backward(net, tape, grad), spec.lr))
    return net


def predict(net: Network, x: np.ndarray) -> np.ndarray:
    logits, _ = forward(net, np.asarray(x, dtype=float).reshape(len(x), -1))
    return logits.argmax(axis=1)


def accuracy(net: Network, x: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict(net, x) == np.asarray(labels)))


def _require_classes(labels, n_classes, what):
    missing = sorted(set(range(n_classes)) - set(np.unique(labels).tolist()))
    if missing:
        raise DatasetError(f"{what} has no examples of classes {missing}")


def tstr(
    sampler: Sampler,
    train_labels: np.ndarray,
    real_test: tuple[np.ndarray, np.ndarray],
    n_classes: int,
    spec: ClassifierSpec,
    rng: np.random.Generator,
    seed: int | None = None,
) -> EvalReport:
    """Train on synthetic examples generated for ``train_labels``, test on real data."""
    train_labels = np.asarray(train_labels, dtype=int)
    _require_classes(train_labels, n_classes, "synthetic training set")
    synth = sampler(train_labels, rng)
    net = train_classifier(synth, train_labels, n_classes, spec, rng)
    x_test, y_test = real_test
    acc = accuracy(net, x_test, y_test)
    return EvalReport("tstr", acc, len(train_labels), len(y_test), seed)


def trts(
    real_train: tuple[np.ndarray, np.ndarray],
    sampler: Sampler,
    test_labels: np.ndarray,
    n_classes: int,
    spec: ClassifierSpec,
    rng: np.random.Generator,
    seed: int | None = None,
    classifier: Network | None = None,
) -> EvalReport:
    """Train on real data (or reuse ``classifier``), test on synthetic examples."""
    test_labels = np.asarray(test_labels, dtype=int)
    if classifier is None:
        x_train, y_train = real_train
        _require_classes(y_train, n_classes, "real training set")
        classifier = train_classifier(x_train, y_train, n_classes, spec, rng)
    synth = sampler(test_labels, rng)
    acc = accuracy(classifier, synth, test_labels)
    n_train = 0 if real_train is None else len(real_train[1])
    return EvalReport("trts", acc, n_train, len(test_labels), seed)


@dataclass
class PcaResult:
    real: np.ndarray
    synthetic: np.ndarray
    components: np.ndarray  # (n_components, d), orthonormal rows
    eigenvalues: np.ndarray
    mean: np.ndarray


def pca_compare(real: np.ndarray, synthetic: np.ndarray, n_components: int = 2) -> PcaResult:
    """Fit principal axes on the real set only and project both sets onto them."""
    real = np.asarray(real, dtype=float).reshape(len(real), -1)
    synthetic = np.asarray(synthetic, dtype=float).reshape(len(synthetic), -1)
    if real.shape[1] != synthetic.shape[1]:
        raise UsageError("real and synthetic sets live in different feature spaces")
    if len(real) < n_components or real.shape[1] < n_components:
        raise UsageError("fewer samples or features than requested components")
    mean = real.mean(axis=0)
    centred = real - mean
    cov = centred.T @ centred / max(len(real) - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    top = np.argsort(evals)[::-1][:n_components]
    comps = evecs[:, top].T
    return PcaResult(centred @ comps.T, (synthetic - mean) @ comps.T, comps, evals[top], mean)


@dataclass
class ModeCoverage:
    fractions: dict  # mode -> fraction of samples, plus "neither"
    assignments: list  # per sample: mode name or "neither"
    correlations: np.ndarray  # (N, n_modes) best normalised correlation per mode


def _template_bank(template: np.ndarray, T: int) -> np.ndarray:
    """Unit-norm candidates: every phase of the template, cyclically rolled by every lag."""
    period = len(template)
    rows = []
    for phase in range(period):
        base = template[(np.arange(T) + phase) % period]
        for lag in range(T):
            rows.append(np.roll(base, lag))
    bank = np.unique(np.asarray(rows), axis=0)
    norms = np.linalg.norm(bank, axis=1, keepdims=True)
    return bank[norms[:, 0] > 0] / norms[norms[:, 0] > 0]


def mode_coverage(samples, modes: Sequence[str] = (datasets.BURST, datasets.TONIC), threshold: float = 0.5):
    """Assign each binary sequence to the template with the highest normalised cyclic correlation.

    Correlation is maximised over all template phases and all cyclic lags of
    the input, so the score is invariant to rotating the input sequence.
    Samples whose best correlation is below ``threshold`` count as "neither".
    """
    X = np.asarray(samples, dtype=float)
    X = X.reshape(len(X), -1)
    T = X.shape[1]
    for m in modes:
        if T < len(datasets.mode_template(m)):
            raise UsageError(f"samples shorter than one {m} period")
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    corr = np.zeros((len(X), len(modes)))
    for k, m in enumerate(modes):
        bank = _template_bank(datasets.mode_template(m), T)
        corr[:, k] = (X @ bank.T).max(axis=1) / safe
    corr[norms == 0] = 0.0
    best = corr.argmax(axis=1)
    assign = [modes[b] if corr[i, b] >= threshold else "neither" for i, b in enumerate(best)]
    n = max(len(X), 1)
    fractions = {m: sum(a == m for a in assign) / n for m in modes}
    fractions["neither"] = sum(a == "neither" for a in assign) / n
    return ModeCoverage(fractions, assign, corr)
