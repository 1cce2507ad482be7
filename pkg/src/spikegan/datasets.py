"""Digit images, noise corruption, rotated two-digit tasks and burst/tonic spike trains."""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DatasetError, UsageError

BUNDLED_DIGITS = "optdigits.csv.gz"
N_PIXELS = 64
BURST_ON, BURST_OFF = 5, 15
TONIC_ON, TONIC_OFF = 2, 10


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # (64,) in [0, 1]
    label: int


@dataclass
class DigitSet:
    """Array-backed collection of 8x8 digit images."""

    images: np.ndarray  # (N, 64)
    labels: np.ndarray  # (N,)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "DigitSet":
        return DigitSet(self.images[idx], self.labels[idx])

    def classes(self, digits) -> "DigitSet":
        return self.subset(np.isin(self.labels, list(digits)))


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt")
    return open(path, "r")


def _parse_lines(lines, source) -> DigitSet:
    images, labels = [], []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != N_PIXELS + 1:
            raise DatasetError(f"{source}:{lineno}: expected 65 fields, got {len(fields)}")
        try:
            values = [int(float(f)) for f in fields]
        except ValueError as exc:
            raise DatasetError(f"{source}:{lineno}: non-numeric field ({exc})") from None
        pix, lab = values[:N_PIXELS], values[N_PIXELS]
        if min(pix) < 0 or max(pix) > 16:
            raise DatasetError(f"{source}:{lineno}: pixel outside 0..16")
        if not 0 <= lab <= 9:
            raise DatasetError(f"{source}:{lineno}: label {lab} outside 0..9")
        images.append(pix)
        labels.append(lab)
    return DigitSet(np.asarray(images, dtype=float).reshape(-1, N_PIXELS) / 16.0,
                    np.asarray(labels, dtype=int))


def load_digits(path=None) -> DigitSet:
    """Read optdigits-format CSV (64 pixel counts 0-16, then the label).

    Without ``path`` the bundled UCI optdigits test file (1797 images) is used.
    """
    if path is None:
        ref = resources.files("spikegan.data").joinpath(BUNDLED_DIGITS)
        with resources.as_file(ref) as p:
            with _open_text(Path(p)) as fh:
                return _parse_lines(fh, BUNDLED_DIGITS)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"digits file not found: {path}")
    with _open_text(path) as fh:
        return _parse_lines(fh, path)


def save_digits_csv(path, digits: DigitSet) -> None:
    """Write images back to the 65-integer optdigits line format."""
    counts = np.rint(digits.images * 16).astype(int)
    with open(path, "w") as fh:
        for pix, lab in zip(counts, digits.labels):
            fh.write(",".join(map(str, pix.tolist())) + f",{int(lab)}\n")


def train_test_split(digits: DigitSet, test_fraction: float = 0.3, seed: int = 0):
    """Stratified, seeded split of one digit file into train and test parts."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(digits.labels):
        idx = np.flatnonzero(digits.labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return digits.subset(np.sort(np.concatenate(train_idx))), digits.subset(
        np.sort(np.concatenate(test_idx))
    )


def corrupt_images(images: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Add Uniform(0, 1) noise to ``floor(fraction * 64)`` random pixels per image, clamped."""
    if not 0.0 <= fraction <= 1.0:
        raise UsageError("fraction must be in [0, 1]")
    images = np.array(images, dtype=float, copy=True)
    single = images.ndim == 1
    if single:
        images = images[None]
    n_pix = images.shape[1]
    k = int(np.floor(fraction * n_pix))
    if k:
        # k distinct pixels per image: first k columns of a per-row random permutation
        chosen = np.argsort(rng.random(images.shape), axis=1)[:, :k]
        rows = np.arange(len(images))[:, None]
        noise = rng.random((len(images), k))
        images[rows, chosen] = np.clip(images[rows, chosen] + noise, 0.0, 1.0)
    return images[0] if single else images


def corrupt(img: LabeledImage, fraction: float, rng: np.random.Generator) -> LabeledImage:
    return LabeledImage(corrupt_images(img.pixels, fraction, rng), img.label)


def rotate_images(images: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Rotate flattened 8x8 images clockwise: pixel (r, c) moves to (c, 7 - r)."""
    grid = np.asarray(images).reshape(-1, 8, 8)
    out = np.rot90(grid, k=-(quarter_turns % 4), axes=(1, 2))
    return out.reshape(np.shape(images))


def make_task(digit_a: int, digit_b: int, rotation: int, source: DigitSet) -> DigitSet:
    """Two-class task: ``digit_a -> 0``, ``digit_b -> 1``, all rotated by ``rotation`` degrees."""
    if digit_a == digit_b:
        raise UsageError("task digits must differ")
    if rotation % 90 != 0:
        raise UsageError("rotation must be a multiple of 90 degrees")
    ia = np.flatnonzero(source.labels == digit_a)
    ib = np.flatnonzero(source.labels == digit_b)
    if len(ia) == 0 or len(ib) == 0:
        raise DatasetError(f"no examples for digit {digit_a if len(ia) == 0 else digit_b}")
    idx = np.concatenate([ia, ib])
    labels = np.concatenate([np.zeros(len(ia), int), np.ones(len(ib), int)])
    return DigitSet(rotate_images(source.images[idx], rotation // 90), labels)


# --- temporal spike patterns -------------------------------------------------

BURST, TONIC = "burst", "tonic"


def mode_template(mode: str) -> np.ndarray:
    """One period of the pattern: ones then silence."""
    if mode == BURST:
        on, off = BURST_ON, BURST_OFF
    elif mode == TONIC:
        on, off = TONIC_ON, TONIC_OFF
    else:
        raise UsageError(f"unknown spiking mode {mode!r}")
    return np.concatenate([np.ones(on), np.zeros(off)])


def periodic_train(mode: str, T: int, phase: int = 0) -> np.ndarray:
    """Template repeated and shifted: ``x[t] = template[(t + phase) % period]``."""
    tmpl = mode_template(mode)
    return tmpl[(np.arange(T) + phase) % len(tmpl)]


@dataclass(frozen=True)
class TemporalExample:
    x: np.ndarray  # (1, T)
    mode: str
    phase: int


def make_burst_tonic(n: int, T: int, rng: np.random.Generator) -> list[TemporalExample]:
    """``n`` burst/tonic sequences, mode chosen with probability 1/2, uniform random phase."""
    if T < len(mode_template(BURST)):
        raise UsageError("T must cover at least one burst period (20 steps)")
    out = []
    for _ in range(n):
        mode = BURST if rng.random() < 0.5 else TONIC
        phase = int(rng.integers(len(mode_template(mode))))
        out.append(TemporalExample(periodic_train(mode, T, phase)[None, :], mode, phase))
    return out


def stack_temporal(examples) -> np.ndarray:
    """``(N, 1, T)`` array from a list of :class:`TemporalExample`."""
    return np.stack([e.x for e in examples])


def step_input(T: int) -> np.ndarray:
    if T < 1:
        raise UsageError("T must be >= 1")
    return np.ones((1, T))


def save_spike_trains(path, trains: np.ndarray) -> None:
    """Binary dump: int32 header (count, n_neurons, T) then bit-packed spikes."""
    trains = np.asarray(trains)
    if trains.ndim == 2:
        trains = trains[None]
    if not np.all((trains == 0) | (trains == 1)):
        raise UsageError("spike trains must be binary")
    header = np.array(trains.shape, dtype="<i4")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.packbits(trains.astype(np.uint8).ravel()).tobytes())


def load_spike_trains(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    count, n, T = np.frombuffer(raw[:12], dtype="<i4")
    bits = np.unpackbits(np.frombuffer(raw[12:], dtype=np.uint8))[: count * n * T]
    return bits.reshape(count, n, T).astype(np.float64)
