"""Spike encoders/decoders and synaptic filter bases."""

from __future__ import annotations

import numpy as np

from .errors import UsageError

DEFAULT_TAU_S = 2.0


def exp_basis(tau_w: int, tau_f: float) -> np.ndarray:
    """Single-column exponential decay basis, entry ``exp(-lag/tau_f)``."""
    if tau_w < 1:
        raise UsageError("tau_w must be >= 1")
    if not tau_f > 0:
        raise UsageError("tau_f must be positive")
    lags = np.arange(tau_w, dtype=float)
    return np.exp(-lags / tau_f)[:, None]


def raised_cosine_basis(tau_w: int, k: int) -> np.ndarray:
    """Raised cosine bumps in log-time.

    Column ``j`` at lag ``t`` is ``0.5 * (1 + cos(pi * clip((log(t+1) - c_j)/w, -1, 1)))``
    where the centres ``c_j`` are evenly spaced on ``[0, log(tau_w)]`` and the
    half-width ``w`` equals the centre spacing.  With ``k == 1`` the single
    bump sits at lag 0 with half-width ``log(tau_w)`` (1 when ``tau_w == 1``).
    """
    if tau_w < 1 or k < 1:
        raise UsageError("tau_w and k must be >= 1")
    top = np.log(tau_w)
    if k == 1:
        centres = np.zeros(1)
        width = top if top > 0 else 1.0
    else:
        centres = np.linspace(0.0, top, k)
        width = centres[1] - centres[0]
        if width <= 0:
            width = 1.0
    x = np.log(np.arange(tau_w, dtype=float) + 1.0)
    arg = np.clip((x[:, None] - centres[None, :]) / width, -1.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * arg))


def identity_basis(tau_w: int) -> np.ndarray:
    """One basis column per lag, i.e. a free-form filter."""
    return np.eye(tau_w)


def rate_encode(v, T: int, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli rate code: ``v`` of shape ``(..., n)`` gives spikes ``(..., n, T)``."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
        raise UsageError("rate_encode expects values in [0, 1]")
    u = rng.random(v.shape + (T,))
    return (u < v[..., None]).astype(np.float64)


def rate_decode(x) -> np.ndarray:
    """Fraction of timesteps with a spike, over the last axis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 1:
        raise UsageError("need T >= 1")
    return x.mean(axis=-1)


def time_surface_kernel(T: int, tau_s: float = DEFAULT_TAU_S) -> np.ndarray:
    if not tau_s > 0:
        raise UsageError("tau_s must be positive")
    steps = np.arange(1, T + 1, dtype=float)
    return np.exp(-(T - steps) / tau_s)


def time_surface_decode(x, tau_s: float = DEFAULT_TAU_S) -> np.ndarray:
    """Last sample of a causal exponential filter: ``sum_t x_t exp(-(T-t)/tau_s)``."""
    x = np.asarray(x, dtype=float)
    return x @ time_surface_kernel(x.shape[-1], tau_s)


def one_hot(label: int, n_classes: int) -> np.ndarray:
    if not 0 <= label < n_classes:
        raise UsageError(f"label {label} outside [0, {n_classes})")
    out = np.zeros(n_classes)
    out[label] = 1.0
    return out


def one_hot_batch(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise UsageError(f"labels outside [0, {n_classes})")
    return np.eye(n_classes)[labels]
