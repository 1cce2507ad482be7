"""Adversarial (frequentist and SVGD-Bayesian) and maximum-likelihood training steps.

The generator gradient is the REINFORCE estimate ``(1/B) sum_i r_i g_i`` where
``g_i`` is the accumulated local log-likelihood gradient of episode ``i`` and
``r_i`` a scalar reward from the discriminator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import codec
from .errors import NumericError, UsageError
from .nn import EPS, Network, backward, forward, gan_losses, sgd_step
from .snn import EpisodeTrace, SnnParams, Topology, forward_clamped, forward_sample

DECODE_MODES = ("rate", "time_surface", "none")
GEN_LOSSES = ("saturating", "non_saturating")


@dataclass
class TrainConfig:
    lr_disc: float = 1e-3
    lr_gen: float = 1e-2
    batch_size: int = 32
    T: int = 5
    gen_loss: str = "non_saturating"
    svgd_step: float = 1e-2
    kernel_bandwidth: float = 1.0
    iterations: int = 1000
    seed: int = 0
    # "none" keeps the plain r*g estimator; "mean" subtracts the batch mean reward
    reward_baseline: str = "none"

    def __post_init__(self):
        if self.gen_loss not in GEN_LOSSES:
            raise UsageError(f"gen_loss must be one of {GEN_LOSSES}")
        if self.reward_baseline not in ("none", "mean"):
            raise UsageError("reward_baseline must be 'none' or 'mean'")
        if self.batch_size < 1 or self.T < 1 or self.iterations < 0:
            raise UsageError("batch_size and T must be positive")
        for name in ("lr_disc", "lr_gen", "svgd_step"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be non-negative")
        if self.kernel_bandwidth <= 0:
            raise UsageError("kernel_bandwidth must be positive")


@dataclass
class SpikeGenerator:
    """SNN generator plus the fixed map from read-out spikes to the data space."""

    topology: Topology
    params: SnnParams
    decode: str = "none"
    tau_s: float = codec.DEFAULT_TAU_S

    def __post_init__(self):
        if self.decode not in DECODE_MODES:
            raise UsageError(f"decode must be one of {DECODE_MODES}")

    def sample(self, y: np.ndarray, rng: np.random.Generator) -> EpisodeTrace:
        return forward_sample(self.params, self.topology, y, rng)

    def to_data(self, readout: np.ndarray) -> np.ndarray:
        if self.decode == "rate":
            return codec.rate_decode(readout)
        if self.decode == "time_surface":
            return codec.time_surface_decode(readout, self.tau_s)
        return readout

    def generate(self, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.to_data(self.sample(y, rng).readout)

    def with_params(self, params: SnnParams) -> "SpikeGenerator":
        return replace(self, params=params)


@dataclass
class ParticleSet:
    """``J`` generator parameter vectors sharing one topology and decoder."""

    topology: Topology
    particles: list
    decode: str = "none"
    tau_s: float = codec.DEFAULT_TAU_S

    def __post_init__(self):
        if len(self.particles) < 1:
            raise UsageError("need at least one particle")
        shapes = {tuple(a.shape for a in p.arrays()) for p in self.particles}
        if len(shapes) != 1:
            raise UsageError("particle shapes differ")

    def __len__(self):
        return len(self.particles)

    def generator(self, j: int) -> SpikeGenerator:
        return SpikeGenerator(self.topology, self.particles[j], self.decode, self.tau_s)

    def with_particles(self, particles) -> "ParticleSet":
        return replace(self, particles=list(particles))


@dataclass
class Batch:
    """Real examples: ``x`` in the discriminator's data space, ``y`` the generator input.

    ``cond`` are conditioning features appended to the discriminator input
    along axis 1 (feature axis for vectors, channel axis for time series).
    """

    x: np.ndarray
    y: np.ndarray
    cond: np.ndarray | None = None

    def __len__(self):
        return len(self.x)


def disc_input(data: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
    if cond is None:
        return data
    return np.concatenate([data, cond], axis=1)


def _clamped(d):
    return np.clip(d, EPS, 1.0 - EPS)


def _inside(d):
    return ((d > EPS) & (d < 1.0 - EPS)).astype(float)


def discriminator_update(disc: Network, real_in, fake_in, lr: float):
    """One SGD step on ``-[mean log D(real) + mean log(1 - D(fake))]``.

    Returns the updated network, ``D(real)``, ``D(fake)`` (both from the
    network before the update) and the loss.
    """
    n_r, n_f = len(real_in), len(fake_in)
    out, tape = forward(disc, np.concatenate([real_in, fake_in], axis=0))
    if out.ndim != 2 or out.shape[1] != 1:
        raise UsageError("discriminator must output one probability per example")
    d = out[:, 0]
    d_real, d_fake = d[:n_r], d[n_r:]
    loss = float(-(np.log(_clamped(d_real)).mean() + np.log1p(-_clamped(d_fake)).mean()))
    if not np.isfinite(loss):
        raise NumericError("non-finite discriminator loss", {"loss": loss})
    grad = np.empty_like(d)
    grad[:n_r] = -_inside(d_real) / (_clamped(d_real) * n_r)
    grad[n_r:] = _inside(d_fake) / ((1.0 - _clamped(d_fake)) * n_f)
    grads = backward(disc, tape, grad[:, None])
    new = disc.with_params(sgd_step(disc.params(), grads, lr))
    return new, d_real, d_fake, loss


def generator_rewards(d_fake: np.ndarray, mode: str) -> np.ndarray:
    """Per-sample rewards; descending ``mean(r * g)`` lowers the generator loss."""
    d = _clamped(np.asarray(d_fake, dtype=float))
    if mode == "saturating":
        return np.log1p(-d)
    if mode == "non_saturating":
        return -np.log(d)
    raise UsageError(f"unknown generator loss mode {mode!r}")


def reinforce_gradient(trace: EpisodeTrace, rewards: np.ndarray, baseline: str = "none"):
    """``(1/B) sum_i r_i g_i`` as arrays aligned with ``SnnParams.arrays()``."""
    r = np.asarray(rewards, dtype=float)
    if baseline == "mean":
        r = r - r.mean()
    B = trace.batch_size
    grads = [g / B for g in trace.weighted_grad(r)]
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite generator gradient", {"max_abs_reward": float(np.abs(r).max())})
    return grads


def _check_batch(batch: Batch, cfg: TrainConfig):
    if len(batch) < cfg.batch_size:
        raise UsageError(f"batch has {len(batch)} examples, need {cfg.batch_size}")
    if len(batch.y) != len(batch.x):
        raise UsageError("x and y batch sizes differ")


def spikegan_step(
    gen: SpikeGenerator, disc: Network, batch: Batch, cfg: TrainConfig, rng: np.random.Generator
):
    """One joint discriminator/generator update; returns ``(gen', disc', metrics)``."""
    _check_batch(batch, cfg)
    trace = gen.sample(batch.y, rng)
    fake = gen.to_data(trace.readout)
    real_in = disc_input(batch.x, batch.cond)
    fake_in = disc_input(fake, batch.cond)
    disc_new, d_real, d_fake, d_loss = discriminator_update(disc, real_in, fake_in, cfg.lr_disc)
    rewards = generator_rewards(d_fake, cfg.gen_loss)
    grads = reinforce_gradient(trace, rewards, cfg.reward_baseline)
    new_params = gen.params.with_arrays(sgd_step(gen.params.arrays(), grads, cfg.lr_gen))
    _, g_loss = gan_losses(d_real, d_fake, cfg.gen_loss)
    metrics = {
        "d_real": float(d_real.mean()),
        "d_synth": float(d_fake.mean()),
        "disc_loss": d_loss,
        "gen_loss": float(np.mean(g_loss)),
        "reward": float(rewards.mean()),
    }
    return gen.with_params(new_params), disc_new, metrics


def svgd_kernel(a, b, bandwidth: float = 1.0):
    """``k = exp(-|a-b|^2 / h)`` and its gradient w.r.t. ``b``, ``2 (a-b) k / h``."""
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise UsageError("kernel arguments differ in shape")
    diff = a - b
    k = float(np.exp(-np.dot(diff, diff) / bandwidth))
    return k, (2.0 / bandwidth) * diff * k


def _as_vector(p) -> np.ndarray:
    if isinstance(p, SnnParams):
        return p.vector()
    return np.asarray(p, dtype=float).ravel()


def svgd_direction(X: np.ndarray, G: np.ndarray, bandwidth: float = 1.0) -> np.ndarray:
    """Per-particle update direction (to be subtracted after scaling by the step).

    ``X`` and ``G`` are ``(J, P)``: particle vectors and gradients of the
    loss being minimised (the prior term is dropped: constant prior).  Row
    ``j`` is ``sum_j' [k(x_j, x_j') G_j' - grad_{x_j'} k(x_j, x_j')]``.
    """
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    np.fill_diagonal(d2, 0.0)
    K = np.exp(-d2 / bandwidth)
    # sum_j' grad_{x_j'} k(x_j, x_j') = (2/h) sum_j' (x_j - x_j') K_jj'
    repulse = (2.0 / bandwidth) * (K.sum(axis=1)[:, None] * X - K @ X)
    return K @ G - repulse


def bayes_spikegan_step(
    particles: ParticleSet, disc: Network, batch: Batch, cfg: TrainConfig, rng: np.random.Generator
):
    """SVGD update of all particles plus one discriminator step on the pooled loss."""
    _check_batch(batch, cfg)
    J = len(particles)
    traces, fakes = [], []
    for j in range(J):
        gen = particles.generator(j)
        tr = gen.sample(batch.y, rng)
        traces.append(tr)
        fakes.append(disc_input(gen.to_data(tr.readout), batch.cond))
    real_in = disc_input(batch.x, batch.cond)
    disc_new, d_real, d_fake_all, d_loss = discriminator_update(
        disc, real_in, np.concatenate(fakes, axis=0), cfg.lr_disc
    )
    d_fake = d_fake_all.reshape(J, -1)
    grads = []
    for j in range(J):
        rewards = generator_rewards(d_fake[j], "non_saturating")
        g = reinforce_gradient(traces[j], rewards, cfg.reward_baseline)
        grads.append(np.concatenate([a.ravel() for a in g]))
    X = np.stack([p.vector() for p in particles.particles])
    step = svgd_direction(X, np.stack(grads), cfg.kernel_bandwidth)
    if not np.all(np.isfinite(step)):
        raise NumericError("non-finite SVGD update")
    new = [p.from_vector(X[j] - cfg.svgd_step * step[j]) for j, p in enumerate(particles.particles)]
    metrics = {
        "d_real": float(d_real.mean()),
        "d_synth": float(d_fake.mean()),
        "disc_loss": d_loss,
        "gen_loss": float(np.mean(-np.log(_clamped(d_fake)))),
    }
    for j in range(J):
        metrics[f"d_synth_{j}"] = float(d_fake[j].mean())
    return particles.with_particles(new), disc_new, metrics


def ml_learning_signal(trace: EpisodeTrace) -> np.ndarray:
    """Per-step visible log-likelihood ``l_t = sum_{i in V} log p(x_{i,t} | u_{i,t})``, ``(B, T)``."""
    logp = trace.step_log_probs()
    return logp[:, trace.topology.readout, :].sum(axis=1)


def ml_gradient(trace: EpisodeTrace) -> list[np.ndarray]:
    """Batch-averaged ascent direction for ``E_h[log p(x | h, y)]`` from clamped episodes."""
    ell = ml_learning_signal(trace)
    to_go = np.cumsum(ell[:, ::-1], axis=1)[:, ::-1]
    future = np.concatenate([to_go[:, 1:], np.zeros((len(ell), 1))], axis=1)
    weights = np.ones_like(trace.spikes)
    hidden = trace.topology.hidden
    if len(hidden):
        weights[:, hidden, :] = future[:, None, :]
    B = trace.batch_size
    grads = [g / B for g in trace.weighted_grad(weights)]
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite likelihood gradient")
    return grads


def ml_train_step(
    gen: SpikeGenerator,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
):
    """Maximum-likelihood update with read-out neurons clamped to targets ``x``.

    Visible neurons follow their exact local gradient.  Hidden neurons use a
    REINFORCE estimate where the score of ``h_t`` is weighted by the visible
    log-likelihood accumulated after ``t`` (``h_t`` only reaches visible
    neurons from step ``t+1`` on).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.shape[2] != cfg.T or y.shape[2] != cfg.T:
        raise UsageError(f"target length {x.shape[2]} differs from T={cfg.T}")
    trace = forward_clamped(gen.params, gen.topology, y, x, rng)
    grads = ml_gradient(trace)
    new_params = gen.params.with_arrays(sgd_step(gen.params.arrays(), grads, cfg.lr_gen, ascent=True))
    metrics = {"log_likelihood": float(ml_learning_signal(trace).sum(axis=1).mean())}
    return gen.with_params(new_params), metrics

