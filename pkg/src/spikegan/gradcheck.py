"""Finite-difference and exhaustive-enumeration checks of every gradient in the package."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import codec
from .nn import ACTIVATIONS, ConvLayerSpec, Network, backward, conv_net, dense_net, forward
from .snn import SnnParams, Topology, forward_clamped, forward_sample, init_params, param_mask, replay
from .training import generator_rewards, ml_gradient, svgd_kernel

FD_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: error={self.error:.3e} tol={self.tolerance:.1e} {self.detail}".rstrip()


def rel_error(a, b) -> float:
    a = np.ravel(a)
    b = np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def fd_gradient(f: Callable[[np.ndarray], float], vec: np.ndarray, eps: float = 1e-6, active=None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``vec``; entries outside ``active`` stay 0."""
    vec = np.asarray(vec, dtype=float)
    out = np.zeros_like(vec)
    idx = np.arange(vec.size) if active is None else np.flatnonzero(active)
    for i in idx:
        e = np.zeros_like(vec)
        e[i] = eps
        out[i] = (f(vec + e) - f(vec - e)) / (2 * eps)
    return out


# --- tensor-nn --------------------------------------------------------------


def check_network(net: Network, x: np.ndarray, rng: np.random.Generator, name: str = "network") -> CheckResult:
    """Backprop of ``sum(out * g)`` against central differences."""
    out, tape = forward(net, x)
    g = rng.normal(size=out.shape)
    analytic = np.concatenate([a.ravel() for a in backward(net, tape, g)])

    def f(v):
        return float(np.sum(forward(net.from_vector(v), x)[0] * g))

    numeric = fd_gradient(f, net.vector())
    err = rel_error(analytic, numeric)
    return CheckResult(name, err, FD_TOL, err < FD_TOL, f"({net.n_params} params)")


def _near_kink(net: Network, x: np.ndarray, margin: float = 1e-4) -> bool:
    """True when a pre-activation sits close enough to 0 for FD to straddle a (leaky) relu kink."""
    _, tape = forward(net, x)
    return any(np.min(np.abs(e[1])) < margin for e in tape.entries if len(e) > 1)


def _smooth_case(make_net, x_shape, rng):
    # zero biases can leave a pre-activation at exactly 0 behind dead units; jitter them and redraw x
    net = make_net()
    net = net.from_vector(net.vector() + 0.1 * rng.normal(size=net.n_params))
    x = rng.normal(size=x_shape)
    while _near_kink(net, x):
        x = rng.normal(size=x_shape)
    return net, x


def network_checks(rng: np.random.Generator) -> list[CheckResult]:
    results = []
    for act in ACTIVATIONS:
        net, x = _smooth_case(lambda: dense_net((6, 8, 3), rng, act, "sigmoid"), (4, 6), rng)
        results.append(check_network(net, x, rng, f"dense[{act}]"))
    for act in ACTIVATIONS:
        specs = [ConvLayerSpec(3, 3, 2), ConvLayerSpec(2, 2, 1)]
        net, x = _smooth_case(lambda: conv_net(2, 12, specs, rng, act), (3, 2, 12), rng)
        results.append(check_network(net, x, rng, f"conv1d[{act}]"))
    return results


# --- snn-core episode gradient ----------------------------------------------


def check_snn_episode(
    params: SnnParams, topo: Topology, y: np.ndarray, rng: np.random.Generator, name: str = "snn-episode"
) -> CheckResult:
    """Accumulated local gradient of one episode vs differences of its log-likelihood."""
    trace = forward_sample(params, topo, y, rng)
    spikes = trace.spikes
    analytic = np.concatenate([g.ravel() for g in trace.episode_grad(0)])
    mask = param_mask(topo, params)

    def f(v):
        return float(replay(params.from_vector(v), topo, y, spikes).log_likelihood()[0])

    numeric = fd_gradient(f, params.vector(), active=mask)
    err = rel_error(analytic[mask], numeric[mask])
    return CheckResult(name, err, FD_TOL, err < FD_TOL, f"({int(mask.sum())} params)")


def snn_checks(rng: np.random.Generator) -> list[CheckResult]:
    results = []
    cases = [
        ("snn[layered,exp]", Topology.layered(2, 2, 2), codec.exp_basis(4, 2.0), codec.exp_basis(4, 2.0)),
        ("snn[layered,cosine]", Topology.layered(2, 1, 2), codec.raised_cosine_basis(5, 2), codec.raised_cosine_basis(5, 2)),
        ("snn[single,identity]", Topology.layered(1, 0, 1), codec.identity_basis(6), codec.identity_basis(6)),
    ]
    for name, topo, ba, bb in cases:
        params = init_params(topo, ba, bb, rng, weight_std=0.8)
        params = params.with_arrays([params.w_alpha, params.w_beta, rng.normal(0, 0.5, topo.n_neurons)])
        y = (rng.random((1, topo.n_inputs, 8)) < 0.5).astype(float)
        results.append(check_snn_episode(params, topo, y, rng, name))
    return results


# --- svgd kernel ------------------------------------------------------------


def check_svgd_kernel(rng: np.random.Generator, dim: int = 6, bandwidth: float = 1.0) -> CheckResult:
    a = rng.normal(size=dim)
    b = a + 0.3 * rng.normal(size=dim)
    _, grad_b = svgd_kernel(a, b, bandwidth)
    numeric = fd_gradient(lambda v: svgd_kernel(a, v, bandwidth)[0], b)
    err = rel_error(grad_b, numeric)
    return CheckResult("svgd-kernel-grad", err, 1e-6, err < 1e-6)


# --- enumeration oracles ----------------------------------------------------


def all_spike_patterns(n: int, T: int) -> np.ndarray:
    """Every binary array of shape ``(n, T)``, stacked ``(2**(n*T), n, T)``."""
    bits = np.array(list(itertools.product((0.0, 1.0), repeat=n * T)))
    return bits.reshape(-1, n, T)


RewardFn = Callable[[np.ndarray], np.ndarray]  # read-out spikes (B, N_x, T) -> rewards (B,)


def reinforce_exact(params: SnnParams, topo: Topology, y: np.ndarray, reward_fn: RewardFn) -> np.ndarray:
    """``sum_x p(x) r(x) grad log p(x)`` by enumerating every spike pattern (no hidden neurons)."""
    if len(topo.hidden):
        raise ValueError("enumeration oracle expects a network without hidden neurons")
    T = y.shape[-1]
    pats = all_spike_patterns(topo.n_neurons, T)
    yb = np.broadcast_to(y, (len(pats),) + y.shape[-2:])
    trace = replay(params, topo, yb, pats)
    p = np.exp(trace.log_likelihood())
    r = reward_fn(trace.readout)
    return trace.per_episode_grads(p * r).sum(axis=0)


def reinforce_mc(
    params: SnnParams,
    topo: Topology,
    y: np.ndarray,
    reward_fn: RewardFn,
    n_episodes: int,
    rng: np.random.Generator,
    chunk: int = 10_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of ``r g`` over sampled episodes."""
    total = total_sq = 0.0
    done = 0
    while done < n_episodes:
        b = min(chunk, n_episodes - done)
        trace = forward_sample(params, topo, np.broadcast_to(y, (b,) + y.shape[-2:]), rng)
        rg = trace.per_episode_grads(reward_fn(trace.readout))
        total = total + rg.sum(axis=0)
        total_sq = total_sq + (rg * rg).sum(axis=0)
        done += b
    mean = total / n_episodes
    var = np.maximum(total_sq / n_episodes - mean**2, 0.0)
    return mean, np.sqrt(var / n_episodes)


def ml_exact(params: SnnParams, topo: Topology, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient of ``E_{h ~ q}[log p(x | h, y)]`` by enumerating hidden spike patterns.

    ``q`` is the hidden-neuron law with read-outs clamped to ``x``; the result
    is ``sum_h q(h) [L(h) grad log q(h) + grad L(h)]``.
    """
    T = y.shape[-1]
    H = len(topo.hidden)
    pats = all_spike_patterns(max(H, 1), T) if H else np.zeros((1, 0, T))
    spikes = np.zeros((len(pats), topo.n_neurons, T))
    spikes[:, topo.readout, :] = x
    spikes[:, topo.hidden, :] = pats[:, :H, :] if H else 0.0
    yb = np.broadcast_to(y, (len(pats),) + y.shape[-2:])
    trace = replay(params, topo, yb, spikes)
    logp = trace.step_log_probs()
    log_q = logp[:, topo.hidden, :].sum(axis=(1, 2))
    L = logp[:, topo.readout, :].sum(axis=(1, 2))
    q = np.exp(log_q)
    w = np.empty_like(spikes)
    w[:, topo.readout, :] = q[:, None, None]
    w[:, topo.hidden, :] = (q * L)[:, None, None]
    return trace.per_episode_grads(w).sum(axis=0)


def ml_mc(
    params: SnnParams,
    topo: Topology,
    y: np.ndarray,
    x: np.ndarray,
    n_episodes: int,
    rng: np.random.Generator,
    chunk: int = 10_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of the per-episode estimator used by ``ml_train_step``."""
    per = []
    done = 0
    while done < n_episodes:
        b = min(chunk, n_episodes - done)
        yb = np.broadcast_to(y, (b,) + y.shape[-2:])
        xb = np.broadcast_to(x, (b,) + x.shape[-2:])
        trace = forward_clamped(params, topo, yb, xb, rng)
        # ml_gradient averages over the batch; per-episode rows need batch size 1
        # so rebuild its weights here from the same reward-to-go rule
        ell = trace.step_log_probs()[:, topo.readout, :].sum(axis=1)
        to_go = np.cumsum(ell[:, ::-1], axis=1)[:, ::-1]
        future = np.concatenate([to_go[:, 1:], np.zeros((b, 1))], axis=1)
        w = np.ones_like(trace.spikes)
        w[:, topo.hidden, :] = future[:, None, :]
        per.append(trace.per_episode_grads(w))
        done += b
    rows = np.concatenate(per)
    return rows.mean(axis=0), rows.std(axis=0) / np.sqrt(len(rows))


def within_se(mean, se, exact, mask, n_se: float = 3.0) -> tuple[bool, float]:
    """All active coordinates within ``n_se`` standard errors; returns worst z-score."""
    z = np.abs(mean[mask] - exact[mask]) / np.maximum(se[mask], 1e-300)
    exact_zero_var = se[mask] == 0
    z[exact_zero_var] = np.where(np.abs(mean[mask] - exact[mask])[exact_zero_var] < 1e-12, 0.0, np.inf)
    return bool(np.all(z <= n_se)), float(z.max()) if z.size else 0.0


def reinforce_problem(rng: np.random.Generator, T: int = 2, tau_w: int = 2):
    """1-neuron generator with step input and a fixed random dense discriminator."""
    topo = Topology.layered(1, 0, 1)
    basis = codec.identity_basis(tau_w)
    params = init_params(topo, basis, basis, rng, weight_std=0.8)
    params = params.with_arrays([params.w_alpha, params.w_beta, np.array([0.3])])
    disc = dense_net((T, 4, 1), rng, "relu", "sigmoid")
    y = np.ones((1, T))

    def reward_fn(readout):
        d = forward(disc, readout.reshape(len(readout), -1))[0][:, 0]
        return generator_rewards(d, "non_saturating")

    return params, topo, y, reward_fn


def check_reinforce(rng: np.random.Generator, n_episodes: int = 20_000, n_se: float = 3.0) -> CheckResult:
    params, topo, y, reward_fn = reinforce_problem(rng)
    exact = reinforce_exact(params, topo, y, reward_fn)
    mean, se = reinforce_mc(params, topo, y, reward_fn, n_episodes, rng)
    ok, worst = within_se(mean, se, exact, param_mask(topo, params), n_se)
    return CheckResult("reinforce-vs-enumeration", worst, n_se, ok, f"(max |z| over {n_episodes} episodes)")


def check_ml(rng: np.random.Generator, n_episodes: int = 20_000, n_se: float = 3.0) -> CheckResult:
    topo = Topology.layered(1, 1, 1)
    basis = codec.exp_basis(2, 1.0)
    params = init_params(topo, basis, basis, rng, weight_std=0.8)
    params = params.with_arrays([params.w_alpha, params.w_beta, rng.normal(0, 0.5, topo.n_neurons)])
    T = 3
    y = (rng.random((1, T)) < 0.5).astype(float)
    x = np.array([[1.0, 0.0, 1.0]])
    exact = ml_exact(params, topo, y, x)
    mean, se = ml_mc(params, topo, y, x, n_episodes, rng)
    ok, worst = within_se(mean, se, exact, param_mask(topo, params), n_se)
    return CheckResult("ml-vs-enumeration", worst, n_se, ok, f"(max |z| over {n_episodes} episodes)")


def run_all(seed: int = 0, n_episodes: int = 20_000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = network_checks(rng) + snn_checks(rng) + [check_svgd_kernel(rng)]
    results.append(check_reinforce(rng, n_episodes))
    results.append(check_ml(rng, n_episodes))
    return results
