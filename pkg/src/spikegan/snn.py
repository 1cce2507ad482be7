"""Probabilistic GLM spiking network: topology, sampling, likelihood, local gradients.

Every neuron ``i`` computes at step ``t``::

    u[i,t] = sum_j (A @ w_alpha[i,j]) . window_j(t) + (B @ w_beta[i]) . window_i(t) + gamma[i]

where ``window_j(t) = (s[j,t-1], ..., s[j,t-tau_w])`` (zero before the first
step) and spikes are drawn as ``s[i,t] ~ Bernoulli(sigmoid(u[i,t]))``.

Sources are indexed as ``0..n_inputs-1`` for exogenous inputs followed by
``n_inputs + i`` for neuron ``i``.  Synaptic weights live in a dense
``(n_neurons, n_sources, K_a)`` array; entries without a synapse are kept at
zero and never receive gradient.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import TopologyError, UsageError
from .nn import sigmoid

CHECKPOINT_VERSION = 1


class Topology:
    """Directed synapse graph over exogenous inputs, hidden and read-out neurons."""

    def __init__(
        self,
        n_inputs: int,
        n_neurons: int,
        readout: Sequence[int],
        synapses: np.ndarray,
        feedback: np.ndarray | bool = True,
    ):
        self.n_inputs = int(n_inputs)
        self.n_neurons = int(n_neurons)
        self.readout = np.asarray(readout, dtype=int)
        self.synapses = np.asarray(synapses, dtype=bool)
        if np.ndim(feedback) == 0:
            feedback = np.full(self.n_neurons, bool(feedback))
        self.feedback = np.asarray(feedback, dtype=bool)
        self._validate()
        self.order = self._causal_order()

    @property
    def n_sources(self) -> int:
        return self.n_inputs + self.n_neurons

    @property
    def hidden(self) -> np.ndarray:
        mask = np.ones(self.n_neurons, dtype=bool)
        mask[self.readout] = False
        return np.flatnonzero(mask)

    @property
    def n_readout(self) -> int:
        return len(self.readout)

    def _validate(self):
        n, S = self.n_neurons, self.n_sources
        if n < 1:
            raise TopologyError("network needs at least one neuron")
        if self.synapses.shape != (n, S):
            raise TopologyError(f"synapse mask must be {(n, S)}, got {self.synapses.shape}")
        if self.feedback.shape != (n,):
            raise TopologyError("feedback flags must have one entry per neuron")
        if len(self.readout) < 1:
            raise TopologyError("need at least one read-out neuron")
        if len(set(self.readout.tolist())) != len(self.readout):
            raise TopologyError("duplicate read-out ids")
        if self.readout.min() < 0 or self.readout.max() >= n:
            raise TopologyError("read-out id out of range")
        if np.any(np.diag(self.synapses[:, self.n_inputs :])):
            raise TopologyError("self connections must use the feedback flag, not a synapse")
        if self.n_inputs > 0:
            reached = self._reachable_from_inputs()
            missing = [int(r) for r in self.readout if not reached[r]]
            if missing:
                raise TopologyError(f"read-out neurons {missing} unreachable from inputs")

    def _reachable_from_inputs(self) -> np.ndarray:
        reached = self.synapses[:, : self.n_inputs].any(axis=1)
        queue = deque(np.flatnonzero(reached).tolist())
        nn_edges = self.synapses[:, self.n_inputs :]  # [dst, src]
        while queue:
            src = queue.popleft()
            for dst in np.flatnonzero(nn_edges[:, src]):
                if not reached[dst]:
                    reached[dst] = True
                    queue.append(int(dst))
        return reached

    def _causal_order(self) -> np.ndarray:
        """Topological order of neurons, ties broken by smallest id."""
        nn_edges = self.synapses[:, self.n_inputs :]
        indeg = nn_edges.sum(axis=1).astype(int)
        heap = [i for i in range(self.n_neurons) if indeg[i] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            src = heapq.heappop(heap)
            order.append(src)
            for dst in np.flatnonzero(nn_edges[:, src]):
                indeg[dst] -= 1
                if indeg[dst] == 0:
                    heapq.heappush(heap, int(dst))
        if len(order) != self.n_neurons:
            raise TopologyError("synapse graph has a cycle; no causal evaluation order exists")
        return np.asarray(order, dtype=int)

    @classmethod
    def from_edges(
        cls,
        n_inputs: int,
        n_neurons: int,
        readout: Sequence[int],
        edges: Iterable[tuple],
        feedback: np.ndarray | bool = True,
    ) -> "Topology":
        """Build from ``(src, dst)`` pairs; ``src`` is a neuron id or ``("y", k)``."""
        mask = np.zeros((n_neurons, n_inputs + n_neurons), dtype=bool)
        for src, dst in edges:
            if isinstance(src, tuple):
                kind, k = src
                if kind != "y" or not 0 <= k < n_inputs:
                    raise TopologyError(f"bad exogenous source {src!r}")
                col = k
            else:
                if not 0 <= src < n_neurons:
                    raise TopologyError(f"bad source neuron {src!r}")
                col = n_inputs + src
            if not 0 <= dst < n_neurons:
                raise TopologyError(f"bad destination neuron {dst!r}")
            mask[dst, col] = True
        return cls(n_inputs, n_neurons, readout, mask, feedback)

    @classmethod
    def layered(
        cls, n_inputs: int, n_hidden: int, n_readout: int, feedback: bool = True
    ) -> "Topology":
        """Feed-forward "fully connected" net: inputs -> hidden, inputs+hidden -> read-out.

        Hidden ids are ``0..n_hidden-1``; read-out ids follow.
        """
        n = n_hidden + n_readout
        mask = np.zeros((n, n_inputs + n), dtype=bool)
        mask[:, :n_inputs] = True
        mask[n_hidden:, n_inputs : n_inputs + n_hidden] = True
        return cls(n_inputs, n, np.arange(n_hidden, n), mask, feedback)

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "n_neurons": self.n_neurons,
            "readout": self.readout.tolist(),
            "feedback": self.feedback.tolist(),
        }

    def __eq__(self, other):
        return (
            isinstance(other, Topology)
            and self.n_inputs == other.n_inputs
            and self.n_neurons == other.n_neurons
            and np.array_equal(self.readout, other.readout)
            and np.array_equal(self.synapses, other.synapses)
            and np.array_equal(self.feedback, other.feedback)
        )


@dataclass
class SnnParams:
    w_alpha: np.ndarray  # (n_neurons, n_sources, K_a)
    w_beta: np.ndarray  # (n_neurons, K_b)
    gamma: np.ndarray  # (n_neurons,)
    basis_a: np.ndarray  # (tau_w, K_a)
    basis_b: np.ndarray  # (tau_w, K_b)

    def __post_init__(self):
        if self.basis_a.shape[0] != self.basis_b.shape[0]:
            raise UsageError("synaptic and feedback bases must share tau_w")
        if self.w_alpha.shape[2] != self.basis_a.shape[1]:
            raise UsageError("w_alpha length does not match basis A columns")
        if self.w_beta.shape[1] != self.basis_b.shape[1]:
            raise UsageError("w_beta length does not match basis B columns")

    @property
    def tau_w(self) -> int:
        return self.basis_a.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.w_alpha, self.w_beta, self.gamma]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "SnnParams":
        w_alpha, w_beta, gamma = arrays
        return SnnParams(w_alpha, w_beta, gamma, self.basis_a, self.basis_b)

    def copy(self) -> "SnnParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_vector(self, vec: np.ndarray) -> "SnnParams":
        vec = np.asarray(vec, dtype=float)
        out, offset = [], 0
        for a in self.arrays():
            out.append(vec[offset : offset + a.size].reshape(a.shape).copy())
            offset += a.size
        if offset != vec.size:
            raise UsageError(f"vector length {vec.size} != {offset} parameters")
        return self.with_arrays(out)


def init_params(
    topology: Topology,
    basis_a: np.ndarray,
    basis_b: np.ndarray,
    rng: np.random.Generator,
    weight_std: float = 0.1,
) -> SnnParams:
    """Weights ~ N(0, weight_std^2) on existing synapses/feedback, biases zero."""
    n, S = topology.n_neurons, topology.n_sources
    w_alpha = rng.normal(0.0, weight_std, size=(n, S, basis_a.shape[1]))
    w_alpha = np.where(topology.synapses[:, :, None], w_alpha, 0.0)
    w_beta = rng.normal(0.0, weight_std, size=(n, basis_b.shape[1]))
    w_beta = np.where(topology.feedback[:, None], w_beta, 0.0)
    return SnnParams(w_alpha, w_beta, np.zeros(n), np.asarray(basis_a, float), np.asarray(basis_b, float))


def spike_probability(u):
    """``sigmoid(u)``; scalar in, float out."""
    p = sigmoid(np.asarray(u, dtype=float))
    return float(p) if np.ndim(p) == 0 else p


def log_bernoulli(s, u):
    """``log p(s | u)`` for binary ``s``, computed stably from the potential."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    return -np.logaddexp(0.0, np.where(s > 0.5, -u, u))


def membrane_potential(
    params: SnnParams,
    neuron: int,
    presyn_windows: np.ndarray,
    feedback_window: np.ndarray,
) -> float:
    """Potential of one neuron from explicit spike windows.

    ``presyn_windows`` has shape ``(n_sources, tau_w)`` and
    ``feedback_window`` shape ``(tau_w,)``; both are ordered most recent
    first, i.e. ``(s[t-1], ..., s[t-tau_w])``.
    """
    presyn_windows = np.asarray(presyn_windows, dtype=float)
    feedback_window = np.asarray(feedback_window, dtype=float)
    tau_w = params.tau_w
    if presyn_windows.ndim != 2 or presyn_windows.shape[1] != tau_w:
        raise UsageError(f"presynaptic windows must have length tau_w={tau_w}")
    if feedback_window.shape != (tau_w,):
        raise UsageError(f"feedback window must have length tau_w={tau_w}")
    alpha = params.basis_a @ params.w_alpha[neuron].T  # (tau_w, S)
    beta = params.basis_b @ params.w_beta[neuron]
    return float(
        np.sum(alpha.T * presyn_windows) + beta @ feedback_window + params.gamma[neuron]
    )


def local_gradient(basis: np.ndarray, window: np.ndarray, s: float, u: float):
    """Gradient of ``log p(s | u)`` w.r.t. a filter weight vector and the bias."""
    window = np.asarray(window, dtype=float)
    if window.shape != (basis.shape[0],):
        raise UsageError(f"window must have length tau_w={basis.shape[0]}")
    err = float(s) - spike_probability(u)
    return basis.T @ window * err, err


@dataclass
class EpisodeTrace:
    """A batch of ``B`` sampled (or replayed) episodes with cached state.

    ``spikes`` and ``u`` are ``(B, n_neurons, T)``; ``syn_trace`` holds the
    basis-filtered source windows ``(B, T, n_sources, K_a)`` and
    ``fb_trace`` the filtered own-spike windows ``(B, T, n_neurons, K_b)``.
    """

    topology: Topology
    spikes: np.ndarray
    u: np.ndarray
    syn_trace: np.ndarray
    fb_trace: np.ndarray
    _err: np.ndarray | None = field(default=None, repr=False)

    @property
    def batch_size(self) -> int:
        return self.spikes.shape[0]

    @property
    def T(self) -> int:
        return self.spikes.shape[2]

    @property
    def readout(self) -> np.ndarray:
        return self.spikes[:, self.topology.readout, :]

    @property
    def hidden(self) -> np.ndarray:
        return self.spikes[:, self.topology.hidden, :]

    @property
    def error(self) -> np.ndarray:
        """Post-synaptic error ``s - sigmoid(u)``, shape ``(B, n, T)``."""
        if self._err is None:
            self._err = self.spikes - sigmoid(self.u)
        return self._err

    def step_log_probs(self) -> np.ndarray:
        return log_bernoulli(self.spikes, self.u)

    def log_likelihood(self) -> np.ndarray:
        """Per-episode ``log p(x, h | y)`` from the cached potentials."""
        return self.step_log_probs().sum(axis=(1, 2))

    def weighted_grad(self, weights=None) -> list[np.ndarray]:
        """``sum_b w_b * g_b`` where ``g_b`` is episode ``b``'s log-likelihood gradient.

        ``weights`` may be ``None`` (all ones), shape ``(B,)`` for per-episode
        rewards, or ``(B, n, T)`` for per-neuron, per-step learning signals.
        Returns arrays aligned with ``SnnParams.arrays()``.
        """
        err = self.error
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape == (self.batch_size,):
                err = err * weights[:, None, None]
            elif weights.shape == err.shape:
                err = err * weights
            else:
                raise UsageError(f"weights shape {weights.shape} incompatible with {err.shape}")
        B, n, T = err.shape
        S, Ka = self.syn_trace.shape[2:]
        err_flat = err.transpose(1, 0, 2).reshape(n, B * T)
        syn = self.syn_trace.reshape(B * T, S * Ka)
        g_alpha = (err_flat @ syn).reshape(n, S, Ka) * self.topology.synapses[:, :, None]
        g_beta = np.einsum("bnt,btnk->nk", err, self.fb_trace) * self.topology.feedback[:, None]
        g_gamma = err.sum(axis=(0, 2))
        return [g_alpha, g_beta, g_gamma]

    def per_episode_grads(self, weights=None) -> np.ndarray:
        """``(B, P)`` matrix of (optionally weighted) per-episode gradients, flattened
        in ``SnnParams.vector()`` order.  Meant for small networks."""
        err = self.error
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            err = err * (weights[:, None, None] if weights.ndim == 1 else weights)
        topo = self.topology
        g_alpha = np.einsum("bnt,btsk->bnsk", err, self.syn_trace) * topo.synapses[None, :, :, None]
        g_beta = np.einsum("bnt,btnk->bnk", err, self.fb_trace) * topo.feedback[None, :, None]
        g_gamma = err.sum(axis=2)
        B = self.batch_size
        return np.concatenate([g_alpha.reshape(B, -1), g_beta.reshape(B, -1), g_gamma], axis=1)

    def episode_grad(self, b: int) -> list[np.ndarray]:
        w = np.zeros(self.batch_size)
        w[b] = 1.0
        return self.weighted_grad(w)


def _as_batch(y: np.ndarray) -> tuple[np.ndarray, bool]:
    y = np.asarray(y, dtype=float)
    if y.ndim == 2:
        return y[None], True
    if y.ndim != 3:
        raise UsageError(f"exogenous input must be (N_y, T) or (B, N_y, T), got {y.shape}")
    return y, False


def _check_binary(a, what):
    if not np.all((a == 0) | (a == 1)):
        raise UsageError(f"{what} must be binary")


def simulate(
    params: SnnParams,
    topology: Topology,
    y: np.ndarray,
    uniforms: np.ndarray | None = None,
    clamp: np.ndarray | None = None,
    clamp_mask: np.ndarray | None = None,
) -> EpisodeTrace:
    """Run the network forward over ``T`` steps for a batch of inputs ``y (B, N_y, T)``.

    Neurons flagged in ``clamp_mask`` take their spikes from ``clamp
    (B, n, T)``; the rest spike when ``uniforms[b, t, i] < sigmoid(u)``.
    """
    B, Ny, T = y.shape
    if Ny != topology.n_inputs:
        raise UsageError(f"expected {topology.n_inputs} exogenous rows, got {Ny}")
    n, S, tau_w = topology.n_neurons, topology.n_sources, params.tau_w
    if params.w_alpha.shape[:2] != (n, S):
        raise UsageError("parameters do not match topology")
    if clamp_mask is None:
        clamp_mask = np.zeros(n, dtype=bool)
    sampled = ~clamp_mask
    if sampled.any() and uniforms is None:
        raise UsageError("uniform draws required for sampled neurons")

    # effective filters over lags: alpha (S, n, tau_w) [src, dst, lag], beta (n, tau_w)
    alpha = np.einsum("lk,isk->sil", params.basis_a, params.w_alpha)
    beta = (params.basis_b @ params.w_beta.T).T
    push = alpha[Ny:].copy()
    idx = np.arange(n)
    push[idx, idx, :] += beta
    push = push.reshape(n, n * tau_w)

    hist = np.zeros((B, S, tau_w + T))
    hist[:, :Ny, tau_w:] = y
    # windows[b, t, src, :] holds src's spikes at t - tau_w .. t - 1 (oldest first)
    windows = np.lib.stride_tricks.sliding_window_view(hist, tau_w, axis=2)[:, :, :T, :]
    windows = windows.transpose(0, 2, 1, 3)

    # pending potential: each spike adds its filter to the next tau_w steps
    acc = np.zeros((B, n, T + tau_w))
    acc += params.gamma[None, :, None]
    if Ny:
        exo = windows[:, :, :Ny, :].reshape(B * T, Ny * tau_w)
        kern = alpha[:Ny, :, ::-1].transpose(0, 2, 1).reshape(Ny * tau_w, n)
        acc[:, :, :T] += (exo @ kern).reshape(B, T, n).transpose(0, 2, 1)
    spikes = np.zeros((B, n, T))
    all_sampled = not clamp_mask.any()
    if all_sampled:
        thresh = np.ascontiguousarray(uniforms.transpose(0, 2, 1))  # (B, n, T)
    for t in range(T):
        u = acc[:, :, t]
        if all_sampled:
            s = (thresh[:, :, t] < sigmoid(u)).astype(float)
        else:
            s = np.empty((B, n))
            if sampled.any():
                s[:, sampled] = (uniforms[:, t, sampled] < sigmoid(u[:, sampled])).astype(float)
            s[:, clamp_mask] = clamp[:, clamp_mask, t]
        spikes[:, :, t] = s
        if t + 1 < T and s.any():
            acc[:, :, t + 1 : t + 1 + tau_w] += (s @ push).reshape(B, n, tau_w)
    u_all = np.ascontiguousarray(acc[:, :, :T])

    # filtered traces for the gradient, all steps at once
    hist[:, Ny:, tau_w:] = spikes
    wins = np.ascontiguousarray(windows)
    syn_trace = wins @ np.ascontiguousarray(params.basis_a[::-1])
    fb_trace = wins[:, :, Ny:, :] @ np.ascontiguousarray(params.basis_b[::-1])
    return EpisodeTrace(topology, spikes, u_all, syn_trace, fb_trace)


def draw_uniforms(topology: Topology, batch: int, T: int, rng: np.random.Generator) -> np.ndarray:
    """Per-episode uniform draws ``(B, T, n)``.

    Draws for each step are consumed in causal order, so position ``j`` of
    the raw draw goes to neuron ``order[j]``.
    """
    raw = rng.random((batch, T, topology.n_neurons))
    inv = np.argsort(topology.order)
    return raw[:, :, inv]


def forward_sample(
    params: SnnParams, topology: Topology, y: np.ndarray, rng: np.random.Generator
) -> EpisodeTrace:
    """Sample episodes given exogenous input ``y`` of shape ``(N_y, T)`` or ``(B, N_y, T)``."""
    yb, _ = _as_batch(y)
    _check_binary(yb, "exogenous input")
    U = draw_uniforms(topology, yb.shape[0], yb.shape[2], rng)
    return simulate(params, topology, yb, uniforms=U)


def forward_clamped(
    params: SnnParams,
    topology: Topology,
    y: np.ndarray,
    x: np.ndarray,
    rng: np.random.Generator,
) -> EpisodeTrace:
    """Sample hidden neurons while read-out neurons are clamped to ``x (B, N_x, T)``."""
    yb, _ = _as_batch(y)
    xb, _ = _as_batch(x)
    _check_binary(xb, "target spikes")
    B, _, T = yb.shape
    if xb.shape != (B, topology.n_readout, T):
        raise UsageError(f"targets must be {(B, topology.n_readout, T)}, got {xb.shape}")
    clamp = np.zeros((B, topology.n_neurons, T))
    clamp[:, topology.readout, :] = xb
    mask = np.zeros(topology.n_neurons, dtype=bool)
    mask[topology.readout] = True
    U = draw_uniforms(topology, B, T, rng)
    return simulate(params, topology, yb, uniforms=U, clamp=clamp, clamp_mask=mask)


def replay(
    params: SnnParams, topology: Topology, y: np.ndarray, spikes: np.ndarray
) -> EpisodeTrace:
    """Recompute potentials and traces for fully specified spikes ``(B, n, T)``."""
    yb, _ = _as_batch(y)
    sb, _ = _as_batch(spikes)
    _check_binary(sb, "spikes")
    mask = np.ones(topology.n_neurons, dtype=bool)
    return simulate(params, topology, yb, clamp=sb, clamp_mask=mask)


def log_likelihood(params, topology, x, h, y):
    """``log p(x, h | y)``; arrays may be single episodes or batches."""
    yb, single = _as_batch(y)
    xb, _ = _as_batch(x)
    hb, _ = _as_batch(h)
    B, _, T = yb.shape
    spikes = np.zeros((B, topology.n_neurons, T))
    spikes[:, topology.readout, :] = xb
    spikes[:, topology.hidden, :] = hb
    ll = replay(params, topology, yb, spikes).log_likelihood()
    return float(ll[0]) if single else ll


def apply_update(params: SnnParams, grads: Sequence[np.ndarray], step: float) -> SnnParams:
    """``params + step * grads`` (negative ``step`` for descent)."""
    return params.with_arrays([a + step * g for a, g in zip(params.arrays(), grads)])


def save_checkpoint(path, topology: Topology, params: SnnParams, **meta) -> None:
    """Write topology + parameters to an ``.npz`` file (bit-exact round trip)."""
    header = {"format": "spikegan-snn", "version": CHECKPOINT_VERSION, "meta": meta}
    np.savez(
        Path(path),
        header=np.array(json.dumps(header)),
        synapses=topology.synapses,
        feedback=topology.feedback,
        readout=topology.readout,
        n_inputs=np.array(topology.n_inputs),
        w_alpha=params.w_alpha,
        w_beta=params.w_beta,
        gamma=params.gamma,
        basis_a=params.basis_a,
        basis_b=params.basis_b,
    )


def load_checkpoint(path) -> tuple[Topology, SnnParams, dict]:
    with np.load(Path(path)) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "spikegan-snn":
            raise UsageError(f"{path} is not an SNN checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise UsageError(f"unsupported checkpoint version {header.get('version')}")
        synapses = z["synapses"]
        topo = Topology(
            int(z["n_inputs"]), synapses.shape[0], z["readout"], synapses, z["feedback"]
        )
        params = SnnParams(z["w_alpha"], z["w_beta"], z["gamma"], z["basis_a"], z["basis_b"])
    return topo, params, header["meta"]


def param_mask(topology: Topology, params: SnnParams) -> np.ndarray:
    """Flat boolean mask over ``params.vector()`` marking trainable entries."""
    return np.concatenate(
        [
            np.broadcast_to(topology.synapses[:, :, None], params.w_alpha.shape).ravel(),
            np.broadcast_to(topology.feedback[:, None], params.w_beta.shape).ravel(),
            np.ones(params.gamma.size, dtype=bool),
        ]
    )
