"""Save/restore a full training state: generator(s), discriminator, iteration and RNG."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UsageError
from .nn import Conv1d, Dense, Flatten, Network
from .snn import SnnParams, Topology
from .training import ParticleSet, SpikeGenerator

FORMAT = "spikegan-state"
VERSION = 1


@dataclass
class TrainState:
    """Everything needed to resume a run bit-exactly.

    ``model`` is a :class:`SpikeGenerator` or a :class:`ParticleSet`;
    ``disc`` may be ``None`` for maximum-likelihood runs.
    """

    model: object
    disc: Network | None
    iteration: int
    rng: np.random.Generator


def _layer_meta(layer) -> dict:
    if isinstance(layer, Dense):
        return {"type": "dense", "activation": layer.activation, "slope": layer.slope}
    if isinstance(layer, Conv1d):
        return {"type": "conv1d", "activation": layer.activation, "slope": layer.slope, "stride": layer.stride}
    if isinstance(layer, Flatten):
        return {"type": "flatten"}
    raise UsageError(f"cannot checkpoint layer {type(layer).__name__}")


def _build_layers(metas, arrays) -> Network:
    layers, it = [], iter(arrays)
    for m in metas:
        if m["type"] == "dense":
            layers.append(Dense(next(it), next(it), m["activation"], m["slope"]))
        elif m["type"] == "conv1d":
            layers.append(Conv1d(next(it), next(it), m["stride"], m["activation"], m["slope"]))
        elif m["type"] == "flatten":
            layers.append(Flatten())
        else:
            raise UsageError(f"unknown layer type {m['type']!r} in checkpoint")
    return Network(layers)


def _particles_of(model) -> tuple[Topology, list, str, float, bool]:
    if isinstance(model, ParticleSet):
        return model.topology, model.particles, model.decode, model.tau_s, True
    if isinstance(model, SpikeGenerator):
        return model.topology, [model.params], model.decode, model.tau_s, False
    raise UsageError("model must be a SpikeGenerator or ParticleSet")


def save_state(path, state: TrainState) -> None:
    topo, particles, decode, tau_s, is_set = _particles_of(state.model)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "iteration": int(state.iteration),
        "rng": state.rng.bit_generator.state,
        "rng_kind": type(state.rng.bit_generator).__name__,
        "decode": decode,
        "tau_s": tau_s,
        "particle_set": is_set,
        "n_particles": len(particles),
        "disc_layers": None if state.disc is None else [_layer_meta(l) for l in state.disc.layers],
    }
    arrays = {
        "synapses": topo.synapses,
        "feedback": topo.feedback,
        "readout": topo.readout,
        "n_inputs": np.array(topo.n_inputs),
        "basis_a": particles[0].basis_a,
        "basis_b": particles[0].basis_b,
    }
    for j, p in enumerate(particles):
        arrays[f"p{j}_w_alpha"] = p.w_alpha
        arrays[f"p{j}_w_beta"] = p.w_beta
        arrays[f"p{j}_gamma"] = p.gamma
    if state.disc is not None:
        for k, a in enumerate(state.disc.params()):
            arrays[f"d{k}"] = a
    with open(Path(path), "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)


def load_state(path) -> TrainState:
    with np.load(Path(path)) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != FORMAT:
            raise UsageError(f"{path} is not a training-state checkpoint")
        if header.get("version") != VERSION:
            raise UsageError(f"unsupported checkpoint version {header.get('version')}")
        synapses = z["synapses"]
        topo = Topology(int(z["n_inputs"]), synapses.shape[0], z["readout"], synapses, z["feedback"])
        basis_a, basis_b = z["basis_a"], z["basis_b"]
        particles = [
            SnnParams(z[f"p{j}_w_alpha"], z[f"p{j}_w_beta"], z[f"p{j}_gamma"], basis_a, basis_b)
            for j in range(header["n_particles"])
        ]
        disc = None
        if header["disc_layers"] is not None:
            n_arr = sum(1 for k in z.files if k.startswith("d") and k[1:].isdigit())
            disc = _build_layers(header["disc_layers"], [z[f"d{k}"] for k in range(n_arr)])
    if header["particle_set"]:
        model = ParticleSet(topo, particles, header["decode"], header["tau_s"])
    else:
        model = SpikeGenerator(topo, particles[0], header["decode"], header["tau_s"])
    bitgen = getattr(np.random, header["rng_kind"])()
    bitgen.state = header["rng"]
    return TrainState(model, disc, header["iteration"], np.random.Generator(bitgen))
