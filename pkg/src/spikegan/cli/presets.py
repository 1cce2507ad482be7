"""Named parameter sets: ``desk`` (minutes on one CPU) and ``paper`` (published sizes)."""

from __future__ import annotations

import copy

_DIGITS_DESK = {
    "train": {"T": 5, "batch_size": 64, "lr_gen": 0.2, "lr_disc": 0.02, "iterations": 1500,
              "reward_baseline": "mean", "decode": "rate"},
    "data": {"classes": (3, 8)},
    "model": {"hidden": 32, "tau_w": 5, "basis": "exp", "tau_f": 2.0, "disc": "dense:128"},
    "eval": {"eval_every": 250, "classifier_steps": 500},
}
_DIGITS_PAPER = {
    "train": {"T": 5, "batch_size": 100, "lr_gen": 0.2, "lr_disc": 0.02, "iterations": 10000,
              "reward_baseline": "mean", "decode": "rate"},
    "data": {"classes": tuple(range(10))},
    "model": {"hidden": 128, "tau_w": 5, "basis": "exp", "tau_f": 2.0, "disc": "dense:128"},
    "eval": {"eval_every": 500, "classifier_steps": 3000},
}

_TEMPORAL_DESK = {
    "train": {"T": 50, "batch_size": 32, "lr_gen": 0.05, "lr_disc": 0.01, "svgd_step": 0.05,
              "iterations": 3000, "reward_baseline": "mean", "decode": "none"},
    "data": {"n_sequences": 2000},
    "model": {"hidden": 0, "tau_w": 30, "basis": "identity", "disc": "c16k5s2xc16k5s2x1", "particles": 1},
    "eval": {"eval_every": 500, "n_samples": 100},
}

DESK = {
    "digits-gan": _DIGITS_DESK,
    "digits-noise": {
        **_DIGITS_DESK,
        "train": {**_DIGITS_DESK["train"], "decode": "time_surface"},
        "model": {**_DIGITS_DESK["model"], "basis": "raised_cosine", "basis_k": 2},
        "eval": {"eval_every": 0, "classifier_steps": 500},
    },
    "neuromorphic-gan": {
        "train": {"T": 10, "batch_size": 64, "lr_gen": 0.2, "lr_disc": 0.02, "iterations": 1000,
                  "reward_baseline": "mean", "decode": "none"},
        "data": {"classes": (3, 8)},
        "model": {"hidden": 16, "tau_w": 5, "basis": "exp", "tau_f": 2.0, "disc": "dense:128"},
        "eval": {"eval_every": 0, "snn_classifier_hidden": 16, "snn_classifier_iters": 300,
                 "cnn_disc": "c32k4s2xc1k4s1x1"},
    },
    "temporal-gan": _TEMPORAL_DESK,
    "temporal-bayes": {**_TEMPORAL_DESK, "model": {**_TEMPORAL_DESK["model"], "particles": 5}},
    "temporal-ml": {
        **_TEMPORAL_DESK,
        "train": {**_TEMPORAL_DESK["train"], "iterations": 2000},
        "model": {**_TEMPORAL_DESK["model"], "particles": 5},
    },
    "meta-continual": {
        "train": {"T": 5, "batch_size": 32, "lr_gen": 0.2, "lr_disc": 0.02, "reward_baseline": "mean",
                  "decode": "rate"},
        "model": {"hidden": 32, "tau_w": 5, "basis": "exp", "tau_f": 2.0, "disc": "dense:128"},
        "meta": {"meta_steps": 100, "N": 10, "M": 5, "k_steps": 10, "mu_meta": 0.1,
                 "eval_updates": 200, "eval_batch": 100},
        "eval": {"classifier_steps": 500},
    },
    "gradcheck": {},
}

PAPER = {
    "digits-gan": _DIGITS_PAPER,
    "digits-noise": {
        **_DIGITS_PAPER,
        "train": {**_DIGITS_PAPER["train"], "decode": "time_surface"},
        "model": {**_DIGITS_PAPER["model"], "basis": "raised_cosine", "basis_k": 2},
        "data": {"classes": tuple(range(10)), "noise_fractions": (0.0, 0.01, 0.1, 0.5)},
    },
    "neuromorphic-gan": {
        "train": {"T": 10, "batch_size": 100, "lr_gen": 0.2, "lr_disc": 0.02, "iterations": 10000,
                  "reward_baseline": "mean", "decode": "none"},
        "data": {"classes": tuple(range(10))},
        "model": {"hidden": 128, "tau_w": 5, "basis": "exp", "tau_f": 2.0, "disc": "dense:128"},
        "eval": {"snn_classifier_hidden": 256, "snn_classifier_iters": 3000, "cnn_disc": "c128k4s2xc1k4s1x1"},
    },
    "temporal-gan": {**_TEMPORAL_DESK, "data": {"n_sequences": 10000},
                     "train": {**_TEMPORAL_DESK["train"], "iterations": 10000}},
    "temporal-bayes": {**_TEMPORAL_DESK, "data": {"n_sequences": 10000},
                       "train": {**_TEMPORAL_DESK["train"], "iterations": 10000},
                       "model": {**_TEMPORAL_DESK["model"], "particles": 5}},
    "temporal-ml": {**_TEMPORAL_DESK, "data": {"n_sequences": 10000},
                    "train": {**_TEMPORAL_DESK["train"], "iterations": 10000}},
    "meta-continual": {
        "train": {"T": 5, "batch_size": 100, "lr_gen": 0.2, "lr_disc": 0.02, "reward_baseline": "mean",
                  "decode": "rate"},
        "model": {"hidden": 100, "tau_w": 5, "basis": "exp", "tau_f": 2.0, "disc": "dense:128"},
        "meta": {"meta_steps": 500, "N": 10, "M": 5, "k_steps": 10, "mu_meta": 0.1,
                 "eval_updates": 1000, "eval_batch": 100},
        "eval": {"classifier_steps": 3000},
    },
    "gradcheck": {"eval": {"gradcheck_episodes": 100000}},
}


def preset_values(name: str, experiment: str) -> dict:
    table = DESK if name == "desk" else PAPER
    return copy.deepcopy(table.get(experiment, {}))
