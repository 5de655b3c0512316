"""Minimal feed-forward policy runtime for replaying trained controllers.

Weights live in a JSON file with explicit shapes so any trainer can
export them: {obs_dim, act_dim, activation, layers: [{rows, cols, w, b}],
obs_mean, obs_std}.  `w` is row-major with shape (rows, cols) mapping a
cols-vector to a rows-vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class PolicyWeights:
    obs_dim: int
    act_dim: int
    layers: list                      # [(W (out,in), b (out,)), ...]
    activation: str = "tanh"
    obs_mean: np.ndarray = None
    obs_std: np.ndarray = None

    def __post_init__(self):
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        self.layers = [
            (np.asarray(w, dtype=float), np.asarray(b, dtype=float))
            for w, b in self.layers
        ]
        if not self.layers:
            raise ValueError("need at least one layer")
        prev = self.obs_dim
        for idx, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {idx} shape mismatch")
            if w.shape[1] != prev:
                raise ValueError(
                    f"layer {idx} expects input {w.shape[1]}, chain gives {prev}"
                )
            prev = w.shape[0]
        if prev != self.act_dim:
            raise ValueError(f"last layer outputs {prev}, declared act_dim {self.act_dim}")
        if self.obs_mean is not None:
            self.obs_mean = np.asarray(self.obs_mean, dtype=float)
            self.obs_std = np.asarray(self.obs_std, dtype=float)
            if self.obs_mean.shape != (self.obs_dim,) or self.obs_std.shape != (self.obs_dim,):
                raise ValueError("obs normalization shape mismatch")
            if np.any(self.obs_std <= 0):
                raise ValueError("obs_std must be positive")


def mlp_forward(weights: PolicyWeights, obs: np.ndarray) -> np.ndarray:
    """Normalized observation through the affine/tanh stack, clipped to [-1, 1]."""
    x = np.asarray(obs, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != weights.obs_dim:
        raise ValueError(f"obs dim {x.shape[-1]} != {weights.obs_dim}")
    if weights.obs_mean is not None:
        x = (x - weights.obs_mean) / weights.obs_std
    last = len(weights.layers) - 1
    for idx, (w, b) in enumerate(weights.layers):
        x = x @ w.T + b
        if idx != last:
            x = np.tanh(x)
    x = np.clip(x, -1.0, 1.0)
    return x[0] if single else x


def save_weights(weights: PolicyWeights, path) -> None:
    doc = {
        "obs_dim": weights.obs_dim,
        "act_dim": weights.act_dim,
        "activation": weights.activation,
        "layers": [
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "w": w.flatten().tolist(),
                "b": b.tolist(),
            }
            for w, b in weights.layers
        ],
    }
    if weights.obs_mean is not None:
        doc["obs_mean"] = weights.obs_mean.tolist()
        doc["obs_std"] = weights.obs_std.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_weights(path) -> PolicyWeights:
    with open(path) as fh:
        doc = json.load(fh)
    layers = [
        (
            np.asarray(layer["w"], dtype=float).reshape(layer["rows"], layer["cols"]),
            np.asarray(layer["b"], dtype=float),
        )
        for layer in doc["layers"]
    ]
    return PolicyWeights(
        obs_dim=doc["obs_dim"],
        act_dim=doc["act_dim"],
        layers=layers,
        activation=doc.get("activation", "tanh"),
        obs_mean=np.asarray(doc["obs_mean"], dtype=float) if "obs_mean" in doc else None,
        obs_std=np.asarray(doc["obs_std"], dtype=float) if "obs_std" in doc else None,
    )
