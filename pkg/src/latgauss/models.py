"""Latent Gaussian models: single-stage and deep (stacked) variants.

A LatentGaussian draws z ~ N(0, I_d) and emits x = G(z) + beta*xi. A
DeepLatentGaussian is a Markov chain of stages (network, variance): each stage
applies its network and adds isotropic Gaussian noise of the given variance;
zero-variance stages are deterministic. Stage noise is drawn at counter
(stage = position in the chain, draw = sample index), so the same stream
replays identically and parallel samples never share noise.

Data dumps are CSV with a JSON sidecar recording the seed and counter
conventions, so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .nets import Network
from .rng import NoiseStream, ZeroStream  # noqa: F401  (re-exported)


@dataclass
class LatentGaussian:
    """Generator network plus observation noise scale beta > 0."""

    generator: Network
    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        g = self.generator
        if g.input_dim != g.output_dim:
            raise DimensionError(
                f"generator must map d to d, got {g.input_dim} -> {g.output_dim}"
            )
        if not g.smooth:
            raise ValueError("generator must use smooth activations only")

    @property
    def dim(self) -> int:
        return self.generator.input_dim


def sample_x(model: LatentGaussian, stream, index: int = 0):
    """One (z, x) pair; sample `index` uses draws (2*index, 2*index + 1) at stage 0."""
    d = model.dim
    z = stream.normal(0, 2 * index, d)
    xi = stream.normal(0, 2 * index + 1, d)
    return z, model.generator.eval(z) + model.beta * xi


def sample_x_batch(model: LatentGaussian, stream, count: int):
    """(Z, X) arrays of shape (count, d); row i equals sample_x(model, stream, i)."""
    d = model.dim
    draws = np.arange(count, dtype=np.uint64)
    Z = stream.normal_matrix(0, 2 * draws, d)
    Xi = stream.normal_matrix(0, 2 * draws + 1, d)
    return Z, model.generator.eval_batch(Z) + model.beta * Xi


@dataclass
class DeepLatentGaussian:
    """Stages of (network, variance). Consecutive stage dimensions must chain."""

    stages: list  # of (Network, float)

    def __post_init__(self):
        if not self.stages:
            raise DimensionError("a deep latent Gaussian needs at least one stage")
        norm = []
        for net, var in self.stages:
            var = float(var)
            if var < 0:
                raise ValueError(f"stage variance must be nonnegative, got {var}")
            norm.append((net, var))
        self.stages = norm
        prev = self.stages[0][0].input_dim
        for i, (net, _) in enumerate(self.stages):
            if net.input_dim != prev:
                raise DimensionError(
                    f"stage {i} expects input dim {net.input_dim}, previous emits {prev}"
                )
            prev = net.output_dim

    @property
    def input_dim(self) -> int:
        return self.stages[0][0].input_dim

    @property
    def output_dim(self) -> int:
        return self.stages[-1][0].output_dim

    def size(self) -> int:
        return sum(net.size() for net, _ in self.stages)


def sample_dlg(model: DeepLatentGaussian, inp: np.ndarray, stream, draw: int = 0) -> np.ndarray:
    """Run the stage chain on `inp`; stage s noise sits at counter (s, draw)."""
    state = np.asarray(inp, dtype=np.float64)
    if state.shape != (model.input_dim,):
        raise DimensionError(f"expected input of shape ({model.input_dim},)")
    for s, (net, var) in enumerate(model.stages):
        state = net.eval(state)
        if var > 0.0:
            state = state + np.sqrt(var) * stream.normal(s, draw, len(state))
    return state


def sample_dlg_batch(
    model: DeepLatentGaussian, inputs: np.ndarray, stream, draws=None
) -> np.ndarray:
    """Batched sample_dlg; row i uses draw index draws[i] (default i)."""
    states = np.asarray(inputs, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != model.input_dim:
        raise DimensionError(f"expected inputs of shape (n, {model.input_dim})")
    if draws is None:
        draws = np.arange(len(states), dtype=np.uint64)
    for s, (net, var) in enumerate(model.stages):
        states = net.eval_batch(states)
        if var > 0.0:
            states = states + np.sqrt(var) * stream.normal_matrix(s, draws, states.shape[1])
    return states


# -- tail bound experiment -----------------------------------------------------


def whp_norm_fraction(model: LatentGaussian, M: float, count: int, stream) -> dict:
    """Fraction of samples with ||x|| <= 12*(M+beta)*sqrt(d).

    The bound holds with probability at least 1 - 2*exp(-4d) for any generator
    with upper Lipschitz constant M.
    """
    _, X = sample_x_batch(model, stream, count)
    d = model.dim
    threshold = 12.0 * (M + model.beta) * np.sqrt(d)
    frac = float(np.mean(np.linalg.norm(X, axis=1) <= threshold))
    return {
        "threshold": threshold,
        "fraction_within": frac,
        "lower_bound": 1.0 - 2.0 * np.exp(-4.0 * d),
        "count": count,
    }


# -- artifact IO ----------------------------------------------------------------


def write_samples_csv(path, samples: np.ndarray, prefix: str = "z", sidecar: dict | None = None):
    """CSV with one row per sample plus a .json sidecar describing provenance."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{prefix}{j}" for j in range(samples.shape[1])])
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])
    meta = {"count": int(samples.shape[0]), "dim": int(samples.shape[1])}
    if sidecar:
        meta.update(sidecar)
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def read_samples_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
