"""Stage classifiers: logistic regression and small logistic-activation MLPs.

Every stage maps its view of the feature vector to a single probability
through zero, one, or two hidden layers of logistic units and a logistic
output unit.  Forward passes cache activations so the exact parameter
gradient can be pulled back from any upstream dL/dp.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .util import substream

__all__ = [
    "StageSpec",
    "StageModel",
    "init_params",
    "forward",
    "forward_batch",
    "backward",
    "backward_batch",
    "stage_to_dict",
    "stage_from_dict",
]

_KINDS = {"linear": 0, "one_hidden": 1, "two_hidden": 2}


@dataclass(frozen=True)
class StageSpec:
    """Architecture of one stage: kind, hidden widths, and its feature view.

    `view` lists the dataset columns this stage reads, in order.  The number
    of hidden sizes must match the kind (0, 1, or 2).
    """

    kind: str
    hidden_sizes: tuple[int, ...]
    view: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(k) for k in self.hidden_sizes))
        object.__setattr__(self, "view", tuple(int(i) for i in self.view))
        if self.kind not in _KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        if len(self.hidden_sizes) != _KINDS[self.kind]:
            raise ValueError(
                f"{self.kind} stage requires {_KINDS[self.kind]} hidden sizes, "
                f"got {self.hidden_sizes}"
            )
        if any(k <= 0 for k in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if not self.view:
            raise ValueError("feature view must be nonempty")
        if len(set(self.view)) != len(self.view) or min(self.view) < 0:
            raise ValueError("view indices must be unique and nonnegative")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (len(self.view), *self.hidden_sizes, 1)


@dataclass
class StageModel:
    """Parameters of one stage: per-layer weight matrices (out x in) and biases."""

    spec: StageSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match the spec")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ValueError(
                    f"layer {i}: shapes {W.shape}/{b.shape} do not chain "
                    f"{sizes[i]} -> {sizes[i + 1]}"
                )
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "StageModel":
        return StageModel(
            self.spec,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
        )

    def flat_params(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)]
        )

    def set_flat_params(self, theta: np.ndarray) -> None:
        offset = 0
        for W, b in zip(self.weights, self.biases):
            W[...] = theta[offset : offset + W.size].reshape(W.shape)
            offset += W.size
            b[...] = theta[offset : offset + b.size]
            offset += b.size
        if offset != theta.size:
            raise ValueError(f"parameter vector length {theta.size}, expected {offset}")


def init_params(spec: StageSpec, seed: int) -> StageModel:
    """Build a stage with deterministic initial parameters.

    Linear stages start at exactly zero (output 0.5 everywhere).  Hidden
    layers get uniform weights in [-a, a] with a = sqrt(6 / (fan_in +
    fan_out)) and zero biases.
    """
    rng = substream(seed, "models/init")
    sizes = spec.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if spec.kind == "linear":
            W = np.zeros((fan_out, fan_in))
        else:
            a = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-a, a, size=(fan_out, fan_in))
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return StageModel(spec, weights, biases)


def forward_batch(model: StageModel, X: np.ndarray, want_cache: bool = False):
    """Stage probabilities for a batch of full feature vectors.

    X has shape (n, d) with d at least the largest view index + 1; the model
    slices out its own view.  Returns the (n,) probability vector, plus the
    per-layer activation list when want_cache is set (needed by backward).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    view = model.spec.view
    if X.shape[1] <= max(view):
        raise ValueError(f"input dim {X.shape[1]} too small for view {view}")
    if not np.isfinite(X).all():
        raise ValueError("non-finite input")
    act = X[:, view]
    cache = [act]
    for W, b in zip(model.weights, model.biases):
        act = expit(act @ W.T + b)
        cache.append(act)
    # Keep the contract p in (0, 1) even when the output unit saturates in
    # float64; the nudge is far below every tolerance used downstream.
    p = np.clip(cache[-1][:, 0], 1e-15, 1.0 - 1e-15)
    return (p, cache) if want_cache else p


def forward(model: StageModel, x: np.ndarray) -> float:
    """Probability p(y=1 | x) for a single feature vector, strictly inside (0, 1)."""
    return float(forward_batch(model, np.asarray(x, dtype=float)[None, :])[0])


def backward_batch(model, cache: list[np.ndarray], upstream: np.ndarray):
    """Exact parameter gradient of sum_n upstream[n] * p_n.

    `cache` is the activation list from forward_batch(want_cache=True);
    `upstream` holds dL/dp per instance.  Returns (weight_grads, bias_grads)
    shaped like the model's parameters.  Each logistic unit contributes its
    local derivative a * (1 - a).
    """
    upstream = np.asarray(upstream, dtype=float)
    out = cache[-1]
    delta = (upstream[:, None]) * out * (1.0 - out)
    weight_grads = [None] * len(model.weights)
    bias_grads = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        weight_grads[layer] = delta.T @ cache[layer]
        bias_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            prev = cache[layer]
            delta = (delta @ model.weights[layer]) * prev * (1.0 - prev)
    return weight_grads, bias_grads


def backward(model: StageModel, x: np.ndarray, upstream: float):
    """Single-instance convenience wrapper around backward_batch."""
    _, cache = forward_batch(model, np.asarray(x, dtype=float)[None, :], want_cache=True)
    return backward_batch(model, cache, np.array([float(upstream)]))


def stage_to_dict(model: StageModel) -> dict:
    """JSON-ready description: spec, view indices, row-major parameter arrays."""
    return {
        "kind": model.spec.kind,
        "hidden_sizes": list(model.spec.hidden_sizes),
        "view": list(model.spec.view),
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def stage_from_dict(doc: dict) -> StageModel:
    spec = StageSpec(doc["kind"], tuple(doc["hidden_sizes"]), tuple(doc["view"]))
    weights = [np.array(W, dtype=float) for W in doc["weights"]]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    return StageModel(spec, weights, biases)


def clone_stage(model: StageModel) -> StageModel:
    return copy.deepcopy(model)
