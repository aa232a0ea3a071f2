"""Combination rules and training objectives for shallow detection cascades.

Two ways to fuse the per-stage probabilities of an L-stage cascade:

* the self-gated mixture: sharp sigmoids of the stage outputs build mixture
  weights that put nearly all mass either on the first stage voting to
  reject (p < 0.5) or on the final stage, mimicking the deployed
  early-exit rule while staying differentiable;
* the product (noisy-AND) rule used by the soft-cascade baseline.

Both come with a cost-regularized cross-entropy objective and exact
parameter gradients.  Stage probabilities always enter the gates and cost
terms as positive-class probabilities.  All rule-level functions are
vectorized: the stage axis is last, leading axes broadcast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset
from .models import (
    StageModel,
    StageSpec,
    backward_batch,
    forward_batch,
    init_params,
    stage_from_dict,
    stage_to_dict,
)
from .util import substream

__all__ = [
    "CascadeModel",
    "CostSchedule",
    "gate",
    "mixture_weights",
    "cascade_prob",
    "product_prob",
    "nll_instance",
    "cost_penalty",
    "soft_cost_penalty",
    "objective",
    "objective_gradient",
    "soft_cascade_objective",
    "soft_cascade_gradient",
    "stage_probs",
    "build_stage_specs",
    "build_cascade",
    "save_cascade",
    "load_cascade",
    "ARCHITECTURES",
]

# Probabilities are pulled this far inside (0, 1) before any log; the width
# sits well below every gradient-check tolerance so the clamp is invisible
# except at fully saturated outputs, where the gradient is zeroed to match
# the flat clamped function.
P_EPS = 1e-12

DEFAULT_ALPHA = 100.0


@dataclass
class CascadeModel:
    """Ordered stages plus the gating sharpness used by the mixture rule."""

    stages: list[StageModel]
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if len(self.stages) < 1:
            raise ValueError("a cascade needs at least one stage")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def copy(self) -> "CascadeModel":
        return CascadeModel([s.copy() for s in self.stages], self.alpha)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([s.flat_params() for s in self.stages])

    def set_flat_params(self, theta: np.ndarray) -> None:
        offset = 0
        for stage in self.stages:
            n = stage.n_params
            stage.set_flat_params(theta[offset : offset + n])
            offset += n
        if offset != theta.size:
            raise ValueError(f"parameter vector length {theta.size}, expected {offset}")


@dataclass(frozen=True)
class CostSchedule:
    """Per-stage execution costs and the accuracy/cost tradeoff weight."""

    kappa: tuple[float, ...]
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        if any(k < 0 for k in self.kappa):
            raise ValueError("stage costs must be nonnegative")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


def gate(p, alpha: float):
    """Sharp accept-gate g(p) = sigmoid(alpha * (p - 0.5)).

    With large alpha this approximates the hard 0.5-threshold decision: for
    p comfortably below 0.5 the gate is ~0 (reject, stop here), above it ~1
    (pass downstream).  Overflow-safe for any alpha.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    p = np.asarray(p, dtype=float)
    out = expit(alpha * (p - 0.5))
    return float(out) if out.ndim == 0 else out


def mixture_weights(p, alpha: float) -> np.ndarray:
    """Self-gated mixture weights over the stage outputs.

    theta_l = (1 - g(p_l)) * prod_{k<l} g(p_k) for l < L, and the last stage
    absorbs the remaining mass theta_L = prod_{k<L} g(p_k); the weights sum
    to one by telescoping.  p has the stage axis last; a single cascade is a
    1-D vector of length L.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    g = gate(p, alpha)
    # expit of the negated argument is the complement 1 - g without the
    # catastrophic underflow of the float subtraction at saturated gates.
    g_comp = expit(-alpha * (p - 0.5))
    g_prev = np.ones_like(g)
    g_prev[..., 1:] = np.cumprod(g[..., :-1], axis=-1)
    theta = g_comp * g_prev
    theta[..., -1] = g_prev[..., -1]
    return theta


def cascade_prob(p, alpha: float):
    """Cascade output probability: mixture of stage outputs under the gates.

    Approximately equals the output of the first stage with p < 0.5, or the
    final stage's output when every earlier stage accepts.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.sum(mixture_weights(p, alpha) * p, axis=-1)
    return float(out) if out.ndim == 0 else out


def product_prob(p):
    """Noisy-AND combination: the product of all stage probabilities."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.prod(p, axis=-1)
    return float(out) if out.ndim == 0 else out


def nll_instance(y, p_star):
    """Cross-entropy of a predicted positive-class probability, clamped before log."""
    y = np.asarray(y, dtype=float)
    q = np.clip(np.asarray(p_star, dtype=float), P_EPS, 1.0 - P_EPS)
    out = -(y * np.log(q) + (1.0 - y) * np.log1p(-q))
    return float(out) if out.ndim == 0 else out


def cost_penalty(p, schedule: CostSchedule, alpha: float):
    """Differentiable per-instance execution cost under the gated semantics.

    kappa_1 is always paid; stage l's cost is weighted by the product of the
    accept-gates of every earlier stage, i.e. by (approximately) whether the
    instance would actually reach stage l.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    L = p.shape[-1]
    if len(schedule.kappa) != L:
        raise ValueError(f"{len(schedule.kappa)} costs for {L} stages")
    g_running = np.ones(p.shape[:-1])
    total = np.full(p.shape[:-1], schedule.kappa[0])
    for l in range(1, L):
        g_running = g_running * gate(p[..., l - 1], alpha)
        total = total + schedule.kappa[l] * g_running
    return float(total) if total.ndim == 0 else total


def soft_cost_penalty(p, schedule: CostSchedule):
    """Expected-stage-cost with raw probabilities in place of the gates.

    The soft-cascade baseline's penalty: stage l costs kappa_l weighted by
    the product of the raw upstream probabilities.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    L = p.shape[-1]
    if len(schedule.kappa) != L:
        raise ValueError(f"{len(schedule.kappa)} costs for {L} stages")
    running = np.ones(p.shape[:-1])
    total = np.full(p.shape[:-1], schedule.kappa[0])
    for l in range(1, L):
        running = running * p[..., l - 1]
        total = total + schedule.kappa[l] * running
    return float(total) if total.ndim == 0 else total


# ---------------------------------------------------------------------------
# Dataset-level objectives and exact gradients


def stage_probs(cascade: CascadeModel, X: np.ndarray, want_caches: bool = False):
    """All stage probabilities for a batch: (n, L) matrix, plus caches on request."""
    cols, caches = [], []
    for stage in cascade.stages:
        if want_caches:
            p, cache = forward_batch(stage, X, want_cache=True)
            caches.append(cache)
        else:
            p = forward_batch(stage, X)
        cols.append(p)
    P = np.column_stack(cols)
    return (P, caches) if want_caches else P


def _instance_weights(y: np.ndarray, pos_weight: float) -> np.ndarray:
    if pos_weight == 1.0:
        return np.ones_like(y, dtype=float)
    return np.where(y == 1, float(pos_weight), 1.0)


def _nll_and_grad(y, p_combined, weights):
    """Weighted cross-entropy terms and d/dp_combined, zeroed where clamped."""
    q = np.clip(p_combined, P_EPS, 1.0 - P_EPS)
    nll = -weights * (y * np.log(q) + (1.0 - y) * np.log1p(-q))
    inside = (p_combined > P_EPS) & (p_combined < 1.0 - P_EPS)
    dnll = np.where(inside, weights * (q - y) / (q * (1.0 - q)), 0.0)
    return nll, dnll


def _mixture_pieces(P: np.ndarray, alpha: float, kappa):
    """Shared intermediates for the gated objective and its gradient."""
    g = expit(alpha * (P - 0.5))
    g_comp = expit(-alpha * (P - 0.5))  # 1 - g without underflow at saturation
    g_prev = np.ones_like(g)
    g_prev[:, 1:] = np.cumprod(g[:, :-1], axis=1)
    theta = g_comp * g_prev
    theta[:, -1] = g_prev[:, -1]
    p_star = np.sum(theta * P, axis=1)
    cost = np.full(P.shape[0], kappa[0], dtype=float)
    cost_terms = np.zeros_like(P)  # kappa_l * prod_{k<l} g_k, per stage l >= 1
    for l in range(1, P.shape[1]):
        cost_terms[:, l] = kappa[l] * g_prev[:, l]
        cost[:] += cost_terms[:, l]
    return g, g_comp, g_prev, theta, p_star, cost, cost_terms


def _suffix_sum_after(A: np.ndarray) -> np.ndarray:
    """S[:, m] = sum of A[:, m+1:] along the stage axis."""
    out = np.zeros_like(A)
    if A.shape[1] > 1:
        out[:, :-1] = np.cumsum(A[:, ::-1], axis=1)[:, ::-1][:, 1:]
    return out


def gated_loss_and_upstream(P: np.ndarray, y: np.ndarray, weights: np.ndarray,
                            kappa, lam: float, alpha: float):
    """Objective terms and dL/dp for a matrix of stage probabilities.

    P is (n, L) with every stage's output already computed; returns the
    summed objective value and the (n, L) matrix of exact derivatives of the
    objective w.r.t. each stage probability.  This is the piece the trainers
    share: full joint training backpropagates every column, while
    frozen-downstream stage training uses only the first.
    """
    g, g_comp, g_prev, theta, p_star, cost, cost_terms = _mixture_pieces(P, alpha, kappa)
    nll, dnll = _nll_and_grad(y, p_star, weights)
    value = float(np.sum(nll) + lam * np.sum(cost))

    # d p_star / d p_m: the direct expert term, the gate factor inside every
    # later stage's weight, and (for non-final stages) the self-gate of the
    # stage's own weight.  dg/dp = alpha * g * (1 - g); the division-free
    # form alpha * (1 - g_m) * theta_l accounts for the single g_m factor
    # each later weight carries.
    theta_p_suffix = _suffix_sum_after(theta * P)
    dpstar = theta + alpha * g_comp * theta_p_suffix
    dpstar[:, :-1] -= alpha * g[:, :-1] * g_comp[:, :-1] * g_prev[:, :-1] * P[:, :-1]
    # d cost / d p_m mirrors the same structure over the cost terms.
    dcost = alpha * g_comp * _suffix_sum_after(cost_terms)

    upstream = dnll[:, None] * dpstar + lam * dcost
    return value, upstream


def _objective_core(cascade, data: Dataset, schedule, pos_weight, want_grad):
    if data.n == 0:
        raise ValueError("dataset is empty")
    L = cascade.n_stages
    if len(schedule.kappa) != L:
        raise ValueError(f"{len(schedule.kappa)} costs for {L} stages")
    P, caches = stage_probs(cascade, data.X, want_caches=True)
    y = data.y.astype(float)
    w = _instance_weights(data.y, pos_weight)
    value, upstream = gated_loss_and_upstream(
        P, y, w, schedule.kappa, schedule.lam, cascade.alpha
    )
    if not want_grad:
        return value, None
    grads = [
        backward_batch(stage, cache, upstream[:, m])
        for m, (stage, cache) in enumerate(zip(cascade.stages, caches))
    ]
    return value, grads


def objective(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
              pos_weight: float = 1.0) -> float:
    """Summed training objective: cross-entropy of the gated mixture plus
    lam times the per-instance gated cost penalty."""
    value, _ = _objective_core(cascade, data, schedule, pos_weight, want_grad=False)
    return value


def objective_gradient(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
                       pos_weight: float = 1.0):
    """Exact gradient of `objective` w.r.t. every stage parameter.

    Returns one (weight_grads, bias_grads) pair per stage, shape-congruent
    with the stage's parameters.
    """
    _, grads = _objective_core(cascade, data, schedule, pos_weight, want_grad=True)
    return grads


def objective_value_and_gradient(cascade, data, schedule, pos_weight: float = 1.0):
    return _objective_core(cascade, data, schedule, pos_weight, want_grad=True)


def product_loss_and_upstream(P: np.ndarray, y: np.ndarray, weights: np.ndarray,
                              kappa, lam: float):
    """Soft-cascade counterpart of gated_loss_and_upstream (product rule)."""
    L = P.shape[1]
    prefix = np.cumprod(P, axis=1)  # prefix[:, l] = prod_{k<=l} p_k
    p_prod = prefix[:, -1]
    cost = np.full(P.shape[0], kappa[0], dtype=float)
    for l in range(1, L):
        cost[:] += kappa[l] * prefix[:, l - 1]
    nll, dnll = _nll_and_grad(y, p_prod, weights)
    value = float(np.sum(nll) + lam * np.sum(cost))

    # d p_prod / d p_m = prod_{l != m} p_l via prefix/suffix products
    # (division-free: stage outputs may be arbitrarily close to zero).
    suffix = np.cumprod(P[:, ::-1], axis=1)[:, ::-1]
    dprod = np.ones_like(P)
    dprod[:, 1:] *= prefix[:, :-1]
    dprod[:, :-1] *= suffix[:, 1:]

    dcost = np.zeros_like(P)
    ones = np.ones(P.shape[0])
    for m in range(L - 1):
        running = prefix[:, m - 1] if m > 0 else ones
        for l in range(m + 1, L):
            dcost[:, m] += kappa[l] * running
            running = running * P[:, l]

    upstream = dnll[:, None] * dprod + lam * dcost
    return value, upstream


def _soft_core(cascade, data: Dataset, schedule, pos_weight, want_grad):
    if data.n == 0:
        raise ValueError("dataset is empty")
    L = cascade.n_stages
    if len(schedule.kappa) != L:
        raise ValueError(f"{len(schedule.kappa)} costs for {L} stages")
    P, caches = stage_probs(cascade, data.X, want_caches=True)
    y = data.y.astype(float)
    w = _instance_weights(data.y, pos_weight)
    value, upstream = product_loss_and_upstream(P, y, w, schedule.kappa, schedule.lam)
    if not want_grad:
        return value, None
    grads = [
        backward_batch(stage, cache, upstream[:, m])
        for m, (stage, cache) in enumerate(zip(cascade.stages, caches))
    ]
    return value, grads


def soft_cascade_objective(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
                           pos_weight: float = 1.0) -> float:
    """Baseline objective: cross-entropy of the product rule plus lam times
    the raw-probability expected stage cost."""
    value, _ = _soft_core(cascade, data, schedule, pos_weight, want_grad=False)
    return value


def soft_cascade_gradient(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
                          pos_weight: float = 1.0):
    """Exact gradient of `soft_cascade_objective`, same layout as objective_gradient."""
    _, grads = _soft_core(cascade, data, schedule, pos_weight, want_grad=True)
    return grads


def soft_value_and_gradient(cascade, data, schedule, pos_weight: float = 1.0):
    return _soft_core(cascade, data, schedule, pos_weight, want_grad=True)


def flat_gradient(grads) -> np.ndarray:
    """Flatten a per-stage gradient structure into one vector (stage order)."""
    parts = []
    for weight_grads, bias_grads in grads:
        for W, b in zip(weight_grads, bias_grads):
            parts.append(W.ravel())
            parts.append(b)
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Named architectures

ARCHITECTURES = ("single-1lnn", "casc2", "casc3", "casc2-allfeat", "casc3-allfeat")

DEFAULT_CHEAP_WIDTH = 5


def build_stage_specs(arch: str, dim: int, cheap_view: tuple[int, ...] | None = None):
    """Stage specs for a named architecture over a d-dimensional feature space.

    The cheap first-stage view defaults to the first five columns (or all of
    them when d < 5); the `-allfeat` variants give the first stage the full
    feature vector instead.
    """
    all_view = tuple(range(dim))
    if cheap_view is None:
        cheap_view = tuple(range(min(DEFAULT_CHEAP_WIDTH, dim)))
    else:
        cheap_view = tuple(int(i) for i in cheap_view)
    base = arch.removesuffix("-allfeat")
    first_view = all_view if arch.endswith("-allfeat") else cheap_view
    if base == "single-1lnn":
        return [StageSpec("one_hidden", (10,), all_view)]
    if base == "casc2":
        return [
            StageSpec("linear", (), first_view),
            StageSpec("one_hidden", (10,), all_view),
        ]
    if base == "casc3":
        return [
            StageSpec("linear", (), first_view),
            StageSpec("one_hidden", (3,), all_view),
            StageSpec("two_hidden", (10, 20), all_view),
        ]
    raise ValueError(f"unknown architecture {arch!r}; known: {ARCHITECTURES}")


def build_cascade(arch: str, dim: int, seed: int, alpha: float = DEFAULT_ALPHA,
                  cheap_view: tuple[int, ...] | None = None) -> CascadeModel:
    """Freshly initialized cascade for a named architecture (deterministic per seed)."""
    specs = build_stage_specs(arch, dim, cheap_view)
    seeds = substream(seed, "models/cascade-init").integers(0, 2**31, len(specs))
    stages = [init_params(spec, int(s)) for spec, s in zip(specs, seeds)]
    return CascadeModel(stages, alpha)


# ---------------------------------------------------------------------------
# Serialization: JSON with full-precision floats (Python reprs round-trip
# float64 exactly), stable key order for byte-identical reruns.


def cascade_to_dict(cascade: CascadeModel, norm_stats=None, meta: dict | None = None) -> dict:
    doc = {
        "format": "cascade-model-v1",
        "alpha": float(cascade.alpha),
        "stages": [stage_to_dict(s) for s in cascade.stages],
    }
    if norm_stats is not None:
        mean, std = norm_stats
        doc["norm"] = {"mean": np.asarray(mean).tolist(), "std": np.asarray(std).tolist()}
    if meta:
        doc["meta"] = meta
    return doc


def cascade_from_dict(doc: dict):
    if doc.get("format") != "cascade-model-v1":
        raise ValueError(f"not a cascade model document: format={doc.get('format')!r}")
    cascade = CascadeModel([stage_from_dict(s) for s in doc["stages"]], float(doc["alpha"]))
    norm = doc.get("norm")
    stats = (np.array(norm["mean"]), np.array(norm["std"])) if norm else None
    return cascade, stats, doc.get("meta", {})


def save_cascade(cascade: CascadeModel, path, norm_stats=None, meta: dict | None = None) -> None:
    doc = cascade_to_dict(cascade, norm_stats=norm_stats, meta=meta)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_cascade(path):
    """Read a saved cascade; returns (cascade, norm_stats_or_None, meta dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        return cascade_from_dict(json.load(fh))
