"""Optimization drivers: standalone stages, reverse-order cascade
initialization, joint fine-tuning, and finite-difference gradient audits.

All training is deterministic full-batch gradient descent (plain or with
adaptive moment estimation).  The cascade initialization runs back to
front: the most powerful final stage is fitted on its own, then each
earlier stage is fitted against the frozen downstream sub-cascade, so an
upstream stage learns which instances are worth forwarding to the models
behind it.  A joint pass over all parameters finishes the job.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .cascade import (
    CascadeModel,
    CostSchedule,
    flat_gradient,
    gated_loss_and_upstream,
    objective,
    objective_value_and_gradient,
    product_loss_and_upstream,
    soft_cascade_objective,
    soft_value_and_gradient,
)
from .data import Dataset
from .models import StageModel, backward_batch, forward_batch

__all__ = [
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "train_standalone",
    "reverse_init",
    "joint_finetune",
    "gradient_check",
    "OBJECTIVE_KINDS",
]

log = logging.getLogger(__name__)

OBJECTIVE_KINDS = ("self_gated", "soft_cascade")

# Relative objective movement below this across a 10-epoch window marks the
# advisory `converged` flag in TrainReport.
_CONV_TOL = 1e-8
_CONV_WINDOW = 10


class TrainingDiverged(RuntimeError):
    """The objective became non-finite; `epoch` says when."""

    def __init__(self, epoch: int):
        super().__init__(f"objective became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    """Deterministic full-batch optimizer settings."""

    optimizer: str = "adaptive_moment"
    step_size: float = 1e-2
    moment_decays: tuple[float, float] = (0.9, 0.999)
    epsilon_hat: float = 1e-8
    epochs: int = 2000
    batch: str = "full"
    seed: int = 0
    log_every: int = 0
    pos_weight: float = 1.0

    def __post_init__(self):
        if self.optimizer not in ("adaptive_moment", "plain_gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch != "full":
            raise ValueError("only full-batch training is supported")
        b1, b2 = self.moment_decays
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError("moment decays must lie in [0, 1)")
        if not self.epsilon_hat > 0:
            raise ValueError("epsilon_hat must be positive")
        if not self.pos_weight > 0:
            raise ValueError("pos_weight must be positive")


@dataclass
class TrainReport:
    """One training run: per-epoch objective trace and summary facts."""

    objective_trace: np.ndarray
    final_objective: float
    wall_time_s: float
    converged: bool
    reverted: bool = False

    def trace_csv(self) -> str:
        lines = ["epoch,objective"]
        lines += [f"{i},{v!r}" for i, v in enumerate(self.objective_trace, start=1)]
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        flags = []
        if self.converged:
            flags.append("converged")
        if self.reverted:
            flags.append("reverted-to-initial")
        note = f" [{', '.join(flags)}]" if flags else ""
        return (
            f"epochs={len(self.objective_trace)} "
            f"final_objective={self.final_objective:.6f} "
            f"wall_time_s={self.wall_time_s:.3f}{note}"
        )


def _minimize(value_and_grad, theta: np.ndarray, cfg: TrainConfig, what: str = "train"):
    """Run the configured optimizer; returns (theta, trace of pre-step objectives)."""
    theta = theta.copy()
    trace = np.empty(cfg.epochs)
    b1, b2 = cfg.moment_decays
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for epoch in range(1, cfg.epochs + 1):
        value, grad = value_and_grad(theta)
        if not np.isfinite(value):
            raise TrainingDiverged(epoch)
        trace[epoch - 1] = value
        if cfg.optimizer == "adaptive_moment":
            m = b1 * m + (1.0 - b1) * grad
            v = b2 * v + (1.0 - b2) * grad * grad
            m_hat = m / (1.0 - b1**epoch)
            v_hat = v / (1.0 - b2**epoch)
            theta = theta - cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.epsilon_hat)
        else:
            theta = theta - cfg.step_size * grad
        if cfg.log_every > 0 and epoch % cfg.log_every == 0:
            log.info("%s epoch %d objective %.6f", what, epoch, value)
    return theta, trace


def _converged(trace: np.ndarray, final: float) -> bool:
    values = np.append(trace, final)
    if values.size <= _CONV_WINDOW:
        return False
    old = values[-1 - _CONV_WINDOW]
    return abs(values[-1] - old) <= _CONV_TOL * max(1.0, abs(old))


def _run(value_and_grad, value_only, theta0: np.ndarray, cfg: TrainConfig, what: str):
    start = time.perf_counter()
    theta, trace = _minimize(value_and_grad, theta0, cfg, what)
    final = value_only(theta)
    return theta, TrainReport(
        objective_trace=trace,
        final_objective=final,
        wall_time_s=time.perf_counter() - start,
        converged=_converged(trace, final),
    )


def train_standalone(model: StageModel, data: Dataset, cfg: TrainConfig):
    """Fit one stage on plain cross-entropy; returns (trained copy, report)."""
    if data.n == 0:
        raise ValueError("dataset is empty")
    solo = CascadeModel([model.copy()])
    schedule = CostSchedule((0.0,), 0.0)

    def value_and_grad(theta):
        solo.set_flat_params(theta)
        value, grads = objective_value_and_gradient(solo, data, schedule, cfg.pos_weight)
        return value, flat_gradient(grads)

    def value_only(theta):
        solo.set_flat_params(theta)
        return objective(solo, data, schedule, cfg.pos_weight)

    theta, report = _run(value_and_grad, value_only, solo.flat_params(), cfg, "standalone")
    solo.set_flat_params(theta)
    return solo.stages[0], report


def _train_stage_against_downstream(stage: StageModel, data: Dataset,
                                    downstream_probs: np.ndarray, kappa_sub,
                                    lam: float, alpha: float, cfg: TrainConfig,
                                    objective_kind: str):
    """Fit one stage with the later stages frozen (their outputs precomputed).

    The stage sees the sub-cascade objective over [itself, downstream...],
    with the cost schedule re-indexed to that sub-cascade, so it learns to
    gate exactly the downstream compute it controls.
    """
    stage = stage.copy()
    y = data.y.astype(float)
    weights = np.where(data.y == 1, cfg.pos_weight, 1.0)
    P = np.empty((data.n, 1 + downstream_probs.shape[1]))
    P[:, 1:] = downstream_probs

    def loss_and_upstream(P):
        if objective_kind == "self_gated":
            return gated_loss_and_upstream(P, y, weights, kappa_sub, lam, alpha)
        return product_loss_and_upstream(P, y, weights, kappa_sub, lam)

    def value_and_grad(theta):
        stage.set_flat_params(theta)
        p, cache = forward_batch(stage, data.X, want_cache=True)
        P[:, 0] = p
        value, upstream = loss_and_upstream(P)
        weight_grads, bias_grads = backward_batch(stage, cache, upstream[:, 0])
        return value, flat_gradient([(weight_grads, bias_grads)])

    def value_only(theta):
        stage.set_flat_params(theta)
        P[:, 0] = forward_batch(stage, data.X)
        return loss_and_upstream(P)[0]

    theta, report = _run(value_and_grad, value_only, stage.flat_params(), cfg, "stage")
    stage.set_flat_params(theta)
    return stage, report


def reverse_init(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
                 cfg: TrainConfig, objective_kind: str = "self_gated") -> CascadeModel:
    """Back-to-front initialization of a freshly built cascade.

    The final stage is trained standalone on the full data.  Each earlier
    stage is first fitted standalone as well, then trained to minimize the
    sub-cascade objective over itself plus the already-trained, frozen
    stages behind it.  The standalone warm start matters: optimizing the
    sharply gated sub-cascade objective from scratch has a strong local
    optimum at "accept everything and let the last stage decide", because
    lowering an instance's probability through the gate band transiently
    makes the combined output worse before the rejection locks in.
    Starting from a stage that already discriminates places easy rejections
    on the cheap side of the gate, and the sub-cascade phase then only has
    to choose which clusters are worth forwarding.  Returns a new cascade;
    the input is left untouched.
    """
    if objective_kind not in OBJECTIVE_KINDS:
        raise ValueError(f"unknown objective kind {objective_kind!r}")
    out = cascade.copy()
    L = out.n_stages
    last, _ = train_standalone(out.stages[-1], data, cfg)
    out.stages[-1] = last
    for l in range(L - 2, -1, -1):
        downstream = np.column_stack(
            [forward_batch(s, data.X) for s in out.stages[l + 1 :]]
        )
        warm, _ = train_standalone(out.stages[l], data, cfg)
        trained, _ = _train_stage_against_downstream(
            warm, data, downstream, schedule.kappa[l:], schedule.lam,
            out.alpha, cfg, objective_kind,
        )
        out.stages[l] = trained
    return out


def joint_finetune(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
                   cfg: TrainConfig, objective_kind: str = "self_gated"):
    """Optimize all stage parameters together on the full cascade objective.

    Adaptive steps are not monotone, so the result is kept only if it does
    not end worse than it started; otherwise the initial parameters come
    back with the report's `reverted` flag set.  Returns (cascade, report).
    """
    if objective_kind not in OBJECTIVE_KINDS:
        raise ValueError(f"unknown objective kind {objective_kind!r}")
    out = cascade.copy()
    if objective_kind == "self_gated":
        val_and_grad, val = objective_value_and_gradient, objective
    else:
        val_and_grad, val = soft_value_and_gradient, soft_cascade_objective

    def value_and_grad(theta):
        out.set_flat_params(theta)
        value, grads = val_and_grad(out, data, schedule, cfg.pos_weight)
        return value, flat_gradient(grads)

    def value_only(theta):
        out.set_flat_params(theta)
        return val(out, data, schedule, cfg.pos_weight)

    theta0 = out.flat_params()
    initial = value_only(theta0)
    theta, report = _run(value_and_grad, value_only, theta0, cfg, "joint")
    if report.final_objective > initial:
        log.warning(
            "joint fine-tune ended above its starting objective "
            "(%.6f > %.6f); keeping the initial parameters",
            report.final_objective, initial,
        )
        theta = theta0
        report.final_objective = initial
        report.reverted = True
    out.set_flat_params(theta)
    return out, report


def gradient_check(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
                   epsilon: float = 1e-6, objective_kind: str = "self_gated",
                   _corrupt: float = 0.0) -> float:
    """Max relative error between the analytic gradient and central differences.

    Every parameter is perturbed by +/- epsilon; the comparison uses
    |analytic - fd| / max(1, |analytic|).  Restricted to small datasets
    (the sweep is two objective evaluations per parameter).
    """
    if data.n > 32:
        raise ValueError("gradient_check is limited to 32 instances")
    if objective_kind not in OBJECTIVE_KINDS:
        raise ValueError(f"unknown objective kind {objective_kind!r}")
    work = cascade.copy()
    if objective_kind == "self_gated":
        val_and_grad, val = objective_value_and_gradient, objective
    else:
        val_and_grad, val = soft_value_and_gradient, soft_cascade_objective
    _, grads = val_and_grad(work, data, schedule)
    analytic = flat_gradient(grads) + _corrupt
    theta0 = work.flat_params()
    worst = 0.0
    for i in range(theta0.size):
        theta = theta0.copy()
        theta[i] = theta0[i] + epsilon
        work.set_flat_params(theta)
        f_plus = val(work, data, schedule)
        theta[i] = theta0[i] - epsilon
        work.set_flat_params(theta)
        f_minus = val(work, data, schedule)
        fd = (f_plus - f_minus) / (2.0 * epsilon)
        worst = max(worst, abs(analytic[i] - fd) / max(1.0, abs(analytic[i])))
    return worst
