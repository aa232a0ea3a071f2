"""Deployment-side cascade execution.

Training optimizes a differentiable surrogate; at run time the cascade is a
hard early-exit pipeline: evaluate stages in order, stop and emit 0 at the
first stage whose probability fails the threshold, emit 1 only if every
stage accepts.  This module provides that execution rule, the FLOP cost
model used to build default cost schedules, dataset-level evaluation with
per-instance cost accounting, and a wall-clock latency benchmark.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cascade import CascadeModel, CostSchedule, stage_probs
from .data import Dataset
from .models import StageSpec, forward

__all__ = [
    "HardResult",
    "EvalReport",
    "EVAL_CSV_HEADER",
    "hard_classify",
    "stage_flops",
    "default_schedule",
    "evaluate",
    "bench",
]

# Cost of one scalar logistic unit (exp, add, divide, plus slack), on top of
# the 2d+1 multiply-adds of the affine map feeding it.
LOGISTIC_FLOPS = 5

EVAL_CSV_HEADER = "arch,lambda,accuracy,tpr,fpr,mean_cost,mean_stages,mean_time_ns"


@dataclass(frozen=True)
class HardResult:
    """Early-exit outcome for one instance.

    `per_stage_probs` holds only the probabilities that were actually
    computed; its length equals `stages_executed`.
    """

    label: int
    stages_executed: int
    per_stage_probs: tuple[float, ...]


@dataclass
class EvalReport:
    """Hard-decision quality and cost statistics over one dataset."""

    accuracy: float
    tpr: float
    fpr: float
    tp: int
    fp: int
    tn: int
    fn: int
    mean_cost: float
    mean_stages: float
    mean_time_s: float | None = None

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def csv_row(self, arch: str, lam: float) -> str:
        time_ns = "" if self.mean_time_s is None else repr(self.mean_time_s * 1e9)
        return (
            f"{arch},{lam!r},{self.accuracy!r},{self.tpr!r},{self.fpr!r},"
            f"{self.mean_cost!r},{self.mean_stages!r},{time_ns}"
        )


def hard_classify(cascade: CascadeModel, x: np.ndarray, threshold: float = 0.5) -> HardResult:
    """Run the cascade on one instance with early exit.

    Stages are evaluated in order; the first stage with p <= threshold
    rejects (a tie counts as rejection: it saves the downstream compute)
    and later stages never run.  Label 1 means every stage accepted.
    """
    probs = []
    for stage in cascade.stages:
        p = forward(stage, x)
        probs.append(p)
        if p <= threshold:
            return HardResult(0, len(probs), tuple(probs))
    return HardResult(1, len(probs), tuple(probs))


def stage_flops(spec: StageSpec) -> int:
    """Floating-point operation count for one stage evaluation.

    An affine map from d inputs to m outputs costs m*(2d+1); every logistic
    unit adds LOGISTIC_FLOPS.  The output unit is included, so a linear
    stage on 5 features costs 1*(2*5+1) + 5 = 16.
    """
    sizes = spec.layer_sizes
    total = 0
    for d, m in zip(sizes[:-1], sizes[1:]):
        total += m * (2 * d + 1) + LOGISTIC_FLOPS * m
    return total


def default_schedule(cascade: CascadeModel, lam: float) -> CostSchedule:
    """FLOP-proportional costs normalized so the first stage costs 1.

    The normalization keeps lambda comparable across architectures: it
    always trades accuracy against multiples of the cheapest stage.
    """
    flops = [stage_flops(stage.spec) for stage in cascade.stages]
    return CostSchedule(tuple(f / flops[0] for f in flops), lam)


def evaluate(cascade: CascadeModel, data: Dataset, schedule: CostSchedule,
             threshold: float = 0.5) -> EvalReport:
    """Hard-classify every instance and summarize quality and cost.

    The per-instance cost is the sum of kappa over the stages that actually
    ran.  Stage probabilities are computed in batch (identical decisions to
    instance-at-a-time execution, since each stage reads only the raw
    features); the early exit here is bookkeeping, not saved compute.
    """
    if data.n == 0:
        raise ValueError("dataset is empty")
    if len(schedule.kappa) != cascade.n_stages:
        raise ValueError(
            f"schedule has {len(schedule.kappa)} costs for {cascade.n_stages} stages"
        )
    P = stage_probs(cascade, data.X)
    accept = P > threshold
    reached = np.ones_like(accept)
    reached[:, 1:] = np.cumprod(accept[:, :-1], axis=1)
    labels = (reached[:, -1] & accept[:, -1]).astype(int)
    stages_executed = reached.sum(axis=1)
    kappa = np.asarray(schedule.kappa)
    costs = reached @ kappa

    y = data.y
    tp = int(np.sum((labels == 1) & (y == 1)))
    fp = int(np.sum((labels == 1) & (y == 0)))
    tn = int(np.sum((labels == 0) & (y == 0)))
    fn = int(np.sum((labels == 0) & (y == 1)))
    pos, neg = tp + fn, fp + tn
    return EvalReport(
        accuracy=(tp + tn) / data.n,
        tpr=tp / pos if pos else float("nan"),
        fpr=fp / neg if neg else float("nan"),
        tp=tp, fp=fp, tn=tn, fn=fn,
        mean_cost=float(costs.mean()),
        mean_stages=float(stages_executed.mean()),
    )


def bench(cascade: CascadeModel, data: Dataset, evaluations: int = 10000,
          threshold: float = 0.5) -> float:
    """Mean wall-clock seconds per hard classification.

    Cycles through the dataset for `evaluations` single-instance calls,
    preceded by a warm-up of at least 100 calls.  The results are folded
    into a running sum so the work cannot be skipped.  Run it on an
    otherwise idle machine; it measures one-at-a-time latency, not batch
    throughput.
    """
    if data.n == 0:
        raise ValueError("dataset is empty")
    if evaluations < 1:
        raise ValueError("evaluations must be at least 1")
    rows = [np.ascontiguousarray(data.X[i]) for i in range(data.n)]
    sink = 0
    for i in range(max(100, min(evaluations, 1000))):
        sink += hard_classify(cascade, rows[i % data.n], threshold).label
    start = time.perf_counter()
    for i in range(evaluations):
        sink += hard_classify(cascade, rows[i % data.n], threshold).label
    elapsed = time.perf_counter() - start
    if sink < 0:  # keep `sink` (and the calls feeding it) observable
        raise AssertionError("label sum cannot be negative")
    return elapsed / evaluations
