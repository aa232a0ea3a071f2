"""Regularization sweeps: train a cascade per (architecture, lambda, seed)
grid point, collect accuracy/cost tradeoff points, extract the Pareto
front, and pick the max-accuracy operating point.

Grid points are independent runs, so the sweep can fan out to a process
pool; results are merged back in grid order and the output is identical to
a sequential run (timings aside).
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cascade import ARCHITECTURES, CostSchedule, DEFAULT_ALPHA, build_cascade
from .data import Dataset
from .runtime import bench, default_schedule, evaluate
from .training import OBJECTIVE_KINDS, TrainConfig, joint_finetune, reverse_init

__all__ = [
    "DEFAULT_LAMBDA_GRID",
    "SweepConfig",
    "TradeoffPoint",
    "SweepFailure",
    "SweepResult",
    "run_sweep",
    "pareto_front",
    "select_best",
    "average_over_seeds",
    "sweep_csv",
    "summary_text",
    "SWEEP_CSV_HEADER",
]

log = logging.getLogger(__name__)

# 0 plus 12 log-spaced points from 1e-5 (cost term negligible) to 1e+1
# (cost term dominant for kappa_1-normalized schedules).
DEFAULT_LAMBDA_GRID = (0.0,) + tuple(np.logspace(-5.0, 1.0, 12))

SWEEP_CSV_HEADER = (
    "architecture,lambda,seed,accuracy,tpr,fpr,mean_cost,mean_stages,mean_time_ns"
)


@dataclass(frozen=True)
class SweepConfig:
    """Grid definition plus the shared training settings."""

    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    architectures: tuple[str, ...] = ("casc3",)
    seeds: tuple[int, ...] = (0,)
    train_cfg: TrainConfig = TrainConfig()
    kappa_mode: str = "flop_default"
    explicit_kappa: tuple[float, ...] | None = None
    objective_kind: str = "self_gated"
    alpha: float = DEFAULT_ALPHA
    bench_evaluations: int = 0  # 0 disables per-point latency timing

    def __post_init__(self):
        if not self.lambda_grid:
            raise ValueError("lambda grid is empty")
        if len(set(self.lambda_grid)) != len(self.lambda_grid):
            raise ValueError("lambda grid has duplicate values")
        if any(lam < 0 for lam in self.lambda_grid):
            raise ValueError("lambda values must be nonnegative")
        if not self.architectures:
            raise ValueError("architecture list is empty")
        for arch in self.architectures:
            if arch not in ARCHITECTURES:
                raise ValueError(f"unknown architecture {arch!r}")
        if not self.seeds:
            raise ValueError("seed list is empty")
        if self.kappa_mode not in ("flop_default", "explicit"):
            raise ValueError(f"unknown kappa mode {self.kappa_mode!r}")
        if self.kappa_mode == "explicit" and not self.explicit_kappa:
            raise ValueError("kappa_mode 'explicit' needs explicit_kappa")
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.objective_kind!r}")


@dataclass(frozen=True)
class TradeoffPoint:
    """One grid point's outcome on the test split.

    mean_cost is in kappa units (multiples of the first stage's cost), so
    cross-architecture comparisons must rescale by the stage-1 FLOPs.
    """

    architecture: str
    lam: float
    seed: int
    accuracy: float
    tpr: float
    fpr: float
    mean_cost: float
    mean_stages: float
    mean_time_s: float | None = None

    def csv_row(self) -> str:
        time_ns = "" if self.mean_time_s is None else repr(self.mean_time_s * 1e9)
        return (
            f"{self.architecture},{self.lam!r},{self.seed},{self.accuracy!r},"
            f"{self.tpr!r},{self.fpr!r},{self.mean_cost!r},{self.mean_stages!r},"
            f"{time_ns}"
        )


@dataclass(frozen=True)
class SweepFailure:
    architecture: str
    lam: float
    seed: int
    error: str


@dataclass
class SweepResult:
    points: list[TradeoffPoint]
    failures: list[SweepFailure]

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def _run_grid_point(cfg: SweepConfig, train_data: Dataset, test_data: Dataset,
                    arch: str, lam: float, seed: int) -> TradeoffPoint:
    cascade = build_cascade(arch, train_data.dim, seed, cfg.alpha)
    if cfg.kappa_mode == "explicit":
        if len(cfg.explicit_kappa) != cascade.n_stages:
            raise ValueError(
                f"explicit kappa has {len(cfg.explicit_kappa)} entries; "
                f"{arch} has {cascade.n_stages} stages"
            )
        schedule = CostSchedule(tuple(cfg.explicit_kappa), lam)
    else:
        schedule = default_schedule(cascade, lam)
    cascade = reverse_init(cascade, train_data, schedule, cfg.train_cfg,
                           cfg.objective_kind)
    cascade, _ = joint_finetune(cascade, train_data, schedule, cfg.train_cfg,
                                cfg.objective_kind)
    report = evaluate(cascade, test_data, schedule)
    mean_time = None
    if cfg.bench_evaluations > 0:
        mean_time = bench(cascade, test_data, cfg.bench_evaluations)
    return TradeoffPoint(
        architecture=arch, lam=lam, seed=seed,
        accuracy=report.accuracy, tpr=report.tpr, fpr=report.fpr,
        mean_cost=report.mean_cost, mean_stages=report.mean_stages,
        mean_time_s=mean_time,
    )


def run_sweep(cfg: SweepConfig, train_data: Dataset, test_data: Dataset,
              workers: int = 1) -> SweepResult:
    """Train and evaluate every (architecture, lambda, seed) grid point.

    A failed grid point is recorded and the sweep continues.  Points come
    back in grid order regardless of worker count.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    grid = [
        (arch, lam, seed)
        for arch in cfg.architectures
        for lam in cfg.lambda_grid
        for seed in cfg.seeds
    ]
    points, failures = [], []
    if workers == 1:
        outcomes = []
        for arch, lam, seed in grid:
            try:
                outcomes.append(_run_grid_point(cfg, train_data, test_data,
                                                arch, lam, seed))
            except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
                outcomes.append(exc)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_grid_point, cfg, train_data, test_data,
                            arch, lam, seed)
                for arch, lam, seed in grid
            ]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except Exception as exc:  # noqa: BLE001
                    outcomes.append(exc)
    for (arch, lam, seed), outcome in zip(grid, outcomes):
        if isinstance(outcome, TradeoffPoint):
            points.append(outcome)
        else:
            log.warning("grid point (%s, %g, %d) failed: %s", arch, lam, seed, outcome)
            failures.append(SweepFailure(arch, lam, seed, f"{outcome}"))
    return SweepResult(points, failures)


def pareto_front(points: list[TradeoffPoint]) -> list[TradeoffPoint]:
    """Points not dominated under (maximize accuracy, minimize mean_cost).

    A point is dominated if some other point is at least as good on both
    axes and strictly better on one.  Output is ordered by mean_cost
    ascending.  Exact duplicates are all kept (none dominates the other).
    """
    if not points:
        raise ValueError("no points")
    order = sorted(range(len(points)),
                   key=lambda i: (points[i].mean_cost, -points[i].accuracy, i))
    front = []
    best_acc = -np.inf
    best_acc_cost = np.inf
    for i in order:
        pt = points[i]
        if pt.accuracy > best_acc:
            best_acc, best_acc_cost = pt.accuracy, pt.mean_cost
            front.append(pt)
        elif pt.accuracy == best_acc and pt.mean_cost == best_acc_cost:
            front.append(pt)
    return front


def select_best(points: list[TradeoffPoint]) -> TradeoffPoint:
    """Max-accuracy point; ties broken by lower mean_cost, then lower lambda."""
    if not points:
        raise ValueError("no points")
    return min(points, key=lambda pt: (-pt.accuracy, pt.mean_cost, pt.lam))


def average_over_seeds(points: list[TradeoffPoint]) -> list[TradeoffPoint]:
    """Collapse seeds: one point per (architecture, lambda) with averaged
    metrics.  The seed field of an averaged point is the seed count, and
    grid order (first appearance) is preserved.
    """
    groups: dict[tuple[str, float], list[TradeoffPoint]] = {}
    for pt in points:
        groups.setdefault((pt.architecture, pt.lam), []).append(pt)
    out = []
    for (arch, lam), members in groups.items():
        times = [pt.mean_time_s for pt in members if pt.mean_time_s is not None]
        out.append(TradeoffPoint(
            architecture=arch, lam=lam, seed=len(members),
            accuracy=float(np.mean([pt.accuracy for pt in members])),
            tpr=float(np.mean([pt.tpr for pt in members])),
            fpr=float(np.mean([pt.fpr for pt in members])),
            mean_cost=float(np.mean([pt.mean_cost for pt in members])),
            mean_stages=float(np.mean([pt.mean_stages for pt in members])),
            mean_time_s=float(np.mean(times)) if times else None,
        ))
    return out


def sweep_csv(points: list[TradeoffPoint]) -> str:
    lines = [SWEEP_CSV_HEADER]
    lines += [pt.csv_row() for pt in points]
    return "\n".join(lines) + "\n"


def summary_text(points: list[TradeoffPoint]) -> str:
    """Human-readable block: the best point per architecture."""
    if not points:
        return "no completed grid points\n"
    lines = []
    seen = []
    for pt in points:
        if pt.architecture not in seen:
            seen.append(pt.architecture)
    for arch in seen:
        best = select_best([pt for pt in points if pt.architecture == arch])
        lines.append(
            f"{arch}: best accuracy {best.accuracy:.4f} at lambda={best.lam:g} "
            f"(seed {best.seed}, mean cost {best.mean_cost:.3f} kappa, "
            f"mean stages {best.mean_stages:.3f})"
        )
    return "\n".join(lines) + "\n"
