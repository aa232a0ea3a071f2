"""cascadekit: shallow detection cascades of probabilistic classifiers.

Tools for training 1-3 stage cascades whose stages trade accuracy against
execution cost: a self-gated mixture combination rule with exact gradients,
a noisy-AND soft-cascade baseline, cost-regularized joint training with
reverse-order initialization, a hard early-exit runtime with per-stage cost
accounting, and a regularization-sweep harness for mapping the
speed/accuracy tradeoff.
"""

from .cascade import (
    ARCHITECTURES,
    DEFAULT_ALPHA,
    CascadeModel,
    CostSchedule,
    build_cascade,
    build_stage_specs,
    cascade_prob,
    cost_penalty,
    gate,
    load_cascade,
    mixture_weights,
    nll_instance,
    objective,
    objective_gradient,
    product_prob,
    save_cascade,
    soft_cascade_objective,
    soft_cascade_gradient,
    soft_cost_penalty,
    stage_probs,
)
from .data import (
    CsvParseError,
    Dataset,
    SynthConfig,
    apply_norm_stats,
    basis_expand,
    load_csv,
    save_csv,
    stratified_split,
    synth_generate,
    zscore_fit_apply,
)
from .models import (
    StageModel,
    StageSpec,
    forward,
    forward_batch,
    init_params,
)
from .runtime import (
    EvalReport,
    HardResult,
    bench,
    default_schedule,
    evaluate,
    hard_classify,
    stage_flops,
)
from .sweep import (
    DEFAULT_LAMBDA_GRID,
    SweepConfig,
    TradeoffPoint,
    average_over_seeds,
    pareto_front,
    run_sweep,
    select_best,
)
from .training import (
    TrainConfig,
    TrainReport,
    TrainingDiverged,
    gradient_check,
    joint_finetune,
    reverse_init,
    train_standalone,
)
from .util import substream

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "DEFAULT_ALPHA",
    "DEFAULT_LAMBDA_GRID",
    "CascadeModel",
    "CostSchedule",
    "CsvParseError",
    "Dataset",
    "EvalReport",
    "HardResult",
    "StageModel",
    "StageSpec",
    "SweepConfig",
    "SynthConfig",
    "TradeoffPoint",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "apply_norm_stats",
    "average_over_seeds",
    "basis_expand",
    "bench",
    "build_cascade",
    "build_stage_specs",
    "cascade_prob",
    "cost_penalty",
    "default_schedule",
    "evaluate",
    "forward",
    "forward_batch",
    "gate",
    "gradient_check",
    "hard_classify",
    "init_params",
    "joint_finetune",
    "load_cascade",
    "load_csv",
    "mixture_weights",
    "nll_instance",
    "objective",
    "objective_gradient",
    "pareto_front",
    "product_prob",
    "reverse_init",
    "run_sweep",
    "save_cascade",
    "save_csv",
    "select_best",
    "soft_cascade_gradient",
    "soft_cascade_objective",
    "soft_cost_penalty",
    "stage_flops",
    "stage_probs",
    "stratified_split",
    "substream",
    "synth_generate",
    "train_standalone",
    "zscore_fit_apply",
]
