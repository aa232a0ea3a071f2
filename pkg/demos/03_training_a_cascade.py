"""Training a two-stage cascade: back-to-front init, then joint fine-tuning.

A cascade is trained in two passes.  `reverse_init` fits the last stage
first and works backwards, so every stage starts out knowing what the
stages behind it can already handle; `joint_finetune` then optimizes all
parameters together against the gated objective with the cost penalty.
The result is evaluated the way it would be deployed: hard thresholding
with early exit, paying for a stage only when it actually runs.

Run it:  python3 demos/03_training_a_cascade.py      (~10 s)
"""

import numpy as np

from cascadekit import (
    SynthConfig,
    TrainConfig,
    build_cascade,
    default_schedule,
    evaluate,
    hard_classify,
    joint_finetune,
    reverse_init,
    stratified_split,
    synth_generate,
    zscore_fit_apply,
)

cfg = SynthConfig(n_total=900, positive_fraction=0.12, dim=9)
data = synth_generate(cfg)
train, test = stratified_split(data, 700, 84, seed=0)
train, (test,) = zscore_fit_apply(train, (test,))
print(f"train {train.n} / test {test.n}, {train.dim} features")

# casc2 = a linear screen on the 5 cheap features, then a 10-unit net on
# everything.  lambda=3e-3 puts mild pressure on forwarding instances.
cascade = build_cascade("casc2", train.dim, seed=0)
schedule = default_schedule(cascade, lam=3e-3)
print(f"per-stage costs (units of stage 1): {schedule.kappa}")

train_cfg = TrainConfig(epochs=400, step_size=5e-2)
cascade = reverse_init(cascade, train, schedule, train_cfg)
cascade, report = joint_finetune(cascade, train, schedule, train_cfg)
print(f"joint fine-tune: {report.objective_trace.size} epochs, "
      f"objective {report.objective_trace[0]:.3f} -> {report.final_objective:.3f}"
      f"{'  (reverted)' if report.reverted else ''}")

# Deployment-style evaluation: threshold each stage at 0.5, stop at the
# first rejection, and account for the stages actually executed.
result = evaluate(cascade, test, schedule)
print(f"\ntest accuracy {result.accuracy:.4f}   tpr {result.tpr:.3f}   "
      f"fpr {result.fpr:.3f}")
print(f"mean stages executed {result.mean_stages:.2f}   "
      f"mean cost {result.mean_cost:.2f} (stage-1 units)")

# Watch the early exit do its job on two individual instances (taking a
# positive the cascade detects; it is not perfect on this noise level).
easy_negative = test.X[np.flatnonzero(test.y == 0)[0]]
pos_rows = np.flatnonzero(test.y == 1)
positive = next((test.X[i] for i in pos_rows
                 if hard_classify(cascade, test.X[i]).label == 1),
                test.X[pos_rows[0]])
for name, x in [("negative", easy_negative), ("positive", positive)]:
    run = hard_classify(cascade, x)
    probs = ", ".join(f"{p:.3f}" for p in run.per_stage_probs)
    print(f"{name}: label {run.label} after {run.stages_executed} stage(s) "
          f"[p = {probs}]")

# For scale: the same data through a single all-features model.
single = build_cascade("single-1lnn", train.dim, seed=0)
single_sched = default_schedule(single, lam=0.0)
single = reverse_init(single, train, single_sched, train_cfg)
single, _ = joint_finetune(single, train, single_sched, train_cfg)
single_result = evaluate(single, test, single_sched)
print(f"\nsingle model: accuracy {single_result.accuracy:.4f}, every instance "
      f"pays the full network")
