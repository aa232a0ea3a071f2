"""Mapping the speed/accuracy tradeoff: the lambda sweep and its Pareto front.

One trained cascade is a single point in (cost, accuracy) space.  The knob
that moves it is lambda, the weight on the expected-cost penalty: lambda 0
trains for accuracy alone, large lambda makes forwarding an instance to an
expensive stage so costly that the first stage handles nearly everything.
`run_sweep` trains the whole grid, `average_over_seeds` smooths out init
luck, and `pareto_front` keeps the points you would actually deploy.

Run it:  python3 demos/04_sweep_and_pareto.py        (~40 s)
"""

from cascadekit import (
    SweepConfig,
    SynthConfig,
    TrainConfig,
    average_over_seeds,
    pareto_front,
    run_sweep,
    select_best,
    stratified_split,
    synth_generate,
    zscore_fit_apply,
)
from cascadekit.sweep import summary_text, sweep_csv

cfg = SynthConfig(n_total=900, positive_fraction=0.12, dim=9)
data = synth_generate(cfg)
train, test = stratified_split(data, 700, 84, seed=0)
train, (test,) = zscore_fit_apply(train, (test,))

sweep_cfg = SweepConfig(
    lambda_grid=(0.0, 1e-3, 1e-2, 1e-1, 1.0),
    architectures=("casc2",),
    seeds=(0, 1),
    train_cfg=TrainConfig(epochs=300, step_size=5e-2),
)
result = run_sweep(sweep_cfg, train, test)
print(f"{len(result.points)} grid points trained, "
      f"{len(result.failures)} failures\n")

averaged = average_over_seeds(result.points)
print("lambda      accuracy   mean cost   mean stages")
for pt in averaged:
    print(f"{pt.lam:<10g}  {pt.accuracy:.4f}     {pt.mean_cost:7.3f}     "
          f"{pt.mean_stages:.2f}")

# The Pareto front drops every point beaten on both axes at once.
front = pareto_front(averaged)
print(f"\npareto front ({len(front)} of {len(averaged)} points, "
      "cost ascending):")
for pt in front:
    print(f"  lambda {pt.lam:<8g} accuracy {pt.accuracy:.4f}  "
          f"cost {pt.mean_cost:.3f}")

best = select_best(averaged)
print(f"\nbest accuracy: {best.accuracy:.4f} at lambda {best.lam:g} "
      f"(cost {best.mean_cost:.3f})")

with open("sweep_demo.csv", "w", encoding="utf-8") as fh:
    fh.write(sweep_csv(result.points))
print("\nwrote sweep_demo.csv; the same text report the CLI prints:")
print(summary_text(result))
