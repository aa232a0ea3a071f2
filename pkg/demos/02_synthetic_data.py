"""The synthetic detection problem: mostly-easy negatives, a few hard ones.

The generator builds the situation cascades are for: a rare positive
class, a large majority of negatives that a 5-feature linear model rejects
with a wide margin, and a minority of "hard" negatives that look exactly
like positives in those cheap features and are only separable through a
two-feature interaction that needs a hidden layer.

Run it:  python3 demos/02_synthetic_data.py        (writes synth_scatter.png)
"""

import numpy as np

from cascadekit import SynthConfig, stratified_split, synth_generate

cfg = SynthConfig()  # 3836 instances, 291 positive, 37 features
data = synth_generate(cfg)

print(f"instances:  {data.n}  ({data.n_positive} positive, "
      f"{data.n - data.n_positive} negative)")
print(f"features:   {data.dim} (first {cfg.cheap_dim} form the cheap view)")

# The cheap view separates positives from ~90% of negatives...
cheap = data.X[:, : cfg.cheap_dim].mean(axis=1)
pos, neg = data.y == 1, data.y == 0
print(f"\ncheap-view mean  positives: {cheap[pos].mean():+.2f}   "
      f"negatives: {cheap[neg].mean():+.2f}")
looks_positive = cheap > 0
n_hard = int((looks_positive & neg).sum())
print(f"negatives that pass a cheap-view screen anyway: {n_hard} "
      f"({n_hard / neg.sum():.1%} of negatives)")

# ...but those hard negatives hide in the interaction pair.
i, j = cfg.cheap_dim, cfg.cheap_dim + 1
prod = data.X[:, i] * data.X[:, j]
print(f"\ninteraction product x{i}*x{j}   positives: {prod[pos].mean():+.2f}   "
      f"negatives: {prod[neg].mean():+.2f}")
print("Positives sit on the diagonal clusters, negatives on the")
print("anti-diagonal: the marginals match, only the product tells them")
print("apart, so no linear stage can do it.")

# Standard experiment split, stratified so the rare class stays balanced.
train, test = stratified_split(data, train_count=3400, train_pos_count=260, seed=0)
print(f"\nsplit: train {train.n} ({train.n_positive} pos) / "
      f"test {test.n} ({test.n_positive} pos)")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping the scatter plot")
else:
    fig, axes = plt.subplots(1, 2, figsize=(9.2, 4.2))
    hard = looks_positive & neg
    easy = ~looks_positive & neg
    for ax, (a, b), title in (
        (axes[0], (0, 1), "cheap view (features 1, 2)"),
        (axes[1], (i, j), f"interaction pair (features {i + 1}, {j + 1})"),
    ):
        ax.scatter(data.X[easy, a], data.X[easy, b], s=4, alpha=0.25,
                   label="easy negative", color="tab:gray")
        ax.scatter(data.X[hard, a], data.X[hard, b], s=6, alpha=0.6,
                   label="hard negative", color="tab:red")
        ax.scatter(data.X[pos, a], data.X[pos, b], s=6, alpha=0.6,
                   label="positive", color="tab:blue")
        ax.set_title(title)
        ax.set_xlabel(f"x{a + 1}")
        ax.set_ylabel(f"x{b + 1}")
    axes[0].legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig("synth_scatter.png", dpi=120)
    print("wrote synth_scatter.png")
