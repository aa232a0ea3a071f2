"""Acceptance gate: the toolkit's headline guarantees, one test per claim.

Each test measures a falsifiable property, prints a single PASS/FAIL line
with the observed numbers, and pins its tolerance in the assert.  The
end-to-end lambda sweeps on the synthetic benchmark share session-scoped
fixtures and dominate the suite's runtime (several minutes); everything
else runs in seconds.  Use ``pytest tests/test_acceptance.py -v -s`` to
watch the verdict lines appear.
"""

import math
import time
from types import SimpleNamespace

import numpy as np
import pytest

from cascadekit.cascade import (
    CostSchedule,
    build_cascade,
    build_stage_specs,
    cascade_prob,
    cost_penalty,
    gate,
    mixture_weights,
    stage_probs,
)
from cascadekit.cli import main
from cascadekit.data import (
    Dataset,
    SynthConfig,
    stratified_split,
    synth_generate,
    zscore_fit_apply,
)
from cascadekit.runtime import default_schedule, hard_classify, stage_flops
from cascadekit.sweep import (
    SweepConfig,
    TradeoffPoint,
    average_over_seeds,
    pareto_front,
    run_sweep,
    select_best,
)
from cascadekit.training import TrainConfig, gradient_check, joint_finetune, reverse_init


def verdict(ok: bool, name: str, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# Shared end-to-end fixtures.  The benchmark protocol is fixed: default
# synthetic data, 3400/260 stratified train split, z-scored features, a
# six-point lambda grid spanning "cost term negligible" to "cost term
# dominant", and five model-init seeds on the same data.

LAMBDA_GRID = (0.0, 1e-4, 1e-3, 3e-3, 1e-2, 10.0)
SEEDS = (0, 1, 2, 3, 4)
SWEEP_TRAIN = TrainConfig(epochs=600, step_size=5e-2)


def _benchmark_splits():
    data = synth_generate(SynthConfig())
    train, test = stratified_split(data, 3400, 260, seed=0)
    train, (test,) = zscore_fit_apply(train, (test,))
    return train, test


@pytest.fixture(scope="session")
def tradeoff():
    """Full sweep results for both objectives plus the single-model baseline."""
    train, test = _benchmark_splits()
    t0 = time.perf_counter()
    self_res = run_sweep(
        SweepConfig(lambda_grid=LAMBDA_GRID, architectures=("casc2", "casc3"),
                    seeds=SEEDS, train_cfg=SWEEP_TRAIN, objective_kind="self_gated"),
        train, test)
    soft_res = run_sweep(
        SweepConfig(lambda_grid=LAMBDA_GRID, architectures=("casc2", "casc3"),
                    seeds=SEEDS, train_cfg=SWEEP_TRAIN, objective_kind="soft_cascade"),
        train, test)
    # Lambda only shifts a one-stage objective by a constant, so the
    # baseline needs a single grid point per seed.
    single_res = run_sweep(
        SweepConfig(lambda_grid=(0.0,), architectures=("single-1lnn",),
                    seeds=SEEDS, train_cfg=SWEEP_TRAIN),
        train, test)
    wall_s = time.perf_counter() - t0
    for res in (self_res, soft_res, single_res):
        assert not res.failures, res.failures
    return SimpleNamespace(self_pts=self_res.points, soft_pts=soft_res.points,
                           single_pts=single_res.points, wall_s=wall_s,
                           train=train, test=test)


@pytest.fixture(scope="session")
def trained_cascades():
    """A spread of trained cascades for properties quantified over models."""
    train, test = _benchmark_splits()
    combos = [
        ("single-1lnn", "self_gated", 0.0, 0),
        ("casc2", "self_gated", 3e-3, 0),
        ("casc2", "soft_cascade", 3e-3, 0),
        ("casc3", "self_gated", 3e-3, 0),
        ("casc3", "soft_cascade", 3e-3, 0),
        ("casc3", "self_gated", 0.0, 1),
    ]
    cascades = []
    for arch, kind, lam, seed in combos:
        casc = build_cascade(arch, train.dim, seed)
        sched = default_schedule(casc, lam)
        casc = reverse_init(casc, train, sched, SWEEP_TRAIN, objective_kind=kind)
        casc, _ = joint_finetune(casc, train, sched, SWEEP_TRAIN, objective_kind=kind)
        cascades.append((casc, sched))
    return SimpleNamespace(cascades=cascades, test=test)


def _margin_probs(rng, n, n_stages, margin=0.1):
    """Random stage-probability vectors with every entry off the threshold."""
    low = rng.uniform(0.0, 0.5 - margin, size=(n, n_stages))
    high = rng.uniform(0.5 + margin, 1.0, size=(n, n_stages))
    return np.where(rng.random((n, n_stages)) < 0.5, high, low)


# ---------------------------------------------------------------------------
# Fast algebraic properties of the combination rule.


def test_mixture_weights_sum_to_one():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for n_stages in (1, 2, 3, 4, 5):
        P = rng.uniform(size=(100_000, n_stages))
        for alpha in (1.0, 10.0, 100.0):
            sums = mixture_weights(P, alpha).sum(axis=-1)
            worst = max(worst, float(np.abs(sums - 1.0).max()))
    wall = time.perf_counter() - t0
    verdict(worst <= 1e-12 and wall < 5.0, "mixture-weight normalization",
            f"max |sum(theta) - 1| = {worst:.2e} over 1.5e6 vectors, "
            f"{wall:.2f}s (need <= 1e-12 in < 5 s)")


def test_three_stage_mixture_matches_explicit_expansion():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    P = rng.uniform(size=(100_000, 3))
    worst = 0.0
    for alpha in (1.0, 10.0, 100.0):
        g1 = gate(P[:, 0], alpha)
        g2 = gate(P[:, 1], alpha)
        explicit = ((1.0 - g1) * P[:, 0]
                    + g1 * (1.0 - g2) * P[:, 1]
                    + g1 * g2 * P[:, 2])
        worst = max(worst, float(np.abs(cascade_prob(P, alpha) - explicit).max()))
    wall = time.perf_counter() - t0
    verdict(worst <= 1e-15 and wall < 5.0, "three-stage expansion equivalence",
            f"max |general - explicit| = {worst:.2e} over 1e5 draws x 3 alphas, "
            f"{wall:.2f}s (need <= 1e-15 in < 5 s)")


def test_gate_reference_values():
    exact = gate(0.5, 100.0) == 0.5
    below = abs(gate(0.49, 100.0) - 0.2689414) <= 1e-7
    above = abs(gate(0.60, 100.0) - 0.9999546) <= 1e-7
    verdict(exact and below and above, "gate reference values",
            f"g(0.5)={gate(0.5, 100.0)!r}, g(0.49)={gate(0.49, 100.0):.9f}, "
            f"g(0.6)={gate(0.6, 100.0):.9f} (need 0.5 exact, refs +/- 1e-7)")


# ---------------------------------------------------------------------------
# Gradient correctness over the supported architecture/sharpness/cost grid.


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(404)
    dim = 12
    X = rng.normal(size=(16, dim))
    y = rng.integers(0, 2, size=16)
    y[:2] = (0, 1)  # guarantee both classes
    data = Dataset(X, y)

    t0 = time.perf_counter()
    worst, checks = 0.0, 0
    for arch in ("single-1lnn", "casc2", "casc3"):
        for alpha in (1.0, 100.0):
            for lam in (0.0, 0.1):
                for restart in range(5):
                    casc = build_cascade(arch, dim, seed=1000 + checks, alpha=alpha)
                    sched = default_schedule(casc, lam)
                    err = gradient_check(casc, data, sched, epsilon=1e-6)
                    worst = max(worst, err)
                    checks += 1
    wall = time.perf_counter() - t0
    verdict(worst < 1e-5 and checks >= 50 and wall < 120.0,
            "analytic gradients vs central differences",
            f"max rel err = {worst:.2e} over {checks} restarts "
            f"(3 archs x alpha 1,100 x lambda 0,0.1), {wall:.1f}s "
            f"(need < 1e-5, >= 50 restarts, < 2 min)")


# ---------------------------------------------------------------------------
# The sharp-gate mixture as a faithful surrogate for hard early-exit
# execution: labels agree and the differentiable penalty tracks the cost
# actually paid, whenever no stage output sits inside the 0.1 gate band.


def test_hard_and_soft_labels_agree_off_the_margin(trained_cascades):
    rng = np.random.default_rng(505)
    disagreements, n_random = 0, 0
    for n_stages in (1, 2, 3):
        P = _margin_probs(rng, 100_000, n_stages)
        soft = cascade_prob(P, 100.0) > 0.5
        hard = (P > 0.5).all(axis=1)
        disagreements += int((soft != hard).sum())
        n_random += P.shape[0]

    n_trained = 0
    test = trained_cascades.test
    for casc, _ in trained_cascades.cascades:
        P = stage_probs(casc, test.X)
        kept = np.flatnonzero((np.abs(P - 0.5) >= 0.1).all(axis=1))
        soft = cascade_prob(P[kept], 100.0) > 0.5
        hard = np.array([hard_classify(casc, test.X[i]).label for i in kept],
                        dtype=bool)
        disagreements += int((soft != hard).sum())
        n_trained += kept.size

    verdict(disagreements == 0, "hard/soft label agreement",
            f"{disagreements} disagreements over {n_random} random + "
            f"{n_trained} trained margin-filtered instances (need 0)")


def test_gated_penalty_tracks_executed_cost(trained_cascades):
    rng = np.random.default_rng(606)
    kappa = (1.0, 3.0, 9.0)
    P = _margin_probs(rng, 100_000, 3)
    penalty = cost_penalty(P, CostSchedule(kappa, 0.0), 100.0)
    reached2 = P[:, 0] > 0.5
    reached3 = reached2 & (P[:, 1] > 0.5)
    executed = kappa[0] + kappa[1] * reached2 + kappa[2] * reached3
    bound = (len(kappa) - 1) * sum(kappa) * math.exp(-10.0)
    worst_rel = float(np.abs(penalty - executed).max()) / bound

    n_trained = 0
    test = trained_cascades.test
    for casc, sched in trained_cascades.cascades:
        if casc.n_stages == 1:
            continue  # the penalty is identically kappa_1; nothing to track
        P = stage_probs(casc, test.X)
        kept = (np.abs(P - 0.5) >= 0.1).all(axis=1)
        pen = cost_penalty(P[kept], sched, 100.0)
        run = np.full(int(kept.sum()), sched.kappa[0])
        reach = np.ones(int(kept.sum()), dtype=bool)
        for stage in range(1, casc.n_stages):
            reach = reach & (P[kept, stage - 1] > 0.5)
            run = run + sched.kappa[stage] * reach
        b = (casc.n_stages - 1) * sum(sched.kappa) * math.exp(-10.0)
        if kept.any():
            worst_rel = max(worst_rel, float(np.abs(pen - run).max()) / b)
        n_trained += int(kept.sum())

    verdict(worst_rel <= 1.0, "gated penalty vs executed cost",
            f"worst |penalty - executed| = {worst_rel:.3f} x the "
            f"(L-1)*sum(kappa)*e^-10 bound over 1e5 random + {n_trained} "
            f"trained margin instances (need <= 1)")


# ---------------------------------------------------------------------------
# End-to-end speed/accuracy behavior on the synthetic benchmark.


def test_cascade_matches_single_model_accuracy_at_well_under_its_cost(tradeoff):
    avg3 = average_over_seeds(
        [p for p in tradeoff.self_pts if p.architecture == "casc3"])
    best3 = select_best(avg3)
    best1 = select_best(average_over_seeds(tradeoff.single_pts))

    # mean_cost is in units of each architecture's own stage-1 cost, so
    # cross-architecture comparison converts both to raw per-instance FLOPs.
    dim = tradeoff.train.dim
    casc3_flops = best3.mean_cost * stage_flops(build_stage_specs("casc3", dim)[0])
    single_flops = best1.mean_cost * stage_flops(
        build_stage_specs("single-1lnn", dim)[0])

    acc_ok = best3.accuracy >= best1.accuracy - 0.005
    cost_ok = casc3_flops <= 0.6 * single_flops
    time_ok = tradeoff.wall_s < 900.0
    verdict(acc_ok and cost_ok and time_ok,
            "three-stage cascade vs single model",
            f"acc {best3.accuracy:.4f} vs {best1.accuracy:.4f} - 0.005 "
            f"(lambda={best3.lam:g}); cost {casc3_flops:.0f} vs <= "
            f"{0.6 * single_flops:.0f} flops; sweeps took {tradeoff.wall_s:.0f}s "
            f"(need < 900 s)")


def test_self_gated_training_dominates_product_training(tradeoff):
    details, ok = [], True
    for arch in ("casc2", "casc3"):
        sb = select_best(average_over_seeds(
            [p for p in tradeoff.self_pts if p.architecture == arch]))
        pb = select_best(average_over_seeds(
            [p for p in tradeoff.soft_pts if p.architecture == arch]))
        arch_ok = (sb.mean_cost <= pb.mean_cost
                   and sb.accuracy >= pb.accuracy - 0.005)
        ok = ok and arch_ok
        details.append(
            f"{arch}: self {sb.accuracy:.4f}@{sb.mean_cost:.3f} vs "
            f"soft {pb.accuracy:.4f}@{pb.mean_cost:.3f}")
    verdict(ok, "self-gated vs product-trained cascades",
            "; ".join(details) + " (need cost <= and acc within 0.005)")


def test_larger_lambda_never_raises_cost(tradeoff):
    pts = [p for p in tradeoff.self_pts if p.architecture == "casc3"]
    by_seed = {}
    for p in pts:
        by_seed.setdefault(p.seed, {})[p.lam] = p.mean_cost
    top = max(LAMBDA_GRID)
    pairs = [(by_seed[s][0.0], by_seed[s][top]) for s in sorted(by_seed)]
    ok = all(hi <= lo for lo, hi in pairs)
    verdict(ok, "cost pressure is directionally correct",
            "; ".join(f"seed {s}: {lo:.2f} -> {hi:.2f}"
                      for s, (lo, hi) in zip(sorted(by_seed), pairs))
            + f" at lambda 0 -> {top:g} (need monotone non-increasing)")


# ---------------------------------------------------------------------------
# Supporting machinery: Pareto extraction and bitwise reproducibility.


def _dominates(a: TradeoffPoint, b: TradeoffPoint) -> bool:
    return (a.mean_cost <= b.mean_cost and a.accuracy >= b.accuracy
            and (a.mean_cost < b.mean_cost or a.accuracy > b.accuracy))


def test_pareto_front_matches_exhaustive_scan():
    rng = np.random.default_rng(909)
    t0 = time.perf_counter()
    for trial in range(1000):
        n = int(rng.integers(1, 21))
        # Coarse quantization manufactures ties and exact duplicates.
        pts = [TradeoffPoint("casc3", float(i), 0,
                             accuracy=round(float(rng.uniform(0.5, 1.0)), 2),
                             tpr=0.0, fpr=0.0,
                             mean_cost=float(rng.integers(1, 15)),
                             mean_stages=0.0)
               for i in range(n)]
        brute = {p.lam for p in pts
                 if not any(_dominates(q, p) for q in pts)}
        fast = {p.lam for p in pareto_front(pts)}
        assert fast == brute, f"trial {trial}: {sorted(fast)} != {sorted(brute)}"
    wall = time.perf_counter() - t0
    verdict(wall < 5.0, "pareto front vs exhaustive scan",
            f"1000 random point sets (size <= 20) agree, {wall:.2f}s (need < 5 s)")


def test_synthesis_and_training_are_bitwise_deterministic(tmp_path):
    synth_args = ["--seed", "7", "--n-total", "120", "--dim", "7",
                  "--positive-fraction", "0.3"]
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), *synth_args]) == 0
    data_equal = ((tmp_path / "a" / "synth.csv").read_bytes()
                  == (tmp_path / "b" / "synth.csv").read_bytes())

    for name in ("ra", "rb"):
        code = main(["train", "--data", str(tmp_path / "a" / "synth.csv"),
                     "--out", str(tmp_path / name), "--arch", "casc2",
                     "--seed", "1", "--epochs", "25"])
        assert code == 0
    model_equal = ((tmp_path / "ra" / "model.json").read_bytes()
                   == (tmp_path / "rb" / "model.json").read_bytes())

    verdict(data_equal and model_equal, "bitwise determinism",
            f"synth reruns identical: {data_equal}; "
            f"train reruns identical: {model_equal} (need both)")
