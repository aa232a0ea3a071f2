"""Command-line entry point: synth, train, eval, sweep, gradcheck.

Every command reads an optional flat ``key = value`` config file; flags
override config values, and config keys a command does not understand are
rejected.  All randomness flows from a single seed through named
sub-streams, so two runs with the same config and seed produce identical
output files (timings excluded).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cascade import (
    ARCHITECTURES,
    DEFAULT_ALPHA,
    build_cascade,
    load_cascade,
    save_cascade,
)
from .data import (
    Dataset,
    SynthConfig,
    apply_norm_stats,
    load_csv,
    save_csv,
    stratified_split,
    synth_generate,
    zscore_fit_apply,
)
from .runtime import EVAL_CSV_HEADER, bench, default_schedule, evaluate
from .sweep import (
    DEFAULT_LAMBDA_GRID,
    SweepConfig,
    pareto_front,
    run_sweep,
    summary_text,
    sweep_csv,
)
from .training import (
    OBJECTIVE_KINDS,
    TrainConfig,
    gradient_check,
    joint_finetune,
    reverse_init,
)
from .util import read_config

__all__ = ["main"]

_SYNTH_KEYS = (
    "n_total", "positive_fraction", "dim", "cheap_dim",
    "cheap_separable_fraction", "cheap_offset", "hard_offset", "seed",
)
_TRAIN_CFG_KEYS = (
    "optimizer", "step_size", "epochs", "pos_weight", "moment_decays",
    "epsilon_hat",
)


def _load_config(args, allowed: set[str], overrides: list[tuple[str, str]]) -> dict:
    """Config file -> dict, validated against `allowed`, with flag overrides."""
    cfg = read_config(args.config) if args.config else {}
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ValueError(f"unknown config keys for this command: {', '.join(unknown)}")
    for attr, key in overrides:
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _train_cfg(cfg: dict, seed: int) -> TrainConfig:
    kwargs = {k: cfg[k] for k in _TRAIN_CFG_KEYS if k in cfg}
    if "moment_decays" in kwargs:
        kwargs["moment_decays"] = tuple(float(v) for v in kwargs["moment_decays"])
    return TrainConfig(seed=seed, **kwargs)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_objective(kind: str) -> str:
    if kind not in OBJECTIVE_KINDS:
        raise ValueError(f"unknown objective {kind!r} (choose from {OBJECTIVE_KINDS})")
    return kind


def _split(data: Dataset, cfg: dict, seed: int):
    train_count = int(cfg.get("train_count", 3400))
    train_pos = int(cfg.get("train_pos_count", 260))
    return stratified_split(data, train_count, train_pos, seed=seed)


def _cmd_synth(args) -> int:
    allowed = set(_SYNTH_KEYS) | {"out"}
    cfg = _load_config(args, allowed, [
        ("seed", "seed"), ("out", "out"), ("n_total", "n_total"),
        ("dim", "dim"), ("positive_fraction", "positive_fraction"),
    ])
    scfg = SynthConfig(**{k: cfg[k] for k in _SYNTH_KEYS if k in cfg})
    data = synth_generate(scfg)
    path = _out_dir(cfg) / "synth.csv"
    save_csv(data, path)
    print(f"wrote {path}: {data.n} rows, {data.n_positive} positive, "
          f"{data.n - data.n_positive} negative")
    return 0


def _cmd_train(args) -> int:
    allowed = set(_TRAIN_CFG_KEYS) | {
        "data", "out", "seed", "arch", "lambda", "alpha", "objective",
    }
    cfg = _load_config(args, allowed, [
        ("data", "data"), ("out", "out"), ("seed", "seed"), ("arch", "arch"),
        ("lam", "lambda"), ("objective", "objective"), ("epochs", "epochs"),
    ])
    if "data" not in cfg:
        raise ValueError("train needs a dataset (--data or `data =` in the config)")
    seed = int(cfg.get("seed", 0))
    arch = cfg.get("arch", "casc3")
    lam = float(cfg.get("lambda", 0.0))
    alpha = float(cfg.get("alpha", DEFAULT_ALPHA))
    objective_kind = _check_objective(cfg.get("objective", "self_gated"))

    data = load_csv(cfg["data"])
    data, _ = zscore_fit_apply(data)
    cascade = build_cascade(arch, data.dim, seed, alpha)
    schedule = default_schedule(cascade, lam)
    tcfg = _train_cfg(cfg, seed)
    cascade = reverse_init(cascade, data, schedule, tcfg, objective_kind)
    cascade, report = joint_finetune(cascade, data, schedule, tcfg, objective_kind)

    out = _out_dir(cfg)
    model_path = out / "model.json"
    save_cascade(cascade, model_path, norm_stats=data.norm_stats, meta={
        "arch": arch, "lambda": lam, "seed": seed, "objective": objective_kind,
    })
    report_path = out / "train-report.csv"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.trace_csv())
    print(f"wrote {model_path} and {report_path}")
    print(f"train: {report.summary()}")
    return 0


def _cmd_eval(args) -> int:
    allowed = {"data", "model", "out", "bench"}
    cfg = _load_config(args, allowed, [
        ("data", "data"), ("model", "model"), ("out", "out"), ("bench", "bench"),
    ])
    for key in ("data", "model"):
        if key not in cfg:
            raise ValueError(f"eval needs --{key} (or `{key} =` in the config)")
    cascade, norm_stats, meta = load_cascade(cfg["model"])
    data = load_csv(cfg["data"])
    if norm_stats is not None:
        data = apply_norm_stats(data, norm_stats)
    schedule = default_schedule(cascade, float(meta.get("lambda", 0.0)))
    report = evaluate(cascade, data, schedule)
    if "bench" in cfg:
        evaluations = int(cfg["bench"])
        report.mean_time_s = bench(cascade, data, evaluations)
    row = report.csv_row(meta.get("arch", "?"), schedule.lam)
    print(EVAL_CSV_HEADER)
    print(row)
    if "out" in cfg:
        path = _out_dir(cfg) / "eval.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(EVAL_CSV_HEADER + "\n" + row + "\n")
        print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    allowed = set(_TRAIN_CFG_KEYS) | {
        "data", "out", "seed", "seeds", "lambda_grid", "architectures",
        "alpha", "objective", "kappa_mode", "kappa", "train_count",
        "train_pos_count", "bench", "workers",
    }
    cfg = _load_config(args, allowed, [
        ("data", "data"), ("out", "out"), ("workers", "workers"),
        ("bench", "bench"), ("objective", "objective"), ("epochs", "epochs"),
    ])
    if "data" not in cfg:
        raise ValueError("sweep needs a dataset (--data or `data =` in the config)")
    if args.seed is not None:
        seeds = (int(args.seed),)
    elif "seeds" in cfg:
        seeds = tuple(int(s) for s in cfg["seeds"])
    else:
        seeds = (int(cfg.get("seed", 0)),)
    if args.arch is not None:
        archs = (args.arch,)
    elif "architectures" in cfg:
        archs = tuple(cfg["architectures"])
    else:
        archs = ("casc3",)
    grid = tuple(float(v) for v in cfg.get("lambda_grid", DEFAULT_LAMBDA_GRID))
    kappa = cfg.get("kappa")

    data = load_csv(cfg["data"])
    train, test = _split(data, cfg, seed=seeds[0])
    train, (test,) = zscore_fit_apply(train, [test])

    scfg = SweepConfig(
        lambda_grid=grid,
        architectures=archs,
        seeds=seeds,
        train_cfg=_train_cfg(cfg, seeds[0]),
        kappa_mode=cfg.get("kappa_mode", "flop_default"),
        explicit_kappa=tuple(float(v) for v in kappa) if kappa else None,
        objective_kind=_check_objective(cfg.get("objective", "self_gated")),
        alpha=float(cfg.get("alpha", DEFAULT_ALPHA)),
        bench_evaluations=int(cfg.get("bench", 0)),
    )
    result = run_sweep(scfg, train, test, workers=int(cfg.get("workers", 1)))

    out = _out_dir(cfg)
    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(sweep_csv(result.points))
    summary = summary_text(result.points)
    with open(out / "summary.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(summary)
    print(f"wrote {sweep_path} ({len(result.points)} points, "
          f"{len(result.failures)} failures)")
    if args.pareto and result.points:
        front_path = out / "pareto.csv"
        with open(front_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(sweep_csv(pareto_front(result.points)))
        print(f"wrote {front_path}")
    print(summary, end="")
    for failure in result.failures:
        print(f"failed: {failure.architecture} lambda={failure.lam:g} "
              f"seed={failure.seed}: {failure.error}", file=sys.stderr)
    return 0 if result.points else 1


def _cmd_gradcheck(args) -> int:
    allowed = {"arch", "alpha", "lambda", "seed", "objective", "epsilon",
               "tolerance", "n", "dim"}
    cfg = _load_config(args, allowed, [
        ("seed", "seed"), ("arch", "arch"), ("lam", "lambda"),
        ("alpha", "alpha"), ("objective", "objective"),
    ])
    seed = int(cfg.get("seed", 0))
    arch = cfg.get("arch", "casc2")
    n = int(cfg.get("n", 24))
    dim = int(cfg.get("dim", 12))
    tolerance = float(cfg.get("tolerance", 1e-5))
    objective_kind = _check_objective(cfg.get("objective", "self_gated"))

    scfg = SynthConfig(n_total=n, positive_fraction=0.375, dim=dim, seed=seed)
    data, _ = zscore_fit_apply(synth_generate(scfg))
    cascade = build_cascade(arch, dim, seed, float(cfg.get("alpha", DEFAULT_ALPHA)))
    schedule = default_schedule(cascade, float(cfg.get("lambda", 0.1)))
    err = gradient_check(
        cascade, data, schedule,
        epsilon=float(cfg.get("epsilon", 1e-6)),
        objective_kind=objective_kind,
        _corrupt=args.corrupt,
    )
    ok = err < tolerance
    print(f"max relative gradient error: {err:.3e} "
          f"({'<' if ok else '>='} tolerance {tolerance:g})")
    return 0 if ok else 1


def _add_common(sub, *names):
    flags = {
        "config": lambda: sub.add_argument("--config", metavar="PATH",
                                           help="flat key = value config file"),
        "data": lambda: sub.add_argument("--data", metavar="CSV"),
        "out": lambda: sub.add_argument("--out", metavar="DIR"),
        "seed": lambda: sub.add_argument("--seed", type=int),
        "arch": lambda: sub.add_argument("--arch", choices=ARCHITECTURES),
        "lam": lambda: sub.add_argument("--lambda", dest="lam", type=float),
        "workers": lambda: sub.add_argument("--workers", type=int),
        "bench": lambda: sub.add_argument("--bench", type=int, metavar="N"),
        "epochs": lambda: sub.add_argument("--epochs", type=int),
        "objective": lambda: sub.add_argument("--objective",
                                              choices=OBJECTIVE_KINDS),
    }
    for name in names:
        flags[name]()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadekit",
        description="Train and run cost-aware early-exit classifier cascades.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    _add_common(p, "config", "out", "seed")
    p.add_argument("--n-total", dest="n_total", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--positive-fraction", dest="positive_fraction", type=float)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train one cascade and save the model")
    _add_common(p, "config", "data", "out", "seed", "arch", "lam", "epochs",
                "objective")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    _add_common(p, "config", "data", "out", "bench")
    p.add_argument("--model", metavar="JSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="lambda-grid sweep producing tradeoff points")
    _add_common(p, "config", "data", "out", "seed", "arch", "workers", "bench",
                "epochs", "objective")
    p.add_argument("--pareto", action="store_true",
                   help="also write the Pareto front CSV")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the gradients")
    _add_common(p, "config", "seed", "arch", "lam", "objective")
    p.add_argument("--alpha", type=float)
    p.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
