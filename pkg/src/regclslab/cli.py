"""Command-line front end: single trials, lambda sweeps, noise ablations,
and full grids with summaries."""

import argparse
import json
import os
import sys
from pathlib import Path

from .harness import (
    LAMBDA_GRID,
    NOISE_LEVELS,
    RESULTS_ENV_VAR,
    SCENARIO_LAMBDAS,
    SCENARIO_LEARNING_RATES,
    VALIDATION_SEEDS,
    Mode,
    TrialSpec,
    ablate_noise,
    desk_scale_config,
    export_plotdata,
    lambda_search,
    load_grid_config,
    load_records,
    plan_grid,
    run_grid,
    run_trial,
    summarize_records,
    summary_tables_text,
    write_summary,
)
from .model import TrainConfig
from .sampling import DEFAULT_TOTAL, Kind, Regime, SamplingSpec, ScenarioSpec


def _csv_values(text, cast):
    return tuple(cast(part) for part in text.split(",") if part.strip())


def _add_trial_arguments(parser, with_lambda=True, with_mode=True):
    parser.add_argument("--function-seed", type=int, default=0)
    parser.add_argument("--data-seed", type=int, default=0)
    parser.add_argument("--train-seed", type=int, default=0)
    parser.add_argument("--scenario", choices=[k.value for k in Kind],
                        default=Kind.CLEAN.value)
    parser.add_argument("--noise-sigma", type=float, default=None,
                        help="target noise half-width (noisy scenario)")
    parser.add_argument("--sampling", choices=[r.value for r in Regime],
                        default=Regime.SEVERE.value)
    if with_mode:
        parser.add_argument("--mode", choices=[m.value for m in Mode],
                            default=Mode.REG_CLS.value)
    parser.add_argument("--classes", type=int, default=256)
    if with_lambda:
        parser.add_argument("--lambda", dest="lam", type=float, default=None,
                            help="regression weight (default per scenario)")
    parser.add_argument("--epochs", type=int, default=80)
    parser.add_argument("--batch-size", type=int, default=256)
    parser.add_argument("--learning-rate", type=float, default=None,
                        help="default per scenario")
    parser.add_argument("--weight-decay", type=float, default=1e-3)
    parser.add_argument("--n-total", type=int, default=DEFAULT_TOTAL)


def _scenario_from_args(args) -> ScenarioSpec:
    kind = Kind(args.scenario)
    sigma = args.noise_sigma
    if sigma is None:
        sigma = 0.1 if kind is Kind.NOISY else 0.0
    return ScenarioSpec(kind, sigma)


def _trial_spec_from_args(args, mode=None, lam=None) -> TrialSpec:
    scenario = _scenario_from_args(args)
    mode = Mode(mode if mode is not None else args.mode)
    if lam is None:
        lam = getattr(args, "lam", None)
    if lam is None and mode is not Mode.REG:
        lam = SCENARIO_LAMBDAS[scenario.kind]
    lr = args.learning_rate or SCENARIO_LEARNING_RATES[scenario.kind]
    train = TrainConfig(learning_rate=lr, epochs=args.epochs,
                        weight_decay=args.weight_decay,
                        batch_size=args.batch_size)
    return TrialSpec(
        args.function_seed, args.data_seed, args.train_seed, scenario,
        SamplingSpec(Regime(args.sampling)), mode,
        None if mode is Mode.REG else args.classes,
        None if mode is Mode.REG else lam,
        train, args.n_total,
    )


def _results_dir(args) -> Path:
    if getattr(args, "results_dir", None):
        return Path(args.results_dir)
    return Path(os.environ.get(RESULTS_ENV_VAR, "results"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regclslab",
        description="1D regression-vs-regression+classification experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    grid = sub.add_parser("grid", help="run and summarize experiment grids")
    grid_sub = grid.add_subparsers(dest="grid_command", required=True)
    grid_run = grid_sub.add_parser("run", help="execute a YAML grid config")
    grid_run.add_argument("config", nargs="?",
                          help="YAML config path (omit with --desk-scale)")
    grid_run.add_argument("--desk-scale", action="store_true",
                          help="use the built-in small grid")
    grid_run.add_argument("--dry-run", action="store_true",
                          help="validate and enumerate only")
    grid_run.add_argument("--results-dir",
                          help=f"default ${RESULTS_ENV_VAR} or ./results")
    grid_run.add_argument("--workers", type=int, default=1)
    grid_sum = grid_sub.add_parser("summarize", help="aggregate a results dir")
    grid_sum.add_argument("results_dir")
    grid_sum.add_argument("--out-dir", help="default: the results dir")

    trial = sub.add_parser("trial", help="single trials")
    trial_sub = trial.add_subparsers(dest="trial_command", required=True)
    trial_run = trial_sub.add_parser("run", help="run one trial")
    _add_trial_arguments(trial_run)
    trial_run.add_argument("--json", action="store_true",
                           help="print the full result record")

    sweep = sub.add_parser("sweep", help="hyperparameter sweeps")
    sweep_sub = sweep.add_subparsers(dest="sweep_command", required=True)
    sweep_lam = sweep_sub.add_parser("lambda", help="search the lambda grid")
    _add_trial_arguments(sweep_lam, with_lambda=False)
    sweep_lam.add_argument("--grid", default=",".join(f"{v:g}" for v in LAMBDA_GRID))
    sweep_lam.add_argument("--seeds",
                           default=",".join(str(s) for s in VALIDATION_SEEDS))

    ablate = sub.add_parser("ablate", help="ablation studies")
    ablate_sub = ablate.add_subparsers(dest="ablate_command", required=True)
    ablate_noise_p = ablate_sub.add_parser("noise", help="sweep target noise")
    ablate_noise_p.add_argument("--sigmas",
                                default=",".join(f"{v:g}" for v in NOISE_LEVELS))
    ablate_noise_p.add_argument("--function-seeds", default="0")
    ablate_noise_p.add_argument("--seeds",
                                default=",".join(str(s) for s in VALIDATION_SEEDS))
    ablate_noise_p.add_argument("--sampling",
                                choices=[r.value for r in Regime],
                                default=Regime.SEVERE.value)
    ablate_noise_p.add_argument("--classes", type=int, default=64)
    ablate_noise_p.add_argument("--lambda", dest="lam", type=float, default=None)
    ablate_noise_p.add_argument("--epochs", type=int, default=80)
    ablate_noise_p.add_argument("--batch-size", type=int, default=256)
    ablate_noise_p.add_argument("--learning-rate", type=float, default=None)
    ablate_noise_p.add_argument("--weight-decay", type=float, default=1e-3)
    ablate_noise_p.add_argument("--n-total", type=int, default=DEFAULT_TOTAL)

    export = sub.add_parser("export", help="plot-ready exports")
    export_sub = export.add_subparsers(dest="export_command", required=True)
    export_plot = export_sub.add_parser("plotdata",
                                        help="flat tables for plotting")
    export_plot.add_argument("results_dir")
    export_plot.add_argument("--out-dir", help="default: the results dir")

    return parser


def _cmd_grid_run(args) -> int:
    if args.desk_scale:
        config = desk_scale_config()
    elif args.config:
        config = load_grid_config(args.config)
    else:
        print("either a config path or --desk-scale is required",
              file=sys.stderr)
        return 2
    plan = plan_grid(config)
    by_mode = {}
    for spec in plan:
        by_mode[spec.mode.value] = by_mode.get(spec.mode.value, 0) + 1
    print(f"planned trials: {len(plan)} "
          + " ".join(f"{k}={v}" for k, v in sorted(by_mode.items())))
    if args.dry_run:
        return 0
    results_dir = _results_dir(args)

    def progress(spec, result):
        print(f"  done {spec.mode.value} fn={spec.function_seed} "
              f"{spec.scenario.kind.value}/{spec.sampling.regime.value} "
              f"C={spec.classes} lambda={spec.lam} seed={spec.data_seed} "
              f"test_mse={result.test_mse:.5f} ({result.wall_time:.1f}s)")

    report = run_grid(config, results_dir, workers=args.workers,
                      progress=progress)
    print(f"ran {report.ran}, skipped {report.skipped} already-complete, "
          f"{len(report.failures)} failed -> {results_dir}")
    for fingerprint, error in report.failures:
        print(f"  FAILED {fingerprint}: {error}", file=sys.stderr)
    return 0


def _cmd_grid_summarize(args) -> int:
    records = load_records(args.results_dir)
    if not records:
        print(f"no records under {args.results_dir}", file=sys.stderr)
        return 1
    summary = summarize_records(records)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.results_dir)
    paths = write_summary(summary, out_dir)
    print(summary_tables_text(summary))
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_trial_run(args) -> int:
    spec = _trial_spec_from_args(args)
    result = run_trial(spec)
    if args.json:
        print(json.dumps(result.to_record()))
    else:
        print(f"fingerprint {result.fingerprint}")
        print(f"val_mse  {result.val_mse:.6f}")
        print(f"test_mse {result.test_mse:.6f}")
        if result.merged_classes is not None:
            print(f"merged_classes {result.merged_classes}")
        if result.classifier_diverged is not None:
            print(f"classifier_diverged {result.classifier_diverged}")
    return 0


def _cmd_sweep_lambda(args) -> int:
    grid = _csv_values(args.grid, float)
    seeds = _csv_values(args.seeds, int)
    base = _trial_spec_from_args(args, lam=grid[0])
    if base.mode is Mode.REG:
        print("lambda sweeps need a classification mode", file=sys.stderr)
        return 2
    search = lambda_search(grid, base, seeds=seeds)
    print("lambda     mean_val_mse")
    for lam, value in search.table:
        marker = " *" if lam == search.best else ""
        print(f"{lam:<10g} {value:.6f}{marker}")
    print(f"best lambda: {search.best:g}")
    return 0


def _cmd_ablate_noise(args) -> int:
    train = TrainConfig(
        learning_rate=args.learning_rate or SCENARIO_LEARNING_RATES[Kind.NOISY],
        epochs=args.epochs, weight_decay=args.weight_decay,
        batch_size=args.batch_size,
    )
    rows = ablate_noise(
        sigmas=_csv_values(args.sigmas, float),
        function_seeds=_csv_values(args.function_seeds, int),
        regime=Regime(args.sampling),
        classes=args.classes,
        lam=args.lam,
        seeds=_csv_values(args.seeds, int),
        train=train,
        n_total=args.n_total,
    )
    print("noise_sigma mode          mean_test_mse std_test_mse n")
    for row in rows:
        print(f"{row['noise_sigma']:<11g} {row['mode']:<13} "
              f"{row['mean_test_mse']:<13.6f} {row['std_test_mse']:<12.6f} "
              f"{row['n']}")
    return 0


def _cmd_export_plotdata(args) -> int:
    records = load_records(args.results_dir)
    if not records:
        print(f"no records under {args.results_dir}", file=sys.stderr)
        return 1
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.results_dir)
    paths = export_plotdata(records, out_dir)
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "grid":
        if args.grid_command == "run":
            return _cmd_grid_run(args)
        return _cmd_grid_summarize(args)
    if args.command == "trial":
        return _cmd_trial_run(args)
    if args.command == "sweep":
        return _cmd_sweep_lambda(args)
    if args.command == "ablate":
        return _cmd_ablate_noise(args)
    if args.command == "export":
        return _cmd_export_plotdata(args)
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
