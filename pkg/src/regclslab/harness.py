"""Experiment orchestration: one trial end to end, lambda search on the
validation splits, gap/help-rate metrics, the resume-safe grid runner, and
the aggregation tables."""

import csv
import hashlib
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from .binning import assign_classes, build_class_scheme, uniform_bins
from .losses import LossBreakdown, mse
from .model import TrainConfig, predict, regression_view, train_model
from .sampling import (
    DEFAULT_TOTAL,
    Kind,
    Regime,
    SamplingSpec,
    ScenarioSpec,
    build_dataset,
    build_ood_dataset,
)
from .synth import sample_function


class Mode(str, Enum):
    REG = "reg"
    REG_CLS = "reg_cls"
    REG_CLS_BAL = "reg_cls_bal"


ALLOWED_CLASS_COUNTS = (4, 16, 64, 256, 1024)
DEFAULT_SEEDS = (0, 421, 8125, 2481, 849)
VALIDATION_SEEDS = (0, 421, 8125)
LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4)
NOISE_LEVELS = (0.05, 0.1, 0.5)
SCENARIO_LEARNING_RATES = {Kind.CLEAN: 1e-3, Kind.NOISY: 1e-2, Kind.OOD: 1e-4}
SCENARIO_LAMBDAS = {Kind.CLEAN: 1e2, Kind.NOISY: 1e3, Kind.OOD: 1e4}

RESULTS_ENV_VAR = "REGCLSLAB_RESULTS"
RESULTS_FILE = "results.jsonl"
FAILURES_FILE = "failures.jsonl"

_KIND_ORDER = (Kind.CLEAN, Kind.NOISY, Kind.OOD)
_REGIME_ORDER = (Regime.UNIFORM, Regime.MILD, Regime.MODERATE, Regime.SEVERE)
_MODE_ORDER = (Mode.REG, Mode.REG_CLS, Mode.REG_CLS_BAL)


@dataclass(frozen=True)
class TrialSpec:
    """Everything one trial depends on; hashable into a fingerprint.

    The plain-regression baseline ignores the class count and lambda, so
    both are normalised to None in that mode and equivalent specs share a
    fingerprint.
    """

    function_seed: int
    data_seed: int
    train_seed: int
    scenario: ScenarioSpec
    sampling: SamplingSpec
    mode: Mode
    classes: int | None = None
    lam: float | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    n_total: int = DEFAULT_TOTAL

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.REG:
            object.__setattr__(self, "classes", None)
            object.__setattr__(self, "lam", None)
        else:
            if self.classes not in ALLOWED_CLASS_COUNTS:
                raise ValueError(
                    f"class count must be one of {ALLOWED_CLASS_COUNTS}"
                )
            if self.lam is None or self.lam < 0:
                raise ValueError("classification modes need lam >= 0")

    def to_record(self) -> dict:
        return {
            "function_seed": self.function_seed,
            "data_seed": self.data_seed,
            "train_seed": self.train_seed,
            "scenario": self.scenario.to_record(),
            "sampling": self.sampling.to_record(),
            "mode": self.mode.value,
            "classes": self.classes,
            "lambda": self.lam,
            "train": self.train.to_record(),
            "n_total": self.n_total,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_record(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def trial_spec_from_record(record: dict) -> TrialSpec:
    """Rebuild a spec from its result-record form."""
    scenario = ScenarioSpec(**record["scenario"])
    sampling = SamplingSpec(**record["sampling"])
    train = TrainConfig(**record["train"])
    return TrialSpec(
        function_seed=record["function_seed"],
        data_seed=record["data_seed"],
        train_seed=record["train_seed"],
        scenario=scenario,
        sampling=sampling,
        mode=Mode(record["mode"]),
        classes=record["classes"],
        lam=record["lambda"],
        train=train,
        n_total=record["n_total"],
    )


@dataclass(frozen=True)
class TrialResult:
    fingerprint: str
    spec: dict
    function: dict
    val_mse: float
    test_mse: float
    trace: tuple[LossBreakdown, ...]
    merged_classes: int | None
    classifier_diverged: bool | None
    scheme: dict | None
    wall_time: float

    def to_record(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "spec": self.spec,
            "function": self.function,
            "val_mse": self.val_mse,
            "test_mse": self.test_mse,
            "trace": [t.to_record() for t in self.trace],
            "merged_classes": self.merged_classes,
            "classifier_diverged": self.classifier_diverged,
            "scheme": self.scheme,
            "wall_time": self.wall_time,
        }


def classifier_diverged(trace) -> bool:
    """Final training cross-entropy above its initial value."""
    return trace[-1].cross_entropy > trace[0].cross_entropy


def build_trial_dataset(spec: TrialSpec):
    params = sample_function(np.random.default_rng(spec.function_seed))
    if spec.scenario.kind is Kind.OOD:
        data = build_ood_dataset(params, spec.scenario, spec.sampling,
                                 spec.data_seed, spec.n_total)
    else:
        data = build_dataset(params, spec.scenario, spec.sampling,
                             spec.data_seed, spec.n_total)
    return params, data


def run_trial(spec: TrialSpec, keep_override=None) -> TrialResult:
    """Train one configuration end to end and measure regression quality.

    Deterministic in the spec: the function comes from function_seed, the
    dataset from data_seed, and initialisation/shuffling/keep decisions
    from train_seed. Validation and test MSE always use the regression
    output alone.

    keep_override is a diagnostic hook replacing the per-class keep
    probabilities (an all-zero array makes the classification loss inert).
    """
    start = time.perf_counter()
    params, data = build_trial_dataset(spec)

    classes = keep_prob = head = scheme_record = merged = None
    lam_eff = 1.0
    if spec.mode is not Mode.REG:
        lam_eff = float(spec.lam)
        train_y = data.train.y
        if spec.mode is Mode.REG_CLS:
            edges = uniform_bins(float(train_y.min()), float(train_y.max()),
                                 spec.classes)
            classes = assign_classes(edges, train_y)
            head = spec.classes
            scheme_record = {
                "edges": edges.tolist(),
                "mapping": None,
                "counts": np.bincount(classes, minlength=spec.classes).tolist(),
                "keep_prob": None,
            }
        else:
            scheme = build_class_scheme(train_y, spec.classes)
            classes = scheme.labels(train_y)
            keep_prob = scheme.keep_prob
            head = scheme.n_merged
            merged = scheme.n_merged
            scheme_record = scheme.to_record()
    if keep_override is not None:
        keep_prob = np.asarray(keep_override, dtype=float)

    config = replace(spec.train, lam=lam_eff, seed=spec.train_seed)
    trained = train_model(data.train.x, data.train.y, config,
                          classes=classes, keep_prob=keep_prob,
                          head_classes=head)
    view = regression_view(trained.state)
    val_mse = mse(data.val.y, predict(view, data.val.x))
    test_mse = mse(data.test.y, predict(view, data.test.x))
    diverged = classifier_diverged(trained.trace) if classes is not None else None

    return TrialResult(
        fingerprint=spec.fingerprint(),
        spec=spec.to_record(),
        function=params.to_record(),
        val_mse=val_mse,
        test_mse=test_mse,
        trace=tuple(trained.trace),
        merged_classes=merged,
        classifier_diverged=diverged,
        scheme=scheme_record,
        wall_time=time.perf_counter() - start,
    )


@dataclass(frozen=True)
class LambdaSearchResult:
    best: float
    table: tuple[tuple[float, float], ...]       # (lambda, mean val MSE)
    trials: dict


def lambda_search(grid, base_spec: TrialSpec, seeds=VALIDATION_SEEDS,
                  runner=run_trial) -> LambdaSearchResult:
    """Pick the lambda with the lowest mean validation MSE across
    repetition seeds (each seed drives both the dataset and training).
    Exact ties go to the larger lambda.
    """
    values = sorted({float(g) for g in grid})
    if not values:
        raise ValueError("empty lambda grid")
    table = []
    trials = {}
    for lam in values:
        results = tuple(
            runner(replace(base_spec, lam=lam, data_seed=s, train_seed=s))
            for s in seeds
        )
        trials[lam] = results
        table.append((lam, float(np.mean([r.val_mse for r in results]))))
    best, best_val = None, np.inf
    for lam, val in table:
        if val <= best_val:
            best, best_val = lam, val
    return LambdaSearchResult(best, tuple(table), trials)


def gap_metric(reg_mses, regcls_mses) -> float:
    """Mean absolute difference between paired test MSE values."""
    a = np.asarray(reg_mses, dtype=float)
    b = np.asarray(regcls_mses, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("need two equal-length non-empty vectors")
    return float(np.mean(np.abs(a - b)))


def helps_percentage(reg_mses, regcls_mses) -> float:
    """Share of pairs (in percent) where classification lowered the MSE."""
    a = np.asarray(reg_mses, dtype=float)
    b = np.asarray(regcls_mses, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("need two equal-length non-empty vectors")
    return 100.0 * float(np.mean(b < a))


# --- grid configuration -----------------------------------------------------


@dataclass(frozen=True)
class GridScenario:
    """One scenario axis entry with an optional lambda grid of its own."""

    spec: ScenarioSpec
    lambdas: tuple[float, ...] | None = None


@dataclass(frozen=True)
class GridConfig:
    function_seeds: tuple[int, ...]
    scenarios: tuple[GridScenario, ...]
    samplings: tuple[Regime, ...]
    modes: tuple[Mode, ...]
    class_counts: tuple[int, ...]
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    lambdas: tuple[float, ...] | None = None
    learning_rate: float | None = None   # None: per-scenario default
    epochs: int = 80
    batch_size: int = 256
    weight_decay: float = 1e-3
    n_total: int = DEFAULT_TOTAL

    def __post_init__(self):
        for name in ("function_seeds", "scenarios", "samplings", "modes",
                     "class_counts", "seeds"):
            values = getattr(self, name)
            if not values:
                raise ValueError(f"{name} must be non-empty")
            if len(set(values)) != len(values):
                raise ValueError(f"{name} contains duplicates")
        for c in self.class_counts:
            if c not in ALLOWED_CLASS_COUNTS:
                raise ValueError(
                    f"class count {c} not in {ALLOWED_CLASS_COUNTS}"
                )
        for grid in (self.lambdas, *(s.lambdas for s in self.scenarios)):
            if grid is not None and any(lam <= 0 for lam in grid):
                raise ValueError("lambda values must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.n_total < 3:
            raise ValueError("n_total must be at least 3")

    def scenario_lambdas(self, entry: GridScenario) -> tuple[float, ...]:
        if entry.lambdas:
            return entry.lambdas
        if self.lambdas:
            return self.lambdas
        return (SCENARIO_LAMBDAS[entry.spec.kind],)

    def train_config(self, scenario: ScenarioSpec) -> TrainConfig:
        lr = self.learning_rate or SCENARIO_LEARNING_RATES[scenario.kind]
        return TrainConfig(learning_rate=lr, epochs=self.epochs,
                           weight_decay=self.weight_decay,
                           batch_size=self.batch_size)


_CONFIG_KEYS = {
    "function_seeds", "scenarios", "samplings", "modes", "class_counts",
    "seeds", "lambdas", "learning_rate", "epochs", "batch_size",
    "weight_decay", "n_total",
}


def grid_config_from_dict(raw: dict) -> GridConfig:
    """Validate a parsed config document; unknown keys are an error."""
    if not isinstance(raw, dict):
        raise ValueError("config must be a mapping")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in ("function_seeds", "scenarios", "samplings", "modes",
                "class_counts"):
        if key not in raw:
            raise ValueError(f"config misses required key '{key}'")

    scenarios = []
    for entry in raw["scenarios"]:
        if isinstance(entry, str):
            entry = {"kind": entry}
        entry = dict(entry)
        lambdas = entry.pop("lambdas", None)
        single = entry.pop("lambda", None)
        if lambdas is None and single is not None:
            lambdas = [single]
        spec = ScenarioSpec(kind=entry.pop("kind"),
                            noise_sigma=float(entry.pop("noise_sigma", 0.0)))
        if entry:
            raise ValueError(f"unknown scenario keys: {sorted(entry)}")
        scenarios.append(GridScenario(
            spec, tuple(float(v) for v in lambdas) if lambdas else None
        ))

    kwargs = {
        "function_seeds": tuple(int(s) for s in raw["function_seeds"]),
        "scenarios": tuple(scenarios),
        "samplings": tuple(Regime(s) for s in raw["samplings"]),
        "modes": tuple(Mode(m) for m in raw["modes"]),
        "class_counts": tuple(int(c) for c in raw["class_counts"]),
    }
    if "seeds" in raw:
        kwargs["seeds"] = tuple(int(s) for s in raw["seeds"])
    if raw.get("lambdas") is not None:
        kwargs["lambdas"] = tuple(float(v) for v in raw["lambdas"])
    if raw.get("learning_rate") is not None:
        kwargs["learning_rate"] = float(raw["learning_rate"])
    for key in ("epochs", "batch_size", "n_total"):
        if key in raw:
            kwargs[key] = int(raw[key])
    if "weight_decay" in raw:
        kwargs["weight_decay"] = float(raw["weight_decay"])
    return GridConfig(**kwargs)


def load_grid_config(path) -> GridConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return grid_config_from_dict(yaml.safe_load(handle))


def desk_scale_config() -> GridConfig:
    """A small grid exercising every axis in minutes rather than hours."""
    return GridConfig(
        function_seeds=(0, 1, 2),
        scenarios=(
            GridScenario(ScenarioSpec(Kind.CLEAN)),
            GridScenario(ScenarioSpec(Kind.NOISY, 0.1)),
        ),
        samplings=(Regime.UNIFORM, Regime.SEVERE),
        modes=(Mode.REG, Mode.REG_CLS, Mode.REG_CLS_BAL),
        class_counts=(16, 64),
        seeds=(0, 421, 8125),
    )


def paper_scale_config() -> GridConfig:
    """The full protocol: 10 functions x 3 scenarios x 4 samplings x
    5 class counts x 5 seeds per classification mode."""
    return GridConfig(
        function_seeds=tuple(range(10)),
        scenarios=(
            GridScenario(ScenarioSpec(Kind.CLEAN)),
            GridScenario(ScenarioSpec(Kind.NOISY, 0.1)),
            GridScenario(ScenarioSpec(Kind.OOD)),
        ),
        samplings=(Regime.UNIFORM, Regime.MILD, Regime.MODERATE,
                   Regime.SEVERE),
        modes=(Mode.REG, Mode.REG_CLS, Mode.REG_CLS_BAL),
        class_counts=ALLOWED_CLASS_COUNTS,
        seeds=DEFAULT_SEEDS,
    )


def plan_grid(config: GridConfig) -> list[TrialSpec]:
    """Enumerate every trial of the cross-product (the grid dry run).

    The plain-regression baseline does not depend on class count or
    lambda, so it appears once per (function, scenario, sampling, seed)
    cell and is paired against every class count during aggregation.
    """
    specs = []
    for function_seed in config.function_seeds:
        for entry in config.scenarios:
            train = config.train_config(entry.spec)
            for regime in config.samplings:
                sampling = SamplingSpec(regime)
                for mode in config.modes:
                    if mode is Mode.REG:
                        for seed in config.seeds:
                            specs.append(TrialSpec(
                                function_seed, seed, seed, entry.spec,
                                sampling, mode, None, None, train,
                                config.n_total,
                            ))
                        continue
                    for classes in config.class_counts:
                        for lam in config.scenario_lambdas(entry):
                            for seed in config.seeds:
                                specs.append(TrialSpec(
                                    function_seed, seed, seed, entry.spec,
                                    sampling, mode, classes, lam, train,
                                    config.n_total,
                                ))
    return specs


# --- grid execution ----------------------------------------------------------


@dataclass
class GridReport:
    planned: int
    ran: int
    skipped: int
    failures: list[tuple[str, str]]   # (fingerprint, error)


def load_records(results_dir) -> list[dict]:
    path = Path(results_dir) / RESULTS_FILE
    if not path.exists():
        return []
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def run_grid(config: GridConfig, results_dir, workers: int = 1,
             runner=run_trial, progress=None) -> GridReport:
    """Run every planned trial not already recorded under results_dir.

    Records append to results.jsonl as trials finish (one writer); failed
    trials land in failures.jsonl with their error and do not abort the
    rest. Re-running with existing results skips completed fingerprints.
    """
    results_dir = Path(results_dir)
    results_dir.mkdir(parents=True, exist_ok=True)
    plan = plan_grid(config)
    done = {record["fingerprint"] for record in load_records(results_dir)}
    todo = []
    for spec in plan:
        fp = spec.fingerprint()
        if fp not in done:
            done.add(fp)
            todo.append(spec)

    failures: list[tuple[str, str]] = []
    ran = 0
    with open(results_dir / RESULTS_FILE, "a", encoding="utf-8") as sink:
        def record_result(spec, result):
            nonlocal ran
            sink.write(json.dumps(result.to_record()) + "\n")
            sink.flush()
            ran += 1
            if progress:
                progress(spec, result)

        if workers <= 1:
            for spec in todo:
                try:
                    result = runner(spec)
                except Exception as exc:  # noqa: BLE001 - part of the report
                    failures.append((spec.fingerprint(), repr(exc)))
                    continue
                record_result(spec, result)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(runner, spec): spec for spec in todo}
                for future in as_completed(futures):
                    spec = futures[future]
                    try:
                        result = future.result()
                    except Exception as exc:  # noqa: BLE001
                        failures.append((spec.fingerprint(), repr(exc)))
                        continue
                    record_result(spec, result)

    if failures:
        with open(results_dir / FAILURES_FILE, "a", encoding="utf-8") as sink:
            for fingerprint, error in failures:
                sink.write(json.dumps(
                    {"fingerprint": fingerprint, "error": error}) + "\n")
    return GridReport(len(plan), ran, len(plan) - len(todo), failures)


# --- aggregation --------------------------------------------------------------


def _scenario_key(spec: dict) -> tuple:
    return (spec["scenario"]["kind"], spec["scenario"]["noise_sigma"])


def _reg_twin_fingerprint(spec: dict) -> str:
    reg = trial_spec_from_record(spec)
    return replace(reg, mode=Mode.REG, classes=None, lam=None).fingerprint()


@dataclass
class Summary:
    """Aggregates of one result set.

    mse_rows: one row per (scenario, sampling, mode, classes, lambda) cell
    with mean/std of test MSE; gap_rows: mean absolute paired difference to
    the regression baseline; help_rows: share of pairs the classification
    loss improved, pooled over classes, lambdas and repetitions.
    """

    mse_rows: list[dict]
    gap_rows: list[dict]
    help_rows: list[dict]


def summarize_records(records: list[dict]) -> Summary:
    by_cell: dict[tuple, list[float]] = {}
    reg_by_fp: dict[str, dict] = {}
    for record in records:
        spec = record["spec"]
        if spec["mode"] == Mode.REG.value:
            reg_by_fp[record["fingerprint"]] = record
        kind, sigma = _scenario_key(spec)
        key = (kind, sigma, spec["sampling"]["regime"], spec["mode"],
               spec["classes"], spec["lambda"])
        by_cell.setdefault(key, []).append(record["test_mse"])

    mse_rows = []
    for key in sorted(by_cell, key=_cell_sort_key):
        values = by_cell[key]
        mse_rows.append({
            "scenario": key[0], "noise_sigma": key[1], "sampling": key[2],
            "mode": key[3], "classes": key[4], "lambda": key[5],
            "n": len(values),
            "mean_test_mse": float(np.mean(values)),
            "std_test_mse": float(np.std(values)),
        })

    # pair every classification record with its regression twin
    pairs: dict[tuple, list[tuple[float, float]]] = {}
    for record in records:
        spec = record["spec"]
        if spec["mode"] == Mode.REG.value:
            continue
        twin = reg_by_fp.get(_reg_twin_fingerprint(spec))
        if twin is None:
            continue
        kind, sigma = _scenario_key(spec)
        cell = (kind, sigma, spec["sampling"]["regime"], spec["mode"],
                spec["classes"])
        pairs.setdefault(cell, []).append(
            (twin["test_mse"], record["test_mse"])
        )

    gap_rows = []
    help_acc: dict[tuple, list[tuple[float, float]]] = {}
    for cell in sorted(pairs, key=_cell_sort_key):
        reg_vals = [p[0] for p in pairs[cell]]
        cls_vals = [p[1] for p in pairs[cell]]
        gap_rows.append({
            "scenario": cell[0], "noise_sigma": cell[1], "sampling": cell[2],
            "mode": cell[3], "classes": cell[4],
            "n_pairs": len(reg_vals),
            "gap": gap_metric(reg_vals, cls_vals),
        })
        help_acc.setdefault(cell[:4], []).extend(pairs[cell])

    help_rows = []
    for cell in sorted(help_acc, key=_cell_sort_key):
        reg_vals = [p[0] for p in help_acc[cell]]
        cls_vals = [p[1] for p in help_acc[cell]]
        helped = int(np.sum(np.asarray(cls_vals) < np.asarray(reg_vals)))
        help_rows.append({
            "scenario": cell[0], "noise_sigma": cell[1], "sampling": cell[2],
            "mode": cell[3],
            "helped": helped, "total": len(reg_vals),
            "percentage": helps_percentage(reg_vals, cls_vals),
        })
    return Summary(mse_rows, gap_rows, help_rows)


def _cell_sort_key(cell: tuple) -> tuple:
    def rank(value, order):
        values = [v.value for v in order]
        return values.index(value) if value in values else len(values)

    parts = [rank(cell[0], _KIND_ORDER), cell[1], rank(cell[2], _REGIME_ORDER)]
    if len(cell) > 3:
        parts.append(rank(cell[3], _MODE_ORDER))
    for extra in cell[4:]:
        parts.append(-1 if extra is None else extra)
    return tuple(parts)


def _scenario_label(kind: str, sigma: float) -> str:
    return f"{kind} (sigma={sigma:g})" if sigma else kind


def summary_tables_text(summary: Summary) -> str:
    """Human-readable grid: scenario rows x sampling columns, per class
    count one mean+-std entry per mode, plus the per-cell gap."""
    lines = []
    cells: dict[tuple, list[dict]] = {}
    for row in summary.mse_rows:
        cells.setdefault(
            (row["scenario"], row["noise_sigma"], row["sampling"]), []
        ).append(row)
    gaps = {
        (g["scenario"], g["noise_sigma"], g["sampling"], g["mode"],
         g["classes"]): g["gap"]
        for g in summary.gap_rows
    }
    scenario_keys = sorted({k[:2] for k in cells},
                           key=lambda k: _cell_sort_key((*k, "")))
    for kind, sigma in scenario_keys:
        lines.append(f"=== {_scenario_label(kind, sigma)} ===")
        regimes = sorted({k[2] for k in cells if k[:2] == (kind, sigma)},
                         key=lambda r: _cell_sort_key((kind, sigma, r)))
        for regime in regimes:
            lines.append(f"  [{regime}]")
            for row in cells[(kind, sigma, regime)]:
                label = row["mode"]
                if row["classes"] is not None:
                    label += f" C={row['classes']}"
                if row["lambda"] is not None:
                    label += f" lambda={row['lambda']:g}"
                entry = (f"    {label}: {row['mean_test_mse']:.5f}"
                         f" +- {row['std_test_mse']:.5f} (n={row['n']})")
                gap = gaps.get((kind, sigma, regime, row["mode"],
                                row["classes"]))
                if gap is not None:
                    entry += f"  gap={gap:.5f}"
                lines.append(entry)
        for row in summary.help_rows:
            if (row["scenario"], row["noise_sigma"]) != (kind, sigma):
                continue
            lines.append(
                f"  help rate [{row['sampling']}] {row['mode']}: "
                f"{row['percentage']:.2f}% ({row['helped']}/{row['total']})"
            )
        lines.append("")
    return "\n".join(lines)


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_summary(summary: Summary, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "summary_mse.csv", out_dir / "gaps.csv",
             out_dir / "help_rates.csv", out_dir / "summary_tables.txt"]
    _write_csv(paths[0], summary.mse_rows)
    _write_csv(paths[1], summary.gap_rows)
    _write_csv(paths[2], summary.help_rows)
    paths[3].write_text(summary_tables_text(summary), encoding="utf-8")
    return paths


def export_plotdata(records: list[dict], out_dir) -> list[Path]:
    """Flat per-(scenario, sampling) tables with columns class_count, mode,
    mean, std; the regression baseline repeats for every class count so
    plots can draw it as a constant line."""
    summary = summarize_records(records)
    groups: dict[tuple, list[dict]] = {}
    class_counts: dict[tuple, set] = {}
    for row in summary.mse_rows:
        key = (row["scenario"], row["noise_sigma"], row["sampling"])
        groups.setdefault(key, []).append(row)
        if row["classes"] is not None:
            class_counts.setdefault(key, set()).add(row["classes"])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for key in sorted(groups, key=lambda k: _cell_sort_key((*k,))):
        kind, sigma, regime = key
        cells: dict[tuple, list[float]] = {}
        weights: dict[tuple, list[int]] = {}
        for row in groups[key]:
            counts = ([row["classes"]] if row["classes"] is not None
                      else sorted(class_counts.get(key, {0})))
            for c in counts:
                cells.setdefault((c, row["mode"]), []).append(
                    (row["mean_test_mse"], row["std_test_mse"], row["n"])
                )
        rows = []
        for (c, mode) in sorted(cells, key=lambda k: (k[0], k[1])):
            stats = cells[(c, mode)]
            # pool lambda sub-cells back into one (mean of cell means,
            # pooled std) entry per class count and mode
            means = np.array([s[0] for s in stats])
            stds = np.array([s[1] for s in stats])
            ns = np.array([s[2] for s in stats])
            total = ns.sum()
            mean = float(np.sum(means * ns) / total)
            second = np.sum((stds ** 2 + means ** 2) * ns) / total
            rows.append({
                "class_count": c,
                "mode": mode,
                "mean": mean,
                "std": float(np.sqrt(max(second - mean ** 2, 0.0))),
            })
        name = f"plot_{kind}" + (f"_sigma{sigma:g}" if sigma else "")
        path = out_dir / f"{name}_{regime}.csv"
        _write_csv(path, rows)
        paths.append(path)
    return paths


def recompute_cell_stats(records: list[dict]) -> dict[tuple, tuple[float, float]]:
    """Independent mean/std recomputation (exact-rational mean via the
    statistics module) keyed like the summary rows; used to audit the
    aggregation path."""
    cells: dict[tuple, list[float]] = {}
    for record in records:
        spec = record["spec"]
        kind, sigma = _scenario_key(spec)
        key = (kind, sigma, spec["sampling"]["regime"], spec["mode"],
               spec["classes"], spec["lambda"])
        cells.setdefault(key, []).append(record["test_mse"])
    return {
        key: (statistics.fmean(vals), statistics.pstdev(vals))
        for key, vals in cells.items()
    }


# --- noise ablation ----------------------------------------------------------


def ablate_noise(sigmas=NOISE_LEVELS, function_seeds=(0,),
                 regime: Regime = Regime.SEVERE, classes: int = 64,
                 lam: float | None = None, seeds=VALIDATION_SEEDS,
                 train: TrainConfig | None = None, n_total: int = DEFAULT_TOTAL,
                 runner=run_trial) -> list[dict]:
    """Sweep the target-noise level and compare the three training modes.

    Returns one row per (sigma, mode) with mean/std test MSE over the
    functions x seeds repetitions.
    """
    rows = []
    for sigma in sigmas:
        scenario = ScenarioSpec(Kind.NOISY, float(sigma))
        cfg = train or TrainConfig(
            learning_rate=SCENARIO_LEARNING_RATES[Kind.NOISY])
        lam_eff = lam if lam is not None else SCENARIO_LAMBDAS[Kind.NOISY]
        for mode in (Mode.REG, Mode.REG_CLS, Mode.REG_CLS_BAL):
            values = []
            for function_seed in function_seeds:
                for seed in seeds:
                    spec = TrialSpec(
                        function_seed, seed, seed, scenario,
                        SamplingSpec(regime), mode,
                        None if mode is Mode.REG else classes,
                        None if mode is Mode.REG else lam_eff,
                        cfg, n_total,
                    )
                    values.append(runner(spec).test_mse)
            rows.append({
                "noise_sigma": float(sigma),
                "mode": mode.value,
                "mean_test_mse": float(np.mean(values)),
                "std_test_mse": float(np.std(values)),
                "n": len(values),
            })
    return rows
