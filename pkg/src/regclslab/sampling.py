"""Train/val/test builders for the data scenarios (clean targets, noisy
targets, out-of-distribution regions) crossed with the sampling regimes
(uniform plus three strengths of target imbalance)."""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .synth import FunctionParams, evaluate, grid_range


class Kind(str, Enum):
    CLEAN = "clean"
    NOISY = "noisy"
    OOD = "ood"


class Regime(str, Enum):
    UNIFORM = "uniform"
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


VARIANCE_RATIOS = {Regime.MILD: 0.3, Regime.MODERATE: 0.1, Regime.SEVERE: 0.03}
PEAK_FRACTION = 0.75
DEFAULT_TOTAL = 30_000
# peak centres avoid the outer 10% of the target range, so the peak region
# never degenerates to an unreachable sliver at the extremes
CENTER_MARGIN = 0.10
OOD_INTERVAL_COUNT = 8
OOD_OVERLAP = 0.25

_REJECTION_CHUNK = 1 << 16
_REJECTION_BUDGET_PER_SAMPLE = 1_000
_REJECTION_BUDGET_FLOOR = 1_000_000


class UnreachablePeakError(RuntimeError):
    """The peak region overlaps the reachable targets too thinly to sample."""


@dataclass(frozen=True)
class ScenarioSpec:
    kind: Kind
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.NOISY:
            if self.noise_sigma <= 0:
                raise ValueError("noisy data needs noise_sigma > 0")
        elif self.noise_sigma != 0:
            raise ValueError(f"{self.kind.value} data must have noise_sigma = 0")

    def to_record(self) -> dict:
        return {"kind": self.kind.value, "noise_sigma": self.noise_sigma}


@dataclass(frozen=True)
class SamplingSpec:
    """One sampling regime; peak parameters apply to the imbalanced regimes.

    peak_center_y is usually left unset and drawn per repetition inside the
    dataset builder; the built dataset carries the resolved value.
    """

    regime: Regime
    variance_ratio: float | None = None
    peak_fraction: float = PEAK_FRACTION
    peak_center_y: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if self.regime is Regime.UNIFORM:
            if self.variance_ratio is not None or self.peak_center_y is not None:
                raise ValueError("uniform sampling has no peak parameters")
        else:
            canonical = VARIANCE_RATIOS[self.regime]
            if self.variance_ratio is None:
                object.__setattr__(self, "variance_ratio", canonical)
            elif self.variance_ratio != canonical:
                raise ValueError(
                    f"{self.regime.value} sampling fixes variance_ratio = {canonical}"
                )
            if not 0.0 < self.peak_fraction < 1.0:
                raise ValueError("peak_fraction must lie in (0, 1)")

    def to_record(self) -> dict:
        return {
            "regime": self.regime.value,
            "variance_ratio": self.variance_ratio,
            "peak_fraction": self.peak_fraction,
            "peak_center_y": self.peak_center_y,
        }


@dataclass(frozen=True, eq=False)
class Split:
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True, eq=False)
class OodRegions:
    """Interval sets (rows of [lo, hi]) the train and eval x were drawn from."""

    train_intervals: np.ndarray
    eval_intervals: np.ndarray

    def overlap_fraction(self) -> float:
        shared = 0.0
        for lo_a, hi_a in self.train_intervals:
            for lo_b, hi_b in self.eval_intervals:
                shared += max(0.0, min(hi_a, hi_b) - max(lo_a, lo_b))
        total = float(np.sum(self.eval_intervals[:, 1] - self.eval_intervals[:, 0]))
        return shared / total


@dataclass(frozen=True, eq=False)
class SplitDataset:
    train: Split
    val: Split
    test: Split
    scenario: ScenarioSpec
    sampling: SamplingSpec   # peak centre resolved to the drawn value
    seed: int
    regions: OodRegions | None = None


def split_sizes(n_total: int) -> tuple[int, int, int]:
    """Near-equal train/val/test sizes summing to n_total."""
    if n_total < 3:
        raise ValueError("need at least 3 samples")
    base, extra = divmod(int(n_total), 3)
    return base + (1 if extra > 0 else 0), base + (1 if extra > 1 else 0), base


def _rejection_sample(rng, n, draw, accept, what: str) -> np.ndarray:
    """Vectorized rejection sampling with a hard draw budget."""
    budget = max(_REJECTION_BUDGET_FLOOR, n * _REJECTION_BUDGET_PER_SAMPLE)
    drawn = 0
    have = 0
    parts = []
    while have < n:
        if drawn >= budget:
            raise UnreachablePeakError(
                f"{what}: accepted {have}/{n} after {drawn} draws"
            )
        chunk = draw(_REJECTION_CHUNK)
        drawn += len(chunk)
        good = chunk[accept(chunk)]
        parts.append(good)
        have += len(good)
    return np.concatenate(parts)[:n]


def _peak_interval(params: FunctionParams, sampling: SamplingSpec) -> tuple[float, float]:
    lo_y, hi_y = grid_range(params)
    half = sampling.variance_ratio * (hi_y - lo_y) / 2.0
    return sampling.peak_center_y - half, sampling.peak_center_y + half


def _draw_regime(rng, params, sampling, draw_uniform, n, what):
    """n inputs under the sampling regime, given a uniform draw over the
    admissible x region."""
    if sampling.regime is Regime.UNIFORM:
        return draw_uniform(n)
    lo, hi = _peak_interval(params, sampling)

    def in_peak(x):
        y = evaluate(params, x)
        return (y >= lo) & (y <= hi)

    n_peak = round(sampling.peak_fraction * n)
    peak_x = _rejection_sample(
        rng, n_peak, draw_uniform, in_peak, f"{what} peak region"
    )
    rest_x = _rejection_sample(
        rng, n - n_peak, draw_uniform, lambda x: ~in_peak(x), f"{what} off-peak region"
    )
    return np.concatenate([peak_x, rest_x])


def _noisy(rng, scenario, ys):
    if scenario.kind is Kind.NOISY:
        return ys + rng.uniform(-scenario.noise_sigma, scenario.noise_sigma, len(ys))
    return ys


def build_dataset(params: FunctionParams, scenario: ScenarioSpec,
                  sampling: SamplingSpec, seed: int,
                  n_total: int = DEFAULT_TOTAL) -> SplitDataset:
    """Draw one dataset: a pool of n_total points under the sampling regime,
    a random third each for training and validation, and a fresh uniformly
    drawn test split of the remaining size.

    Imbalanced regimes put peak_fraction of the pool where the target falls
    inside the peak region (rejection on x) and the rest where it does not.
    The fixed draw order -- peak centre, pool x, pool noise, partition,
    test x, test noise -- makes the result a pure function of the
    arguments.
    """
    if scenario.kind is Kind.OOD:
        raise ValueError("out-of-distribution datasets come from build_ood_dataset")
    rng = np.random.default_rng(seed)
    n_train, n_val, n_test = split_sizes(n_total)

    if sampling.regime is not Regime.UNIFORM and sampling.peak_center_y is None:
        lo_y, hi_y = grid_range(params)
        margin = CENTER_MARGIN * (hi_y - lo_y)
        centre = float(rng.uniform(lo_y + margin, hi_y - margin))
        sampling = replace(sampling, peak_center_y=centre)

    def draw_uniform(m):
        return rng.uniform(-1.0, 1.0, m)

    pool_x = _draw_regime(rng, params, sampling, draw_uniform,
                          n_train + n_val + n_test, "pool")
    pool_y = _noisy(rng, scenario, evaluate(params, pool_x))

    order = rng.permutation(len(pool_x))
    train_idx = order[:n_train]
    val_idx = order[n_train:n_train + n_val]

    test_x = rng.uniform(-1.0, 1.0, n_test)
    test_y = _noisy(rng, scenario, evaluate(params, test_x))

    return SplitDataset(
        train=Split(pool_x[train_idx], pool_y[train_idx]),
        val=Split(pool_x[val_idx], pool_y[val_idx]),
        test=Split(test_x, test_y),
        scenario=scenario,
        sampling=sampling,
        seed=int(seed),
    )


def _uniform_in(rng, intervals: np.ndarray, n: int) -> np.ndarray:
    # intervals all share one width, so a uniform interval pick is exact
    width = intervals[0, 1] - intervals[0, 0]
    idx = rng.integers(0, len(intervals), n)
    return intervals[idx, 0] + rng.random(n) * width


def build_ood_dataset(params: FunctionParams, scenario: ScenarioSpec,
                      sampling: SamplingSpec, seed: int,
                      n_total: int = DEFAULT_TOTAL,
                      overlap: float = OOD_OVERLAP) -> SplitDataset:
    """Dataset whose training x and val/test x come from different regions.

    [-1, 1] splits into 8 equal intervals, assigned 4 to training and 4 to
    evaluation at random; enough evaluation intervals are then re-shared
    into the training set that the shared length equals `overlap` of the
    evaluation length. overlap=1.0 is the degenerate configuration where
    both sides see the whole domain (a consistency check against
    build_dataset). Training and validation follow the sampling regime
    within their region sets; the test split is always uniform over the
    evaluation regions.

    Imbalanced regimes draw the peak centre as f(x0) for a uniformly drawn
    x0 in the shared region, so the peak is reachable from both sides.
    """
    if scenario.kind is not Kind.OOD:
        raise ValueError("build_ood_dataset requires an ood scenario")
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_train, n_val, n_test = split_sizes(n_total)

    borders = np.linspace(-1.0, 1.0, OOD_INTERVAL_COUNT + 1)
    intervals = np.column_stack([borders[:-1], borders[1:]])
    perm = rng.permutation(OOD_INTERVAL_COUNT)
    half = OOD_INTERVAL_COUNT // 2
    if overlap == 1.0:
        train_iv = eval_iv = shared_iv = intervals
    else:
        n_shared = round(overlap * half)
        eval_idx = perm[half:]
        shared_idx = eval_idx[:n_shared]
        train_iv = intervals[np.sort(np.concatenate([perm[:half], shared_idx]))]
        eval_iv = intervals[np.sort(eval_idx)]
        shared_iv = intervals[np.sort(shared_idx)]

    if sampling.regime is not Regime.UNIFORM and sampling.peak_center_y is None:
        if len(shared_iv) == 0:
            raise ValueError("imbalanced ood sampling needs a shared region")
        x0 = _uniform_in(rng, shared_iv, 1)[0]
        sampling = replace(sampling, peak_center_y=float(evaluate(params, x0)))

    train_x = _draw_regime(
        rng, params, sampling,
        lambda m: _uniform_in(rng, train_iv, m), n_train, "train",
    )
    val_x = _draw_regime(
        rng, params, sampling,
        lambda m: _uniform_in(rng, eval_iv, m), n_val, "val",
    )
    test_x = _uniform_in(rng, eval_iv, n_test)

    return SplitDataset(
        train=Split(train_x, evaluate(params, train_x)),
        val=Split(val_x, evaluate(params, val_x)),
        test=Split(test_x, evaluate(params, test_x)),
        scenario=scenario,
        sampling=sampling,
        seed=int(seed),
        regions=OodRegions(train_iv, eval_iv),
    )


def export_xy(split: Split, path) -> None:
    """Two-column text dump (x,y per line) for inspecting a split."""
    np.savetxt(path, np.column_stack([split.x, split.y]),
               fmt="%.17g", delimiter=",")
