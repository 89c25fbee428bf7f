"""Random two-sine target functions and their evaluation."""

from dataclasses import dataclass

import numpy as np

MAX_ABS_TARGET = 1.5
AMPLITUDE_LOW, AMPLITUDE_HIGH = -1.5, 1.5
# up to ~2.5 sine periods over the domain: visibly multi-modal, yet within
# what the small trial MLP can represent when trained on balanced data
FREQUENCY_LOW, FREQUENCY_HIGH = 1.0, 8.0
# Dense check grid over [-1, 1]; resolves the highest admitted frequency
# (12 rad over a length-2 domain) a few hundred times over.
GRID_POINTS = 10_001
MAX_SAMPLE_REJECTIONS = 10_000

_GRID = np.linspace(-1.0, 1.0, GRID_POINTS)


class RejectionBudgetError(RuntimeError):
    """Rejection resampling exhausted its attempt budget."""


@dataclass(frozen=True)
class FunctionParams:
    """Coefficients of the target function a*sin(c*x) + b*sin(d*x).

    Construction enforces the range bound: |f| may not exceed
    MAX_ABS_TARGET anywhere on the dense check grid over [-1, 1]. The
    amplitudes alone are not constrained; |a| + |b| > 1.5 is acceptable
    whenever the two sines never align badly enough on the domain.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        peak = grid_max_abs(self)
        if peak > MAX_ABS_TARGET + 1e-12:
            raise ValueError(
                f"|f| reaches {peak:.4f} on the check grid, above the "
                f"{MAX_ABS_TARGET} bound"
            )

    def to_record(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


def evaluate(params: FunctionParams, x):
    """Evaluate the function at x, a scalar or array inside [-1, 1]."""
    arr = np.asarray(x, dtype=float)
    if arr.size and (arr.min() < -1.0 or arr.max() > 1.0):
        raise ValueError("x outside the function domain [-1, 1]")
    values = params.a * np.sin(params.c * arr) + params.b * np.sin(params.d * arr)
    if arr.ndim == 0:
        return float(values)
    return values


def grid_values(params: FunctionParams) -> np.ndarray:
    """The function evaluated on the dense check grid."""
    return params.a * np.sin(params.c * _GRID) + params.b * np.sin(params.d * _GRID)


def grid_max_abs(params: FunctionParams) -> float:
    return float(np.max(np.abs(grid_values(params))))


def grid_range(params: FunctionParams) -> tuple[float, float]:
    """(min, max) of the function over the dense check grid."""
    values = grid_values(params)
    return float(values.min()), float(values.max())


def sample_function(rng: np.random.Generator) -> FunctionParams:
    """Draw function coefficients, rejecting candidates beyond the range bound.

    Amplitudes come from U[-1.5, 1.5] and angular frequencies from U[1, 12];
    a candidate is kept once its grid maximum of |f| stays within
    MAX_ABS_TARGET. Identical generator state yields identical parameters.
    """
    for _ in range(MAX_SAMPLE_REJECTIONS):
        a, b = rng.uniform(AMPLITUDE_LOW, AMPLITUDE_HIGH, size=2)
        c, d = rng.uniform(FREQUENCY_LOW, FREQUENCY_HIGH, size=2)
        peak = np.max(np.abs(a * np.sin(c * _GRID) + b * np.sin(d * _GRID)))
        if peak <= MAX_ABS_TARGET:
            return FunctionParams(float(a), float(b), float(c), float(d))
    raise RejectionBudgetError(
        f"no admissible function after {MAX_SAMPLE_REJECTIONS} draws"
    )
