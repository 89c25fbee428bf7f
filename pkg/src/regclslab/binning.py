"""Discretizing targets into classes, merging class ranges until counts even
out, and the per-class keep probabilities used by the balanced
classification loss."""

from dataclasses import dataclass

import numpy as np

EDGE_SLACK = 1e-9


def uniform_bins(y_min: float, y_max: float, n_classes: int) -> np.ndarray:
    """Equally spaced class boundaries: n_classes + 1 edges over [y_min, y_max]."""
    if int(n_classes) < 2:
        raise ValueError("need at least 2 classes")
    if not y_min < y_max:
        raise ValueError(f"invalid target range [{y_min}, {y_max}]")
    return np.linspace(float(y_min), float(y_max), int(n_classes) + 1)


def assign_class(edges, y: float) -> int:
    """Class index of one target: half-open bins, last bin right-closed."""
    return int(assign_classes(edges, np.asarray([float(y)]))[0])


def assign_classes(edges, ys) -> np.ndarray:
    """Vectorized assign_class.

    Values straying past the outer edges by at most EDGE_SLACK are clamped;
    anything further out is an error.
    """
    edges = np.asarray(edges, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ys.size and (ys.min() < edges[0] - EDGE_SLACK or ys.max() > edges[-1] + EDGE_SLACK):
        raise ValueError("target outside the class range")
    clipped = np.clip(ys, edges[0], edges[-1])
    idx = np.searchsorted(edges, clipped, side="right") - 1
    return np.minimum(idx, len(edges) - 2).astype(np.int64)


def equalize(hist, n_classes: int, n_samples: int) -> np.ndarray:
    """Merge class ranges through the scaled cumulative histogram.

    Returns, for every original class k, its merged class index. The raw
    merge index is floor(n_classes * cumcount(k) / n_samples), computed in
    exact integer arithmetic; the raw indices (which may skip values) are
    then compacted to consecutive integers starting at 0, order preserved.
    Empty original classes inherit the merged index of their left
    neighbour, so they dissolve without creating gaps.
    """
    counts = np.asarray(hist, dtype=np.int64)
    if counts.ndim != 1 or len(counts) != int(n_classes):
        raise ValueError("histogram length must equal n_classes")
    if np.any(counts < 0):
        raise ValueError("negative class count")
    if n_samples <= 0:
        raise ValueError("empty dataset")
    if int(counts.sum()) != int(n_samples):
        raise ValueError("histogram does not sum to n_samples")
    cumulative = np.cumsum(counts)
    raw = (int(n_classes) * cumulative) // int(n_samples)
    _, mapping = np.unique(raw, return_inverse=True)
    return mapping.astype(np.int64)


def keep_probabilities(counts) -> np.ndarray:
    """Per-class probability of entering the classification loss.

    The minimum class count divided by the class's own count, so the
    rarest class always keeps everything and expected kept counts match
    the minimum across classes.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0:
        raise ValueError("no classes")
    if np.any(counts <= 0):
        raise ValueError("empty class in histogram")
    return counts.min() / counts.astype(float)


def bernoulli_keep(rho_k: float, rng: np.random.Generator) -> bool:
    """One keep/drop decision with keep probability rho_k in (0, 1]."""
    if not 0.0 < rho_k <= 1.0:
        raise ValueError("keep probability must lie in (0, 1]")
    return bool(rng.random() <= rho_k)


@dataclass(frozen=True, eq=False)
class ClassScheme:
    """Everything needed to label targets for the balanced classification
    loss: uniform edges fitted on the training split, the count-equalizing
    merge map, merged-class counts, and keep probabilities."""

    edges: np.ndarray
    mapping: np.ndarray
    counts: np.ndarray
    keep_prob: np.ndarray

    @property
    def n_original(self) -> int:
        return len(self.edges) - 1

    @property
    def n_merged(self) -> int:
        return len(self.counts)

    def label(self, y: float) -> int:
        return int(self.mapping[assign_class(self.edges, y)])

    def labels(self, ys) -> np.ndarray:
        return self.mapping[assign_classes(self.edges, ys)]

    def to_record(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "mapping": self.mapping.tolist(),
            "counts": self.counts.tolist(),
            "keep_prob": self.keep_prob.tolist(),
        }


def build_class_scheme(train_y, n_classes: int) -> ClassScheme:
    """Fit a scheme on one training split.

    The class range comes from the training targets alone; validation and
    test targets never leak into the edges.
    """
    train_y = np.asarray(train_y, dtype=float)
    if train_y.size == 0:
        raise ValueError("empty training split")
    edges = uniform_bins(float(train_y.min()), float(train_y.max()), n_classes)
    original = assign_classes(edges, train_y)
    hist = np.bincount(original, minlength=int(n_classes))
    mapping = equalize(hist, n_classes, len(train_y))
    counts = np.bincount(mapping[original], minlength=int(mapping[-1]) + 1)
    return ClassScheme(edges, mapping, counts, keep_probabilities(counts))
