"""Training objectives: mean squared error, numerically stable softmax
cross-entropy, their weighted combination, and the prior-gap diagnostic
logged during training."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    cross_entropy: float  # mean over kept samples; 0.0 when none kept
    combined: float       # lam * mse + cross_entropy
    lam: float
    kept_count: int

    def to_record(self) -> dict:
        return {
            "mse": self.mse,
            "cross_entropy": self.cross_entropy,
            "combined": self.combined,
            "lambda": self.lam,
            "kept_count": self.kept_count,
        }


def mse(y, y_pred) -> float:
    y = np.asarray(y, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y.shape != y_pred.shape or y.size == 0:
        raise ValueError("mse needs two equal-length non-empty vectors")
    return float(np.mean((y - y_pred) ** 2))


def log_softmax(logits) -> np.ndarray:
    """Log-softmax along the last axis, with max subtraction."""
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits, true_class: int) -> float:
    """-log softmax(logits)[true_class] for a single sample."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1:
        raise ValueError("expected one vector of logits")
    if not 0 <= true_class < logits.shape[0]:
        raise ValueError("class index out of range")
    return float(-log_softmax(logits)[true_class])


def batch_cross_entropy(logits, classes) -> np.ndarray:
    """Per-sample cross-entropies for rows of logits."""
    logp = log_softmax(logits)
    classes = np.asarray(classes)
    return -logp[np.arange(len(classes)), classes]


def combined_loss(y, y_pred, lam: float, logits=None, classes=None) -> LossBreakdown:
    """Weighted regression plus classification objective for one batch.

    classes holds one class index per sample, with -1 marking samples that
    were dropped by the keep step (or carry no class at all); the
    cross-entropy term averages over the kept samples only.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    batch_mse = mse(y, y_pred)
    kept_count = 0
    cross_entropy = 0.0
    if classes is not None:
        classes = np.asarray(classes)
        kept = classes >= 0
        kept_count = int(kept.sum())
        if kept_count:
            kept_ce = batch_cross_entropy(np.asarray(logits)[kept], classes[kept])
            cross_entropy = float(np.mean(kept_ce))
    combined = lam * batch_mse + cross_entropy
    return LossBreakdown(batch_mse, cross_entropy, combined, float(lam), kept_count)


def nll_gap_diagnostic(logits, true_class: int, class_prior) -> float:
    """Residual gap between the sampling-prior NLL and the balanced NLL, in
    its class-discretized form.

    Computed as log prior[true_class] minus the log of the prior-weighted
    softmax mass. Identically zero under a uniform prior, and collapsing to
    zero as the classifier concentrates its mass on the true class. Logged
    for analysis only; it never contributes gradients.
    """
    logits = np.asarray(logits, dtype=float)
    prior = np.asarray(class_prior, dtype=float)
    if logits.shape != prior.shape or logits.ndim != 1:
        raise ValueError("logits and class prior must be vectors of equal length")
    if abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError("class prior must sum to 1")
    if not 0 <= true_class < len(prior):
        raise ValueError("class index out of range")
    if prior[true_class] <= 0.0:
        raise ValueError("zero prior at the true class")
    mass = float(np.dot(softmax(logits), prior))
    return float(np.log(prior[true_class]) - np.log(mass))
