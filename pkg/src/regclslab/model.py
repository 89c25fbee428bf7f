"""The trial MLP: manual forward/backward for a 1-6-16-1 ReLU trunk with an
optional classification head on the 16-unit features, Adam with decoupled
weight decay, and the mini-batch training loop."""

from dataclasses import dataclass

import numpy as np

from .losses import LossBreakdown

HIDDEN1 = 6
HIDDEN2 = 16
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# weight decay shrinks weight matrices only, never biases
_WEIGHT_NAMES = ("w1", "w2", "w3", "wc")
_TRUNK_LAYOUT = (
    ("w1", (1, HIDDEN1)),
    ("b1", (HIDDEN1,)),
    ("w2", (HIDDEN1, HIDDEN2)),
    ("b2", (HIDDEN2,)),
    ("w3", (HIDDEN2, 1)),
    ("b3", (1,)),
)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    lam weights the regression term of the combined loss; seed drives
    initialization, shuffling and keep decisions through three independent
    streams. The 32-sample batches give the fixed 80-epoch budget enough
    optimizer steps to fit the wigglier target functions.
    """

    learning_rate: float = 1e-3
    epochs: int = 80
    weight_decay: float = 1e-3
    batch_size: int = 32
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    def to_record(self) -> dict:
        """Identity for result records; lam and seed are owned by the trial."""
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
        }


def _layout(head_classes):
    entries = list(_TRUNK_LAYOUT)
    if head_classes is not None:
        if head_classes < 2:
            raise ValueError("classification head needs at least 2 classes")
        entries.append(("wc", (HIDDEN2, int(head_classes))))
        entries.append(("bc", (int(head_classes),)))
    layout = []
    offset = 0
    for name, shape in entries:
        size = int(np.prod(shape))
        layout.append((name, shape, offset, offset + size))
        offset += size
    return tuple(layout), offset


def _views(flat, layout):
    return {name: flat[lo:hi].reshape(shape) for name, shape, lo, hi in layout}


_ARANGE_CACHE = np.arange(4096)


def _arange(n: int) -> np.ndarray:
    if n <= len(_ARANGE_CACHE):
        return _ARANGE_CACHE[:n]
    return np.arange(n)


class ModelState:
    """Trunk weights, optional head, and Adam moment accumulators.

    All parameters live in one flat float64 buffer (the moments in two
    more); the named attributes (w1, b1, ..., wc, bc) are reshaped views
    into it, so in-place updates through either interface stay coherent.
    wc/bc are None without a head.
    """

    __slots__ = ("flat", "adam_m", "adam_v", "step_count",
                 "_layout", "_params", "_weight_slices")

    def __init__(self, flat, layout):
        self.flat = flat
        self.adam_m = np.zeros_like(flat)
        self.adam_v = np.zeros_like(flat)
        self.step_count = 0
        self._layout = layout
        self._params = _views(flat, layout)
        self._weight_slices = tuple(
            slice(lo, hi) for name, _, lo, hi in layout if name in _WEIGHT_NAMES
        )

    @classmethod
    def zeros(cls, head_classes: int | None = None) -> "ModelState":
        layout, size = _layout(head_classes)
        return cls(np.zeros(size), layout)

    def __getattr__(self, name):
        params = object.__getattribute__(self, "_params")
        if name in params:
            return params[name]
        if name in ("wc", "bc"):
            return None
        raise AttributeError(name)

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self._params)

    def moment_views(self) -> tuple[dict, dict]:
        """Per-parameter views of the Adam moments (shapes match parameters)."""
        return _views(self.adam_m, self._layout), _views(self.adam_v, self._layout)

    @property
    def head_classes(self) -> int | None:
        wc = self._params.get("wc")
        return None if wc is None else wc.shape[1]

    def to_record(self) -> dict:
        record = {name: p.tolist() for name, p in self._params.items()}
        record["step_count"] = self.step_count
        return record


class Gradients:
    """Flat gradient buffer with named views matching a ModelState."""

    __slots__ = ("flat", "views")

    def __init__(self, flat, layout):
        self.flat = flat
        self.views = _views(flat, layout)

    @classmethod
    def zeros_like(cls, state: ModelState) -> "Gradients":
        return cls(np.zeros_like(state.flat), state._layout)

    @classmethod
    def empty_like(cls, state: ModelState) -> "Gradients":
        return cls(np.empty_like(state.flat), state._layout)

    def __getitem__(self, name) -> np.ndarray:
        return self.views[name]

    def keys(self):
        return self.views.keys()


def _uniform_layer(rng, fan_in, target_w, target_b):
    bound = 1.0 / np.sqrt(fan_in)
    target_w[...] = rng.uniform(-bound, bound, size=target_w.shape)
    target_b[...] = rng.uniform(-bound, bound, size=target_b.shape)


def init_model(rng: np.random.Generator, head_classes: int | None = None) -> ModelState:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights and biases, zero
    Adam moments.

    Draw order is fixed with the trunk first, so trunk weights do not
    depend on whether a head is requested.
    """
    state = ModelState.zeros(head_classes)
    _uniform_layer(rng, 1, state.w1, state.b1)
    _uniform_layer(rng, HIDDEN1, state.w2, state.b2)
    _uniform_layer(rng, HIDDEN2, state.w3, state.b3)
    if head_classes is not None:
        _uniform_layer(rng, HIDDEN2, state.wc, state.bc)
    return state


@dataclass(frozen=True, eq=False)
class Activations:
    """One forward pass with everything the backward pass needs cached."""

    x: np.ndarray        # (n, 1)
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    y_pred: np.ndarray   # (n,)
    logits: np.ndarray | None  # (n, head_classes) when the head exists


def forward(state: ModelState, xs) -> Activations:
    x = np.asarray(xs, dtype=float).reshape(-1, 1)
    z1 = x @ state.w1 + state.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ state.w2 + state.b2
    h2 = np.maximum(z2, 0.0)
    y_pred = (h2 @ state.w3)[:, 0] + state.b3[0]
    wc = state.wc
    logits = h2 @ wc + state.bc if wc is not None else None
    return Activations(x, z1, h1, z2, h2, y_pred, logits)


def loss_and_gradients(state: ModelState, xs, ys, classes, lam: float):
    """Batch loss and its exact parameter gradients.

    The loss is lam * mean squared error plus the mean cross-entropy over
    kept samples (class index >= 0). Samples with class -1 contribute no
    classification gradient; classes must be given exactly when the head
    exists.
    """
    ys = np.asarray(ys, dtype=float)
    n = ys.size
    if n == 0:
        raise ValueError("empty batch")
    if (classes is not None) != (state.wc is not None):
        raise ValueError("classes must be given exactly when the head exists")
    acts = forward(state, xs)

    grads = Gradients.empty_like(state)
    g = grads.views
    residual = acts.y_pred - ys
    d_y = (2.0 * lam / n) * residual
    g["w3"][:, 0] = acts.h2.T @ d_y
    g["b3"][0] = d_y.sum()
    d_h2 = d_y[:, None] * state.w3[:, 0]

    cross_entropy = 0.0
    kept_count = 0
    if classes is not None:
        classes = np.asarray(classes, dtype=np.int64)
        if classes.size != n:
            raise ValueError("one class per sample required")
        if classes.min() >= 0:
            kept_logits, kept_classes, kept = acts.logits, classes, None
        else:
            kept = np.flatnonzero(classes >= 0)
            kept_logits, kept_classes = acts.logits[kept], classes[kept]
        kept_count = len(kept_classes)
        if kept_count:
            shifted = kept_logits - kept_logits.max(axis=1, keepdims=True)
            exps = np.exp(shifted)
            norms = exps.sum(axis=1)
            rows = _arange(kept_count)
            cross_entropy = float(
                (np.log(norms) - shifted[rows, kept_classes]).sum() / kept_count
            )
            d_logits = exps / norms[:, None]
            d_logits[rows, kept_classes] -= 1.0
            d_logits /= kept_count
            if kept is None:
                np.matmul(acts.h2.T, d_logits, out=g["wc"])
                d_h2 += d_logits @ state.wc.T
            else:
                g["wc"][...] = acts.h2[kept].T @ d_logits
                d_h2[kept] += d_logits @ state.wc.T
            g["bc"][...] = d_logits.sum(axis=0)
        else:
            g["wc"][...] = 0.0
            g["bc"][...] = 0.0

    d_z2 = d_h2 * (acts.z2 > 0.0)
    np.matmul(acts.h1.T, d_z2, out=g["w2"])
    g["b2"][...] = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ state.w2.T) * (acts.z1 > 0.0)
    np.matmul(acts.x.T, d_z1, out=g["w1"])
    g["b1"][...] = d_z1.sum(axis=0)

    batch_mse = float(residual @ residual) / n
    breakdown = LossBreakdown(
        batch_mse, cross_entropy, lam * batch_mse + cross_entropy,
        float(lam), kept_count,
    )
    return breakdown, grads


def backward(state: ModelState, xs, ys, classes, lam: float) -> Gradients:
    """Exact gradients of the combined batch loss; see loss_and_gradients."""
    return loss_and_gradients(state, xs, ys, classes, lam)[1]


def adam_step(state: ModelState, grads: Gradients, config: TrainConfig) -> ModelState:
    """One Adam update with bias correction.

    Weight matrices additionally shrink by (1 - lr * weight_decay) before
    the moment step (decoupled decay; biases are exempt). Mutates and
    returns state.
    """
    if grads.flat.shape != state.flat.shape:
        raise ValueError("gradient shape does not match the parameters")
    state.step_count += 1
    lr = config.learning_rate
    c1 = 1.0 - ADAM_BETA1 ** state.step_count
    c2 = 1.0 - ADAM_BETA2 ** state.step_count
    g = grads.flat
    m = state.adam_m
    v = state.adam_v
    m *= ADAM_BETA1
    m += (1.0 - ADAM_BETA1) * g
    v *= ADAM_BETA2
    v += (1.0 - ADAM_BETA2) * (g * g)
    if config.weight_decay:
        decay = 1.0 - lr * config.weight_decay
        for block in state._weight_slices:
            state.flat[block] *= decay
    denom = np.sqrt(v / c2)
    denom += ADAM_EPS
    state.flat -= lr * (m / c1) / denom
    return state


@dataclass(frozen=True)
class RegressionView:
    """Classifier-free weights for evaluation; no head fields exist here."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray


def regression_view(state: ModelState) -> RegressionView:
    return RegressionView(state.w1, state.b1, state.w2, state.b2,
                          state.w3, state.b3)


def predict(view: RegressionView, xs) -> np.ndarray:
    """Regression outputs of the trunk; this is the only evaluation path."""
    x = np.asarray(xs, dtype=float).reshape(-1, 1)
    h1 = np.maximum(x @ view.w1 + view.b1, 0.0)
    h2 = np.maximum(h1 @ view.w2 + view.b2, 0.0)
    return (h2 @ view.w3)[:, 0] + view.b3[0]


@dataclass
class TrainedModel:
    state: ModelState
    trace: list[LossBreakdown]   # one entry per epoch


def train_model(xs, ys, config: TrainConfig, classes=None, keep_prob=None,
                head_classes: int | None = None) -> TrainedModel:
    """Mini-batch Adam training of the combined objective.

    classes holds one class index per training sample; keep_prob, when
    given, holds per-class keep probabilities and every visit of a sample
    redraws its keep decision, so rare classes are seen across epochs while
    the expected per-class exposure evens out. Three independent RNG
    streams (init / shuffle / keep) derive from config.seed so that adding
    a head or the keep step never shifts the data order.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) == 0:
        raise ValueError("training data must be two equal-length non-empty vectors")
    if classes is not None:
        classes = np.asarray(classes, dtype=np.int64)
        if len(classes) != len(xs):
            raise ValueError("one class per training sample required")
        if head_classes is None:
            head_classes = int(classes.max()) + 1
    if keep_prob is not None:
        if classes is None:
            raise ValueError("keep_prob requires classes")
        keep_prob = np.asarray(keep_prob, dtype=float)

    seq = np.random.SeedSequence(config.seed)
    init_rng, shuffle_rng, keep_rng = (np.random.default_rng(s) for s in seq.spawn(3))
    state = init_model(init_rng, head_classes if classes is not None else None)

    n = len(xs)
    trace: list[LossBreakdown] = []
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        sq_sum = 0.0
        ce_sum = 0.0
        kept_total = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_classes = None
            if classes is not None:
                batch_classes = classes[idx]
                if keep_prob is not None:
                    u = keep_rng.random(len(idx))
                    batch_classes = np.where(
                        u <= keep_prob[batch_classes], batch_classes, -1
                    )
            breakdown, grads = loss_and_gradients(
                state, xs[idx], ys[idx], batch_classes, config.lam
            )
            adam_step(state, grads, config)
            sq_sum += breakdown.mse * len(idx)
            ce_sum += breakdown.cross_entropy * breakdown.kept_count
            kept_total += breakdown.kept_count
        epoch_mse = sq_sum / n
        epoch_ce = ce_sum / kept_total if kept_total else 0.0
        trace.append(LossBreakdown(
            epoch_mse, epoch_ce, config.lam * epoch_mse + epoch_ce,
            config.lam, kept_total,
        ))
    return TrainedModel(state, trace)
