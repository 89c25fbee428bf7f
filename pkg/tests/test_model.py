import numpy as np
import pytest

from regclslab.losses import mse
from regclslab.model import (
    Gradients,
    ModelState,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_model,
    loss_and_gradients,
    predict,
    regression_view,
    train_model,
)
from regclslab.sampling import Kind, Regime, SamplingSpec, ScenarioSpec, build_dataset
from regclslab.synth import sample_function
from tests.conftest import assert_gradients_match


def test_init_is_deterministic():
    a = init_model(np.random.default_rng(3), head_classes=8)
    b = init_model(np.random.default_rng(3), head_classes=8)
    np.testing.assert_array_equal(a.flat, b.flat)
    assert a.step_count == 0


def test_init_without_head_has_no_classifier():
    state = init_model(np.random.default_rng(0))
    assert state.wc is None and state.bc is None
    assert state.head_classes is None
    assert "wc" not in state.parameters()


def test_init_trunk_independent_of_head():
    bare = init_model(np.random.default_rng(5))
    headed = init_model(np.random.default_rng(5), head_classes=16)
    for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
        np.testing.assert_array_equal(bare.parameters()[name],
                                      headed.parameters()[name])


def test_init_bounds_follow_fan_in():
    state = init_model(np.random.default_rng(8), head_classes=64)
    assert np.max(np.abs(state.w1)) <= 1.0
    assert np.max(np.abs(state.w2)) <= 1.0 / np.sqrt(6)
    assert np.max(np.abs(state.w3)) <= 1.0 / np.sqrt(16)
    assert np.max(np.abs(state.wc)) <= 1.0 / np.sqrt(16)


def test_moments_match_parameter_shapes():
    state = init_model(np.random.default_rng(1), head_classes=4)
    m, v = state.moment_views()
    for name, p in state.parameters().items():
        assert m[name].shape == p.shape
        assert v[name].shape == p.shape
        assert np.all(m[name] == 0) and np.all(v[name] == 0)


def test_forward_finite_on_domain(rng):
    for _ in range(5):
        state = init_model(rng, head_classes=8)
        acts = forward(state, np.linspace(-1, 1, 2001))
        assert np.all(np.isfinite(acts.y_pred))
        assert np.all(np.isfinite(acts.logits))


def test_forward_zero_state_maps_to_zero():
    state = ModelState.zeros()
    acts = forward(state, np.array([-1.0, 0.2, 0.9]))
    np.testing.assert_array_equal(acts.y_pred, np.zeros(3))


def test_forward_single_relu_path():
    # route one unit straight through: y = relu(relu(x)) = max(x, 0)
    state = ModelState.zeros()
    state.w1[0, 0] = 1.0
    state.w2[0, 0] = 1.0
    state.w3[0, 0] = 1.0
    xs = np.linspace(-1, 1, 41)
    np.testing.assert_allclose(forward(state, xs).y_pred, np.maximum(xs, 0.0))


def test_logits_shape_matches_head():
    state = init_model(np.random.default_rng(2), head_classes=13)
    acts = forward(state, np.zeros(7))
    assert acts.logits.shape == (7, 13)


# --- gradients -------------------------------------------------------------------

def test_zero_error_batch_has_zero_regression_gradient(rng):
    state = init_model(rng)
    xs = rng.uniform(-1, 1, 20)
    ys = forward(state, xs).y_pred  # targets equal predictions
    grads = backward(state, xs, ys, None, 3.0)
    assert np.all(grads.flat == 0.0)


def test_lambda_zero_silences_regression_path(rng):
    state = init_model(rng, head_classes=4)
    xs = rng.uniform(-1, 1, 16)
    ys = rng.normal(size=16)
    classes = rng.integers(0, 4, 16)
    lam0 = loss_and_gradients(state, xs, ys, classes, 0.0)
    assert lam0[0].mse > 0
    assert lam0[0].combined == lam0[0].cross_entropy

    # pure-classification gradients must not see the targets at all
    other = loss_and_gradients(state, xs, ys + 5.0, classes, 0.0)
    np.testing.assert_array_equal(lam0[1].flat, other[1].flat)


def test_gradients_scale_linearly_in_lambda(rng):
    state = init_model(rng)
    xs = rng.uniform(-1, 1, 12)
    ys = rng.normal(size=12)
    g1 = backward(state, xs, ys, None, 1.0)
    g7 = backward(state, xs, ys, None, 7.0)
    np.testing.assert_allclose(g7.flat, 7.0 * g1.flat, rtol=1e-12)


def test_classes_required_exactly_with_head(rng):
    headed = init_model(rng, head_classes=4)
    bare = init_model(rng)
    xs, ys = np.zeros(3), np.zeros(3)
    with pytest.raises(ValueError):
        backward(headed, xs, ys, None, 1.0)
    with pytest.raises(ValueError):
        backward(bare, xs, ys, np.zeros(3, dtype=int), 1.0)


def test_gradient_check_without_head():
    rng = np.random.default_rng(42)
    for _ in range(5):
        state = init_model(rng)
        xs = rng.uniform(-1, 1, 8)
        ys = rng.normal(scale=0.8, size=8)
        assert_gradients_match(state, xs, ys, None, 1.0)


def test_gradient_check_with_head_and_dropped_samples():
    rng = np.random.default_rng(43)
    for lam in (0.0, 1.0, 100.0):
        state = init_model(rng, head_classes=6)
        xs = rng.uniform(-1, 1, 8)
        ys = rng.normal(scale=0.8, size=8)
        classes = rng.integers(0, 6, 8)
        classes[rng.random(8) < 0.3] = -1
        assert_gradients_match(state, xs, ys, classes, lam)


# --- adam -------------------------------------------------------------------------

def test_adam_zero_gradient_is_fixed_point():
    state = init_model(np.random.default_rng(0), head_classes=4)
    before = state.flat.copy()
    adam_step(state, Gradients.zeros_like(state), TrainConfig(weight_decay=0.0))
    np.testing.assert_array_equal(state.flat, before)
    assert state.step_count == 1


def test_adam_first_step_magnitude():
    # w = 1 on a quadratic: gradient 2, first bias-corrected step ~ lr
    state = ModelState.zeros()
    state.w1[0, 0] = 1.0
    grads = Gradients.zeros_like(state)
    grads["w1"][0, 0] = 2.0
    adam_step(state, grads, TrainConfig(learning_rate=0.1, weight_decay=0.0))
    assert abs((1.0 - state.w1[0, 0]) - 0.1) < 1e-6


def test_adam_moments_decay_once_gradients_stop():
    state = ModelState.zeros()
    grads = Gradients.zeros_like(state)
    grads["w1"][0, 0] = 1.0
    config = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
    adam_step(state, grads, config)
    peak_m = abs(state.adam_m[0])
    for _ in range(50):
        adam_step(state, Gradients.zeros_like(state), config)
    assert abs(state.adam_m[0]) < peak_m * 1e-2
    assert state.step_count == 51


def test_weight_decay_spares_biases():
    state = ModelState.zeros()
    state.w2[...] = 1.0
    state.b2[...] = 1.0
    config = TrainConfig(learning_rate=0.1, weight_decay=0.5)
    adam_step(state, Gradients.zeros_like(state), config)
    np.testing.assert_allclose(state.w2, 1.0 - 0.1 * 0.5, rtol=1e-12)
    np.testing.assert_array_equal(state.b2, np.ones_like(state.b2))


def test_adam_rejects_shape_mismatch():
    state = init_model(np.random.default_rng(0))
    other = init_model(np.random.default_rng(0), head_classes=4)
    with pytest.raises(ValueError):
        adam_step(state, Gradients.zeros_like(other), TrainConfig())


# --- evaluation path ---------------------------------------------------------------

def test_regression_view_has_no_classifier():
    state = init_model(np.random.default_rng(1), head_classes=32)
    view = regression_view(state)
    assert not hasattr(view, "wc")
    xs = np.linspace(-1, 1, 50)
    np.testing.assert_array_equal(predict(view, xs), forward(state, xs).y_pred)


# --- training ----------------------------------------------------------------------

def test_training_is_deterministic():
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1, 1, 300)
    ys = np.sin(3 * xs)
    config = TrainConfig(epochs=3, seed=7)
    a = train_model(xs, ys, config)
    b = train_model(xs, ys, config)
    np.testing.assert_array_equal(a.state.flat, b.state.flat)
    assert [t.mse for t in a.trace] == [t.mse for t in b.trace]


def test_training_trace_has_one_entry_per_epoch():
    xs = np.linspace(-1, 1, 200)
    ys = 0.5 * np.sin(2 * xs)
    trained = train_model(xs, ys, TrainConfig(epochs=4, seed=0))
    assert len(trained.trace) == 4
    assert all(t.kept_count == 0 for t in trained.trace)


def test_keep_probabilities_thin_the_classification_loss():
    rng = np.random.default_rng(3)
    xs = rng.uniform(-1, 1, 500)
    ys = np.sin(2 * xs)
    classes = (ys > 0).astype(int)
    keep = np.array([1.0, 0.05])
    trained = train_model(xs, ys, TrainConfig(epochs=2, seed=1),
                          classes=classes, keep_prob=keep)
    per_epoch = [t.kept_count for t in trained.trace]
    expected = int(np.sum(classes == 0) + 0.05 * np.sum(classes == 1))
    assert all(abs(k - expected) < 60 for k in per_epoch)


def test_training_fits_most_functions_tenfold():
    """Clean uniform data, the full 80-epoch budget: at least 8 of 10
    sampled functions end with train MSE 10x below the untrained model's."""
    scenario = ScenarioSpec(Kind.CLEAN)
    sampling = SamplingSpec(Regime.UNIFORM)
    config = TrainConfig(seed=0)
    improved = 0
    for function_seed in range(10):
        params = sample_function(np.random.default_rng(function_seed))
        data = build_dataset(params, scenario, sampling, seed=0)
        init_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[0])
        untrained = init_model(init_rng)
        before = mse(data.train.y, predict(regression_view(untrained), data.train.x))
        trained = train_model(data.train.x, data.train.y, config)
        after = mse(data.train.y, predict(regression_view(trained.state), data.train.x))
        improved += before / after >= 10.0
    assert improved >= 8


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lam=-0.5)
