from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regclslab.binning import (
    ClassScheme,
    assign_class,
    assign_classes,
    bernoulli_keep,
    build_class_scheme,
    equalize,
    keep_probabilities,
    uniform_bins,
)


def brute_force_equalize(hist):
    """Reference merge map: exact integers, no numpy."""
    n_classes = len(hist)
    total = sum(hist)
    raw = []
    running = 0
    for count in hist:
        running += count
        raw.append((n_classes * running) // total)
    compact = {value: index for index, value in enumerate(sorted(set(raw)))}
    return [compact[value] for value in raw]


def brute_force_keep(counts):
    lowest = min(counts)
    return [lowest / count for count in counts]


# --- uniform_bins -------------------------------------------------------------

def test_uniform_bins_spacing():
    np.testing.assert_array_equal(uniform_bins(0, 4, 4), [0, 1, 2, 3, 4])


def test_uniform_bins_symmetry():
    np.testing.assert_array_equal(uniform_bins(-1.5, 1.5, 2), [-1.5, 0.0, 1.5])


def test_uniform_bins_finest_grid():
    edges = uniform_bins(0, 1, 1024)
    assert len(edges) == 1025
    np.testing.assert_allclose(np.diff(edges), 1 / 1024, atol=1e-15)


def test_uniform_bins_rejects_bad_input():
    with pytest.raises(ValueError):
        uniform_bins(1.0, 1.0, 4)
    with pytest.raises(ValueError):
        uniform_bins(2.0, 1.0, 4)
    with pytest.raises(ValueError):
        uniform_bins(0.0, 1.0, 1)


# --- assign_class -------------------------------------------------------------

def test_assign_first_bin():
    assert assign_class([0, 1, 2], 0.5) == 0


def test_assign_right_edge_goes_to_last_bin():
    assert assign_class([0, 1, 2], 2.0) == 1


def test_assign_half_open_bins():
    assert assign_class([0, 1, 2, 3, 4], 2.999) == 2
    assert assign_class([0, 1, 2, 3, 4], 3.0) == 3


def test_assign_clamps_tiny_overshoot():
    edges = np.array([0.0, 1.0, 2.0])
    assert assign_class(edges, -0.5e-9) == 0
    assert assign_class(edges, 2.0 + 0.5e-9) == 1
    with pytest.raises(ValueError):
        assign_class(edges, 2.0 + 1e-8)
    with pytest.raises(ValueError):
        assign_class(edges, -1e-8)


def test_assign_classes_vectorizes(rng):
    edges = uniform_bins(-2.0, 3.0, 7)
    ys = rng.uniform(-2.0, 3.0, 500)
    expected = np.array([assign_class(edges, y) for y in ys])
    np.testing.assert_array_equal(assign_classes(edges, ys), expected)


# --- equalize -----------------------------------------------------------------

def test_equalize_balanced_is_identity():
    np.testing.assert_array_equal(equalize([2, 2, 2, 2], 4, 8), [0, 1, 2, 3])


def test_equalize_merges_rare_classes():
    mapping = equalize([4, 2, 1, 1], 4, 8)
    np.testing.assert_array_equal(mapping, [0, 1, 1, 2])
    assert mapping[-1] + 1 == 3


def test_equalize_validates_input():
    with pytest.raises(ValueError):
        equalize([1, 2], 3, 3)
    with pytest.raises(ValueError):
        equalize([1, 2], 2, 4)
    with pytest.raises(ValueError):
        equalize([0, 0], 2, 0)
    with pytest.raises(ValueError):
        equalize([-1, 3], 2, 2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=2, max_size=64).filter(lambda h: sum(h) > 0))
def test_equalize_matches_brute_force(hist):
    mapping = equalize(hist, len(hist), sum(hist))
    assert mapping.tolist() == brute_force_equalize(hist)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=2, max_size=64).filter(lambda h: sum(h) > 0))
def test_equalize_mapping_shape(hist):
    mapping = equalize(hist, len(hist), sum(hist))
    # never more merged classes than originals, non-decreasing, consecutive
    assert mapping[-1] + 1 <= len(hist)
    assert np.all(np.diff(mapping) >= 0)
    assert set(mapping.tolist()) == set(range(mapping[-1] + 1))


# --- keep_probabilities --------------------------------------------------------

def test_keep_probabilities_example():
    np.testing.assert_allclose(keep_probabilities([4, 2, 2]), [0.5, 1.0, 1.0])


def test_keep_probabilities_uniform_counts():
    np.testing.assert_array_equal(keep_probabilities([7, 7, 7]), [1.0, 1.0, 1.0])


def test_keep_probabilities_extreme_imbalance():
    np.testing.assert_allclose(keep_probabilities([1, 1000]), [1.0, 0.001])


def test_keep_probabilities_rejects_empty_class():
    with pytest.raises(ValueError):
        keep_probabilities([3, 0, 2])
    with pytest.raises(ValueError):
        keep_probabilities([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 10_000), min_size=1, max_size=64))
def test_expected_post_selection_counts_are_equal(counts):
    """count * keep probability equals the minimum count: exact in rational
    arithmetic, and the float output is the correctly rounded ratio."""
    rho = keep_probabilities(counts)
    lowest = min(counts)
    for count, r in zip(counts, rho):
        assert r == lowest / count  # same IEEE division as the definition
        assert Fraction(lowest, count) * count == lowest
    assert rho.max() == 1.0
    assert rho.min() > 0.0


# --- bernoulli_keep ------------------------------------------------------------

def test_bernoulli_keep_certainty(rng):
    assert all(bernoulli_keep(1.0, rng) for _ in range(1000))


def test_bernoulli_keep_rate():
    rng = np.random.default_rng(99)
    hits = sum(bernoulli_keep(0.5, rng) for _ in range(10_000))
    assert abs(hits / 10_000 - 0.5) <= 0.02


def test_bernoulli_keep_is_reproducible():
    rng1, rng2 = np.random.default_rng(11), np.random.default_rng(11)
    assert [bernoulli_keep(0.7, rng1) for _ in range(50)] == \
        [bernoulli_keep(0.7, rng2) for _ in range(50)]


def test_bernoulli_keep_validates_probability(rng):
    with pytest.raises(ValueError):
        bernoulli_keep(0.0, rng)
    with pytest.raises(ValueError):
        bernoulli_keep(1.5, rng)


# --- scheme composition ---------------------------------------------------------

def test_scheme_on_balanced_data_is_identity(rng):
    ys = np.repeat(np.linspace(0, 1, 8), 100) + rng.uniform(0, 1 / 16, 800)
    scheme = build_class_scheme(ys, 8)
    assert scheme.n_merged == 8
    np.testing.assert_array_equal(scheme.mapping, np.arange(8))
    np.testing.assert_array_equal(scheme.keep_prob, np.ones(8))


def test_scheme_merge_is_monotone(rng):
    ys = rng.normal(0.0, 1.0, 4000)
    scheme = build_class_scheme(ys, 32)
    sorted_ys = np.sort(ys)
    labels = scheme.labels(sorted_ys)
    assert np.all(np.diff(labels) >= 0)


def test_scheme_counts_match_labels(rng):
    ys = np.concatenate([rng.normal(0, 0.05, 3000), rng.uniform(-1, 1, 1000)])
    scheme = build_class_scheme(ys, 16)
    labels = scheme.labels(ys)
    np.testing.assert_array_equal(
        np.bincount(labels, minlength=scheme.n_merged), scheme.counts
    )
    assert scheme.n_merged <= scheme.n_original


def test_keep_without_equalize_starves_frequent_classes(rng):
    """On a peaked histogram, skipping the merge step drives the smallest
    keep probability far lower than the merged scheme ever does."""
    # one dominant bin with ~75% of the mass, the rest spread thinly
    counts = np.full(64, 40)
    counts[23] = 7500
    counts += rng.integers(-10, 11, 64)
    assert counts.max() / counts.min() > 64
    raw_rho = keep_probabilities(counts)
    mapping = equalize(counts, 64, int(counts.sum()))
    merged = np.zeros(mapping[-1] + 1, dtype=int)
    np.add.at(merged, mapping, counts)
    merged_rho = keep_probabilities(merged)
    assert raw_rho.min() < 0.01
    assert raw_rho.min() < merged_rho.min()


def test_scheme_record_is_flat():
    scheme = build_class_scheme(np.linspace(0, 1, 100), 4)
    record = scheme.to_record()
    assert set(record) == {"edges", "mapping", "counts", "keep_prob"}
    assert isinstance(record["edges"], list)
