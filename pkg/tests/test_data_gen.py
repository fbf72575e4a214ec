import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dreamhop.data_gen import (ExampleSet, GroundTruthSet, LoadDomainError, ParameterDomainError, RngSpec,
                               example_block, hamming, load_dataset, make_example_means, make_examples,
                               make_ground_truths, nested_example_means, overlap, perturb_on_ball,
                               sample_rademacher, save_dataset)


def test_rademacher_degenerate():
    assert np.all(sample_rademacher(1.0, 5, RngSpec(1)) == 1)
    assert np.all(sample_rademacher(-1.0, 5, RngSpec(1)) == -1)


def test_rademacher_mean_clt():
    x = sample_rademacher(0.0, 10**6, RngSpec(7))
    assert abs(x.mean()) < 4 / np.sqrt(10**6)
    assert set(np.unique(x)) == {-1, 1}


def test_rademacher_domain():
    with pytest.raises(ParameterDomainError):
        sample_rademacher(1.5, 3, RngSpec(0))
    with pytest.raises(ParameterDomainError):
        sample_rademacher(0.2, 0, RngSpec(0))


def test_rng_streams_reproducible_and_distinct():
    a = RngSpec(3, 1).generator(2).random(4)
    b = RngSpec(3, 1).generator(2).random(4)
    c = RngSpec(3, 1).child(2).generator().random(4)
    d = RngSpec(3, 2).generator(2).random(4)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_ground_truths_deterministic():
    a = make_ground_truths(4, 2, RngSpec(11))
    b = make_ground_truths(4, 2, RngSpec(11))
    assert np.array_equal(a.patterns, b.patterns)
    assert a.patterns.dtype == np.int8


def test_ground_truths_correlations_small():
    gt = make_ground_truths(1000, 300, RngSpec(5))
    xi = gt.patterns.astype(float)
    C = xi @ xi.T / gt.N
    off = C - np.diag(np.diag(C))
    assert np.max(np.abs(off)) < 5 / np.sqrt(gt.N)
    assert np.allclose(np.diag(C), 1.0)


def test_load_above_one_rejected():
    with pytest.raises(LoadDomainError):
        make_ground_truths(4, 5, RngSpec(0))


def test_examples_r1_are_archetypes():
    gt = make_ground_truths(30, 3, RngSpec(1))
    ex = make_examples(gt, 4, 1.0, RngSpec(1, 1))
    assert np.array_equal(ex.examples, np.repeat(gt.patterns[:, None, :], 4, axis=1))


def test_examples_r0_orthogonal():
    gt = make_ground_truths(2000, 2, RngSpec(2))
    ex = make_examples(gt, 50, 0.0, RngSpec(2, 1))
    ov = (ex.examples * gt.patterns[:, None, :]).mean(axis=2)
    assert abs(ov.mean()) < 0.01


def test_examples_quality_per_entry():
    gt = make_ground_truths(20, 1, RngSpec(3))
    ex = make_examples(gt, 10**4, 0.5, RngSpec(3, 1))
    chi_bar = (ex.examples[0] * gt.patterns[0]).mean(axis=0)
    # the 0.02 band is ~2.3 standard deviations per entry, so a few entries may miss it
    assert np.mean(np.abs(chi_bar - 0.5) < 0.02) > 0.9
    assert abs(chi_bar.mean() - 0.5) < 0.01


def test_examples_domain():
    gt = make_ground_truths(10, 2, RngSpec(0))
    with pytest.raises(ParameterDomainError):
        make_examples(gt, 3, 1.2, RngSpec(0))


def test_flip_independence_chi_square():
    # consecutive flips within an example: 2x2 contingency should be independent
    gt = make_ground_truths(400, 5, RngSpec(4))
    ex = make_examples(gt, 40, 0.3, RngSpec(4, 1))
    chi = (ex.examples * gt.patterns[:, None, :]).reshape(-1, gt.N)
    a, b = chi[:, :-1].ravel() > 0, chi[:, 1:].ravel() > 0
    table = np.array([[np.sum(a & b), np.sum(a & ~b)], [np.sum(~a & b), np.sum(~a & ~b)]])
    _, pval, _, _ = stats.chi2_contingency(table)
    assert pval > 1e-4


def test_example_block_prefix_nested():
    gt = make_ground_truths(50, 3, RngSpec(9))
    big = example_block(gt, 1, 20, 0.4, RngSpec(9, 1))
    small = example_block(gt, 1, 8, 0.4, RngSpec(9, 1))
    tail = example_block(gt, 1, 20, 0.4, RngSpec(9, 1), start=8)
    assert np.array_equal(big[:8], small)
    assert np.array_equal(big[8:], tail)


def test_nested_means_distribution():
    gt = make_ground_truths(4000, 2, RngSpec(6))
    means = nested_example_means(gt, [50, 200], 0.6, RngSpec(6, 1))
    for m in means:
        chi_bar = m.means * gt.patterns
        assert abs(chi_bar.mean() - 0.6) < 0.01
        assert abs(chi_bar.var() - (1 - 0.36) / m.M) < 0.2 * (1 - 0.36) / m.M
    one = make_example_means(gt, 50, 0.6, RngSpec(6, 1))
    assert np.array_equal(one.means, means[0].means)


def test_perturb_identity_at_one():
    x = make_ground_truths(100, 3, RngSpec(1)).patterns
    assert np.array_equal(perturb_on_ball(x, 1.0, RngSpec(2)), x)
    assert hamming(x[0], x[0]) == 0


def test_perturb_half_distance():
    x = make_ground_truths(10**4, 1, RngSpec(8)).patterns[0]
    y = perturb_on_ball(x, 0.0, RngSpec(9))
    assert 0.47 <= hamming(x, y) / x.size <= 0.53


def test_perturb_overlap_tracks_p():
    x = make_ground_truths(20000, 1, RngSpec(1)).patterns[0]
    for p in (0.2, 0.7):
        y = perturb_on_ball(x, p, RngSpec(3, int(p * 10)))
        assert abs(overlap(x, y) - p) < 0.03
        assert abs(hamming(x, y) - x.size * (1 - p) / 2) < 0.02 * x.size


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**31))
def test_hamming_flip_fraction_identity(n, seed):
    gen = np.random.default_rng(seed)
    a = np.where(gen.random(n) < 0.5, 1, -1)
    b = np.where(gen.random(n) < 0.5, 1, -1)
    assert np.isclose(0.5 * (1 - overlap(a, b)), hamming(a, b) / n)


def test_dataset_round_trip(tmp_path):
    gt = make_ground_truths(12, 3, RngSpec(1))
    ex = make_examples(gt, 4, 0.5, RngSpec(1, 1))
    bin_path, json_path = save_dataset(tmp_path / "d", gt, ex, seed=1, setting="supervised")
    meta = json.loads(json_path.read_text())
    assert {"N", "P", "M", "r", "seed", "setting"} <= set(meta)
    raw = np.fromfile(bin_path, dtype=np.int8).reshape(3, 5, 12)
    assert np.array_equal(raw[1, 0], gt.patterns[1])  # archetype first in its block
    assert np.array_equal(raw[1, 3], ex.examples[1, 2])
    gt2, ex2, _ = load_dataset(tmp_path / "d")
    assert np.array_equal(gt2.patterns, gt.patterns) and np.array_equal(ex2.examples, ex.examples)


def test_dataset_round_trip_no_examples(tmp_path):
    gt = make_ground_truths(5, 1, RngSpec(2))
    save_dataset(tmp_path / "g", gt)
    gt2, ex2, meta = load_dataset(tmp_path / "g")
    assert ex2 is None and meta["M"] == 0
    assert np.array_equal(gt2.patterns, gt.patterns)
    assert GroundTruthSet(np.ones((1, 1), np.int8)).alpha == 1.0
    assert ExampleSet(np.ones((1, 2, 3), np.int8), 1.0).M == 2
