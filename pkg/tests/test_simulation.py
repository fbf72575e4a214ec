import dataclasses
import math

import numpy as np
import pytest

from dreamhop.coupling import build_coupling, build_information_matrix, eigen_map
from dreamhop.data_gen import (ParameterDomainError, RngSpec, make_example_means, make_ground_truths, overlap,
                               perturb_on_ball)
from dreamhop.retrieval_theory import RetrievalScenario, Scenario, m1_hopfield, moments
from dreamhop.simulation import (SimParams, attractiveness_field, empirical_spectrum_histogram, max_parallel_trials,
                                 one_step, retrieval_sweep, run_dynamics, run_retrieval_trials, se_empirical,
                                 se_trials, sign, stability_field)


def _storing_J(N, P, seed, t=0.0):
    gt = make_ground_truths(N, P, RngSpec(seed))
    return gt, build_coupling(build_information_matrix(gt, "storing"), t)


def test_sign_convention():
    assert sign(np.array([-0.5, 0.0, 2.0])).tolist() == [-1, 1, 1]


def test_one_step_identity():
    s = make_ground_truths(10, 3, RngSpec(0)).patterns
    assert np.array_equal(one_step(np.eye(10), s), s)
    assert np.all(stability_field(np.eye(10), s) == 1.0)


def test_low_load_storing_retrieves():
    gt, J = _storing_J(500, 25, 1)
    out = one_step(J, gt.patterns)
    assert np.mean(overlap(out, gt.patterns)) >= 0.99


def test_projector_fixed_point():
    gt, J = _storing_J(200, 40, 2, t=np.inf)
    # J(inf) projects onto the pattern span, so every pattern is a fixed point
    assert np.allclose(J.fields(gt.patterns), gt.patterns, atol=1e-9)
    traj = run_dynamics(J, gt.patterns, 5)
    assert len(traj) == 2 and np.array_equal(traj[-1], gt.patterns)


def test_flip_fraction_identity():
    gt, J = _storing_J(400, 60, 3)
    s = gt.patterns
    delta = stability_field(J, s)
    flips = np.mean(one_step(J, s) != s, axis=1)
    assert np.allclose(flips, np.mean(delta < 0, axis=1))
    assert np.allclose(overlap(one_step(J, s), s), 1 - 2 * flips)


def test_mean_stability_is_one_plus_alpha():
    N, P = 1000, 100
    gt, J = _storing_J(N, P, 4)
    d = stability_field(J, gt.patterns)
    # E Delta = (1/N) sum_nu (xi^mu . xi^nu)^2 / N = 1 + (P-1)/N
    assert abs(d.mean() - (1 + (P - 1) / N)) < 3 * math.sqrt(0.1) / math.sqrt(N * P)


def test_attractiveness_reduces_to_stability():
    gt, J = _storing_J(300, 30, 5)
    s = gt.patterns
    assert np.array_equal(attractiveness_field(J, s, s), stability_field(J, s))
    x = perturb_on_ball(s, 0.5, RngSpec(5, 9))
    assert attractiveness_field(J, s, x).shape == s.shape


def test_fixed_point_idempotent():
    gt, J = _storing_J(300, 15, 6)
    s1 = one_step(J, gt.patterns)
    fixed = np.all(one_step(J, s1) == s1, axis=1)
    assert fixed.mean() > 0.9


def test_sim_moments_match_theory():
    N, a = 2000, 0.2
    for t in (0.0, 2.0):
        res = run_retrieval_trials(SimParams("storing", N, a, t=t), trials=2, seed=1)
        m = moments(RetrievalScenario(Scenario.STORING_STABILITY, a, t))
        # finite-N corrections are O(1/N) on top of sampling noise
        assert abs(res.delta_mean - m.mu1) < 0.02 * m.mu1
        assert abs(res.delta_m2 - m.mu2) < 0.03 * m.mu2


def test_hopfield_magnetization_simulated():
    res = run_retrieval_trials(SimParams("storing", 2000, 0.2), trials=2, seed=2)
    assert abs(res.m1 - m1_hopfield(0.2)) < 5 * max(res.m1_stderr, 1e-3)
    assert res.m0 == 1.0 and res.trials == 2 and res.probes == 2 * 400


def test_sweep_shared_disorder_and_determinism():
    params = SimParams("storing", 300, 0.1)
    a = retrieval_sweep(params, [0.0, 1.0], [0.3, 0.6], trials=2, seed=5)
    b = retrieval_sweep(params, [0.0, 1.0], [0.3, 0.6], trials=2, seed=5)
    assert set(a) == {(0.0, 0.3), (0.0, 0.6), (1.0, 0.3), (1.0, 0.6)}
    assert all(a[k].m1 == b[k].m1 for k in a)
    assert abs(a[(0.0, 0.3)].m0 - 0.3) < 0.05
    many = retrieval_sweep(params, [0.0], [0.6], trials=2, seed=5, probes_per_pattern=3)[(0.0, 0.6)]
    assert many.probes == 2 * 30 * 3 and many.m1_var_within >= 0


def test_parallel_matches_serial():
    params = SimParams("supervised", 200, 0.1, r=0.8, M=5)
    ser = retrieval_sweep(params, [1.0], [0.8], trials=3, seed=7)
    par = retrieval_sweep(params, [1.0], [0.8], trials=3, seed=7, jobs=2)
    assert ser[(1.0, 0.8)].m1 == par[(1.0, 0.8)].m1
    assert max_parallel_trials(1000, 8e6 * 3, 8) == 3 and max_parallel_trials(1000, None, 4) == 4


def test_zero_diagonal_variant():
    params = SimParams("storing", 500, 0.1)
    res = run_retrieval_trials(params, trials=1, seed=3, zero_diagonal=True)
    assert abs(res.delta_mean - 1.0) < 0.02  # the self-coupling J_ii = alpha is removed
    assert abs(res.m1 - m1_hopfield(0.1, self_coupling=False)) < 0.01


def test_trials_domain():
    with pytest.raises(ParameterDomainError):
        retrieval_sweep(SimParams("storing", 100, 0.1), [0.0], [1.0], trials=0)
    with pytest.raises(ParameterDomainError):
        SimParams("storing", 5, 0.01)


# -- squared error --------------------------------------------------------

def test_se_empirical_zero_at_r1():
    gt = make_ground_truths(60, 6, RngSpec(1))
    means = make_example_means(gt, 3, 1.0, RngSpec(1, 1))
    assert se_empirical(gt, means, "supervised", 0.0) < 1e-20
    assert max(se_empirical(gt, means, "supervised", [0.0, 5.0])) < 1e-20


def test_se_empirical_frobenius_oracle():
    gt = make_ground_truths(80, 8, RngSpec(2))
    means = make_example_means(gt, 4, 0.5, RngSpec(2, 1))
    t = 2.0
    ref = build_coupling(build_information_matrix(gt, "storing"), t).J
    X = means.means.astype(float)
    C = X @ X.T / 80
    emp = X.T @ ((1 + t) * np.linalg.inv(np.eye(8) + t * C)) @ X / 80
    want = np.sum((ref - emp) ** 2) / 80
    assert se_empirical(gt, means, "supervised", t) == pytest.approx(want, rel=1e-9)


def test_se_sign_flip_invariance():
    gt = make_ground_truths(60, 6, RngSpec(3))
    means = make_example_means(gt, 4, 0.5, RngSpec(3, 1))
    flipped = dataclasses.replace(means, means=-means.means)
    assert se_empirical(gt, flipped, "supervised", 1.0) == pytest.approx(
        se_empirical(gt, means, "supervised", 1.0), rel=1e-12)


def test_se_trials_decrease_with_m():
    res = se_trials("supervised", 200, 0.1, 0.5, [0.0], [2, 20], trials=3, seed=1)
    assert res[(0.0, 20)][0] < res[(0.0, 2)][0]
    with pytest.raises(ParameterDomainError):
        se_trials("storing", 100, 0.1, 0.5, [0.0], [2], trials=1)


# -- spectra --------------------------------------------------------------

def test_spectrum_push_forward_same_realisation():
    p0 = SimParams("storing", 300, 0.2)
    p3 = SimParams("storing", 300, 0.2, t=3.0)
    e0 = empirical_spectrum_histogram(p0, seed=4).eigenvalues
    e3 = empirical_spectrum_histogram(p3, seed=4).eigenvalues
    assert np.allclose(np.sort(eigen_map(np.clip(e0, 0, None), 3.0)), e3, atol=1e-9)


def test_spectrum_zero_mass_and_w1():
    rep = empirical_spectrum_histogram(SimParams("storing", 500, 0.2, t=1.0), seed=1)
    assert rep.zero_count == 400 and rep.peak_mass == pytest.approx(0.8)
    assert rep.w1 < 0.05
    again = empirical_spectrum_histogram(SimParams("storing", 500, 0.2, t=1.0), seed=1)
    assert np.array_equal(rep.eigenvalues, again.eigenvalues)


def test_unsupervised_low_cluster():
    rep = empirical_spectrum_histogram(SimParams("unsupervised", 1000, 0.1, r=0.6, M=200), seed=2)
    assert abs(rep.low_cluster_mean - 0.064) < 0.1 * 0.064
    assert rep.peak_location == pytest.approx(0.064)
