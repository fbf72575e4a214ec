"""Finite-size Monte Carlo counterparts of the theoretical predictions.

Disorder realisations are keyed by ``RngSpec(seed, stream=trial)`` and split
into independent sub-streams for patterns, examples and probes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coupling import (CouplingMatrix, DreamingKernel, KernelView, ModelSetting, Setting, build_coupling,
                       build_information_matrix, dreaming_kernel, kernel_from_hebbian, spectrum,
                       unsupervised_hebbian)
from .data_gen import (STREAM_EXAMPLES, STREAM_PATTERNS, STREAM_PROBES, ExampleMeans, ExampleSet,
                       GroundTruthSet, ParameterDomainError, RngSpec, make_example_means,
                       make_ground_truths, nested_example_means, perturb_on_ball)
from .spectral_theory import law_for, wasserstein_to_bulk

DEFAULT_TRIALS = 100
PEAK_TOL = 1e-6


def _fields(J, S: np.ndarray) -> np.ndarray:
    if isinstance(J, (CouplingMatrix, KernelView)):
        return J.fields(S)
    return np.asarray(S, dtype=np.float64) @ np.asarray(J, dtype=np.float64)


def sign(h: np.ndarray) -> np.ndarray:
    """Spin sign with sign(0) = +1."""
    return np.where(h >= 0, np.int8(1), np.int8(-1))


def one_step(J, sigma0: np.ndarray) -> np.ndarray:
    """Parallel update sigma1 = sign(J sigma0); rows of ``sigma0`` are independent configurations."""
    return sign(_fields(J, sigma0))


def run_dynamics(J, sigma0: np.ndarray, steps: int) -> list[np.ndarray]:
    """Iterate the parallel update; exploratory only, no prediction attached."""
    out = [np.asarray(sigma0, dtype=np.int8)]
    for _ in range(steps):
        nxt = one_step(J, out[-1])
        out.append(nxt)
        if np.array_equal(nxt, out[-2]):
            break
    return out


def stability_field(J, sigma: np.ndarray) -> np.ndarray:
    """Delta_i = sigma_i sum_j J_ij sigma_j."""
    return np.asarray(sigma) * _fields(J, sigma)


def attractiveness_field(J, x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Delta_i(x, sigma) = x_i sum_j J_ij sigma_j."""
    return np.asarray(x) * _fields(J, sigma)


@dataclass(frozen=True)
class SimParams:
    setting: Setting
    N: int
    alpha: float
    t: float = 0.0
    p: float = 1.0  # probe overlap, storing setting
    r: float = 1.0  # example and probe quality, (un)supervised
    M: int = 1

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))
        ModelSetting(self.setting, self.alpha, self.r, self.M)
        if self.P < 1:
            raise ParameterDomainError(f"alpha*N={self.alpha * self.N} gives no patterns")

    @property
    def P(self) -> int:
        return int(round(self.alpha * self.N))


@dataclass
class TrialResult:
    """Disorder- and probe-averaged one-step statistics at one parameter point."""

    m0: float
    m1: float
    m0_stderr: float
    m1_stderr: float
    delta_mean: float
    delta_m2: float
    delta_m3c: float
    trials: int
    probes: int
    m1_var_between: float = 0.0
    m1_var_within: float = 0.0
    per_trial_m1: list = field(default_factory=list, repr=False)


def _trial_kernel(params: SimParams, base: RngSpec) -> tuple[GroundTruthSet, DreamingKernel]:
    gt = make_ground_truths(params.N, params.P, base.child(STREAM_PATTERNS))
    if params.setting is Setting.STORING:
        kernel = dreaming_kernel(build_information_matrix(gt, Setting.STORING))
    elif params.setting is Setting.SUPERVISED:
        means = make_example_means(gt, params.M, params.r, base.child(STREAM_EXAMPLES))
        kernel = dreaming_kernel(build_information_matrix(means, Setting.SUPERVISED))
    else:
        J0 = unsupervised_hebbian(gt, params.M, params.r, base.child(STREAM_EXAMPLES))
        kernel = kernel_from_hebbian(J0, Setting.UNSUPERVISED)
    return gt, kernel


def _probe_stats(view, targets: np.ndarray, probes: np.ndarray, zero_diagonal: bool) -> dict:
    h = view.fields(probes)
    if zero_diagonal:
        h = h - view.diagonal() * probes
    tf = targets.astype(np.float64)
    delta = (tf * h).ravel()
    # overlap of sign(h) with the target, keeping sign(0) = +1
    m1 = np.where(h >= 0, tf, -tf).mean(axis=1)
    m0 = (tf * probes).mean(axis=1)
    n = delta.size
    mean = float(delta.sum() / n)
    c = delta - mean
    c2 = c * c
    return {"m0": m0, "m1": m1, "d1": mean, "d2": float(delta @ delta) / n, "d3c": float(c2 @ c) / n}


def _one_trial(params: SimParams, ts, xs, seed: int, trial: int, probes_per_pattern: int,
               zero_diagonal: bool, max_patterns: int | None) -> dict:
    """Statistics for every (t, x) on one disorder realisation.

    For storing, x is the probe overlap p and the dataset is shared by all
    points; otherwise x is the quality r and sets both dataset and probes.
    """
    base = RngSpec(seed, trial)
    out = {}
    storing = params.setting is Setting.STORING
    datasets = {None: _trial_kernel(params, base)} if storing else {}
    for ix, x in enumerate(xs):
        if storing:
            gt, kernel = datasets[None]
        else:
            gt, kernel = _trial_kernel(SimParams(params.setting, params.N, params.alpha, r=x, M=params.M), base)
        targets = gt.patterns[:max_patterns] if max_patterns else gt.patterns
        targets = np.repeat(targets, probes_per_pattern, axis=0)
        # probes get their own stream per sweep point, never the training one
        probes = perturb_on_ball(targets, x, base.child(STREAM_PROBES, ix).generator())
        for t in ts:
            out[(float(t), float(x))] = _probe_stats(kernel.at(t), targets, probes, zero_diagonal)
    return out


def _aggregate(per_trial: list[dict]) -> TrialResult:
    m0_t = np.array([d["m0"].mean() for d in per_trial])
    m1_t = np.array([d["m1"].mean() for d in per_trial])
    within = np.array([d["m1"].var(ddof=1) if d["m1"].size > 1 else 0.0 for d in per_trial])
    n = len(per_trial)
    probes = sum(d["m1"].size for d in per_trial)
    if n > 1:
        m0_se, m1_se = m0_t.std(ddof=1) / math.sqrt(n), m1_t.std(ddof=1) / math.sqrt(n)
        between = float(m1_t.var(ddof=1))
    else:
        k = per_trial[0]["m1"].size
        m0_se = float(per_trial[0]["m0"].std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        m1_se = float(math.sqrt(within[0] / k)) if k > 1 else 0.0
        between = 0.0
    return TrialResult(
        m0=float(m0_t.mean()), m1=float(m1_t.mean()), m0_stderr=float(m0_se), m1_stderr=float(m1_se),
        delta_mean=float(np.mean([d["d1"] for d in per_trial])),
        delta_m2=float(np.mean([d["d2"] for d in per_trial])),
        delta_m3c=float(np.mean([d["d3c"] for d in per_trial])),
        trials=n, probes=probes, m1_var_between=between, m1_var_within=float(within.mean()),
        per_trial_m1=m1_t.tolist())


def max_parallel_trials(N: int, memory_limit: float | None, jobs: int) -> int:
    """Cap concurrent trials so each can hold one dense N x N float64 matrix."""
    if memory_limit is None:
        return max(1, jobs)
    return max(1, min(jobs, int(memory_limit // (8 * N * N))))


def retrieval_sweep(params: SimParams, ts, xs, trials: int = DEFAULT_TRIALS, seed: int = 0, *,
                    probes_per_pattern: int = 1, zero_diagonal: bool = False,
                    max_patterns: int | None = None, jobs: int = 1,
                    memory_limit: float | None = None) -> dict[tuple[float, float], TrialResult]:
    """One-step retrieval statistics on a (t, x) grid with shared disorder.

    Trial k uses the same patterns at every grid point (common random
    numbers).  Each stored pattern (or ground truth) is probed
    ``probes_per_pattern`` times per trial; results nest probes inside
    datasets and report both variance components.
    """
    if trials < 1:
        raise ParameterDomainError("trials must be >= 1")
    ts = [float(t) for t in ts]
    xs = [float(x) for x in xs]
    args = (params, ts, xs, seed)
    kw = (probes_per_pattern, zero_diagonal, max_patterns)
    workers = max_parallel_trials(params.N, memory_limit, jobs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_one_trial, *args, k, *kw) for k in range(trials)]
            results = [f.result() for f in futures]
    else:
        results = [_one_trial(*args, k, *kw) for k in range(trials)]
    return {key: _aggregate([res[key] for res in results]) for key in results[0]}


def run_retrieval_trials(params: SimParams, trials: int = DEFAULT_TRIALS, seed: int = 0, **kw) -> TrialResult:
    x = params.p if params.setting is Setting.STORING else params.r
    return retrieval_sweep(params, [params.t], [x], trials, seed, **kw)[(float(params.t), float(x))]


# -- squared error ------------------------------------------------------

def se_empirical(gt: GroundTruthSet, data, setting: Setting | str, t) -> float | list[float]:
    """(1/N)||J_zeta(t) - J_{s,u}(t)||_F^2 for one realisation.

    ``data`` is an ExampleSet/ExampleMeans, or for the unsupervised setting
    also a precomputed Hebbian matrix.  ``t`` may be a list.
    """
    setting = Setting(setting)
    ts = list(t) if np.ndim(t) else [t]
    ref = dreaming_kernel(build_information_matrix(gt, Setting.STORING))
    if setting is Setting.UNSUPERVISED and isinstance(data, np.ndarray):
        emp = kernel_from_hebbian(data, setting)
    else:
        emp = dreaming_kernel(build_information_matrix(data, setting))
    out = []
    for tt in ts:
        diff = ref.dense(tt).J - emp.dense(tt).J
        out.append(float(np.sum(diff * diff)) / gt.N)
    return out if np.ndim(t) else out[0]


def se_trials(setting: Setting | str, N: int, alpha: float, r: float, ts, Ms, trials: int = 20,
              seed: int = 0) -> dict[tuple[float, int], tuple[float, float]]:
    """Mean and stderr of the finite-M squared error over disorder.

    The sample sizes in ``Ms`` are nested within each realisation: the
    larger dataset extends the smaller one.
    """
    setting = Setting(setting)
    Ms = sorted(int(m) for m in Ms)
    P = int(round(alpha * N))
    acc: dict[tuple[float, int], list[float]] = {(float(t), M): [] for t in ts for M in Ms}
    for k in range(trials):
        base = RngSpec(seed, k)
        gt = make_ground_truths(N, P, base.child(STREAM_PATTERNS))
        if setting is Setting.SUPERVISED:
            datas = nested_example_means(gt, Ms, r, base.child(STREAM_EXAMPLES))
        elif setting is Setting.UNSUPERVISED:
            datas = unsupervised_hebbian(gt, Ms[-1], r, base.child(STREAM_EXAMPLES), checkpoints=Ms)
        else:
            raise ParameterDomainError("squared error needs the supervised or unsupervised setting")
        for M, data in zip(Ms, datas):
            for t, v in zip(ts, se_empirical(gt, data, setting, list(ts))):
                acc[(float(t), M)].append(v)
    return {key: (float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0)
            for key, v in acc.items()}


# -- empirical spectra ----------------------------------------------------

@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    hist_edges: np.ndarray
    hist_density: np.ndarray
    peak_location: float
    peak_mass: float
    low_cluster_mean: float
    w1: float
    zero_count: int


def sample_hebbian(params: SimParams, seed: int, trial: int = 0) -> tuple[GroundTruthSet, DreamingKernel]:
    return _trial_kernel(params, RngSpec(seed, trial))


def empirical_spectrum_histogram(params: SimParams, bins: int = 60, seed: int = 0, trial: int = 0,
                                 peak_tol: float = PEAK_TOL) -> SpectrumReport:
    """Spectrum of one finite-size J(t) compared with its limiting law.

    Eigenvalues come from a dense symmetric eigensolve of J(t).  The bulk is
    taken to be the top P eigenvalues (mass alpha); W1 compares them with the
    law's bulk quantiles.  For finite M the (un)supervised law is the M->inf
    one.
    """
    _, kernel = sample_hebbian(params, seed, trial)
    eig = spectrum(kernel.dense(params.t))
    law = law_for(params.setting, params.t, params.alpha, params.r)
    P = params.P
    low, bulk = eig[:params.N - P], eig[params.N - P:]
    hist, edges = np.histogram(eig, bins=bins, density=True)
    return SpectrumReport(
        eigenvalues=eig, hist_edges=edges, hist_density=hist, peak_location=law.peak,
        peak_mass=float(np.mean(np.abs(eig - law.peak) <= peak_tol)),
        low_cluster_mean=float(low.mean()) if low.size else float("nan"),
        w1=wasserstein_to_bulk(bulk, law),
        zero_count=int(np.sum(np.abs(eig) <= 1e-10)))
