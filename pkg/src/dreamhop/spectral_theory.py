"""Limiting eigenvalue laws of the dreaming coupling and integrals against them.

The law at dreaming time t is a point mass (1 - alpha) at the dreamed peak
plus a bulk of mass alpha, the push-forward of a shifted Marchenko-Pastur law
MP(alpha, sigma2) + delta through ``eigen_map``.

Bulk integrals use the substitution lam = m + rho sin(theta), with m and rho
the midpoint and half-width of the support.  It turns the square-root edges
into a smooth periodic-like integrand in theta, so Gauss-Legendre in theta
converges geometrically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .coupling import ModelSetting, Setting, eigen_map
from .data_gen import ParameterDomainError

DEFAULT_NODES = 256
DEFAULT_RTOL = 1e-9
MAX_NODES = 1 << 14
NORMALIZATION_FLAG_TOL = 1e-6


class QuadratureError(ArithmeticError):
    """Non-finite integrand at a quadrature node."""


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre in theta; ``adaptive`` doubles n until two estimates agree."""

    n: int = DEFAULT_NODES
    adaptive: bool = True
    rtol: float = DEFAULT_RTOL
    max_n: int = MAX_NODES


DEFAULT_RULE = QuadratureRule()


@lru_cache(maxsize=32)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class SpectralLaw:
    alpha: float
    sigma2: float
    delta: float
    peak0: float
    t: float = 0.0

    def at(self, t: float) -> "SpectralLaw":
        return replace(self, t=float(t))

    @property
    def edges0(self) -> tuple[float, float]:
        s = math.sqrt(self.alpha)
        return (self.sigma2 * (1 - s) ** 2 + self.delta, self.sigma2 * (1 + s) ** 2 + self.delta)

    @property
    def edges(self) -> tuple[float, float]:
        lo, hi = self.edges0
        return (eigen_map(lo, self.t), eigen_map(hi, self.t))

    @property
    def peak(self) -> float:
        if np.isinf(self.t):
            return 1.0 if self.peak0 > 0 else 0.0
        return eigen_map(self.peak0, self.t)

    @property
    def peak_mass(self) -> float:
        return 1.0 - self.alpha

    @property
    def degenerate_bulk(self) -> float | None:
        """Location of the bulk when it collapses to a point, else None."""
        if np.isinf(self.t):
            return 1.0
        if self.sigma2 == 0.0:
            return eigen_map(self.delta, self.t)
        return None


def law_for(setting: ModelSetting | Setting | str, t: float = 0.0, alpha: float | None = None,
            r: float = 1.0) -> SpectralLaw:
    """Big-data, large-N law of J(t) for a setting.

    Accepts a ModelSetting or a bare variant name plus ``alpha`` and ``r``.
    """
    if isinstance(setting, ModelSetting):
        variant, alpha, r = setting.variant, setting.alpha, setting.r
    else:
        variant = Setting(setting)
        if alpha is None:
            raise ParameterDomainError("alpha is required")
        ModelSetting(variant, alpha, r)  # domain checks
    if t < 0:
        raise ParameterDomainError(f"t={t} must be >= 0")
    if variant is Setting.STORING:
        return SpectralLaw(alpha, 1.0, 0.0, 0.0, float(t))
    if variant is Setting.SUPERVISED:
        return SpectralLaw(alpha, r * r, 0.0, 0.0, float(t))
    shift = alpha * (1.0 - r * r)
    return SpectralLaw(alpha, r * r, shift, shift, float(t))


def _bulk_pieces(law: SpectralLaw):
    lm0, lp0 = law.edges0
    lm, lp = law.edges
    t, delta = law.t, law.delta
    pole = eigen_map(delta, t)
    gap = lm - pole
    if gap < -1e-12:
        raise ParameterDomainError(f"density pole {pole} lies inside the support [{lm}, {lp}]")
    pref = (1 + t) / (2 * math.pi * law.sigma2) * math.sqrt((1 + t * lm0) * (1 + t * lp0))
    return lm, lp, max(gap, 0.0), pref


def bulk_density(law: SpectralLaw, lam):
    """Density of the (unit-mass) bulk at ``lam``; zero off the open support."""
    lam = np.asarray(lam, dtype=np.float64)
    if law.degenerate_bulk is not None:
        return np.zeros_like(lam) if lam.ndim else 0.0
    lm, lp, gap, pref = _bulk_pieces(law)
    t, delta = law.t, law.delta
    inside = (lam > lm) & (lam < lp)
    x = np.where(inside, lam, (lm + lp) / 2)
    root = np.sqrt((lp - x) * (x - lm))
    den = (1 + t * (1 - x)) ** 2 * law.alpha * ((1 + t * delta) * x - (1 + t) * delta)
    out = np.where(inside, pref * root / den, 0.0)
    return out.item() if out.ndim == 0 else out


def _theta_weights(law: SpectralLaw, theta: np.ndarray, gl_w: np.ndarray, half_len: np.ndarray | float):
    """Bulk measure weights at angles ``theta`` (GL weights scaled by half_len)."""
    lm, lp, gap, pref = _bulk_pieces(law)
    m, rho = (lm + lp) / 2, (lp - lm) / 2
    phi = theta / 2 + math.pi / 4
    sp, cp = np.sin(phi), np.cos(phi)
    lam = m + rho * np.sin(theta)
    # (lp - lam)(lam - lm) = 4 rho^2 sin^2(phi) cos^2(phi); lam - lm = 2 rho sin^2(phi)
    num = 4 * rho * rho * (sp * cp) ** 2  # root * d lam/d theta
    t, delta = law.t, law.delta
    den = (1 + t * (1 - lam)) ** 2 * law.alpha * (1 + t * delta) * (2 * rho * sp * sp + gap)
    return lam, gl_w * half_len * pref * num / den


@lru_cache(maxsize=256)
def bulk_nodes(law: SpectralLaw, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with sum(w f(lam)) ~ integral of f d(bulk)."""
    x, w = gauss_legendre(n)
    lam, wt = _theta_weights(law, x * (math.pi / 2), w, math.pi / 2)
    lam.setflags(write=False)
    wt.setflags(write=False)
    return lam, wt


def _apply(f: Callable, lam: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(lam), dtype=np.float64)
    if vals.shape != lam.shape:
        vals = np.broadcast_to(vals, lam.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        where = lam[bad][:5]
        raise QuadratureError(f"integrand not finite at {bad.sum()} node(s), e.g. lambda={where.tolist()}")
    return vals


def integrate_bulk(law: SpectralLaw, f: Callable, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Integral of ``f`` against the unit-mass bulk of ``law``.

    ``f`` must accept a numpy array of eigenvalues.
    """
    point = law.degenerate_bulk
    if point is not None:
        return float(_apply(f, np.array([point]))[0])
    n = rule.n
    lam, w = bulk_nodes(law, n)
    est = float(np.dot(w, _apply(f, lam)))
    if not rule.adaptive:
        return est
    while n < rule.max_n:
        n *= 2
        lam, w = bulk_nodes(law, n)
        new = float(np.dot(w, _apply(f, lam)))
        if abs(new - est) <= rule.rtol * max(abs(new), 1e-300):
            return new
        est = new
    return est


def integrate_full(law: SpectralLaw, f: Callable, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Integral of ``f`` against the whole law: peak plus bulk."""
    peak = float(_apply(f, np.array([law.peak]))[0])
    return (1.0 - law.alpha) * peak + law.alpha * integrate_bulk(law, f, rule)


def bulk_normalization(law: SpectralLaw, rule: QuadratureRule = DEFAULT_RULE) -> float:
    return integrate_bulk(law, np.ones_like, rule)


def check_normalization(law: SpectralLaw, rule: QuadratureRule = DEFAULT_RULE,
                        tol: float = NORMALIZATION_FLAG_TOL) -> tuple[bool, float]:
    """(ok, |mass - 1|) for the bulk; never renormalises."""
    err = abs(bulk_normalization(law, rule) - 1.0)
    return err <= tol, err


# -- quantiles and distances -------------------------------------------

def bulk_cdf(law: SpectralLaw, lam, n: int = 128) -> np.ndarray:
    """Bulk CDF at ``lam`` by Gauss-Legendre on [-pi/2, theta(lam)]."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    lm, lp = law.edges
    m, rho = (lm + lp) / 2, (lp - lm) / 2
    theta = np.arcsin(np.clip((lam - m) / rho, -1.0, 1.0))
    x, w = gauss_legendre(n)
    half = (theta + math.pi / 2) / 2
    th = -math.pi / 2 + half[:, None] * (x[None, :] + 1)
    _, wt = _theta_weights(law, th, w[None, :], half[:, None])
    out = wt.sum(axis=1)
    out[lam <= lm] = 0.0
    out[lam >= lp] = 1.0
    return out


def bulk_quantiles(law: SpectralLaw, u, tol: float = 1e-10) -> np.ndarray:
    """Inverse bulk CDF by vectorised bisection, to ``tol`` in lambda."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if law.degenerate_bulk is not None:
        return np.full_like(u, law.degenerate_bulk)
    lm, lp = law.edges
    lo = np.full_like(u, lm)
    hi = np.full_like(u, lp)
    while np.max(hi - lo) > tol:
        mid = (lo + hi) / 2
        below = bulk_cdf(law, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2


def wasserstein_to_bulk(eigs, law: SpectralLaw) -> float:
    """W1 between an empirical sample and the bulk, via midpoint quantiles."""
    x = np.sort(np.asarray(eigs, dtype=np.float64))
    n = x.size
    q = bulk_quantiles(law, (np.arange(n) + 0.5) / n)
    return float(np.mean(np.abs(x - q)))


# -- squared error ------------------------------------------------------

def f_supervised(lam, r: float, t: float):
    return lam * r * r * (t + 1) / (lam * (r * r - 1) * t + t + 1)


def f_unsupervised(lam, alpha: float, r: float, t: float):
    a = alpha * (r * r - 1)
    num = (t + 1) * (lam * r * r + a * ((lam - 1) * t - 1))
    den = lam * (r * r - 1) * t * (alpha * t + 1) - a * (t + 1) * t + t + 1
    return num / den


def _se_map(setting: Setting | str, alpha: float, r: float, t: float):
    setting = Setting(setting)
    if np.isinf(t):
        raise ParameterDomainError("squared error is defined for finite t")
    if setting is Setting.SUPERVISED:
        return lambda lam: f_supervised(lam, r, t)
    if setting is Setting.UNSUPERVISED:
        return lambda lam: f_unsupervised(lam, alpha, r, t)
    raise ParameterDomainError("squared error compares supervised/unsupervised couplings to the ground truth")


def se_theory(setting: Setting | str, alpha: float, r: float, t: float, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Limiting (1/N)||J_zeta(t) - J_{s,u}(t)||_F^2, integrated over the ground-truth law."""
    fmap = _se_map(setting, alpha, r, t)
    law = law_for(Setting.STORING, t, alpha)
    return max(integrate_full(law, lambda lam: (lam - fmap(lam)) ** 2, rule), 0.0)


def se_bulk_plus_constant(setting: Setting | str, alpha: float, r: float, t: float,
                          rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Same quantity written as explicit constant plus alpha times a bulk integral."""
    setting = Setting(setting)
    fmap = _se_map(setting, alpha, r, t)
    law = law_for(Setting.STORING, t, alpha)
    const = 0.0
    if setting is Setting.UNSUPERVISED:
        a = alpha * (r * r - 1)
        const = (1 - alpha) * (a * (t + 1) / (a * t - 1)) ** 2
    return const + alpha * integrate_bulk(law, lambda lam: (lam - fmap(lam)) ** 2, rule)


# -- stability moments (basic storing) ---------------------------------

def stability_integrals(law: SpectralLaw, rule: QuadratureRule = DEFAULT_RULE) -> tuple[float, float]:
    """Integrals of lam^2/(1+t(1-lam)) and lam^3/(1+t(1-lam)) over the full law."""
    t = law.t
    i2 = integrate_full(law, lambda lam: lam ** 2 / (1 + t * (1 - lam)), rule)
    i3 = integrate_full(law, lambda lam: lam ** 3 / (1 + t * (1 - lam)), rule)
    return i2, i3


def stability_moments_mp(alpha: float, t: float, rule: QuadratureRule = DEFAULT_RULE) -> tuple[float, float]:
    """Storing stability moments written over the undreamed MP(alpha, 1) bulk."""
    mp = law_for(Setting.STORING, 0.0, alpha)
    mu1 = integrate_bulk(mp, lambda lam: (1 + t) * lam ** 2 / (1 + t * lam), rule)
    mu2 = integrate_bulk(mp, lambda lam: (1 + t) ** 2 * lam ** 3 / (1 + t * lam) ** 2, rule)
    return mu1, mu2


def large_t_moments(alpha: float, t: float) -> tuple[float, float]:
    """Leading large-t behaviour of the storing stability moments."""
    return 1 - alpha / ((alpha - 1) * t * t), 1 - 3 * alpha / ((alpha - 1) * t * t)


def mp_moment_checks(law: SpectralLaw, rule: QuadratureRule = DEFAULT_RULE, tol: float = 1e-6) -> dict:
    """Check quadrature moments of a storing law against their closed forms.

    At t=0 the targets are 1+alpha and alpha^2+3alpha+1 (abs tol ``tol``);
    for t>0 the large-t expansion with O(t^-3) allowances 10/t^3 and 30/t^3.
    """
    if law.sigma2 != 1.0 or law.delta != 0.0:
        raise ParameterDomainError("closed moments are for the basic storing law")
    a, t = law.alpha, law.t
    i2, i3 = stability_integrals(law, rule)
    mu1, mu2 = i2 / a, i3 / a
    if t == 0:
        want = (1 + a, a * a + 3 * a + 1)
        tols = (tol, tol)
        kind = "closed form at t=0"
    else:
        want = large_t_moments(a, t)
        tols = (10 / t ** 3, 30 / t ** 3)
        kind = "large-t expansion"
    errs = (abs(mu1 - want[0]), abs(mu2 - want[1]))
    return {"alpha": a, "t": t, "kind": kind, "mu1": mu1, "mu2": mu2, "mu1_expected": want[0],
            "mu2_expected": want[1], "mu1_error": errs[0], "mu2_error": errs[1],
            "tolerance": tols, "passed": errs[0] < tols[0] and errs[1] < tols[1]}


def density_grid(law: SpectralLaw, k: int) -> list[dict]:
    """k equispaced points over the bulk support (edges excluded) with densities.

    Densities are those of alpha * bulk, so peak and bulk together carry unit
    mass.
    """
    lm, lp = law.edges
    rows = []
    if law.degenerate_bulk is not None:
        grid = np.array([law.degenerate_bulk])
        dens = np.array([np.inf])
    else:
        grid = lm + (lp - lm) * (np.arange(k) + 0.5) / k
        dens = law.alpha * bulk_density(law, grid)
    for lam, d in zip(grid, np.atleast_1d(dens)):
        rows.append({"lambda": float(lam), "density": float(d), "peak_location": law.peak,
                     "peak_mass": law.peak_mass})
    return rows
