"""One-step retrieval under the Gaussian approximation.

The per-site stability (or attractiveness) is treated as Gaussian with
moments mu1, mu2 computed from the limiting spectral law; the one-step Mattis
magnetization is then erf(mu1 / sqrt(2 (mu2 - mu1^2))).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .coupling import Setting
from .data_gen import ParameterDomainError
from .spectral_theory import (DEFAULT_RULE, QuadratureRule, SpectralLaw, integrate_full, law_for,
                              stability_integrals)

GA_THRESHOLD = 0.1


class Scenario(str, enum.Enum):
    STORING_STABILITY = "storing-stability"
    STORING_ATTRACTIVENESS = "storing-attractiveness"
    SUPERVISED_ATTRACTIVENESS = "supervised-attractiveness"
    UNSUPERVISED_ATTRACTIVENESS = "unsupervised-attractiveness"

    @property
    def setting(self) -> Setting:
        if self is Scenario.SUPERVISED_ATTRACTIVENESS:
            return Setting.SUPERVISED
        if self is Scenario.UNSUPERVISED_ATTRACTIVENESS:
            return Setting.UNSUPERVISED
        return Setting.STORING


@dataclass(frozen=True)
class MomentPair:
    mu1: float
    mu2: float

    @property
    def variance(self) -> float:
        return self.mu2 - self.mu1 ** 2

    @property
    def degenerate(self) -> bool:
        """Zero (or negative, from rounding) variance: the field is deterministic."""
        return self.variance <= 0.0


@dataclass(frozen=True)
class RetrievalScenario:
    """A retrieval question: which vectors probe which target, at what noise.

    ``p`` is the probe overlap for storing attractiveness; ``r`` is the
    example quality for the supervised/unsupervised cases (probes there are
    fresh examples, so their overlap with the ground truth is r).
    """

    kind: Scenario
    alpha: float
    t: float = 0.0
    p: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Scenario(self.kind))
        if not (0.0 <= self.p <= 1.0):
            raise ParameterDomainError(f"p={self.p} outside [0, 1]")
        if not (0.0 <= self.r <= 1.0):
            raise ParameterDomainError(f"r={self.r} outside [0, 1]")

    @property
    def law(self) -> SpectralLaw:
        r = self.r if self.kind.setting is not Setting.STORING else 1.0
        return law_for(self.kind.setting, self.t, self.alpha, r)

    @property
    def probe_overlap(self) -> float:
        if self.kind is Scenario.STORING_STABILITY:
            return 1.0
        if self.kind is Scenario.STORING_ATTRACTIVENESS:
            return self.p
        return self.r

    def with_x(self, x: float) -> "RetrievalScenario":
        """Same scenario with its sweep variable (p or r) set to ``x``."""
        if self.kind is Scenario.STORING_ATTRACTIVENESS:
            return RetrievalScenario(self.kind, self.alpha, self.t, p=x)
        if self.kind is Scenario.STORING_STABILITY:
            raise ParameterDomainError("the stability scenario has no noise parameter")
        return RetrievalScenario(self.kind, self.alpha, self.t, r=x)


def moments(sc: RetrievalScenario, rule: QuadratureRule = DEFAULT_RULE) -> MomentPair:
    law = sc.law
    a, t = sc.alpha, sc.t
    if np.isinf(t):
        raise ParameterDomainError("moments need finite t")
    i2, i3 = stability_integrals(law, rule)
    if sc.kind is Scenario.STORING_STABILITY:
        return MomentPair(i2 / a, i3 / a)
    sq = integrate_full(law, lambda lam: lam ** 2, rule)
    if sc.kind is Scenario.STORING_ATTRACTIVENESS:
        p = sc.p
        return MomentPair(p * i2 / a, (1 - p * p) * sq + p * p * i3 / a)
    r = sc.r
    if r == 0:
        raise ParameterDomainError("r=0: the first moment carries a 1/r factor")
    if sc.kind is Scenario.SUPERVISED_ATTRACTIVENESS:
        # no 1/r on the second moment: it enters through the Hebbian matrix
        return MomentPair(i2 / (a * r), (1 - r * r) * sq + i3 / a)
    first = integrate_full(law, lambda lam: lam, rule)
    return MomentPair(i2 / (a * r) - (1 - r * r) / r * first, i3 / a)


def m1_theory(m: MomentPair) -> float:
    """One-step magnetization erf(mu1 / sqrt(2 var)).

    A non-positive variance is the deterministic limit and returns sign(mu1)
    (0 when mu1 is 0 too); check ``m.degenerate`` to tell.
    """
    if m.degenerate:
        return float(np.sign(m.mu1))
    return float(erf(m.mu1 / math.sqrt(2.0 * m.variance)))


def m1_hopfield(alpha: float, self_coupling: bool = True) -> float:
    """Hebbian (t=0) stability magnetization, with or without J_ii."""
    if self_coupling:
        return float(erf((1 + alpha) / math.sqrt(2 * alpha)))
    return float(erf(1 / math.sqrt(2 * alpha)))


def m1_large_t(alpha: float, t: float) -> float:
    """Large-t asymptote of the storing stability magnetization."""
    k = (1 - alpha) / (2 * alpha)
    return 1 - math.exp(-k * t * t) / (t * math.sqrt(math.pi * k))


def ga_validity_bound(law: SpectralLaw, p: float, alpha: float | None = None,
                      rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Necessary-condition size 2 alpha p (1-p^2) * integral of lam^2.

    The third centred moment of the attractiveness is small only if this is
    much less than one.
    """
    if not (0.0 <= p <= 1.0):
        raise ParameterDomainError(f"p={p} outside [0, 1]")
    alpha = law.alpha if alpha is None else alpha
    if p == 0.0 or p == 1.0:
        return 0.0
    return 2 * alpha * p * (1 - p * p) * integrate_full(law, lambda lam: lam ** 2, rule)


def predict_curve(sc: RetrievalScenario, grid, threshold: float = GA_THRESHOLD,
                  rule: QuadratureRule = DEFAULT_RULE) -> list[dict]:
    """Rows (x, m0, m1_theory, ga_bound, ga_flag) over the sweep variable.

    The sweep variable is p for storing attractiveness, r for the
    supervised/unsupervised cases and alpha for storing stability.  Input
    order is preserved.  A row at r=0 (where mu1 has a 1/r) is reported as
    m1=0, its continuous limit.
    """
    rows = []
    for x in grid:
        x = float(x)
        if not (0.0 <= x <= 1.0):
            raise ParameterDomainError(f"grid value {x} outside [0, 1]")
        if sc.kind is Scenario.STORING_STABILITY:
            s = RetrievalScenario(sc.kind, x, sc.t)
            m0 = 1.0
        else:
            s = sc.with_x(x)
            m0 = x
        if s.kind in (Scenario.SUPERVISED_ATTRACTIVENESS, Scenario.UNSUPERVISED_ATTRACTIVENESS) and x == 0.0:
            m1 = 0.0
            degenerate = False
        else:
            mp = moments(s, rule)
            m1 = m1_theory(mp)
            degenerate = mp.degenerate
        bound = ga_validity_bound(s.law, s.probe_overlap, rule=rule)
        rows.append({"x": x, "m0": m0, "m1_theory": m1, "ga_bound": bound,
                     "ga_flag": bound > threshold, "degenerate": degenerate})
    return rows


def parse_sweep(text: str) -> tuple[str, np.ndarray]:
    """Parse ``name=start:stop:step`` (inclusive stop) or ``name=v1,v2,...``."""
    name, _, spec = text.partition("=")
    if not spec:
        raise ValueError(f"bad sweep {text!r}; expected name=start:stop:step")
    if ":" in spec:
        start, stop, step = (float(v) for v in spec.split(":"))
        n = int(round((stop - start) / step))
        values = start + step * np.arange(n + 1)
        values = values[values <= stop + 1e-12]
    else:
        values = np.array([float(v) for v in spec.split(",")])
    return name.strip(), np.round(values, 12)
