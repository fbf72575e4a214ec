"""Seeded generation of patterns, ground truths, noisy examples and probes.

Every generator is a pure function of its parameters and an :class:`RngSpec`.
Spins are stored as ``int8`` arrays with entries in ``{-1, +1}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Stream ids used by the simulation code. Training data and probes never share
# a stream.
STREAM_PATTERNS = 0
STREAM_EXAMPLES = 1
STREAM_PROBES = 2


class ParameterDomainError(ValueError):
    """A parameter lies outside the domain of the operation."""


class LoadDomainError(ParameterDomainError):
    """More stored patterns than neurons (load above one)."""


@dataclass(frozen=True)
class RngSpec:
    """Key of a counter-based (Philox) random stream.

    ``child(k)`` names a sub-stream; ``generator(*subkeys)`` returns a fresh
    generator for ``(stream, *path, *subkeys)``.  Equal keys always give
    bit-identical draws, whatever else has been drawn before.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def generator(self, *subkeys: int) -> np.random.Generator:
        key = (int(self.stream), *self.path, *map(int, subkeys))
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(self.seed), spawn_key=key)))

    def child(self, *keys: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream, self.path + tuple(int(k) for k in keys))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngSpec or numpy Generator, got {type(rng).__name__}")


def _check_quality(name: str, value: float, low: float = 0.0) -> None:
    if not (low <= value <= 1.0):
        raise ParameterDomainError(f"{name}={value} outside [{low}, 1]")


@dataclass(frozen=True)
class GroundTruthSet:
    patterns: np.ndarray  # (P, N) int8

    @property
    def P(self) -> int:
        return self.patterns.shape[0]

    @property
    def N(self) -> int:
        return self.patterns.shape[1]

    @property
    def alpha(self) -> float:
        return self.P / self.N


@dataclass(frozen=True)
class ExampleSet:
    """Noisy examples ``examples[mu, A] = chi[mu, A] * zeta[mu]``."""

    examples: np.ndarray  # (P, M, N) int8
    r: float

    @property
    def P(self) -> int:
        return self.examples.shape[0]

    @property
    def M(self) -> int:
        return self.examples.shape[1]

    @property
    def N(self) -> int:
        return self.examples.shape[2]

    def means(self) -> np.ndarray:
        """Per-class empirical means, shape (P, N)."""
        return self.examples.mean(axis=1, dtype=np.float64)


@dataclass(frozen=True)
class ExampleMeans:
    """Class means of M examples without the examples themselves.

    Only the supervised coupling needs these; the count of +1 flips per
    entry is Binomial(M, (1+r)/2), which is what gets sampled.
    """

    means: np.ndarray  # (P, N) float64, each entry chi_bar * zeta
    M: int
    r: float

    @property
    def P(self) -> int:
        return self.means.shape[0]

    @property
    def N(self) -> int:
        return self.means.shape[1]


def _rademacher(gen: np.random.Generator, p: float, shape) -> np.ndarray:
    # strict '<' keeps p=-1 at all -1 and p=1 at all +1
    up = gen.random(shape, dtype=np.float32) < np.float32((1.0 + p) / 2.0) if -1 < p < 1 else np.full(shape, p > 0)
    out = np.where(up, np.int8(1), np.int8(-1))
    return out


def sample_rademacher(p: float, n: int, rng) -> np.ndarray:
    """Draw ``n`` i.i.d. Rad(p) spins: +1 with probability (1+p)/2."""
    if not (-1.0 <= p <= 1.0):
        raise ParameterDomainError(f"p={p} outside [-1, 1]")
    if n < 1:
        raise ParameterDomainError(f"n={n} must be >= 1")
    return _rademacher(_as_generator(rng), p, (n,))


def make_ground_truths(N: int, P: int, rng) -> GroundTruthSet:
    if N < 1 or P < 1:
        raise ParameterDomainError(f"need N, P >= 1, got N={N}, P={P}")
    if P > N:
        raise LoadDomainError(f"P={P} > N={N}: load must satisfy P/N <= 1")
    return GroundTruthSet(_rademacher(_as_generator(rng), 0.0, (P, N)))


def make_examples(gt: GroundTruthSet, M: int, r: float, rng: RngSpec) -> ExampleSet:
    """M noisy copies of each archetype, entries flipped independently.

    Archetype ``mu`` draws from sub-stream ``mu`` of ``rng`` so blocks can be
    regenerated (or produced in parallel) independently of each other.
    """
    _check_quality("r", r)
    if M < 1:
        raise ParameterDomainError(f"M={M} must be >= 1")
    out = np.empty((gt.P, M, gt.N), dtype=np.int8)
    for mu in range(gt.P):
        out[mu] = example_block(gt, mu, M, r, rng)
    return ExampleSet(out, r)


def example_block(gt: GroundTruthSet, mu: int, M: int, r: float, rng: RngSpec, start: int = 0) -> np.ndarray:
    """Examples ``start..M-1`` of archetype ``mu`` as an (M-start, N) block.

    Rows are generated one example at a time from a per-archetype stream, so
    a prefix of a larger dataset is exactly the smaller dataset.
    """
    gen = rng.generator(mu)
    chi = _rademacher(gen, r, (M, gt.N))
    return (chi[start:] * gt.patterns[mu]).astype(np.int8)


def make_example_means(gt: GroundTruthSet, M: int, r: float, rng: RngSpec) -> ExampleMeans:
    _check_quality("r", r)
    if M < 1:
        raise ParameterDomainError(f"M={M} must be >= 1")
    return nested_example_means(gt, [M], r, rng)[0]


def nested_example_means(gt: GroundTruthSet, Ms, r: float, rng: RngSpec) -> list[ExampleMeans]:
    """Class means for increasing sample sizes sharing the same examples.

    The dataset for ``Ms[k]`` contains the one for ``Ms[k-1]`` plus fresh
    examples, which makes finite-M comparisons paired.
    """
    _check_quality("r", r)
    Ms = list(Ms)
    if sorted(Ms) != Ms or Ms[0] < 1:
        raise ParameterDomainError(f"sample sizes must be increasing and >= 1: {Ms}")
    gen = rng.generator()
    q = (1.0 + r) / 2.0
    ups = np.zeros((gt.P, gt.N), dtype=np.int64)
    prev = 0
    out = []
    for M in Ms:
        ups += gen.binomial(M - prev, q, size=ups.shape)
        prev = M
        chi_bar = (2.0 * ups - M) / M
        out.append(ExampleMeans(chi_bar * gt.patterns, M, r))
    return out


def perturb_on_ball(x: np.ndarray, p: float, rng) -> np.ndarray:
    """Flip each spin of ``x`` with probability (1-p)/2.

    Works row-wise on a stack of configurations as well.
    """
    _check_quality("p", p)
    x = np.asarray(x)
    eta = _rademacher(_as_generator(rng), p, x.shape)
    return (eta * x).astype(np.int8)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Hamming distance (1/4) sum (a_i - b_i)^2."""
    d = np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)
    return int((d * d).sum() // 4)


def overlap(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mattis overlap (1/N) sum_i x_i y_i along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    return (x * y).mean(axis=-1)


# -- dataset dump ---------------------------------------------------------

def save_dataset(path, gt: GroundTruthSet, ex: ExampleSet | None = None, *, seed: int | None = None,
                 setting: str = "storing") -> tuple[Path, Path]:
    """Write ``<path>.bin`` (int8, row-major) and a ``<path>.json`` sidecar.

    Layout: one block per archetype, the archetype row followed by its M
    example rows.
    """
    path = Path(path)
    M = 0 if ex is None else ex.M
    r = None if ex is None else ex.r
    blocks = gt.patterns[:, None, :] if ex is None else np.concatenate([gt.patterns[:, None, :], ex.examples], axis=1)
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(np.ascontiguousarray(blocks, dtype=np.int8).tobytes(order="C"))
    meta = {"N": gt.N, "P": gt.P, "M": M, "r": r, "seed": seed, "setting": setting,
            "dtype": "int8", "layout": "row-major; per archetype: archetype row then M example rows"}
    json_path = path.with_suffix(".json")
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return bin_path, json_path


def load_dataset(path) -> tuple[GroundTruthSet, ExampleSet | None, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    N, P, M = meta["N"], meta["P"], meta["M"]
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=np.int8)
    blocks = raw.reshape(P, M + 1, N)
    gt = GroundTruthSet(blocks[:, 0, :].copy())
    ex = ExampleSet(blocks[:, 1:, :].copy(), meta["r"]) if M > 0 else None
    return gt, ex, meta
