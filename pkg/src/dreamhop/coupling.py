"""Dreaming coupling matrices for the storing, supervised and unsupervised settings.

All three settings share the form

    J(t) = (1/D) X^T (1+t)(1 + t C)^{-1} X,    C = X X^T / D,

where X holds the stored vectors on its rows.  J(t) is evaluated spectrally:
the nonzero eigenvalues of J(0) and C coincide, and dreaming maps each of
them through ``eigen_map``.
"""
from __future__ import annotations

import enum
import json
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .data_gen import (ExampleMeans, ExampleSet, GroundTruthSet, ParameterDomainError, example_block)

# eigenvalues at or below this are treated as exact zeros
ZERO_TOL = 1e-10


class Setting(str, enum.Enum):
    STORING = "storing"
    SUPERVISED = "supervised"
    UNSUPERVISED = "unsupervised"


class SpectrumError(RuntimeError):
    """The symmetric eigensolver failed; the offending matrix was dumped."""


@dataclass(frozen=True)
class ModelSetting:
    variant: Setting
    alpha: float
    r: float = 1.0
    M: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variant", Setting(self.variant))
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterDomainError(f"alpha={self.alpha} outside (0, 1]")
        if not (0.0 <= self.r <= 1.0):
            raise ParameterDomainError(f"r={self.r} outside [0, 1]")
        if self.M < 1:
            raise ParameterDomainError(f"M={self.M} must be >= 1")

    def require_full_rank(self, N: int) -> None:
        """Unsupervised theory needs at least N stored examples."""
        if self.variant is Setting.UNSUPERVISED and self.M * round(self.alpha * N) < N:
            raise ParameterDomainError(
                f"unsupervised with M*P={self.M * round(self.alpha * N)} < N={N}: low-rank regime not supported")


@dataclass(frozen=True)
class InformationMatrix:
    """Stored vectors X (rows) with their normalisation D.

    For the unsupervised setting X can be very tall (P*M rows); it is kept as
    int8 and only touched blockwise.
    """

    X: np.ndarray
    D: float
    setting: Setting

    @property
    def rows(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    def correlation(self) -> np.ndarray:
        """C = X X^T / D (rows x rows)."""
        C = _product(self.X, self.X.T) / self.D
        return (C + C.T) / 2

    def hebbian(self, block_rows: int = 20000) -> np.ndarray:
        """J(0) = X^T X / D (N x N)."""
        return _gram(self.X, block_rows) / self.D


def _is_int(A) -> bool:
    return np.issubdtype(np.asarray(A).dtype, np.integer)


def _product(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A @ B in float64; integer operands go through float32, exact below 2**24."""
    A, B = np.asarray(A), np.asarray(B)
    if (np.issubdtype(A.dtype, np.integer) and np.issubdtype(B.dtype, np.integer)
            and A.shape[-1] * int(np.abs(A).max(initial=0)) * int(np.abs(B).max(initial=0)) < 2**24):
        return (A.astype(np.float32) @ B.astype(np.float32)).astype(np.float64)
    return A.astype(np.float64) @ B.astype(np.float64)


def _gram(X: np.ndarray, block_rows: int = 20000) -> np.ndarray:
    """X^T X, blockwise over rows.

    Integer-valued +-1 rows go through float32, which is exact while the
    accumulated counts stay below 2**24.
    """
    exact32 = np.issubdtype(X.dtype, np.integer) and X.shape[0] < 2**24
    dtype = np.float32 if exact32 else np.float64
    G = np.zeros((X.shape[1], X.shape[1]), dtype=dtype)
    for start in range(0, X.shape[0], block_rows):
        B = X[start:start + block_rows].astype(dtype)
        G += B.T @ B
    G = G.astype(np.float64)
    return (G + G.T) / 2


def build_information_matrix(data, setting: Setting | str) -> InformationMatrix:
    """Stack the stored vectors of ``data`` according to ``setting``.

    ``data`` is a GroundTruthSet (storing), an ExampleSet or ExampleMeans
    (supervised), or an ExampleSet (unsupervised).
    """
    setting = Setting(setting)
    if setting is Setting.STORING:
        if not isinstance(data, GroundTruthSet):
            raise TypeError("storing setting needs a GroundTruthSet")
        return InformationMatrix(data.patterns, float(data.N), setting)
    if setting is Setting.SUPERVISED:
        if isinstance(data, ExampleSet):
            return InformationMatrix(data.means(), float(data.N), setting)
        if isinstance(data, ExampleMeans):
            return InformationMatrix(data.means, float(data.N), setting)
        raise TypeError("supervised setting needs an ExampleSet or ExampleMeans")
    if not isinstance(data, ExampleSet):
        raise TypeError("unsupervised setting needs an ExampleSet")
    P, M, N = data.examples.shape
    return InformationMatrix(data.examples.reshape(P * M, N), float(N * M), setting)


def eigen_map(lam0, t):
    """Dreaming image (1+t) lam0 / (1 + t lam0) of a J(0) eigenvalue.

    ``t = inf`` gives the projector limit: 0 stays 0, anything positive goes
    to 1.
    """
    lam0 = np.asarray(lam0, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ParameterDomainError(f"t={t} must be >= 0")
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(t), np.where(lam0 > ZERO_TOL, 1.0, 0.0), (1.0 + t) * lam0 / (1.0 + t * lam0))
    return out.item() if out.ndim == 0 else out


def eigen_map_inverse(lam, t):
    """Hebbian eigenvalue lam / (1 + t(1 - lam)) that dreams into ``lam``."""
    lam = np.asarray(lam, dtype=np.float64)
    den = 1.0 + t * (1.0 - lam)
    if np.any(den <= 0):
        raise ParameterDomainError(f"lambda beyond the projector limit for t={t}")
    out = lam / den
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class CouplingMatrix:
    J: np.ndarray
    t: float
    setting: Setting | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def N(self) -> int:
        return self.J.shape[0]

    def fields(self, S: np.ndarray) -> np.ndarray:
        """Local fields J s for configurations stacked on the rows of S."""
        return np.asarray(S, dtype=np.float64) @ self.J


@dataclass(frozen=True)
class DreamingKernel:
    """Spectral factorisation shared by J(t) for every dreaming time.

    Row side (X has no more rows than columns): C = V diag(c) V^T and
    J(t) = X^T V diag(h) V^T X / D with h = (1+t)/(1+t c).  Column side:
    J(0) = U diag(c) U^T and J(t) = U diag(eigen_map(c, t)) U^T.  Either way
    ``c`` is the nonzero spectrum of J(0).
    """

    c: np.ndarray
    setting: Setting
    X: np.ndarray | None = None
    V: np.ndarray | None = None
    D: float = 1.0
    U: np.ndarray | None = None

    @property
    def row_side(self) -> bool:
        return self.U is None

    @property
    def N(self) -> int:
        return self.X.shape[1] if self.row_side else self.U.shape[0]

    @cached_property
    def R(self) -> np.ndarray:
        """Rows r_k with J(t) = sum_k h_k(t) r_k r_k^T."""
        if self.row_side:
            return (self.V.T @ self.X.astype(np.float64)) / np.sqrt(self.D)
        return self.U.T

    def weights(self, t: float) -> np.ndarray:
        c = self.c
        if self.row_side:
            if np.isinf(t):
                return np.where(c > ZERO_TOL, 1.0 / np.where(c > ZERO_TOL, c, 1.0), 0.0)
            return (1.0 + t) / (1.0 + t * c)
        return np.asarray(eigen_map(c, t))

    def dense(self, t: float) -> CouplingMatrix:
        if t < 0:
            raise ParameterDomainError(f"t={t} must be >= 0")
        h = self.weights(t)
        keep = h != 0
        R = self.R[keep]
        J = (R.T * h[keep]) @ R
        return CouplingMatrix((J + J.T) / 2, float(t), self.setting)

    def fields(self, S: np.ndarray, t: float) -> np.ndarray:
        if self.row_side and t == 0 and _is_int(S) and _is_int(self.X):
            # Hebbian fields are integers over D: keep exact ties for sign(0)
            return _product(_product(S, self.X.T).astype(np.int64), self.X) / self.D
        if self.row_side:
            # S X^T is an exact integer product for spin inputs
            Z = (_product(S, self.X.T) @ self.V) * (self.weights(t) / self.D)
            return (Z @ self.V.T) @ self.X.astype(np.float64)
        S = np.asarray(S, dtype=np.float64)
        return ((S @ self.U) * self.weights(t)) @ self.U.T

    def diagonal(self, t: float) -> np.ndarray:
        """Diagonal of J(t) without forming the matrix."""
        return (self.R ** 2 * self.weights(t)[:, None]).sum(axis=0)

    def at(self, t: float) -> "KernelView":
        return KernelView(self, float(t))

    def spectrum0(self) -> np.ndarray:
        """Full ascending spectrum of J(0), zeros included."""
        lam = np.zeros(self.N)
        lam[self.N - self.c.size:] = np.sort(self.c)
        return lam


@dataclass(frozen=True)
class KernelView:
    """J(t) for one dreaming time, applied without forming the N x N matrix."""

    kernel: DreamingKernel
    t: float

    @property
    def N(self) -> int:
        return self.kernel.N

    def fields(self, S: np.ndarray) -> np.ndarray:
        return self.kernel.fields(S, self.t)

    def diagonal(self) -> np.ndarray:
        return self.kernel.diagonal(self.t)

    def dense(self) -> CouplingMatrix:
        return self.kernel.dense(self.t)


def dreaming_kernel(info: InformationMatrix) -> DreamingKernel:
    if info.rows <= info.N:
        C = info.correlation()
        c, V = np.linalg.eigh(C)
        c = np.clip(c, 0.0, None)
        keep = c > ZERO_TOL
        return DreamingKernel(c[keep], info.setting, X=info.X, V=V[:, keep], D=info.D)
    return kernel_from_hebbian(info.hebbian(), info.setting)


def kernel_from_hebbian(J0: np.ndarray, setting: Setting | str) -> DreamingKernel:
    """Kernel from an explicit Hebbian matrix (eigendecomposed on the N side)."""
    lam, U = spectrum(J0, vectors=True)
    lam = np.clip(lam, 0.0, None)
    return DreamingKernel(lam, Setting(setting), U=U)


def build_coupling(info: InformationMatrix, t: float) -> CouplingMatrix:
    """J(t) for the stored vectors in ``info``; ``t=inf`` is the projector."""
    if not (t >= 0):
        raise ParameterDomainError(f"t={t} must be >= 0")
    return dreaming_kernel(info).dense(t)


def dreaming_rhs(J: np.ndarray, t: float) -> np.ndarray:
    return (J - J @ J) / (1.0 + t)


def integrate_dreaming_ode(J0: CouplingMatrix, t_final: float, steps: int) -> CouplingMatrix:
    """Classical fixed-step RK4 on dJ/dt = (J - J^2)/(1+t), starting from J(0)."""
    if J0.t != 0:
        raise ParameterDomainError("the flow starts from the Hebbian matrix (t=0)")
    if steps < 1:
        raise ParameterDomainError("steps must be >= 1")
    J = J0.J.copy()
    if t_final == 0:
        return CouplingMatrix(J, 0.0, J0.setting)
    h = t_final / steps
    t = 0.0
    for _ in range(steps):
        k1 = dreaming_rhs(J, t)
        k2 = dreaming_rhs(J + 0.5 * h * k1, t + 0.5 * h)
        k3 = dreaming_rhs(J + 0.5 * h * k2, t + 0.5 * h)
        k4 = dreaming_rhs(J + h * k3, t + h)
        J = J + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return CouplingMatrix((J + J.T) / 2, float(t_final), J0.setting)


def spectrum(J, vectors: bool = False):
    """Ascending eigenvalues (and optionally eigenvectors) of a symmetric matrix."""
    A = J.J if isinstance(J, CouplingMatrix) else np.asarray(J, dtype=np.float64)
    try:
        if vectors:
            return np.linalg.eigh(A)
        return np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        dump = Path(tempfile.mkstemp(prefix="dreamhop-eigh-", suffix=".npy")[1])
        np.save(dump, A)
        raise SpectrumError(f"eigensolver did not converge ({exc}); matrix saved to {dump}") from exc


def unsupervised_hebbian(gt: GroundTruthSet, M: int, r: float, rng, checkpoints=None):
    """J(0) of the unsupervised setting without materialising every example.

    Examples are streamed one archetype at a time. With ``checkpoints`` (an
    increasing list of sample sizes ending at M) returns one matrix per
    checkpoint, each built from the first examples of the same dataset.
    """
    Ms = list(checkpoints) if checkpoints is not None else [M]
    if Ms[-1] != M or sorted(Ms) != Ms:
        raise ParameterDomainError("checkpoints must be increasing and end at M")
    N = gt.N
    bounds = [0] + Ms
    segs = [np.zeros((N, N), dtype=np.float32) for _ in Ms]
    for mu in range(gt.P):
        block = example_block(gt, mu, M, r, rng)
        for k in range(len(Ms)):
            B = block[bounds[k]:bounds[k + 1]].astype(np.float32)
            segs[k] += B.T @ B
    out = []
    G = np.zeros((N, N), dtype=np.float64)
    for Mk, seg in zip(Ms, segs):
        G += seg
        Jk = G / (N * Mk)
        out.append((Jk + Jk.T) / 2)
    return out if checkpoints is not None else out[0]


def save_coupling(path, J: CouplingMatrix, **extra) -> tuple[Path, Path]:
    """Row-major float64 dump with a JSON sidecar."""
    path = Path(path)
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(np.ascontiguousarray(J.J, dtype="<f8").tobytes())
    meta = {"N": J.N, "t": J.t, "setting": None if J.setting is None else J.setting.value,
            "dtype": "float64", "byteorder": "little", "layout": "row-major"}
    meta.update(extra)
    json_path = path.with_suffix(".json")
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return bin_path, json_path


def load_coupling(path) -> CouplingMatrix:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    N = meta["N"]
    J = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8").reshape(N, N).copy()
    setting = Setting(meta["setting"]) if meta.get("setting") else None
    return CouplingMatrix(J, float(meta["t"]), setting, meta)
