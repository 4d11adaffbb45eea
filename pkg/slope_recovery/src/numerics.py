"""
Shared numerical kernels.

Pseudo-inverse, orthogonal projection, column-space membership, the
standard normal quantile, multivariate normal sampling and seeded
counter-based random streams. Every tolerance used here comes from a
`Tolerances` block so that callers share one notion of "equal".
"""

import logging
from dataclasses import dataclass, fields
from typing import Dict, Optional, Union

import numpy as np
from scipy import special

from slope_recovery.src.errors import (DimensionError, DomainError,
                                       InvalidCovariance, InvalidMatrix,
                                       InvalidVector)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by every module."""

    eq_tol: float = 1e-9
    rank_tol: float = 1e-10
    pattern_tol: float = 1e-4
    membership_tol: float = 1e-8

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"tolerance {f.name} must be strictly positive, got {value}")

    @classmethod
    def from_dict(cls, block: Dict) -> "Tolerances":
        known = {f.name for f in fields(cls)}
        return cls(**{k: float(v) for k, v in block.items() if k in known})

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_TOLERANCES = Tolerances()


def resolve_tol(tol: Optional[Tolerances]) -> Tolerances:
    return DEFAULT_TOLERANCES if tol is None else tol


def as_matrix(A) -> np.ndarray:
    """Coerce to a finite 2-D float array or raise InvalidMatrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidMatrix(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix("matrix has non-finite entries")
    return A


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float array or raise InvalidVector."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 2 and 1 in v.shape:
        v = v.ravel()
    if v.ndim != 1:
        raise InvalidVector(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidVector(f"{name} has non-finite entries")
    return v


def pinv(A, tol: Optional[Tolerances] = None) -> np.ndarray:
    """
    Moore-Penrose pseudo-inverse through the singular value decomposition.

    Singular values below rank_tol * s_max are treated as zero, so
    rank-deficient clustered designs are handled.
    """
    tol = resolve_tol(tol)
    A = as_matrix(A)
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[1], A.shape[0]))
    keep = s > tol.rank_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vh.T * s_inv) @ U.T


def numerical_rank(A, tol: Optional[Tolerances] = None) -> int:
    tol = resolve_tol(tol)
    s = np.linalg.svd(as_matrix(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_tol * s[0]))


def null_space(A, tol: Optional[Tolerances] = None) -> np.ndarray:
    """Orthonormal basis (columns) of ker(A)."""
    tol = resolve_tol(tol)
    A = as_matrix(A)
    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    rank = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > tol.rank_tol * s[0]))
    return Vh[rank:].T.copy()


def projector(A, tol: Optional[Tolerances] = None) -> np.ndarray:
    """Orthogonal projection onto col(A), P = A A⁺ (symmetrized)."""
    A = as_matrix(A)
    P = A @ pinv(A, tol)
    return 0.5 * (P + P.T)


def in_col_space(v, A, tol: Optional[Tolerances] = None) -> bool:
    """True iff v lies in col(A) up to eq_tol * (1 + ||v||_inf)."""
    tol = resolve_tol(tol)
    v = as_vector(v)
    A = as_matrix(A)
    if A.shape[0] != v.shape[0]:
        raise DimensionError(f"vector of length {v.shape[0]} vs matrix with {A.shape[0]} rows")
    residual = v - projector(A, tol) @ v
    return bool(np.max(np.abs(residual)) <= tol.eq_tol * (1.0 + np.max(np.abs(v))))


def std_normal_quantile(u):
    """Φ⁻¹(u) for 0 < u < 1 (scalar or array)."""
    arr = np.asarray(u, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"quantile argument must lie in (0, 1), got {u}")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SeededRng:
    """
    A reproducible random stream keyed by (master_seed, stream_id).

    Streams use the counter-based Philox generator, so replication `r`
    draws the same numbers whatever order replications are executed in.
    """

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(seq))

    def spawn(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.master_seed, stream_id)


RngLike = Union[SeededRng, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, SeededRng):
        return rng.generator()
    if rng is None:
        return np.random.default_rng()
    return SeededRng(int(rng)).generator()


def covariance_sqrt(cov, tol: Optional[Tolerances] = None) -> np.ndarray:
    """
    Symmetric square root L (L @ L = cov) via eigendecomposition.

    Negative eigenvalues are clamped to zero; singular covariances are
    expected (the recovery covariance is rank deficient by construction).
    """
    tol = resolve_tol(tol)
    cov = as_matrix(cov)
    if cov.shape[0] != cov.shape[1]:
        raise InvalidCovariance(f"covariance must be square, got {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov))))
    if np.max(np.abs(cov - cov.T)) > tol.eq_tol * scale:
        raise InvalidCovariance("covariance matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.size and w.min() < -tol.rank_tol * max(abs(w.max()), 1.0) * 1e3:
        logger.warning(f"covariance has negative eigenvalue {w.min():.3e}; clamped to 0")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def mvn_sample(mean, cov, rng: RngLike, size: Optional[int] = None,
               tol: Optional[Tolerances] = None) -> np.ndarray:
    """
    Draw from N(mean, cov) as mean + z @ L with L the symmetric square root.

    Returns a vector when size is None, otherwise a (size, d) array.
    """
    mean = as_vector(mean, "mean")
    L = covariance_sqrt(cov, tol)
    if L.shape[0] != mean.shape[0]:
        raise DimensionError(f"mean of length {mean.shape[0]} vs covariance {L.shape}")
    gen = as_generator(rng)
    if size is None:
        z = gen.standard_normal(mean.shape[0])
        return mean + L @ z
    z = gen.standard_normal((int(size), mean.shape[0]))
    return mean + z @ L
