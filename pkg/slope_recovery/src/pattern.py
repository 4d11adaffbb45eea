"""
SLOPE pattern algebra.

A pattern M = patt(b) is the signed-rank vector of b: zero where b is zero,
otherwise sign(b_i) times the rank of |b_i| among the distinct nonzero
absolute values. The pattern matrix U_M maps cluster values s (strictly
decreasing, positive) back to a vector with pattern M, and the cluster
reduction collapses a design and a tuning sequence onto the k clusters.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from slope_recovery.src.errors import (DimensionError, EmptyPattern,
                                       InvalidClusterValues, InvalidVector)
from slope_recovery.src.numerics import (Tolerances, resolve_tol, as_matrix,
                                         as_vector, numerical_rank, pinv,
                                         projector)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlopePattern:
    """Integer signed-rank vector with k = max |M_i| nonzero clusters."""

    values: Tuple[int, ...]

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) == 0:
            raise InvalidVector("a pattern needs at least one coordinate")
        levels = {abs(v) for v in vals if v != 0}
        k = max(levels) if levels else 0
        if levels != set(range(1, k + 1)):
            raise InvalidVector(f"pattern {vals} skips a cluster level; expected levels 1..{k}")

    @classmethod
    def from_array(cls, values: Iterable) -> "SlopePattern":
        arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values)
        if arr.size and not np.all(np.equal(np.round(arr), arr)):
            raise InvalidVector(f"pattern entries must be integers, got {arr}")
        return cls(tuple(int(v) for v in arr.ravel()))

    @classmethod
    def parse(cls, text: str) -> "SlopePattern":
        """Parse the comma-separated wire form, e.g. ``"2,-2,0,1"``."""
        parts = [t.strip() for t in text.strip().split(",") if t.strip() != ""]
        try:
            return cls(tuple(int(t) for t in parts))
        except ValueError as e:
            raise InvalidVector(f"cannot parse pattern {text!r}: {e}") from e

    def __str__(self) -> str:
        return ",".join(str(v) for v in self.values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def p(self) -> int:
        return len(self.values)

    @property
    def k(self) -> int:
        return max((abs(v) for v in self.values), default=0)

    @property
    def is_zero(self) -> bool:
        return self.k == 0

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=int)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.as_array())


def patt(b) -> SlopePattern:
    """Exact SLOPE pattern of b (no tolerance on ties or zeros)."""
    b = as_vector(b, "b")
    absb = np.abs(b)
    levels = np.unique(absb[absb > 0])
    ranks = np.searchsorted(levels, absb) + 1
    ranks[absb == 0] = 0
    return SlopePattern(tuple(int(v) for v in np.sign(b).astype(int) * ranks))


def patt_with_tol(b, pattern_tol: Optional[float] = None) -> SlopePattern:
    """
    Pattern of a floating-point vector.

    Entries with |b_i| <= pattern_tol are zeroed. The remaining absolute
    values are sorted ascending and a new cluster starts whenever the gap
    to the previous sorted value exceeds pattern_tol.
    """
    if pattern_tol is None:
        pattern_tol = resolve_tol(None).pattern_tol
    if not pattern_tol > 0:
        raise InvalidVector(f"pattern_tol must be positive, got {pattern_tol}")
    b = as_vector(b, "b")
    absb = np.abs(b)
    nonzero = np.flatnonzero(absb > pattern_tol)
    ranks = np.zeros(b.shape[0], dtype=int)
    if nonzero.size:
        order = nonzero[np.argsort(absb[nonzero], kind="stable")]
        gaps = np.diff(absb[order]) > pattern_tol
        ranks[order] = 1 + np.concatenate(([0], np.cumsum(gaps)))
    signs = np.sign(b).astype(int)
    return SlopePattern(tuple(int(v) for v in signs * ranks))


def pattern_matrix(M: SlopePattern) -> np.ndarray:
    """The p x k matrix U_M with (U_M)_ij = sign(M_i) 1(|M_i| = k+1-j)."""
    if M.is_zero:
        raise EmptyPattern("the pattern matrix of the zero pattern is undefined")
    m = M.as_array()
    k = M.k
    U = np.zeros((M.p, k))
    rows = np.flatnonzero(m)
    U[rows, k - np.abs(m[rows])] = np.sign(m[rows])
    return U


def abs_sorted_pattern_matrix(M: SlopePattern) -> np.ndarray:
    """U_{|M|↓}: the pattern matrix of |M| sorted in decreasing order."""
    return pattern_matrix(SlopePattern(tuple(sorted((abs(v) for v in M.values), reverse=True))))


def cluster_sizes(M: SlopePattern) -> np.ndarray:
    """Sizes of the clusters, largest absolute value first."""
    absm = np.abs(M.as_array())
    return np.array([int(np.sum(absm == M.k - l)) for l in range(M.k)], dtype=int)


@dataclass(frozen=True)
class ClusterReduction:
    """Design and tuning sequence collapsed onto the clusters of a pattern."""

    pattern: SlopePattern
    U: np.ndarray
    U_abs_sorted: np.ndarray
    X_tilde: np.ndarray
    Lambda_tilde: np.ndarray
    P_tilde: np.ndarray
    Xt_pinv: np.ndarray
    gram: np.ndarray
    kernel_trivial: bool

    @property
    def k(self) -> int:
        return self.pattern.k


def reduce(X, lambdas, M: SlopePattern, tol: Optional[Tolerances] = None) -> ClusterReduction:
    """
    Assemble X̃ = X U_M, Λ̃ = U_{|M|↓}′Λ, the projector onto col(X̃) and (X̃′)⁺.

    `lambdas` is the unscaled sequence Λ (a TuningSequence contributes its
    `lambdas` field); callers multiply Λ̃ by the scale α themselves.
    """
    X = as_matrix(X)
    lam = as_vector(getattr(lambdas, "lambdas", lambdas), "lambdas")
    if X.shape[1] != M.p or lam.shape[0] != M.p:
        raise DimensionError(
            f"X has {X.shape[1]} columns, Λ has {lam.shape[0]} entries, pattern has {M.p}"
        )
    U = pattern_matrix(M)
    U_abs = abs_sorted_pattern_matrix(M)
    X_tilde = X @ U
    return ClusterReduction(
        pattern=M,
        U=U,
        U_abs_sorted=U_abs,
        X_tilde=X_tilde,
        Lambda_tilde=U_abs.T @ lam,
        P_tilde=projector(X_tilde, tol),
        Xt_pinv=pinv(X_tilde.T, tol),
        gram=X_tilde.T @ X_tilde,
        kernel_trivial=numerical_rank(X_tilde, tol) == M.k,
    )


def synthesize(M: SlopePattern, s) -> np.ndarray:
    """Return U_M s, a vector whose pattern is M."""
    s = as_vector(s, "s")
    if s.shape[0] != M.k:
        raise InvalidClusterValues(f"expected {M.k} cluster values, got {s.shape[0]}")
    if np.any(s <= 0) or np.any(np.diff(s) >= 0):
        raise InvalidClusterValues(f"cluster values must be strictly decreasing and positive, got {s}")
    return pattern_matrix(M) @ s
