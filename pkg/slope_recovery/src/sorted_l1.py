"""
The sorted-ℓ1 norm J_Λ(b) = Σ λ_i |b|_(i), its dual, its proximal operator
and the subdifferential tests built on them.

Every function accepts the tuning sequence either as a plain array (used
as is) or as a `TuningSequence`, which contributes its effective penalty
αΛ.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import isotonic_regression

from slope_recovery.src.errors import (DimensionError, InvalidTuning,
                                       InvalidVector)
from slope_recovery.src.numerics import Tolerances, as_vector, resolve_tol
from slope_recovery.src.pattern import (SlopePattern, abs_sorted_pattern_matrix,
                                        patt, pattern_matrix)

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class TuningSequence:
    """
    A nonincreasing, nonnegative sequence Λ with λ₁ > 0 and a scale α > 0.

    The penalty applied by the norm, dual norm and prox is αΛ. Pattern and
    subdifferential operations additionally require strict decrease and
    strict positivity, see `require_strict`.
    """

    lambdas: np.ndarray
    alpha: float = 1.0
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        try:
            lam = as_vector(self.lambdas, "lambdas")
        except InvalidVector as e:
            raise InvalidTuning(str(e)) from e
        _check_nonincreasing(lam)
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidTuning(f"alpha must be positive, got {self.alpha}")
        self.lambdas = lam
        self.alpha = float(self.alpha)

    @property
    def p(self) -> int:
        return self.lambdas.shape[0]

    @property
    def effective(self) -> np.ndarray:
        return self.alpha * self.lambdas

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.lambdas) < 0) and self.lambdas[-1] > 0)

    def require_strict(self) -> "TuningSequence":
        if not self.strictly_decreasing:
            raise InvalidTuning("Λ must be strictly decreasing and strictly positive")
        return self

    def scaled(self, alpha: float) -> "TuningSequence":
        return TuningSequence(self.lambdas, alpha, self.name)

    def __repr__(self) -> str:
        return f"TuningSequence(name={self.name!r}, p={self.p}, alpha={self.alpha:g})"


LambdaLike = Union[TuningSequence, np.ndarray, list, tuple]


def _check_nonincreasing(lam: np.ndarray) -> None:
    if lam.shape[0] == 0:
        raise InvalidTuning("Λ must have at least one entry")
    if np.any(lam < 0):
        raise InvalidTuning("Λ must be nonnegative")
    if np.any(np.diff(lam) > 0):
        raise InvalidTuning("Λ must be nonincreasing")
    if not lam[0] > 0:
        raise InvalidTuning("λ₁ must be strictly positive")


def penalty_vector(lam: LambdaLike) -> np.ndarray:
    """The penalty actually applied: αΛ for a TuningSequence, else the array."""
    if isinstance(lam, TuningSequence):
        return lam.effective
    return as_vector(lam, "lambdas")


def _strict_penalty(lam: LambdaLike) -> np.ndarray:
    pen = penalty_vector(lam)
    if np.any(np.diff(pen) >= 0) or not pen[-1] > 0:
        raise InvalidTuning("Λ must be strictly decreasing and strictly positive")
    return pen


def _check_dims(b: np.ndarray, pen: np.ndarray) -> None:
    if b.shape[-1] != pen.shape[0]:
        raise DimensionError(f"vector of length {b.shape[-1]} vs Λ of length {pen.shape[0]}")


def _sorted_abs_desc(b: np.ndarray) -> np.ndarray:
    return -np.sort(-np.abs(b), axis=-1)


def sorted_l1_norm(b, lam: LambdaLike) -> float:
    b = as_vector(b, "b")
    pen = penalty_vector(lam)
    _check_dims(b, pen)
    return float(np.dot(pen, _sorted_abs_desc(b)))


def dual_sorted_l1_norm(b, lam: LambdaLike):
    """
    J*_Λ(b) = max_j (Σ_{i≤j} |b|_(i)) / (Σ_{i≤j} λ_i).

    Works along the last axis, so a (reps, p) array gives one value per row.
    """
    b = np.asarray(b, dtype=float)
    pen = penalty_vector(lam)
    _check_dims(b, pen)
    ratios = np.cumsum(_sorted_abs_desc(b), axis=-1) / np.cumsum(pen)
    out = np.max(ratios, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def cumulative_tightness(v, lam: LambdaLike, tol: Optional[Tolerances] = None) -> Tuple[int, ...]:
    """1-based indices j where Σ_{i≤j}|v|_(i) equals Σ_{i≤j}λ_i up to eq_tol."""
    tol = resolve_tol(tol)
    v = as_vector(v, "v")
    pen = penalty_vector(lam)
    _check_dims(v, pen)
    cum_v = np.cumsum(_sorted_abs_desc(v))
    cum_l = np.cumsum(pen)
    tight = np.abs(cum_v - cum_l) <= tol.eq_tol * np.maximum(1.0, cum_l)
    return tuple(int(j) + 1 for j in np.flatnonzero(tight))


def prox_sorted_l1(y, lam: LambdaLike) -> np.ndarray:
    """
    argmin_z ½‖y − z‖² + J_Λ(z).

    Sort |y| decreasingly, subtract Λ, take the best nonincreasing fit by
    pool-adjacent-violators, clamp at zero and restore order and signs.
    """
    y = as_vector(y, "y")
    pen = penalty_vector(lam)
    _check_dims(y, pen)
    if np.any(np.diff(pen) > 0) or np.any(pen < 0):
        raise InvalidTuning("prox needs a nonincreasing nonnegative Λ")
    order = np.argsort(-np.abs(y), kind="stable")
    fit = isotonic_regression(np.abs(y)[order] - pen, increasing=False).x
    out = np.empty_like(y)
    out[order] = np.clip(fit, 0.0, None)
    return np.sign(y) * out


@dataclass(frozen=True)
class SubdiffQuery:
    """Outcome of a subdifferential membership test."""

    v: np.ndarray
    pattern: SlopePattern
    result: bool
    dual_value: float
    affine_residual: float
    tight_indices: Tuple[int, ...]

    def __bool__(self) -> bool:
        return self.result


def _as_pattern(b_or_M) -> SlopePattern:
    if isinstance(b_or_M, SlopePattern):
        return b_or_M
    return patt(b_or_M)


def affine_span_residual(v, M: SlopePattern, lam: LambdaLike) -> float:
    """‖U_M′v − Λ̃_M‖∞, the distance of v to the affine hull of ∂J_Λ(M)."""
    v = as_vector(v, "v")
    pen = penalty_vector(lam)
    _check_dims(v, pen)
    if v.shape[0] != M.p:
        raise DimensionError(f"vector of length {v.shape[0]} vs pattern of length {M.p}")
    lam_tilde = abs_sorted_pattern_matrix(M).T @ pen
    return float(np.max(np.abs(pattern_matrix(M).T @ v - lam_tilde)))


def subdiff_membership(v, b_or_M, lam: LambdaLike, tol: Optional[Tolerances] = None,
                       slack: Optional[float] = None) -> SubdiffQuery:
    """
    Test v ∈ ∂J_Λ(b): J*_Λ(v) ≤ 1 and U_M′v = Λ̃_M, with M = patt(b).

    For M = 0 the subdifferential is the dual unit ball and only the first
    condition applies. `slack` overrides membership_tol for both checks.
    """
    tol = resolve_tol(tol)
    slack = tol.membership_tol if slack is None else slack
    v = as_vector(v, "v")
    pen = _strict_penalty(lam)
    _check_dims(v, pen)
    M = _as_pattern(b_or_M)
    if M.p != v.shape[0]:
        raise DimensionError(f"vector of length {v.shape[0]} vs pattern of length {M.p}")

    dual_value = dual_sorted_l1_norm(v, pen)
    residual = 0.0 if M.is_zero else affine_span_residual(v, M, pen)
    result = dual_value <= 1.0 + slack and residual <= slack
    return SubdiffQuery(
        v=v,
        pattern=M,
        result=bool(result),
        dual_value=dual_value,
        affine_residual=residual,
        tight_indices=cumulative_tightness(v, pen, tol),
    )


def subdiff_membership_cumsum(v, b, lam: LambdaLike, tol: Optional[Tolerances] = None) -> bool:
    """
    Membership through sign, order and cumulative-sum conditions.

    v ∈ ∂J_Λ(b) iff J*_Λ(v) ≤ 1 and
      - sign(v_i) agrees with sign(b_i) on the support of b,
      - |b_i| > |b_j| implies |v_i| ≥ |v_j|,
      - Σ_{i≤n_j} |v|_(i) = Σ_{i≤n_j} λ_i at every cluster boundary n_j.
    """
    tol = resolve_tol(tol)
    slack = tol.membership_tol
    v = as_vector(v, "v")
    b = np.asarray(b.values if isinstance(b, SlopePattern) else b, dtype=float)
    b = as_vector(b, "b")
    pen = _strict_penalty(lam)
    _check_dims(v, pen)
    _check_dims(b, pen)

    if dual_sorted_l1_norm(v, pen) > 1.0 + slack:
        return False
    M = patt(b)
    if M.is_zero:
        return True

    support = np.flatnonzero(b)
    if np.any(v[support] * np.sign(b[support]) < -slack):
        return False

    absb = np.abs(b)
    absv = np.abs(v)
    larger = absb[:, None] > absb[None, :]
    if np.any(larger & (absv[:, None] < absv[None, :] - slack)):
        return False

    cum_v = np.cumsum(_sorted_abs_desc(v))
    cum_l = np.cumsum(pen)
    absm = np.abs(M.as_array())
    boundaries = [int(np.sum(absm >= M.k + 1 - j)) for j in range(1, M.k + 1)]
    return all(abs(cum_v[n - 1] - cum_l[n - 1]) <= slack * max(1.0, cum_l[n - 1]) for n in boundaries)


def in_relative_interior(v, M: SlopePattern, lam: LambdaLike, tol: Optional[Tolerances] = None) -> bool:
    """v ∈ ri ∂J_Λ(M): a member with exactly k = ‖M‖∞ tight cumulative sums."""
    query = subdiff_membership(v, M, lam, tol)
    return query.result and len(query.tight_indices) == M.k
