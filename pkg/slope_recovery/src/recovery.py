"""
Exact pattern-recovery tests.

For a target pattern M ≠ 0, SLOPE at penalty αΛ recovers M on data (X, Y)
iff two conditions hold:

  positivity     X̃′Y − αΛ̃ = X̃′X̃ s for some strictly decreasing positive s
  subdifferential π = X′(X̃′)⁺αΛ̃ + X′(I − P̃)Y lies in ∂J_{αΛ}(M)

and then β̂ = U_M s is a solution. This module evaluates both conditions,
the noiseless irrepresentability criterion (with its open variant), the
LASSO sign-recovery analogue, minimal-α searches and the geometry of Π̄.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from slope_recovery.src.errors import (DimensionError, DomainError,
                                       EmptyPattern, InvalidClusterValues,
                                       InvalidTuning)
from slope_recovery.src.numerics import (Tolerances, as_matrix, as_vector,
                                         in_col_space, null_space,
                                         numerical_rank, pinv, resolve_tol)
from slope_recovery.src.pattern import (ClusterReduction, SlopePattern,
                                        cluster_sizes, patt, reduce,
                                        synthesize)
from slope_recovery.src.sorted_l1 import (LambdaLike, TuningSequence,
                                          cumulative_tightness,
                                          dual_sorted_l1_norm,
                                          in_relative_interior,
                                          subdiff_membership)

logger = logging.getLogger(__name__)

BetaOrPattern = Union[SlopePattern, np.ndarray, Sequence[float]]


def base_lambdas(lam: LambdaLike) -> np.ndarray:
    """Unscaled Λ, required strictly decreasing and strictly positive."""
    if isinstance(lam, TuningSequence):
        return lam.require_strict().lambdas
    return TuningSequence(lam).require_strict().lambdas


def target_pattern(beta_or_M: BetaOrPattern) -> SlopePattern:
    if isinstance(beta_or_M, SlopePattern):
        return beta_or_M
    return patt(beta_or_M)


def _reduction(X, lam, M: SlopePattern, tol, reduction: Optional[ClusterReduction]) -> ClusterReduction:
    if reduction is not None:
        return reduction
    if M.is_zero:
        raise EmptyPattern("recovery tests need a nonzero target pattern")
    return reduce(X, base_lambdas(lam), M, tol)


def _differences(k: int) -> np.ndarray:
    """Rows give s_i − s_{i+1} (i < k) and s_k."""
    D = np.eye(k)
    D[np.arange(k - 1), np.arange(1, k)] = -1.0
    return D


def _max_margin_point(s0: np.ndarray, N: np.ndarray, D: np.ndarray, cap: float) -> Tuple[np.ndarray, float]:
    """
    Point s = s0 + N z maximizing t subject to D s ≥ t and t ≤ cap, by
    linear programming over (z, t).
    """
    d = N.shape[1]
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-D @ N, np.ones((D.shape[0], 1))])
    b_ub = D @ s0
    bounds = [(None, None)] * d + [(None, cap)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        logger.warning(f"feasibility search did not finish: {res.message}")
        return s0, float(np.min(D @ s0))
    z = res.x[:d]
    s = s0 + N @ z
    return s, float(np.min(D @ s))


@dataclass(frozen=True)
class PositivityResult:
    ok: bool
    s: Optional[np.ndarray]
    margin: float
    kernel_trivial: bool
    near_boundary: bool

    def __iter__(self):
        yield self.ok
        yield self.s


def _positivity_from_system(gram, rhs, N_kernel, kernel_trivial, tol: Tolerances) -> PositivityResult:
    k = gram.shape[0]
    D = _differences(k)
    if kernel_trivial:
        s = np.linalg.solve(gram, rhs)
        margin = float(np.min(D @ s))
    else:
        if not in_col_space(rhs, gram, tol):
            return PositivityResult(False, None, -np.inf, False, False)
        s0 = pinv(gram, tol) @ rhs
        s, margin = _max_margin_point(s0, N_kernel, D, max(1.0, float(np.max(np.abs(s0)))))
    scale = 1.0 + float(np.max(np.abs(s)))
    return PositivityResult(
        ok=margin > tol.eq_tol,
        s=s,
        margin=margin,
        kernel_trivial=kernel_trivial,
        near_boundary=abs(margin) <= 10.0 * tol.eq_tol * scale,
    )


def positivity_condition(X, Y, M: SlopePattern, lam: LambdaLike, alpha: float,
                         tol: Optional[Tolerances] = None,
                         reduction: Optional[ClusterReduction] = None) -> PositivityResult:
    """
    Is there a strictly decreasing positive s with X̃′X̃ s = X̃′Y − αΛ̃?

    With ker(X̃) = {0} the solution is unique; otherwise a margin-maximizing
    point of the affine solution set is searched for.
    """
    tol = resolve_tol(tol)
    red = _reduction(X, lam, M, tol, reduction)
    Y = as_vector(Y, "Y")
    if Y.shape[0] != red.X_tilde.shape[0]:
        raise DimensionError(f"Y has {Y.shape[0]} entries but X has {red.X_tilde.shape[0]} rows")
    rhs = red.X_tilde.T @ Y - alpha * red.Lambda_tilde
    kernel = None if red.kernel_trivial else null_space(red.X_tilde, tol)
    return _positivity_from_system(red.gram, rhs, kernel, red.kernel_trivial, tol)


def pi_vector(X, Y, M: SlopePattern, lam: LambdaLike, alpha: float,
              tol: Optional[Tolerances] = None,
              reduction: Optional[ClusterReduction] = None) -> np.ndarray:
    """π = X′(X̃′)⁺αΛ̃ + X′(I − P̃)Y."""
    tol = resolve_tol(tol)
    red = _reduction(X, lam, M, tol, reduction)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    if Y.shape[0] != X.shape[0]:
        raise DimensionError(f"Y has {Y.shape[0]} entries but X has {X.shape[0]} rows")
    return X.T @ (red.Xt_pinv @ (alpha * red.Lambda_tilde)) + X.T @ (Y - red.P_tilde @ Y)


@dataclass(frozen=True)
class RecoveryCertificate:
    """Outcome of the two-condition recovery test at one α."""

    pattern: SlopePattern
    alpha: float
    s: Optional[np.ndarray]
    positivity_ok: bool
    pi: np.ndarray
    subdiff_ok: bool
    dual_value: float
    open_ir_ok: bool
    kernel_trivial: bool
    positivity_margin: float
    affine_residual: float
    near_boundary: bool
    beta_hat: Optional[np.ndarray] = None
    consistency_gap: float = float("nan")

    @property
    def recovered(self) -> bool:
        return self.positivity_ok and self.subdiff_ok

    def to_record(self) -> Dict:
        return {
            "pattern": str(self.pattern),
            "alpha": self.alpha,
            "positivity": int(self.positivity_ok),
            "subdiff": int(self.subdiff_ok),
            "recovered": int(self.recovered),
            "dual_value": self.dual_value,
            "positivity_margin": self.positivity_margin,
            "affine_residual": self.affine_residual,
            "open_ir": int(self.open_ir_ok),
            "kernel_trivial": int(self.kernel_trivial),
            "near_boundary": int(self.near_boundary),
            "consistency_gap": self.consistency_gap,
        }


def check_recovery(X, Y, beta_or_M: BetaOrPattern, lam: LambdaLike, alpha: float,
                   tol: Optional[Tolerances] = None,
                   reduction: Optional[ClusterReduction] = None) -> RecoveryCertificate:
    """
    Certify whether SLOPE at penalty αΛ returns the pattern of β (or M).

    `open_ir_ok` reports whether π lies in the relative interior of
    ∂J_{αΛ}(M), i.e. whether recovery is stable under small perturbations.

    Raises:
        EmptyPattern: the target pattern is zero (use zero_pattern_recovered)
    """
    tol = resolve_tol(tol)
    M = target_pattern(beta_or_M)
    if M.is_zero:
        raise EmptyPattern("recovery of the zero pattern is decided by zero_pattern_recovered")
    red = _reduction(X, lam, M, tol, reduction)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    lam_eff = alpha * base_lambdas(lam)

    positivity = positivity_condition(X, Y, M, lam, alpha, tol, red)
    pi = pi_vector(X, Y, M, lam, alpha, tol, red)
    query = subdiff_membership(pi, M, lam_eff, tol)

    beta_hat = None
    gap = float("nan")
    if positivity.ok and query.result:
        beta_hat = red.U @ positivity.s
        gap = float(np.max(np.abs(pi - X.T @ (Y - X @ beta_hat))))
        if gap > 1e3 * tol.eq_tol * (1.0 + float(np.max(np.abs(pi)))):
            logger.warning(f"certificate π differs from X′(Y − Xβ̂) by {gap:.3e}")

    open_ir = query.result and len(query.tight_indices) == M.k
    # members of the subdifferential always have J* = 1; only the relative boundary is ambiguous
    near = positivity.near_boundary or (
        abs(query.dual_value - 1.0) <= 10.0 * tol.membership_tol and not open_ir
    )
    return RecoveryCertificate(
        pattern=M,
        alpha=float(alpha),
        s=positivity.s,
        positivity_ok=positivity.ok,
        pi=pi,
        subdiff_ok=query.result,
        dual_value=query.dual_value,
        open_ir_ok=open_ir,
        kernel_trivial=red.kernel_trivial,
        positivity_margin=positivity.margin,
        affine_residual=query.affine_residual,
        near_boundary=near,
        beta_hat=beta_hat,
        consistency_gap=gap,
    )


def zero_pattern_recovered(X, Y, lam: LambdaLike, alpha: float, tol: Optional[Tolerances] = None) -> bool:
    """β̂ = 0 is a solution iff J*_{αΛ}(X′Y) ≤ 1."""
    tol = resolve_tol(tol)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    lam_vec = lam.lambdas if isinstance(lam, TuningSequence) else as_vector(lam, "lambdas")
    return dual_sorted_l1_norm(X.T @ Y, alpha * lam_vec) <= 1.0 + tol.membership_tol


@dataclass(frozen=True)
class IrrepresentabilityResult:
    holds: bool
    dual_value: float
    col_ok: bool
    pi_bar: np.ndarray
    tight_indices: Tuple[int, ...]

    def __iter__(self):
        yield self.holds
        yield self.dual_value
        yield self.col_ok


def irrepresentability(X, M: SlopePattern, lam: LambdaLike, tol: Optional[Tolerances] = None,
                       reduction: Optional[ClusterReduction] = None) -> IrrepresentabilityResult:
    """J*_Λ(X′(X̃′)⁺Λ̃) ≤ 1 together with Λ̃ ∈ col(X̃′)."""
    tol = resolve_tol(tol)
    red = _reduction(X, lam, M, tol, reduction)
    X = as_matrix(X)
    lam_vec = base_lambdas(lam)
    pi_bar = X.T @ (red.Xt_pinv @ red.Lambda_tilde)
    col_ok = in_col_space(red.Lambda_tilde, red.X_tilde.T, tol)
    dual_value = dual_sorted_l1_norm(pi_bar, lam_vec)
    return IrrepresentabilityResult(
        holds=bool(col_ok and dual_value <= 1.0 + tol.membership_tol),
        dual_value=dual_value,
        col_ok=col_ok,
        pi_bar=pi_bar,
        tight_indices=cumulative_tightness(pi_bar, lam_vec, tol),
    )


def open_irrepresentability(X, M: SlopePattern, lam: LambdaLike, tol: Optional[Tolerances] = None,
                            reduction: Optional[ClusterReduction] = None) -> bool:
    """Irrepresentability with exactly ‖M‖∞ tight cumulative sums."""
    result = irrepresentability(X, M, lam, tol, reduction)
    return result.holds and len(result.tight_indices) == M.k


@dataclass(frozen=True)
class NoiselessResult:
    recoverable: bool
    alpha0: Optional[float]

    def __iter__(self):
        yield self.recoverable
        yield self.alpha0


def noiseless_recovery(X, beta, lam: LambdaLike, tol: Optional[Tolerances] = None,
                       rel_precision: float = 1e-6) -> NoiselessResult:
    """
    Decide whether SLOPE recovers patt(β) from Y = Xβ for small α and
    estimate the end α₀ of the recovering interval (0, α₀).

    The subdifferential condition does not depend on α in the noiseless
    case, so α₀ is the end of the positivity interval, found by bisection.
    """
    tol = resolve_tol(tol)
    beta = as_vector(beta, "beta")
    M = patt(beta)
    if M.is_zero:
        raise EmptyPattern("noiseless recovery needs β ≠ 0")
    X = as_matrix(X)
    red = _reduction(X, lam, M, tol, None)
    verdict = irrepresentability(X, M, lam, tol, red)
    if not verdict.holds:
        return NoiselessResult(False, None)

    Y = X @ beta

    def positive(a: float) -> bool:
        return positivity_condition(X, Y, M, lam, a, tol, red).ok

    lo, hi = 0.0, 1.0
    if positive(hi):
        while positive(2.0 * hi):
            hi *= 2.0
            if hi > 1e12:
                logger.info("positivity holds for every tested alpha; alpha0 reported as inf")
                return NoiselessResult(True, float("inf"))
        lo, hi = hi, 2.0 * hi
    else:
        while not positive(hi / 2.0):
            hi /= 2.0
            if hi < 1e-12:
                logger.warning("no alpha with positivity found on Y = Xβ")
                return NoiselessResult(True, 0.0)
        lo = hi / 2.0
    while hi - lo > rel_precision * hi:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return NoiselessResult(True, 0.5 * (lo + hi))


@dataclass(frozen=True)
class LassoCertificate:
    positivity_ok: bool
    kappa: Optional[np.ndarray]
    subdiff_ok: bool
    pi: np.ndarray
    sup_norm_off_support: float

    @property
    def recovered(self) -> bool:
        return self.positivity_ok and self.subdiff_ok


def lasso_sign_conditions(X, Y, S, lambda_scaled: float, tol: Optional[Tolerances] = None) -> LassoCertificate:
    """
    LASSO sign recovery at penalty λ: positivity of κ in
    X̃_S′Y − λ1 = X̃_S′X̃_S κ, and
    X′(X̃_S′)⁺1 + λ⁻¹X′(I − X̃_S X̃_S⁺)Y ∈ ∂‖·‖₁(S).
    """
    tol = resolve_tol(tol)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    S = np.sign(as_vector(S, "S")).astype(int)
    if not np.any(S):
        raise EmptyPattern("LASSO sign recovery needs a nonzero sign vector")
    if not lambda_scaled > 0:
        raise DomainError(f"LASSO penalty must be positive, got {lambda_scaled}")
    support = np.flatnonzero(S)
    X_tilde = X[:, support] * S[support]
    gram = X_tilde.T @ X_tilde
    kernel_trivial = numerical_rank(X_tilde, tol) == support.size
    rhs = X_tilde.T @ Y - lambda_scaled * np.ones(support.size)

    if kernel_trivial:
        kappa = np.linalg.solve(gram, rhs)
        margin = float(np.min(kappa))
    elif in_col_space(rhs, gram, tol):
        k0 = pinv(gram, tol) @ rhs
        kappa, margin = _max_margin_point(k0, null_space(X_tilde, tol), np.eye(support.size),
                                          max(1.0, float(np.max(np.abs(k0)))))
    else:
        kappa, margin = None, -np.inf

    Xt_pinv = pinv(X_tilde.T, tol)
    P = X_tilde @ pinv(X_tilde, tol)
    pi = X.T @ (Xt_pinv @ np.ones(support.size)) + X.T @ (Y - P @ Y) / lambda_scaled
    on_support = np.max(np.abs(pi[support] - S[support]))
    off = np.setdiff1d(np.arange(X.shape[1]), support)
    sup_off = float(np.max(np.abs(pi[off]))) if off.size else 0.0
    subdiff_ok = on_support <= tol.membership_tol and sup_off <= 1.0 + tol.membership_tol
    return LassoCertificate(
        positivity_ok=margin > tol.eq_tol,
        kappa=kappa,
        subdiff_ok=bool(subdiff_ok),
        pi=pi,
        sup_norm_off_support=sup_off,
    )


def lasso_irrepresentability(X, S, tol: Optional[Tolerances] = None) -> float:
    """‖X_Ī′X_I(X_I′X_I)⁻¹S_I‖∞; LASSO noiseless sign recovery needs it ≤ 1."""
    X = as_matrix(X)
    S = np.sign(as_vector(S, "S")).astype(int)
    support = np.flatnonzero(S)
    off = np.setdiff1d(np.arange(X.shape[1]), support)
    if support.size == 0:
        raise EmptyPattern("LASSO irrepresentability needs a nonzero sign vector")
    if off.size == 0:
        return 0.0
    X_I = X[:, support]
    gram = X_I.T @ X_I
    if np.linalg.matrix_rank(gram) < support.size:
        raise DomainError("X_I′X_I is singular; the classical LASSO condition is undefined")
    return float(np.max(np.abs(X[:, off].T @ X_I @ np.linalg.solve(gram, S[support]))))


def min_alpha_for_recovery(X, Y, beta_or_S: BetaOrPattern, method: str = "slope",
                           lam: Optional[LambdaLike] = None, tol: Optional[Tolerances] = None,
                           grid_size: int = 200, rel_precision: float = 1e-4) -> Optional[float]:
    """
    Smallest penalty scale at which the certificate recovers the target.

    The recovery set is scanned on a log grid below the scale at which the
    fit becomes zero; the first recovering grid point is refined by
    bisection against the preceding grid point. Returns 0.0 when the
    smallest grid point already recovers and None when no grid point does.
    For `method="lasso"` the scale is the LASSO penalty λα and the target
    is the sign vector of beta_or_S.
    """
    tol = resolve_tol(tol)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    method = method.lower()
    if method == "slope":
        if lam is None:
            raise InvalidTuning("SLOPE minimal-alpha search needs Λ")
        M = target_pattern(beta_or_S)
        red = _reduction(X, lam, M, tol, None)
        alpha_max = dual_sorted_l1_norm(X.T @ Y, base_lambdas(lam))

        def recovered(a: float) -> bool:
            return check_recovery(X, Y, M, lam, a, tol, red).recovered
    elif method == "lasso":
        S = np.sign(np.asarray(beta_or_S.values if isinstance(beta_or_S, SlopePattern) else beta_or_S, float))
        alpha_max = float(np.max(np.abs(X.T @ Y)))

        def recovered(a: float) -> bool:
            return lasso_sign_conditions(X, Y, S, a, tol).recovered
    else:
        raise DomainError(f"unknown method {method!r}; expected 'slope' or 'lasso'")

    if not alpha_max > 0:
        return None
    grid = alpha_max * np.logspace(-6, 0, grid_size)
    hits = [i for i, a in enumerate(grid) if recovered(float(a))]
    if not hits:
        logger.info(f"{method}: no alpha on the scan grid recovers the target")
        return None
    first = hits[0]
    if first == 0:
        return 0.0
    lo, hi = float(grid[first - 1]), float(grid[first])
    while hi - lo > rel_precision * hi:
        mid = 0.5 * (lo + hi)
        if recovered(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class PiBarGeometry:
    pi_bar: np.ndarray
    in_affine: bool
    in_colspace: bool
    in_subdiff: bool

    def __iter__(self):
        yield self.pi_bar
        yield self.in_affine
        yield self.in_colspace


def geometric_pi_bar(X, M: SlopePattern, lam: LambdaLike, tol: Optional[Tolerances] = None,
                     reduction: Optional[ClusterReduction] = None) -> PiBarGeometry:
    """
    Π̄ = X′(X̃′)⁺Λ̃ is the single point of aff(∂J_Λ(M)) ∩ col(X′X̃) when
    Λ̃ ∈ col(X̃′); otherwise the intersection is empty.
    """
    tol = resolve_tol(tol)
    red = _reduction(X, lam, M, tol, reduction)
    X = as_matrix(X)
    lam_vec = base_lambdas(lam)
    pi_bar = X.T @ (red.Xt_pinv @ red.Lambda_tilde)
    col_ok = in_col_space(red.Lambda_tilde, red.X_tilde.T, tol)
    residual = float(np.max(np.abs(red.U.T @ pi_bar - red.Lambda_tilde)))
    in_affine = col_ok and residual <= tol.eq_tol * (1.0 + float(np.max(np.abs(red.Lambda_tilde))))
    return PiBarGeometry(
        pi_bar=pi_bar,
        in_affine=bool(in_affine),
        in_colspace=in_col_space(pi_bar, X.T @ red.X_tilde, tol),
        in_subdiff=subdiff_membership(pi_bar, M, lam_vec, tol).result,
    )


@dataclass(frozen=True)
class AsymptoticSpec:
    """
    Limit law of the scaled gradient certificate when n⁻¹X′X → C:
    Z ~ N(CU(U′CU)⁻¹Λ̃, σ²[C − CU(U′CU)⁻¹U′C]).
    """

    C: np.ndarray
    pattern: SlopePattern
    lambdas: np.ndarray
    Z_mean: np.ndarray
    Z_cov: np.ndarray

    @property
    def dual_value(self) -> float:
        return dual_sorted_l1_norm(self.Z_mean, self.lambdas)


def asymptotic_spec(C, M: SlopePattern, lam: LambdaLike, sigma: float = 1.0,
                    tol: Optional[Tolerances] = None) -> AsymptoticSpec:
    tol = resolve_tol(tol)
    C = as_matrix(C)
    if C.shape[0] != C.shape[1] or C.shape[0] != M.p:
        raise DimensionError(f"limit Gram matrix must be {M.p}x{M.p}, got {C.shape}")
    if sigma < 0:
        raise DomainError(f"sigma must be nonnegative, got {sigma}")
    red = reduce(C, base_lambdas(lam), M, tol)
    U = red.U
    CU = C @ U
    G_inv = pinv(U.T @ CU, tol)
    cov = sigma ** 2 * (C - CU @ G_inv @ CU.T)
    return AsymptoticSpec(
        C=C,
        pattern=M,
        lambdas=base_lambdas(lam),
        Z_mean=CU @ G_inv @ red.Lambda_tilde,
        Z_cov=0.5 * (cov + cov.T),
    )


def asymptotic_open_irrepresentability(C, M: SlopePattern, lam: LambdaLike,
                                       tol: Optional[Tolerances] = None) -> bool:
    """CU(U′CU)⁻¹Λ̃ ∈ ri ∂J_Λ(M), the limit counterpart of open irrepresentability."""
    spec = asymptotic_spec(C, M, lam, 1.0, tol)
    return in_relative_interior(spec.Z_mean, M, spec.lambdas, tol)


@dataclass(frozen=True)
class SignalSequenceSpec:
    """
    Signals β⁽ʳ⁾ = U_M s⁽ʳ⁾ whose smallest cluster gap (with s_{k+1} = 0)
    equals gaps[r]; s⁽ʳ⁾ is s_base rescaled.
    """

    pattern: SlopePattern
    s_base: Tuple[float, ...]
    gaps: Tuple[float, ...]

    def __post_init__(self):
        s = np.asarray(self.s_base, dtype=float)
        if s.shape[0] != self.pattern.k or np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise InvalidClusterValues("s_base must be strictly decreasing, positive, of length k")
        if any(g <= 0 for g in self.gaps):
            raise DomainError("gap schedule must be positive")

    def cluster_values(self, r: int) -> np.ndarray:
        s = np.asarray(self.s_base, dtype=float)
        base_gap = float(np.min(_differences(s.shape[0]) @ s))
        return s * (self.gaps[r] / base_gap)

    def signal(self, r: int) -> np.ndarray:
        return synthesize(self.pattern, self.cluster_values(r))

    def __len__(self) -> int:
        return len(self.gaps)


def irrepresentable_lambda(X, M: SlopePattern, base: LambdaLike, tol: Optional[Tolerances] = None,
                           margin: float = 0.02) -> TuningSequence:
    """
    A strictly decreasing Λ with the same clustered parameter Λ̃ as `base`
    for which the open irrepresentability condition holds.

    Π̄ depends on Λ only through Λ̃, so λ can be placed freely inside each
    cluster block: each block gets the sorted |Π̄| of its cluster plus a
    zero-sum decreasing ramp, and the tail gets the off-support |Π̄|
    inflated by `margin`.

    Raises:
        InvalidTuning: Π̄ is not consistent with M (wrong signs, cluster
            order or Λ̃ ∉ col(X̃′)), so no such Λ exists
    """
    tol = resolve_tol(tol)
    X = as_matrix(X)
    lam_base = base_lambdas(base)
    red = _reduction(X, lam_base, M, tol, None)
    if not in_col_space(red.Lambda_tilde, red.X_tilde.T, tol):
        raise InvalidTuning("Λ̃ is not in col(X̃′); no tuning sequence makes M irrepresentable")
    pi_bar = X.T @ (red.Xt_pinv @ red.Lambda_tilde)
    m = M.as_array()
    if np.any(np.sign(m[m != 0]) * pi_bar[m != 0] <= 0):
        raise InvalidTuning("Π̄ disagrees in sign with the target pattern")

    blocks = [np.sort(np.abs(pi_bar[np.abs(m) == M.k - l]))[::-1] for l in range(M.k)]
    tail = np.sort(np.abs(pi_bar[m == 0]))[::-1]
    gaps = [blocks[l][-1] - blocks[l + 1][0] for l in range(M.k - 1)]
    gaps.append(blocks[-1][-1] - (1.0 + margin) * (tail[0] if tail.size else 0.0))
    g = min(gaps)
    if g <= 0:
        raise InvalidTuning("|Π̄| does not separate the clusters of M; no irrepresentable Λ with this Λ̃")

    eps = 0.5 * g / max(1, int(np.max(cluster_sizes(M))))
    parts = []
    for c in blocks:
        size = c.shape[0]
        parts.append(c + eps * ((size + 1) / 2.0 - np.arange(1, size + 1)))
    if tail.size:
        q = tail.shape[0]
        parts.append((1.0 + margin) * tail + 0.25 * g * (q - np.arange(q)) / q)
    lambdas = np.concatenate(parts)

    result = TuningSequence(lambdas, name="irrepresentable")
    if not result.strictly_decreasing or not open_irrepresentability(X, M, result, tol):
        raise InvalidTuning("constructed sequence failed the open irrepresentability check")
    logger.debug(f"irrepresentable Λ built with cluster gap {g:.4g}")
    return result
