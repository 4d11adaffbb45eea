"""
SLOPE and LASSO estimation by accelerated proximal gradient (FISTA with
function-value restart), certified by the KKT condition

    X′(Y − Xβ̂) ∈ ∂J_{αΛ}(β̂),

plus warm-started solution paths over a grid of scales α.
"""

import logging
from dataclasses import dataclass, fields
from typing import Dict, List, Optional

import numpy as np

from slope_recovery.src.errors import (DimensionError, DomainError,
                                       InvalidDesign, NotConverged)
from slope_recovery.src.numerics import (SeededRng, Tolerances, as_matrix,
                                         as_vector, resolve_tol)
from slope_recovery.src.pattern import (SlopePattern, abs_sorted_pattern_matrix,
                                        patt, patt_with_tol, pattern_matrix)
from slope_recovery.src.sorted_l1 import (LambdaLike, TuningSequence,
                                          dual_sorted_l1_norm, penalty_vector,
                                          prox_sorted_l1, sorted_l1_norm)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 50000
    rel_tol: float = 1e-10
    power_iters: int = 100
    check_every: int = 10
    polish: bool = True

    @classmethod
    def from_dict(cls, block: Dict) -> "SolverOptions":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in block.items():
            if key not in known:
                continue
            if key == "polish":
                kwargs[key] = bool(value)
            elif key == "rel_tol":
                kwargs[key] = float(value)
            else:
                kwargs[key] = int(value)
        return cls(**kwargs)


@dataclass
class Problem:
    """min_b ½‖Y − Xb‖² + J_{αΛ}(b)."""

    X: np.ndarray
    Y: np.ndarray
    tuning: TuningSequence
    alpha: Optional[float] = None

    def __post_init__(self):
        self.X = as_matrix(self.X)
        self.Y = as_vector(self.Y, "Y")
        if not isinstance(self.tuning, TuningSequence):
            self.tuning = TuningSequence(self.tuning)
        if self.alpha is not None:
            self.tuning = self.tuning.scaled(self.alpha)
        self.alpha = self.tuning.alpha
        n, p = self.X.shape
        if self.Y.shape[0] != n:
            raise DimensionError(f"Y has {self.Y.shape[0]} entries but X has {n} rows")
        if self.tuning.p != p:
            raise DimensionError(f"Λ has {self.tuning.p} entries but X has {p} columns")

    @property
    def penalty(self) -> np.ndarray:
        return self.tuning.effective


@dataclass
class SolverResult:
    beta_hat: np.ndarray
    iterations: int
    kkt_residual: float
    objective: float
    converged: bool
    pattern: SlopePattern
    polished: bool = False


@dataclass(frozen=True)
class PathPoint:
    alpha: float
    result: SolverResult

    @property
    def beta_hat(self) -> np.ndarray:
        return self.result.beta_hat

    @property
    def pattern(self) -> SlopePattern:
        return self.result.pattern


@dataclass(frozen=True)
class Breakpoint:
    alpha: float
    pattern_before: SlopePattern
    pattern_after: SlopePattern


def objective(X: np.ndarray, Y: np.ndarray, beta: np.ndarray, penalty: np.ndarray) -> float:
    r = Y - X @ beta
    return 0.5 * float(r @ r) + sorted_l1_norm(beta, penalty)


def lipschitz_constant(X, power_iters: int = 100) -> float:
    """
    Largest eigenvalue of X′X by power iteration, inflated by 1% so the
    step 1/L stays on the safe side of the true constant.
    """
    X = as_matrix(X)
    v = SeededRng(0).generator().standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    estimate = prev = 0.0
    for _ in range(max(1, power_iters)):
        w = X.T @ (X @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 1.0
        v = w / norm
        prev, estimate = estimate, float(v @ (X.T @ (X @ v)))
    if abs(estimate - prev) > 1e-6 * estimate:
        logger.warning("power iteration did not settle; using the exact spectral norm")
        estimate = float(np.linalg.norm(X, 2) ** 2)
    return 1.01 * estimate


def kkt_residual(X, Y, beta, lam: LambdaLike, tol: Optional[Tolerances] = None) -> float:
    """
    Distance of X′(Y − Xβ) to ∂J_Λ(β): the larger of the dual-norm excess
    and the affine-span residual, with the pattern read at pattern_tol.
    """
    tol = resolve_tol(tol)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    beta = as_vector(beta, "beta")
    pen = penalty_vector(lam)
    g = X.T @ (Y - X @ beta)
    excess = max(0.0, dual_sorted_l1_norm(g, pen) - 1.0)
    M = patt_with_tol(beta, tol.pattern_tol)
    if M.is_zero:
        return excess
    affine = np.max(np.abs(pattern_matrix(M).T @ g - abs_sorted_pattern_matrix(M).T @ pen))
    return max(excess, float(affine))


def _kkt_threshold(XtY: np.ndarray, tol: Tolerances) -> float:
    return tol.membership_tol * (1.0 + float(np.max(np.abs(XtY))))


def _polish(X, Y, beta, pen, tol: Tolerances) -> Optional[np.ndarray]:
    """
    Solve the reduced system X̃′X̃ s = X̃′Y − Λ̃ on the current pattern; the
    candidate U_M s is returned only if it keeps the pattern.
    """
    M = patt_with_tol(beta, tol.pattern_tol)
    if M.is_zero:
        return np.zeros_like(beta)
    U = pattern_matrix(M)
    X_tilde = X @ U
    rhs = X_tilde.T @ Y - abs_sorted_pattern_matrix(M).T @ pen
    s, *_ = np.linalg.lstsq(X_tilde.T @ X_tilde, rhs, rcond=None)
    if np.any(s <= 0) or np.any(np.diff(s) >= 0):
        return None
    candidate = U @ s
    if patt(candidate) != M:
        return None
    return candidate


def solve(prob: Problem, opts: Optional[SolverOptions] = None, tol: Optional[Tolerances] = None,
          beta0: Optional[np.ndarray] = None) -> SolverResult:
    """
    Minimize the SLOPE objective by FISTA with adaptive restart.

    The KKT residual is the convergence authority; small iterate changes
    only trigger a KKT check and a polishing attempt.

    Raises:
        NotConverged: max_iter reached without passing the KKT test
    """
    opts = opts or SolverOptions()
    tol = resolve_tol(tol)
    X, Y, pen = prob.X, prob.Y, prob.penalty
    p = X.shape[1]
    XtY = X.T @ Y
    threshold = _kkt_threshold(XtY, tol)

    beta = np.zeros(p) if beta0 is None else as_vector(beta0, "beta0").copy()
    if beta.shape[0] != p:
        raise DimensionError(f"warm start has {beta.shape[0]} entries, expected {p}")

    def finish(b, iterations, residual, polished=False):
        return SolverResult(
            beta_hat=b,
            iterations=iterations,
            kkt_residual=residual,
            objective=objective(X, Y, b, pen),
            converged=True,
            pattern=patt_with_tol(b, tol.pattern_tol),
            polished=polished,
        )

    residual = kkt_residual(X, Y, beta, pen, tol)
    if residual <= threshold:
        return finish(beta, 0, residual)

    L = lipschitz_constant(X, opts.power_iters)
    gram = X.T @ X if X.shape[0] >= p else None
    step_pen = pen / L

    def gradient(z):
        if gram is not None:
            return gram @ z - XtY
        return X.T @ (X @ z - Y)

    z = beta.copy()
    t = 1.0
    f_prev = objective(X, Y, beta, pen)
    for it in range(1, opts.max_iter + 1):
        beta_new = prox_sorted_l1(z - gradient(z) / L, step_pen)
        f_new = objective(X, Y, beta_new, pen)
        if f_new > f_prev and t > 1.0:
            # restart from the last accepted iterate without momentum
            z = beta.copy()
            t = 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = beta_new + ((t - 1.0) / t_new) * (beta_new - beta)
        small_step = np.linalg.norm(beta_new - beta) <= opts.rel_tol * max(1.0, np.linalg.norm(beta))
        beta, f_prev, t = beta_new, f_new, t_new

        if small_step or it % opts.check_every == 0:
            residual = kkt_residual(X, Y, beta, pen, tol)
            if residual <= threshold:
                logger.debug(f"solve converged after {it} iterations (kkt={residual:.3e})")
                return finish(beta, it, residual)
            if opts.polish:
                candidate = _polish(X, Y, beta, pen, tol)
                if candidate is not None:
                    cand_residual = kkt_residual(X, Y, candidate, pen, tol)
                    if cand_residual <= threshold:
                        logger.debug(f"solve polished at iteration {it} (kkt={cand_residual:.3e})")
                        return finish(candidate, it, cand_residual, polished=True)

    residual = kkt_residual(X, Y, beta, pen, tol)
    raise NotConverged(
        f"no KKT certificate after {opts.max_iter} iterations (residual {residual:.3e} > {threshold:.3e})",
        last_iterate=beta,
        kkt_residual=residual,
        iterations=opts.max_iter,
    )


def solve_lasso(X, Y, lam_alpha: float, opts: Optional[SolverOptions] = None,
                tol: Optional[Tolerances] = None, beta0: Optional[np.ndarray] = None) -> SolverResult:
    """LASSO with penalty λα‖b‖₁, i.e. SLOPE with a constant sequence."""
    if not lam_alpha > 0:
        raise DomainError(f"LASSO penalty must be positive, got {lam_alpha}")
    X = as_matrix(X)
    tuning = TuningSequence(np.full(X.shape[1], float(lam_alpha)), name="lasso")
    return solve(Problem(X, Y, tuning), opts, tol, beta0)


def is_orthogonal(X, tol: Optional[Tolerances] = None) -> bool:
    tol = resolve_tol(tol)
    X = as_matrix(X)
    return bool(np.max(np.abs(X.T @ X - np.eye(X.shape[1]))) <= 1e3 * tol.eq_tol)


def solve_orthogonal(X, Y, lam: LambdaLike, tol: Optional[Tolerances] = None) -> SolverResult:
    """Closed form β̂ = prox(X′Y) for a design with X′X = I."""
    tol = resolve_tol(tol)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    if not is_orthogonal(X, tol):
        raise InvalidDesign("closed-form solve needs X′X = I")
    pen = penalty_vector(lam)
    beta = prox_sorted_l1(X.T @ Y, pen)
    return SolverResult(
        beta_hat=beta,
        iterations=0,
        kkt_residual=kkt_residual(X, Y, beta, pen, tol),
        objective=objective(X, Y, beta, pen),
        converged=True,
        pattern=patt_with_tol(beta, tol.pattern_tol),
    )


def solution_path(X, Y, lam: LambdaLike, alphas, opts: Optional[SolverOptions] = None,
                  tol: Optional[Tolerances] = None) -> List[PathPoint]:
    """Solve along an increasing grid of α, warm-starting each point from the last."""
    alphas = as_vector(alphas, "alphas")
    if np.any(alphas <= 0) or np.any(np.diff(alphas) <= 0):
        raise DomainError("alpha grid must be positive and strictly increasing")
    base = lam if isinstance(lam, TuningSequence) else TuningSequence(lam)
    points = []
    beta = None
    for alpha in alphas:
        result = solve(Problem(X, Y, base, float(alpha)), opts, tol, beta)
        points.append(PathPoint(float(alpha), result))
        beta = result.beta_hat
    return points


def locate_breakpoints(X, Y, lam: LambdaLike, path: List[PathPoint], opts: Optional[SolverOptions] = None,
                       tol: Optional[Tolerances] = None, precision: float = 1e-3) -> List[Breakpoint]:
    """Bisect between consecutive grid points whose fitted patterns differ."""
    base = lam if isinstance(lam, TuningSequence) else TuningSequence(lam)
    breakpoints = []
    for left, right in zip(path, path[1:]):
        if left.pattern == right.pattern:
            continue
        lo, hi = left.alpha, right.alpha
        warm = left.beta_hat
        pattern_hi = right.pattern
        while hi - lo > precision:
            mid = 0.5 * (lo + hi)
            result = solve(Problem(X, Y, base, mid), opts, tol, warm)
            if result.pattern == left.pattern:
                lo, warm = mid, result.beta_hat
            else:
                hi, pattern_hi = mid, result.pattern
        breakpoints.append(Breakpoint(0.5 * (lo + hi), left.pattern, pattern_hi))
        logger.info(f"breakpoint near alpha={0.5 * (lo + hi):.4f}: {left.pattern} -> {pattern_hi}")
    return breakpoints
