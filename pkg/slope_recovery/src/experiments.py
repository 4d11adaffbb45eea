#!/usr/bin/env python3
"""
Monte-Carlo experiments on SLOPE pattern recovery.

Design generators, per-replication recovery certificates, the Gaussian
upper bound on the recovery probability and its α calibration, the
LASSO/SLOPE comparison on a correlated genetic-like design, and the
constant-magnitude hypothesis test.

Replications are keyed by (master_seed, rep) so results do not depend on
the number of worker threads or on completion order.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from slope_recovery.src.errors import (CalibrationFailed, DomainError,
                                       InvalidConfig, InvalidDesign,
                                       InvalidTuning, NotConverged,
                                       SlopeError)
from slope_recovery.src.lambda_seq import LambdaRecipe
from slope_recovery.src.numerics import (SeededRng, Tolerances, as_matrix,
                                         as_vector, covariance_sqrt,
                                         in_col_space, resolve_tol)
from slope_recovery.src.pattern import SlopePattern, patt, reduce, synthesize
from slope_recovery.src.recovery import (asymptotic_spec,
                                         check_recovery,
                                         irrepresentable_lambda,
                                         min_alpha_for_recovery,
                                         zero_pattern_recovered)
from slope_recovery.src.solver import (Problem, SolverOptions, is_orthogonal,
                                       solve, solve_lasso, solve_orthogonal)
from slope_recovery.src.sorted_l1 import (TuningSequence, dual_sorted_l1_norm,
                                          penalty_vector)

logger = logging.getLogger(__name__)

# stream id reserved for designs that are drawn once per configuration
DESIGN_STREAM = 2 ** 31 - 1

TASKS = ("mc_recovery", "upper_bound", "calibrate", "compare", "constant_magnitude")
SWEEP_PARAMS = ("signal_scale", "n", "alpha", "gap", "beta_inf")


# ---------------------------------------------------------------------------
# Designs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignSpec:
    kind: str = "orthogonal"
    n: int = 100
    p: int = 100
    flip_prob: float = 0.0476
    standardize: bool = True
    redraw: bool = True

    KINDS = ("orthogonal", "gaussian_iid", "markov_genetic")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidConfig(f"unknown design kind {self.kind!r}; expected one of {self.KINDS}")
        if self.n < 1 or self.p < 1:
            raise InvalidConfig(f"design dimensions must be positive, got n={self.n}, p={self.p}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidConfig(f"flip_prob must lie in [0, 1], got {self.flip_prob}")

    @classmethod
    def from_dict(cls, block: Dict) -> "DesignSpec":
        return cls(
            kind=block.get("kind", "orthogonal"),
            n=int(block.get("n", 100)),
            p=int(block.get("p", 100)),
            flip_prob=float(block.get("flip_prob", 0.0476)),
            standardize=bool(block.get("standardize", True)),
            redraw=bool(block.get("redraw", True)),
        )

    @property
    def fixed(self) -> bool:
        """Orthogonal designs are drawn once; random designs once per replication unless redraw is off."""
        return self.kind == "orthogonal" or not self.redraw


def gen_design(spec: DesignSpec, rng) -> np.ndarray:
    """
    Draw a design matrix.

    Args:
        spec: design family and dimensions
        rng: numpy Generator (or anything SeededRng-like with .generator())

    Returns:
        n x p design matrix
    """
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    n, p = spec.n, spec.p
    if spec.kind == "orthogonal":
        if n < p:
            raise InvalidDesign(f"an orthogonal design needs n >= p, got n={n}, p={p}")
        Q, R = np.linalg.qr(gen.standard_normal((n, p)))
        # fix column signs so the draw is a deterministic function of the stream
        return Q * np.sign(np.diag(R))
    if spec.kind == "gaussian_iid":
        return gen.standard_normal((n, p))

    start = np.where(gen.random(n) < 0.5, 1.0, -1.0)
    flips = np.where(gen.random((n, p - 1)) < spec.flip_prob, -1.0, 1.0)
    X = start[:, None] * np.concatenate([np.ones((n, 1)), np.cumprod(flips, axis=1)], axis=1)
    if spec.standardize:
        sd = X.std(axis=0)
        if np.any(sd == 0):
            raise InvalidDesign("a Markov design column is constant and cannot be standardized")
        X = (X - X.mean(axis=0)) / sd
    return X


def ar1_gram(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BetaSpec:
    """
    The true coefficient vector.

    constant: the first `support` coordinates equal `value` (all if None),
              plus `bump` added to the first coordinate
    pattern:  U_M s for a pattern string and cluster values
    vector:   explicit values
    The result is multiplied by `scale`.
    """

    kind: str = "constant"
    value: float = 1.0
    support: Optional[int] = None
    bump: float = 0.0
    pattern: Optional[str] = None
    values: Tuple[float, ...] = ()
    scale: float = 1.0

    @classmethod
    def from_dict(cls, block: Dict) -> "BetaSpec":
        return cls(
            kind=block.get("kind", "constant"),
            value=float(block.get("value", 1.0)),
            support=block.get("support"),
            bump=float(block.get("bump", 0.0)),
            pattern=block.get("pattern"),
            values=tuple(float(v) for v in block.get("values", ())),
            scale=float(block.get("scale", 1.0)),
        )

    def _unscaled(self, p: int) -> np.ndarray:
        if self.kind == "constant":
            b = np.zeros(p)
            b[: p if self.support is None else int(self.support)] = self.value
            b[0] += self.bump
            return b
        if self.kind == "pattern":
            if self.pattern is None:
                raise InvalidConfig("beta kind 'pattern' needs a pattern string")
            b = synthesize(SlopePattern.parse(self.pattern), np.asarray(self.values, dtype=float))
        elif self.kind == "vector":
            b = np.asarray(self.values, dtype=float)
        else:
            raise InvalidConfig(f"unknown beta kind {self.kind!r}")
        if b.shape[0] != p:
            raise InvalidConfig(f"beta has {b.shape[0]} entries but the design has p={p}")
        return b

    def _min_gap(self) -> float:
        s = np.append(np.asarray(self.values, dtype=float), 0.0)
        return float(np.min(s[:-1] - s[1:]))

    def vector(self, p: int) -> np.ndarray:
        return self.scale * self._unscaled(p)

    def with_gap(self, gap: float) -> "BetaSpec":
        """Rescale so the smallest cluster gap (with s_{k+1} = 0) equals `gap`."""
        if self.kind == "constant" and self.bump == 0.0:
            return replace(self, value=gap, scale=1.0)
        if self.kind == "pattern":
            factor = gap / self._min_gap()
            return replace(self, values=tuple(v * factor for v in self.values), scale=1.0)
        raise InvalidConfig("a gap sweep needs a constant or pattern beta")

    def with_sup_norm(self, p: int, target: float) -> "BetaSpec":
        peak = float(np.max(np.abs(self._unscaled(p))))
        if peak == 0.0:
            raise InvalidConfig("cannot rescale a zero beta to a given sup norm")
        return replace(self, scale=target / peak)


def signal_gap(beta: np.ndarray) -> float:
    """Smallest gap between consecutive distinct |β| values, with 0 appended."""
    levels = np.unique(np.abs(beta[beta != 0]))[::-1]
    if levels.size == 0:
        return 0.0
    return float(np.min(levels - np.append(levels[1:], 0.0)))


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: Tuple[float, ...]

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise InvalidConfig(f"unknown sweep parameter {self.param!r}; expected one of {SWEEP_PARAMS}")
        if not self.values:
            raise InvalidConfig("a sweep needs at least one value")


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "mc_recovery"
    name: str = "experiment"
    design: DesignSpec = field(default_factory=DesignSpec)
    beta: BetaSpec = field(default_factory=BetaSpec)
    sigma: float = 1.0
    lambda_recipe: str = "gauss-os"
    alpha: float = 1.0
    alpha_schedule: str = "fixed"
    eta: Optional[float] = None
    reps: int = 1000
    master_seed: int = 20240601
    workers: int = 1
    solver_check: int = 100
    mc_reps: int = 100000
    sweep: Optional[SweepSpec] = None
    irrepresentable: bool = False
    limit: Optional[str] = None
    with_upper_bound: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidConfig(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.reps < 1:
            raise InvalidConfig(f"reps must be at least 1, got {self.reps}")
        if self.sigma < 0:
            raise InvalidConfig(f"sigma must be nonnegative, got {self.sigma}")
        if not self.alpha > 0:
            raise InvalidConfig(f"alpha must be positive, got {self.alpha}")
        if self.eta is not None and not 0.0 < self.eta < 1.0:
            raise InvalidConfig(f"eta must lie in (0, 1), got {self.eta}")
        alpha_multiplier(self.alpha_schedule, 1, 1.0)

    @classmethod
    def from_dict(cls, block: Dict, defaults: Optional[Dict] = None) -> "ExperimentConfig":
        """
        Build a config from a JSON document; `defaults` is the `experiments`
        block of the main configuration (workers, master_seed, ...).
        """
        defaults = defaults or {}
        sweep = block.get("sweep")
        schedule = block.get("alpha_schedule", "fixed")
        if block.get("scale_penalty_by_sqrt_n") and schedule == "fixed":
            schedule = "sqrt_n"
        try:
            return cls(
                task=block.get("task", "mc_recovery"),
                name=block.get("name", block.get("task", "experiment")),
                design=DesignSpec.from_dict(block.get("design", {})),
                beta=BetaSpec.from_dict(block.get("beta", {})),
                sigma=float(block.get("sigma", 1.0)),
                lambda_recipe=str(block.get("lambda", "gauss-os")),
                alpha=float(block.get("alpha", 1.0)),
                alpha_schedule=schedule,
                eta=None if block.get("eta") is None else float(block["eta"]),
                reps=int(block.get("reps", 1000)),
                master_seed=int(block.get("master_seed", defaults.get("master_seed", 20240601))),
                workers=int(block.get("workers", defaults.get("workers", 1))),
                solver_check=int(block.get("solver_check", defaults.get("solver_check", 100))),
                mc_reps=int(block.get("mc_reps", defaults.get("mc_reps", 100000))),
                sweep=None if sweep is None else SweepSpec(sweep["param"], tuple(float(v) for v in sweep["values"])),
                irrepresentable=bool(block.get("irrepresentable", False)),
                limit=block.get("limit"),
                with_upper_bound=bool(block.get("with_upper_bound", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SlopeError):
                raise
            raise InvalidConfig(f"malformed experiment config: {e}") from e

    def tuning(self) -> TuningSequence:
        return LambdaRecipe.parse(self.lambda_recipe, self.design.p).build()

    def beta_vector(self) -> np.ndarray:
        return self.beta.vector(self.design.p)

    def effective_alpha(self, beta: Optional[np.ndarray] = None) -> float:
        beta = self.beta_vector() if beta is None else beta
        return self.alpha * alpha_multiplier(self.alpha_schedule, self.design.n, signal_gap(beta))

    def with_value(self, param: str, value: float) -> "ExperimentConfig":
        """The config at one point of a sweep."""
        if param == "signal_scale":
            return replace(self, beta=replace(self.beta, scale=value))
        if param == "n":
            return replace(self, design=replace(self.design, n=int(value)))
        if param == "alpha":
            return replace(self, alpha=value)
        if param == "gap":
            return replace(self, beta=self.beta.with_gap(value))
        if param == "beta_inf":
            if value == 0.0:
                return replace(self, beta=replace(self.beta, scale=0.0))
            return replace(self, beta=self.beta.with_sup_norm(self.design.p, value))
        raise InvalidConfig(f"unknown sweep parameter {param!r}")


def alpha_multiplier(schedule: str, n: int, gap: float) -> float:
    """
    Factor applied to α by a schedule:

        fixed        1
        sqrt_n       √n
        n_power:e    nᵉ
        gap_power:e  Δᵉ (Δ the smallest signal gap)
    """
    head, _, arg = schedule.partition(":")
    try:
        if head == "fixed":
            return 1.0
        if head == "sqrt_n":
            return math.sqrt(n)
        if head == "n_power":
            return float(n) ** float(arg or 0.75)
        if head == "gap_power":
            if gap <= 0:
                raise InvalidConfig("gap_power schedule needs a nonzero signal")
            return gap ** float(arg or 0.5)
    except ValueError as e:
        raise InvalidConfig(f"cannot parse alpha schedule {schedule!r}: {e}") from e
    raise InvalidConfig(f"unknown alpha schedule {schedule!r}")


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

def mc_se(freq: float, reps: int) -> float:
    return math.sqrt(max(freq * (1.0 - freq), 0.0) / reps)


@dataclass
class ExperimentResult:
    alpha: float
    reps: int
    recovery_freq: float
    positivity_freq: float
    subdiff_freq: float
    se: float
    solver_checked: int = 0
    solver_disagreements: int = 0
    records: Optional[pd.DataFrame] = None

    @property
    def condition_freqs(self) -> Tuple[float, float, float]:
        return self.positivity_freq, self.subdiff_freq, self.recovery_freq

    @classmethod
    def from_records(cls, records: List[Dict], alpha: float) -> "ExperimentResult":
        frame = pd.DataFrame.from_records(records)
        reps = len(frame)
        freq = float(frame["recovered"].mean())
        checked = frame["solver_agrees"].notna() if "solver_agrees" in frame else pd.Series(False, index=frame.index)
        disagreements = int((checked & (frame.get("solver_agrees") == 0)).sum()) if checked.any() else 0
        return cls(
            alpha=alpha,
            reps=reps,
            recovery_freq=freq,
            positivity_freq=float(frame["positivity"].mean()),
            subdiff_freq=float(frame["subdiff"].mean()),
            se=mc_se(freq, reps),
            solver_checked=int(checked.sum()),
            solver_disagreements=disagreements,
            records=frame,
        )

    def summary(self) -> Dict:
        return {
            "alpha": self.alpha,
            "reps": self.reps,
            "recovery_freq": self.recovery_freq,
            "positivity_freq": self.positivity_freq,
            "subdiff_freq": self.subdiff_freq,
            "se": self.se,
            "solver_checked": self.solver_checked,
            "solver_disagreements": self.solver_disagreements,
        }


def run_replications(replicate: Callable[[int], Dict], reps: int, workers: int = 1,
                     progress: bool = False, desc: str = "replications") -> List[Dict]:
    """Run `replicate(rep)` for rep = 0..reps-1 and return records ordered by rep."""
    if workers <= 1:
        return [replicate(rep) for rep in tqdm(range(reps), desc=desc, disable=not progress)]
    records = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(replicate, rep) for rep in range(reps)]
        for future in tqdm(as_completed(futures), total=reps, desc=desc, disable=not progress):
            records.append(future.result())
    records.sort(key=lambda r: r["rep"])
    return records


# ---------------------------------------------------------------------------
# Recovery frequencies
# ---------------------------------------------------------------------------

def _solver_pattern(X, Y, tuning: TuningSequence, alpha: float, opts, tol) -> Optional[SlopePattern]:
    try:
        if is_orthogonal(X, tol):
            return solve_orthogonal(X, Y, tuning.scaled(alpha), tol).pattern
        return solve(Problem(X, Y, tuning, alpha), opts, tol).pattern
    except NotConverged as e:
        logger.warning(f"solver cross-check did not converge: {e}")
        return None


def mc_recovery(config: ExperimentConfig, tol: Optional[Tolerances] = None,
                opts: Optional[SolverOptions] = None, progress: bool = False) -> ExperimentResult:
    """
    Monte-Carlo recovery frequency of patt(β).

    Every replication draws noise (and a design, for random families),
    evaluates the exact recovery certificate, and on the first
    `solver_check` replications also compares against the solver's
    fitted pattern.
    """
    tol = resolve_tol(tol)
    tuning = config.tuning()
    beta = config.beta_vector()
    M = patt(beta)
    n = config.design.n
    alpha = config.effective_alpha(beta)

    fixed_X = gen_design(config.design, SeededRng(config.master_seed, DESIGN_STREAM)) if config.design.fixed else None
    reduction = reduce(fixed_X, tuning, M, tol) if fixed_X is not None and not M.is_zero else None

    def replicate(rep: int) -> Dict:
        gen = SeededRng(config.master_seed, rep).generator()
        X = fixed_X if fixed_X is not None else gen_design(config.design, gen)
        Y = X @ beta + config.sigma * gen.standard_normal(n)
        if M.is_zero:
            ok = zero_pattern_recovered(X, Y, tuning, alpha, tol)
            record = {
                "rep": rep, "alpha": alpha, "positivity": int(ok), "subdiff": int(ok), "recovered": int(ok),
                "dual_value": dual_sorted_l1_norm(X.T @ Y, alpha * tuning.lambdas), "near_boundary": 0,
            }
        else:
            cert = check_recovery(X, Y, M, tuning, alpha, tol, reduction)
            record = {
                "rep": rep, "alpha": alpha, "positivity": int(cert.positivity_ok),
                "subdiff": int(cert.subdiff_ok), "recovered": int(cert.recovered),
                "dual_value": cert.dual_value, "near_boundary": int(cert.near_boundary),
            }
        record["seed"] = config.master_seed
        if rep < config.solver_check:
            fitted = _solver_pattern(X, Y, tuning, alpha, opts, tol)
            record["solver_agrees"] = None if fitted is None else int((fitted == M) == bool(record["recovered"]))
        return record

    records = run_replications(replicate, config.reps, config.workers, progress, desc=config.name)
    result = ExperimentResult.from_records(records, alpha)
    if result.solver_disagreements:
        frame = result.records
        unexplained = int(((frame.get("solver_agrees") == 0) & (frame["near_boundary"] == 0)).sum())
        log_fn = logger.warning if unexplained else logger.info
        log_fn(f"{result.solver_disagreements} solver/certificate disagreements ({unexplained} away from a boundary)")
    return result


# ---------------------------------------------------------------------------
# Upper bound and calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UpperBound:
    prob: float
    se: float

    def __iter__(self):
        yield self.prob
        yield self.se


class UpperBoundSampler:
    """
    Draws of π_α = m + α⁻¹ L z with m = X′(X̃′)⁺Λ̃ and L L = σ²X′(I − P̃)X
    (or the limit mean and covariance when a limit Gram matrix is given).

    The standard normal draws z are fixed by the seed and reused for every
    α, so the estimated probability is monotone in α.
    """

    CACHE_LIMIT = 15_000_000

    def __init__(self, M: SlopePattern, tuning: TuningSequence, X=None, sigma: float = 1.0,
                 mc_reps: int = 100000, seed: int = 0, limit_gram=None,
                 tol: Optional[Tolerances] = None, chunk: int = 10000):
        self.tol = resolve_tol(tol)
        self.lambdas = penalty_vector(TuningSequence(tuning.lambdas) if isinstance(tuning, TuningSequence) else tuning)
        self.mc_reps = int(mc_reps)
        self.seed = int(seed)
        self.chunk = int(chunk)
        self.feasible = True
        if limit_gram is not None:
            spec = asymptotic_spec(limit_gram, M, self.lambdas, sigma, self.tol)
            self.mean, cov = spec.Z_mean, spec.Z_cov
        else:
            if X is None:
                raise DomainError("upper bound needs a design or a limit Gram matrix")
            X = as_matrix(X)
            red = reduce(X, self.lambdas, M, self.tol)
            self.feasible = in_col_space(red.Lambda_tilde, red.X_tilde.T, self.tol)
            self.mean = X.T @ (red.Xt_pinv @ red.Lambda_tilde)
            cov = sigma ** 2 * (X.T @ (X - red.P_tilde @ X))
            cov = 0.5 * (cov + cov.T)
        self.L = covariance_sqrt(cov, self.tol)
        self._noise = None
        if self.mc_reps * self.mean.shape[0] <= self.CACHE_LIMIT:
            self._noise = np.concatenate(list(self._noise_chunks()))

    def _noise_chunks(self):
        gen = SeededRng(self.seed, 0).generator()
        p = self.mean.shape[0]
        done = 0
        while done < self.mc_reps:
            m = min(self.chunk, self.mc_reps - done)
            yield gen.standard_normal((m, p)) @ self.L
            done += m

    def probability(self, alpha: float) -> UpperBound:
        if not self.feasible:
            return UpperBound(0.0, 0.0)
        if not alpha > 0:
            raise DomainError(f"alpha must be positive, got {alpha}")
        chunks = [self._noise] if self._noise is not None else self._noise_chunks()
        hits = 0
        for noise in chunks:
            dual = dual_sorted_l1_norm(self.mean + noise / alpha, self.lambdas)
            hits += int(np.sum(dual <= 1.0 + self.tol.membership_tol))
        prob = hits / self.mc_reps
        return UpperBound(prob, mc_se(prob, self.mc_reps))


def upper_bound_probability(X, M: SlopePattern, lam, alpha: float, sigma: float = 1.0,
                            mc_reps: int = 100000, seed: int = 0, limit_gram=None,
                            tol: Optional[Tolerances] = None) -> UpperBound:
    """
    Monte-Carlo estimate of P(J*_Λ(π_α) ≤ 1), an upper bound on the
    probability that SLOPE at penalty αΛ recovers M. Zero when Λ̃ ∉ col(X̃′).
    """
    if M.is_zero:
        raise DomainError("the upper bound needs a nonzero pattern")
    tuning = lam if isinstance(lam, TuningSequence) else TuningSequence(lam)
    sampler = UpperBoundSampler(M, tuning, X, sigma, mc_reps, seed, limit_gram, tol)
    return sampler.probability(alpha)


@dataclass(frozen=True)
class CalibrationResult:
    alpha: float
    prob: float
    se: float


def calibrate_alpha(eta: float, M: SlopePattern, X, lam, sigma: float = 1.0, mc_reps: int = 100000,
                    seed: int = 0, limit_gram=None, tol: Optional[Tolerances] = None,
                    rel_precision: float = 1e-5) -> CalibrationResult:
    """
    Smallest α whose upper-bound probability reaches η, by bracketing and
    bisection on common random numbers.

    Raises:
        CalibrationFailed: no α reaches η (carries the achieved ceiling)
    """
    if not 0.0 < eta < 1.0:
        raise DomainError(f"target probability must lie in (0, 1), got {eta}")
    tuning = lam if isinstance(lam, TuningSequence) else TuningSequence(lam)
    sampler = UpperBoundSampler(M, tuning, X, sigma, mc_reps, seed, limit_gram, tol)

    lo, hi = 0.0, 1.0
    bound = sampler.probability(hi)
    while bound.prob < eta:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise CalibrationFailed(
                f"upper bound never reaches {eta} (ceiling {bound.prob:.4f})", ceiling=bound.prob
            )
        bound = sampler.probability(hi)
    logger.info(f"calibration bracket: alpha in ({lo:g}, {hi:g}]")

    while hi - lo > rel_precision * hi:
        mid = 0.5 * (lo + hi)
        if sampler.probability(mid).prob >= eta:
            hi = mid
        else:
            lo = mid
    bound = sampler.probability(hi)
    if abs(bound.prob - eta) > 2.0 * mc_se(eta, sampler.mc_reps):
        logger.warning(f"calibrated probability {bound.prob:.4f} is more than 2 se from {eta}")
    logger.info(f"calibrated alpha={hi:.4f} (prob={bound.prob:.4f}, se={bound.se:.4f})")
    return CalibrationResult(hi, bound.prob, bound.se)


def _limit_gram(config: ExperimentConfig) -> Optional[np.ndarray]:
    if config.limit is None:
        return None
    head, _, arg = config.limit.partition(":")
    if head == "identity":
        return np.eye(config.design.p)
    if head == "ar1":
        rho = float(arg) if arg else 1.0 - 2.0 * config.design.flip_prob
        return ar1_gram(config.design.p, rho)
    raise InvalidConfig(f"unknown limit Gram specification {config.limit!r}")


def _upper_bound_for(config: ExperimentConfig, tol: Tolerances) -> Optional[UpperBound]:
    """Upper bound matched to an mc_recovery config, when one is defined."""
    beta = config.beta_vector()
    M = patt(beta)
    if M.is_zero:
        return None
    tuning = config.tuning()
    limit = _limit_gram(config)
    if limit is not None:
        # the limit law is stated for the penalty scale before the n-dependent factor
        return upper_bound_probability(None, M, tuning, config.alpha, config.sigma,
                                       config.mc_reps, config.master_seed, limit, tol)
    if config.design.fixed:
        X = gen_design(config.design, SeededRng(config.master_seed, DESIGN_STREAM))
        return upper_bound_probability(X, M, tuning, config.effective_alpha(beta), config.sigma,
                                       config.mc_reps, config.master_seed, None, tol)
    return None


# ---------------------------------------------------------------------------
# LASSO / SLOPE comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonResult:
    seed: int
    rep: int
    slope_alpha: float
    lasso_lambda: float
    slope_squared_error: float
    lasso_squared_error: float
    slope_recovered: bool
    lasso_recovered: bool
    irrepresentable_lambda: bool
    coefficients: pd.DataFrame

    def summary(self) -> Dict:
        return {
            "seed": self.seed,
            "rep": self.rep,
            "slope_alpha": self.slope_alpha,
            "lasso_lambda": self.lasso_lambda,
            "slope_se": self.slope_squared_error,
            "lasso_se": self.lasso_squared_error,
            "slope_recovered": int(self.slope_recovered),
            "lasso_recovered": int(self.lasso_recovered),
            "irrepresentable_lambda": int(self.irrepresentable_lambda),
            "slope_better": int(self.slope_squared_error < self.lasso_squared_error),
        }


def _best_by_error(fit: Callable[[float], np.ndarray], beta: np.ndarray, grid: np.ndarray) -> Tuple[float, np.ndarray]:
    best = None
    for value in grid:
        try:
            estimate = fit(float(value))
        except NotConverged as e:
            logger.warning(f"fit at {value:g} did not converge: {e}")
            continue
        err = float(np.sum((estimate - beta) ** 2))
        if best is None or err < best[0]:
            best = (err, float(value), estimate)
    if best is None:
        raise NotConverged("no fit on the fallback grid converged")
    return best[1], best[2]


def compare_lasso_slope(config: ExperimentConfig, rep: int = 0, tol: Optional[Tolerances] = None,
                        opts: Optional[SolverOptions] = None) -> ComparisonResult:
    """
    Fit LASSO and SLOPE on one realization, each at the smallest tuning for
    which it recovers the sign / SLOPE pattern of β, and compare squared
    errors. When a method cannot recover the target, it falls back to the
    squared-error-minimizing value on a grid and is flagged.
    """
    tol = resolve_tol(tol)
    gen = SeededRng(config.master_seed, rep).generator()
    X = gen_design(config.design, gen)
    beta = config.beta_vector()
    Y = X @ beta + config.sigma * gen.standard_normal(config.design.n)
    M = patt(beta)
    tuning = config.tuning()

    used_irrepresentable = False
    if config.irrepresentable:
        try:
            tuning = irrepresentable_lambda(X, M, tuning, tol)
            used_irrepresentable = True
        except InvalidTuning as e:
            logger.info(f"rep {rep}: keeping {config.lambda_recipe} ({e})")

    slope_alpha = min_alpha_for_recovery(X, Y, M, "slope", tuning, tol)
    alpha_max = dual_sorted_l1_norm(X.T @ Y, tuning.lambdas)
    if slope_alpha is None:
        slope_alpha, slope_beta = _best_by_error(
            lambda a: solve(Problem(X, Y, tuning, a), opts, tol).beta_hat, beta, alpha_max * np.logspace(-3, 0, 30)
        )
        slope_ok = False
    else:
        slope_alpha = slope_alpha or alpha_max * 1e-6
        slope_beta = solve(Problem(X, Y, tuning, slope_alpha), opts, tol).beta_hat
        slope_ok = True

    lasso_lambda = min_alpha_for_recovery(X, Y, np.sign(beta), "lasso", tol=tol)
    lambda_max = float(np.max(np.abs(X.T @ Y)))
    if lasso_lambda is None:
        lasso_lambda, lasso_beta = _best_by_error(
            lambda l: solve_lasso(X, Y, l, opts, tol).beta_hat, beta, lambda_max * np.logspace(-3, 0, 30)
        )
        lasso_ok = False
    else:
        lasso_lambda = lasso_lambda or lambda_max * 1e-6
        lasso_beta = solve_lasso(X, Y, lasso_lambda, opts, tol).beta_hat
        lasso_ok = True

    coefficients = pd.DataFrame({
        "index": np.arange(1, beta.shape[0] + 1),
        "beta": beta,
        "slope": slope_beta,
        "lasso": lasso_beta,
    })
    return ComparisonResult(
        seed=config.master_seed,
        rep=rep,
        slope_alpha=slope_alpha,
        lasso_lambda=lasso_lambda,
        slope_squared_error=float(np.sum((slope_beta - beta) ** 2)),
        lasso_squared_error=float(np.sum((lasso_beta - beta) ** 2)),
        slope_recovered=slope_ok,
        lasso_recovered=lasso_ok,
        irrepresentable_lambda=used_irrepresentable,
        coefficients=coefficients,
    )


# ---------------------------------------------------------------------------
# Constant-magnitude test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantMagnitudeTest:
    reject: bool
    spread: float
    beta_hat: np.ndarray


def test_constant_magnitude(Y, X, lam, alpha_eta: float, tol: Optional[Tolerances] = None) -> ConstantMagnitudeTest:
    """
    Test H0: |β_1| = ... = |β_p| on an orthogonal design.

    SLOPE is fitted at α_η, calibrated so the upper-bound probability of
    recovering a constant-magnitude pattern is 1 − η; H0 is rejected iff
    the largest and smallest fitted magnitudes differ by more than
    pattern_tol.
    """
    tol = resolve_tol(tol)
    X = as_matrix(X)
    Y = as_vector(Y, "Y")
    if not is_orthogonal(X, tol):
        raise InvalidDesign("the constant-magnitude test needs an orthogonal design")
    tuning = lam if isinstance(lam, TuningSequence) else TuningSequence(lam)
    beta_hat = solve_orthogonal(X, Y, tuning.scaled(alpha_eta), tol).beta_hat
    magnitudes = np.abs(beta_hat)
    spread = float(magnitudes.max() - magnitudes.min())
    return ConstantMagnitudeTest(spread > tol.pattern_tol, spread, beta_hat)


# not a pytest test function
test_constant_magnitude.__test__ = False


@dataclass
class RejectionResult:
    alpha: float
    reps: int
    rejection_rate: float
    se: float
    records: pd.DataFrame

    def summary(self) -> Dict:
        return {"alpha": self.alpha, "reps": self.reps, "rejection_rate": self.rejection_rate, "se": self.se}


def _calibrated_test_alpha(config: ExperimentConfig, X: np.ndarray, tuning: TuningSequence,
                           tol: Tolerances) -> float:
    if config.eta is None:
        return config.alpha
    ones = SlopePattern(tuple([1] * config.design.p))
    return calibrate_alpha(1.0 - config.eta, ones, X, tuning, config.sigma, config.mc_reps,
                           config.master_seed, None, tol).alpha


def constant_magnitude_experiment(config: ExperimentConfig, tol: Optional[Tolerances] = None,
                                  progress: bool = False, alpha_eta: Optional[float] = None) -> RejectionResult:
    """Monte-Carlo rejection rate of the constant-magnitude test."""
    tol = resolve_tol(tol)
    if config.design.kind != "orthogonal":
        raise InvalidDesign("the constant-magnitude test needs an orthogonal design")
    X = gen_design(config.design, SeededRng(config.master_seed, DESIGN_STREAM))
    tuning = config.tuning()
    alpha = alpha_eta if alpha_eta is not None else _calibrated_test_alpha(config, X, tuning, tol)
    beta = config.beta_vector()

    def replicate(rep: int) -> Dict:
        gen = SeededRng(config.master_seed, rep).generator()
        Y = X @ beta + config.sigma * gen.standard_normal(config.design.n)
        outcome = test_constant_magnitude(Y, X, tuning, alpha, tol)
        return {"rep": rep, "alpha": alpha, "reject": int(outcome.reject), "spread": outcome.spread,
                "seed": config.master_seed}

    records = run_replications(replicate, config.reps, config.workers, progress, desc=config.name)
    frame = pd.DataFrame.from_records(records)
    rate = float(frame["reject"].mean())
    return RejectionResult(alpha, config.reps, rate, mc_se(rate, config.reps), frame)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

@dataclass
class ExperimentOutput:
    """Tables produced by one experiment run, keyed by output name."""

    task: str
    aggregate: pd.DataFrame
    per_rep: Optional[pd.DataFrame] = None
    extras: Dict[str, pd.DataFrame] = field(default_factory=dict)


def _sweep_points(config: ExperimentConfig):
    if config.sweep is None:
        return [(None, config)]
    return [(value, config.with_value(config.sweep.param, value)) for value in config.sweep.values]


def _sweep_column(config: ExperimentConfig, taken) -> str:
    # an alpha sweep would otherwise collide with the effective alpha column
    param = config.sweep.param
    return param if param not in taken else f"sweep_{param}"


def _tag(frame: pd.DataFrame, config: ExperimentConfig, value) -> pd.DataFrame:
    if value is not None:
        frame.insert(0, _sweep_column(config, frame.columns), value)
    return frame


def _tag_row(row: Dict, config: ExperimentConfig, value) -> Dict:
    if value is None:
        return row
    return {_sweep_column(config, row): value, **row}


def run_experiment(config: ExperimentConfig, tol: Optional[Tolerances] = None,
                   opts: Optional[SolverOptions] = None, progress: bool = False) -> ExperimentOutput:
    """Run the task named in the config, over its sweep if one is given."""
    tol = resolve_tol(tol)
    logger.info("=" * 60)
    logger.info(f"EXPERIMENT {config.name} (task={config.task}, reps={config.reps}, seed={config.master_seed})")
    logger.info("=" * 60)

    try:
        rows, per_rep, extras = [], [], {}
        if config.task == "mc_recovery":
            for value, point in _sweep_points(config):
                result = mc_recovery(point, tol, opts, progress)
                row = result.summary()
                if point.with_upper_bound:
                    bound = _upper_bound_for(point, tol)
                    row["upper_bound"] = np.nan if bound is None else bound.prob
                    row["upper_bound_se"] = np.nan if bound is None else bound.se
                rows.append(_tag_row(row, config, value))
                per_rep.append(_tag(result.records.copy(), config, value))
                logger.info(f"  {config.sweep.param if value is not None else 'point'}={value}: "
                            f"freq={result.recovery_freq:.4f} (se {result.se:.4f})")

        elif config.task == "upper_bound":
            for value, point in _sweep_points(config):
                beta = point.beta_vector()
                M = patt(beta)
                limit = _limit_gram(point)
                X = None if limit is not None else gen_design(point.design, SeededRng(point.master_seed, DESIGN_STREAM))
                alpha = point.alpha if limit is not None else point.effective_alpha(beta)
                bound = upper_bound_probability(X, M, point.tuning(), alpha, point.sigma,
                                                point.mc_reps, point.master_seed, limit, tol)
                row = {"alpha": alpha, "prob": bound.prob, "se": bound.se}
                rows.append(_tag_row(row, config, value))

        elif config.task == "calibrate":
            beta = config.beta_vector()
            M = patt(beta)
            limit = _limit_gram(config)
            X = None if limit is not None else gen_design(config.design, SeededRng(config.master_seed, DESIGN_STREAM))
            result = calibrate_alpha(config.eta if config.eta is not None else 0.95, M, X, config.tuning(),
                                     config.sigma, config.mc_reps, config.master_seed, limit, tol)
            rows.append({"eta": config.eta if config.eta is not None else 0.95, "alpha": result.alpha,
                         "prob": result.prob, "se": result.se})

        elif config.task == "compare":
            coefficients = []
            for rep in tqdm(range(config.reps), desc=config.name, disable=not progress):
                comparison = compare_lasso_slope(config, rep, tol, opts)
                rows.append(comparison.summary())
                coefficients.append(comparison.coefficients.assign(rep=rep))
            extras["coefficients"] = pd.concat(coefficients, ignore_index=True)
            frame = pd.DataFrame(rows)
            logger.info(f"SLOPE better on {int(frame['slope_better'].sum())}/{len(frame)} realizations")

        elif config.task == "constant_magnitude":
            alpha_eta = None
            if config.eta is not None:
                X = gen_design(config.design, SeededRng(config.master_seed, DESIGN_STREAM))
                alpha_eta = _calibrated_test_alpha(config, X, config.tuning(), tol)
            for value, point in _sweep_points(config):
                result = constant_magnitude_experiment(point, tol, progress, alpha_eta)
                row = result.summary()
                rows.append(_tag_row(row, config, value))
                per_rep.append(_tag(result.records.copy(), config, value))

    except Exception as e:
        logger.error(f"Experiment {config.name} failed: {e}")
        raise

    return ExperimentOutput(
        task=config.task,
        aggregate=pd.DataFrame(rows),
        per_rep=pd.concat(per_rep, ignore_index=True) if per_rep else None,
        extras=extras,
    )
