"""
Tuning-sequence generators.

Recipes are addressable by name so configs and the command line can
refer to them:

    gauss-os        λ_i = E(i,p) + E(p−1,p) − 2E(p,p), E the Blom-type
                    approximation to expected Gaussian order statistics
    oscar:a,b       λ_i = a − (i−1)b
    const:l         λ_i = l (LASSO)
    file:<path>     single-column CSV
    4,2             explicit comma-separated values
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from slope_recovery.src.errors import DomainError, InvalidTuning
from slope_recovery.src.numerics import std_normal_quantile
from slope_recovery.src.sorted_l1 import TuningSequence

logger = logging.getLogger(__name__)


def expected_order_stat(i, p: int):
    """E(i,p) = −Φ⁻¹((i − 0.375)/(p + 0.25)), for 1 ≤ i ≤ p (i may be an array)."""
    idx = np.asarray(i)
    if p < 1 or np.any(idx < 1) or np.any(idx > p):
        raise DomainError(f"order statistic index must satisfy 1 <= i <= p, got i={i}, p={p}")
    return -std_normal_quantile((idx - 0.375) / (p + 0.25))


def gaussian_order_stat_lambda(p: int) -> TuningSequence:
    if p < 2:
        raise DomainError(f"the Gaussian order-statistic recipe needs p >= 2, got {p}")
    E = expected_order_stat(np.arange(1, p + 1), p)
    lambdas = E + E[p - 2] - 2.0 * E[p - 1]
    return TuningSequence(lambdas, name="gauss-os").require_strict()


def oscar_lambda(p: int, a_base: float, a_step: float, strict: bool = True) -> TuningSequence:
    """
    Arithmetically decreasing sequence a_base − (i−1)·a_step.

    With strict=False a nonpositive tail is clamped to zero instead of
    rejected.
    """
    if p < 1:
        raise DomainError(f"p must be positive, got {p}")
    if not a_base > 0 or a_step < 0:
        raise InvalidTuning(f"OSCAR needs a_base > 0 and a_step >= 0, got {a_base}, {a_step}")
    lambdas = a_base - a_step * np.arange(p)
    if lambdas[-1] <= 0:
        if strict:
            raise InvalidTuning(f"OSCAR tail a_base - (p-1)a_step = {lambdas[-1]:g} is not positive")
        lambdas = np.clip(lambdas, 0.0, None)
    return TuningSequence(lambdas, name=f"oscar:{a_base:g},{a_step:g}")


def constant_lambda(p: int, value: float) -> TuningSequence:
    if p < 1:
        raise DomainError(f"p must be positive, got {p}")
    if not value > 0:
        raise InvalidTuning(f"constant penalty must be positive, got {value}")
    return TuningSequence(np.full(p, float(value)), name=f"const:{value:g}")


def read_lambda_file(path: str) -> np.ndarray:
    frame = pd.read_csv(path, header=None, comment="#")
    return frame.to_numpy(dtype=float).ravel()


@dataclass(frozen=True)
class LambdaRecipe:
    """A named way of producing Λ for a given dimension p."""

    kind: str
    p: int
    params: Tuple[float, ...] = ()
    path: Optional[str] = None

    KINDS = ("gauss-os", "oscar", "const", "file", "explicit")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidTuning(f"unknown lambda recipe {self.kind!r}; expected one of {self.KINDS}")

    @classmethod
    def parse(cls, text: str, p: int) -> "LambdaRecipe":
        text = text.strip()
        head, _, rest = text.partition(":")
        head = head.strip().lower()
        try:
            if head in ("gauss-os", "gaussian_order_stats"):
                return cls("gauss-os", p)
            if head == "oscar":
                a_base, a_step = (float(t) for t in rest.split(","))
                return cls("oscar", p, (a_base, a_step))
            if head in ("const", "constant", "lasso"):
                return cls("const", p, (float(rest),))
            if head == "file":
                return cls("file", p, path=rest.strip())
            return cls("explicit", p, tuple(float(t) for t in text.split(",")))
        except ValueError as e:
            raise InvalidTuning(f"cannot parse lambda recipe {text!r}: {e}") from e

    def build(self) -> TuningSequence:
        if self.kind == "gauss-os":
            return gaussian_order_stat_lambda(self.p)
        if self.kind == "oscar":
            return oscar_lambda(self.p, *self.params)
        if self.kind == "const":
            return constant_lambda(self.p, self.params[0])
        values = read_lambda_file(self.path) if self.kind == "file" else np.asarray(self.params)
        if values.shape[0] != self.p:
            raise InvalidTuning(f"lambda recipe gives {values.shape[0]} values, expected p={self.p}")
        source = self.path if self.kind == "file" else "explicit"
        logger.debug(f"lambda sequence read from {source}")
        return TuningSequence(values, name=f"file:{Path(self.path).name}" if self.path else "explicit")

    def __str__(self) -> str:
        if self.kind == "gauss-os":
            return "gauss-os"
        if self.kind == "oscar":
            return f"oscar:{self.params[0]:g},{self.params[1]:g}"
        if self.kind == "const":
            return f"const:{self.params[0]:g}"
        if self.kind == "file":
            return f"file:{self.path}"
        return ",".join(f"{v:g}" for v in self.params)
