"""Differential-privacy primitives used by the query-answering mechanisms.

Contains calibrated additive noise, the exponential selection mechanism,
a stability-based private histogram, and the deviating algorithm that
overfits planted-point samples through the histogram alone.

The histogram construction is pinned concretely: symbols occurring at
least twice get Laplace(2/epsilon) noise on their counts and are released
when the noisy count exceeds tau = 2 + (2/epsilon) ln(2/(beta delta)).
Released symbols therefore always occur at least twice, and any symbol
with multiplicity at least 4 + (4/epsilon) ln(2/(beta delta)) is released
with probability at least 1 - beta over the noise. These constants are
this module's contract; the underlying guarantee is asymptotic and does
not pin them.

The Gaussian calibration is likewise pinned: for k sensitivity-1/n
queries under an (epsilon, delta) budget the per-query standard deviation
is sigma = sqrt(2 k ln(1.25/delta)) / (n epsilon), the standard
Gaussian-mechanism noise under k-fold advanced composition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .queries import StatisticalQuery, singleton_query, zero_query


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValidationError("epsilon must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ValidationError("delta must lie in [0, 1)")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str  # "laplace" or "gaussian"
    scale: float

    def __post_init__(self):
        if self.kind not in ("laplace", "gaussian"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if self.scale <= 0.0:
            raise ValidationError("noise scale must be positive")


@dataclass(frozen=True)
class HistogramItem:
    """A released symbol with its noisy count, recorded for audit."""

    symbol: int
    noisy_count: float


def add_noise(value: float, spec: NoiseSpec, rng: np.random.Generator) -> float:
    """value plus one Laplace(scale) or Gaussian(std=scale) draw."""
    if spec.kind == "laplace":
        return float(value + rng.laplace(0.0, spec.scale))
    return float(value + rng.normal(0.0, spec.scale))


def calibrate_gaussian(k: int, n: int, budget: PrivacyBudget) -> NoiseSpec:
    """Per-query Gaussian std for k adaptive statistical queries on n samples.

    sigma = sqrt(2 k ln(1.25/delta)) / (n epsilon); with sensitivity-1/n
    queries this makes the k-fold composition satisfy the budget under the
    usual Gaussian-mechanism + advanced-composition accounting.
    """
    if k < 1 or n < 1:
        raise ValidationError("k and n must be >= 1")
    if budget.delta <= 0.0:
        raise ValidationError("gaussian calibration needs delta > 0")
    sigma = math.sqrt(2.0 * k * math.log(1.25 / budget.delta)) / (n * budget.epsilon)
    return NoiseSpec("gaussian", sigma)


def exponential_mechanism(scores, scale: float, rng: np.random.Generator) -> int:
    """Sample an index with probability proportional to exp(scale * score).

    Weights are computed with max-subtraction for numerical stability and
    the draw is a single inverse-CDF lookup, so a fixed generator state
    yields a fixed selection.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise ValidationError("scores must be a non-empty 1-d list")
    if scale <= 0.0:
        raise ValidationError("scale must be positive")
    w = np.exp(scale * (scores - scores.max()))
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def histogram_threshold(budget: PrivacyBudget, beta: float) -> float:
    """Release threshold tau = 2 + (2/epsilon) ln(2/(beta delta))."""
    if not 0.0 < beta < 1.0:
        raise ValidationError("beta must lie in (0,1)")
    if budget.delta <= 0.0:
        raise ValidationError("the stability histogram needs delta > 0")
    return 2.0 + (2.0 / budget.epsilon) * math.log(2.0 / (beta * budget.delta))


def completeness_multiplicity(budget: PrivacyBudget, beta: float) -> float:
    """Multiplicity above which release holds w.p. >= 1 - beta over noise."""
    if not 0.0 < beta < 1.0:
        raise ValidationError("beta must lie in (0,1)")
    if budget.delta <= 0.0:
        raise ValidationError("the stability histogram needs delta > 0")
    return 4.0 + (4.0 / budget.epsilon) * math.log(2.0 / (beta * budget.delta))


def stable_histogram(
    dataset,
    budget: PrivacyBudget,
    beta: float,
    rng: np.random.Generator,
) -> list[HistogramItem]:
    """Stability-based private histogram over the dataset's symbols.

    Only symbols with multiplicity >= 2 are candidates; candidates are
    processed in increasing symbol order (one Laplace draw each) so the
    output is seeded-deterministic.
    """
    tau = histogram_threshold(budget, beta)
    symbols, counts = np.unique(np.asarray(dataset), return_counts=True)
    released: list[HistogramItem] = []
    b = 2.0 / budget.epsilon
    for symbol, count in zip(symbols, counts):
        if count < 2:
            continue
        noisy = float(count + rng.laplace(0.0, b))
        if noisy > tau:
            released.append(HistogramItem(symbol=int(symbol), noisy_count=noisy))
    return released


def deviating_algorithm(
    dataset,
    budget: PrivacyBudget,
    beta: float,
    rng: np.random.Generator,
    histogram=stable_histogram,
) -> StatisticalQuery:
    """Return the indicator of a privately heavy symbol, or the zero query.

    Touches the dataset through exactly one histogram call; everything
    else is post-processing of the released list ("arbitrary element" is
    resolved as the first symbol in increasing order).
    """
    released = histogram(dataset, budget, beta, rng)
    if not released:
        return zero_query()
    return singleton_query(released[0].symbol)
