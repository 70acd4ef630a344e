"""Concrete query-answering mechanisms.

Three production mechanisms plus a test oracle:

* naive: answers the empirical value exactly (the overfittable baseline),
* gaussian: empirical value plus calibrated Gaussian noise, lightly
  clamped to [-0.25, 1.25] (cosmetic; moderate noise is never clamped),
* rounded: snaps the empirical value to a fixed grid of answer centers,
  which caps both the per-round error (half the spacing) and, for any
  deterministic analyst, the number of reachable transcripts,
* population oracle: answers exact population means (no data access).

The rounded mechanism draws no randomness at all: identical datasets and
query sequences produce identical transcripts, which is what makes the
transcript count finite. It also accepts arbitrary dataset-level queries
with values in [0,1], not only per-symbol statistical queries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .game import MechanismRole
from .measures import Measure
from .privacy import NoiseSpec
from .queries import StatisticalQuery

CLAMP_LO = -0.25
CLAMP_HI = 1.25


@dataclass(frozen=True)
class CompressionSpec:
    """Answer grid with spacing alpha: centers alpha/2, 3*alpha/2, ...

    There are ceil(1/alpha) centers; when 1/alpha is not an integer the
    last center exceeds 1 slightly so that every value in [0,1] stays
    within alpha/2 of some center.
    """

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must lie in (0, 1]")

    @property
    def size(self) -> int:
        return math.ceil(1.0 / self.alpha)

    @property
    def grid(self) -> np.ndarray:
        return (np.arange(self.size) + 0.5) * self.alpha


def _dataset_value(dataset, q) -> float:
    if isinstance(q, StatisticalQuery):
        return q.on_dataset(dataset)
    if hasattr(q, "on_dataset"):
        return float(q.on_dataset(dataset))
    return float(q(dataset))


def answer_naive(dataset, q) -> float:
    """The empirical value q(S), exactly."""
    return _dataset_value(dataset, q)


def answer_gaussian(dataset, q, spec: NoiseSpec, rng: np.random.Generator) -> float:
    """q(S) plus Gaussian noise at the calibrated std, clamped."""
    if spec.kind != "gaussian":
        raise ValidationError("answer_gaussian needs a gaussian noise spec")
    value = _dataset_value(dataset, q) + rng.normal(0.0, spec.scale)
    return float(np.clip(value, CLAMP_LO, CLAMP_HI))


def answer_rounded(dataset, q, spec: CompressionSpec) -> float:
    """Nearest grid center to q(S), ties toward the lower center."""
    value = _dataset_value(dataset, q)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"rounded mechanism needs q(S) in [0,1], got {value!r}")
    grid = spec.grid
    j = int(np.clip(round((value - 0.5 * spec.alpha) / spec.alpha), 0, spec.size - 1))
    best = j
    for cand in (j - 1, j + 1):
        if 0 <= cand < spec.size:
            d_cand, d_best = abs(grid[cand] - value), abs(grid[best] - value)
            if d_cand < d_best - 1e-15 or (abs(d_cand - d_best) <= 1e-15 and cand < best):
                best = cand
    return float(grid[best])


def transcript_bound(spec: CompressionSpec, k: int) -> int:
    """Cardinality bound ceil(1/alpha)^k on deterministic-analyst transcripts."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    return spec.size**k


class NaiveMechanism(MechanismRole):
    def __init__(self):
        self._dataset = None

    def receive_dataset(self, dataset):
        self._dataset = np.asarray(dataset)

    def answer(self, query):
        return answer_naive(self._dataset, query)


class GaussianMechanism(MechanismRole):
    """Adds one calibrated Gaussian draw per answer; draws are counted so
    tests can audit that exactly k compositions happened."""

    def __init__(self, spec: NoiseSpec, rng: np.random.Generator):
        if spec.kind != "gaussian":
            raise ValidationError("GaussianMechanism needs a gaussian noise spec")
        self.spec = spec
        self._rng = rng
        self._dataset = None
        self.noise_draws = 0

    def receive_dataset(self, dataset):
        self._dataset = np.asarray(dataset)

    def answer(self, query):
        self.noise_draws += 1
        return answer_gaussian(self._dataset, query, self.spec, self._rng)


class RoundedMechanism(MechanismRole):
    def __init__(self, spec: CompressionSpec):
        self.spec = spec
        self._dataset = None

    def receive_dataset(self, dataset):
        self._dataset = np.asarray(dataset)

    def answer(self, query):
        return answer_rounded(self._dataset, query, self.spec)


class PopulationOracleMechanism(MechanismRole):
    """Answers exact population means; ignores the dataset entirely.

    A cheat for tests and baselines: its answers carry no information
    about the sample, so no analyst can overfit through it.
    """

    def __init__(self, measure: Measure):
        self.measure = measure

    def receive_dataset(self, dataset):
        pass

    def answer(self, query):
        return self.measure.query_mean(query)
