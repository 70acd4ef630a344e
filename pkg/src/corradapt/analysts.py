"""Concrete analysts for the adaptive game.

The scripted analyst replays a fixed query list (the non-adaptive
baseline). The random-sign attacker is the classic overfitting adversary:
it spends k-1 rounds on independent seeded-hash queries, then aggregates
the observed answer biases into one final query that is heavily
correlated with the specific sample under a mechanism that leaks
empirical values. Everything an analyst emits is reproducible from its
seed and the received answers alone; analysts never hold a dataset.
"""
from __future__ import annotations

from .errors import ValidationError
from .game import AnalystRole
from .measures import Measure
from .queries import StatisticalQuery, sign_aggregate_query, sign_query
from .seeding import derive_seed


class ScriptedAnalyst(AnalystRole):
    """Emits a fixed query list in order; ignores all answers."""

    def __init__(self, queries):
        self._queries = list(queries)
        if not self._queries:
            raise ValidationError("scripted analyst needs at least one query")
        self._next = 0

    def next_query(self) -> StatisticalQuery:
        if self._next >= len(self._queries):
            raise ValidationError("scripted analyst ran out of queries")
        q = self._queries[self._next]
        self._next += 1
        return q

    def receive_answer(self, answer: float) -> None:
        pass


class RandomSignAttacker(AnalystRole):
    """Sign-aggregation overfitter.

    Rounds 1..k-1 emit independent seeded-hash {0,1} queries q_j. Round k
    emits the aggregation query

        q_k(x) = 1  if  sum_{j<k} sign(a_j - ref_j) (q_j(x) - 1/2) > 0,

    where ref_j is the attacker's estimate of the population mean of q_j:
    exact (via the measure description, when granted) or the agnostic 1/2.
    The final query is itself a serializable descriptor, determined by the
    per-round seeds and the observed sign pattern.
    """

    def __init__(self, k: int, seed: int, measure: Measure | None = None):
        if k < 2:
            raise ValidationError("the attack needs at least 2 rounds")
        self.k = int(k)
        self.seed = int(seed)
        self._measure = measure
        self._round = 0
        self._seeds: list[int] = []
        self._signs: list[int] = []
        self._references: list[float] = []

    def _probe_seed(self, j: int) -> int:
        return derive_seed(self.seed, "probe", j)

    def next_query(self) -> StatisticalQuery:
        if self._round >= self.k:
            raise ValidationError("attacker already played its final round")
        if self._round < self.k - 1:
            q = sign_query(self._probe_seed(self._round))
            self._seeds.append(int(q.payload["seed"]))
            if self._measure is not None:
                self._references.append(self._measure.query_mean(q))
            else:
                self._references.append(0.5)
            return q
        return sign_aggregate_query(self._seeds, self._signs)

    def receive_answer(self, answer: float) -> None:
        if self._round < self.k - 1:
            bias = answer - self._references[self._round]
            self._signs.append(0 if bias == 0.0 else (1 if bias > 0.0 else -1))
        self._round += 1


class DeterministicAdaptiveAnalyst(AnalystRole):
    """Adaptive yet fully deterministic: each query's seed is derived from
    the analyst seed and the exact answers received so far. Used to
    exercise transcript counting, where adaptivity must not add entropy
    beyond the answer sequence."""

    def __init__(self, k: int, seed: int):
        if k < 1:
            raise ValidationError("k must be >= 1")
        self.k = int(k)
        self.seed = int(seed)
        self._history: list[float] = []

    def next_query(self) -> StatisticalQuery:
        if len(self._history) >= self.k:
            raise ValidationError("analyst already played k rounds")
        parts: list[int | str] = [self.seed, "round", len(self._history)]
        for a in self._history:
            parts.append(repr(a))
        return sign_query(derive_seed(*parts))

    def receive_answer(self, answer: float) -> None:
        self._history.append(float(answer))
