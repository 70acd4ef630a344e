"""The adaptive query-answering game and its accuracy diagnostics.

A game runs a stateful mechanism (receives the dataset once, answers
queries) against a stateful analyst (emits queries, observes answers)
for k strictly sequential rounds; the transcript records every (query,
answer) pair and replays byte-for-byte under the same seeds. Analysts
never receive a dataset handle: the harness itself enforces that data is
reachable only through mechanism answers.

On top of the game sit the error measures (against the dataset or the
population), the concentration-width estimator ``gamma_estimate``, the
monitor that amplifies generalization gaps over fresh datasets with an
exponential-mechanism selection, and a Monte Carlo estimate of the
monitor's expected gap.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GameAborted, ValidationError
from .measures import Measure
from .privacy import PrivacyBudget, exponential_mechanism
from .queries import StatisticalQuery


class MechanismRole:
    """Receives the dataset once, then answers one query per round."""

    def receive_dataset(self, dataset: np.ndarray) -> None:
        raise NotImplementedError

    def answer(self, query: StatisticalQuery) -> float:
        raise NotImplementedError


class AnalystRole:
    """Emits one query per round, then observes the mechanism's answer."""

    def next_query(self) -> StatisticalQuery:
        raise NotImplementedError

    def receive_answer(self, answer: float) -> None:
        raise NotImplementedError


@dataclass
class Transcript:
    """Ordered record of one game: (query descriptor, answer) per round."""

    rounds: list[tuple[dict, float]]
    k: int
    seeds: dict = field(default_factory=dict)
    complete: bool = True

    def queries(self) -> list[StatisticalQuery]:
        return [StatisticalQuery.from_json(desc) for desc, _ in self.rounds]

    def answers(self) -> np.ndarray:
        return np.array([a for _, a in self.rounds], dtype=float)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"type": "header", "k": self.k, "seeds": self.seeds, "complete": self.complete},
                sort_keys=True,
            )
        ]
        for i, (desc, answer) in enumerate(self.rounds):
            lines.append(
                json.dumps(
                    {"type": "round", "i": i, "query": desc, "answer": answer},
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "Transcript":
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not lines or lines[0].get("type") != "header":
            raise ValidationError("transcript stream must start with a header line")
        header = lines[0]
        rounds = [(obj["query"], float(obj["answer"])) for obj in lines[1:]]
        return Transcript(
            rounds=rounds,
            k=int(header["k"]),
            seeds=dict(header.get("seeds", {})),
            complete=bool(header["complete"]),
        )


def run_game(
    mechanism: MechanismRole,
    analyst: AnalystRole,
    dataset,
    k: int,
    seeds: dict | None = None,
) -> Transcript:
    """Play k rounds; a raising role aborts with the partial transcript."""
    if k < 1:
        raise ValidationError("the game needs at least one round")
    dataset = np.asarray(dataset)
    transcript = Transcript(rounds=[], k=int(k), seeds=dict(seeds or {}))
    mechanism.receive_dataset(dataset)
    for _ in range(k):
        try:
            query = analyst.next_query()
            answer = float(mechanism.answer(query))
            analyst.receive_answer(answer)
        except Exception as exc:
            transcript.complete = False
            raise GameAborted(f"game aborted mid-round: {exc}", transcript) from exc
        transcript.rounds.append((query.to_json(), answer))
    return transcript


@dataclass(frozen=True)
class AccuracyResult:
    max_error: float
    per_round_errors: tuple[float, ...]
    reference: str  # "empirical" | "statistical"


def empirical_error(transcript: Transcript, dataset) -> AccuracyResult:
    """Per-round |q_i(S) - a_i| against the dataset the game was played on."""
    dataset = np.asarray(dataset)
    errors = tuple(
        abs(q.on_dataset(dataset) - a)
        for q, (_, a) in zip(transcript.queries(), transcript.rounds)
    )
    return AccuracyResult(max(errors), errors, "empirical")


def statistical_error(transcript: Transcript, measure: Measure) -> AccuracyResult:
    """Per-round |q_i(mu) - a_i| via exact population means."""
    errors = tuple(
        abs(measure.query_mean(q) - a)
        for q, (_, a) in zip(transcript.queries(), transcript.rounds)
    )
    return AccuracyResult(max(errors), errors, "statistical")


def gamma_estimate(
    q,
    measure: Measure,
    delta: float,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Empirical (1-delta)-quantile of |q(T) - q(mu)| over fresh samples.

    Uses the exact population mean when the query supports it, otherwise
    the empirical grand mean of the drawn samples. The quantile is the
    upper order statistic, never an interpolated value.
    """
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0,1)")
    needed = math.ceil(20.0 / delta)
    if trials < needed:
        raise ValidationError(f"need at least {needed} trials for delta={delta}")
    samples = measure.sample(rng, size=trials)
    if isinstance(q, StatisticalQuery):
        values = q.values(samples).mean(axis=1)
        center = measure.query_mean(q)
    else:
        values = np.array([q.on_dataset(row) for row in samples])
        center = float(values.mean())
    deviations = np.abs(values - center)
    return float(np.quantile(deviations, 1.0 - delta, method="higher"))


@dataclass(frozen=True)
class MonitorResult:
    """Outcome of one monitor run plus audit counters."""

    query: StatisticalQuery
    t_index: int
    empirical_value: float
    population_value: float
    candidates: int
    algorithm_calls: int
    exp_mech_draws: int

    @property
    def gap(self) -> float:
        """Selected overfit gap h(S_t) - h(mu)."""
        return self.empirical_value - self.population_value


PredicateAlgorithm = Callable[[np.ndarray, np.random.Generator], Sequence[StatisticalQuery]]


def monitor(
    algorithm: PredicateAlgorithm,
    measure: Measure,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    T: int | None = None,
    t_cap: int = 64,
) -> MonitorResult:
    """Run the gap-amplifying selection over T fresh datasets.

    Draws T independent datasets, collects the k predicates the algorithm
    outputs on each together with their negations (2kT candidates), and
    selects one pair (h, t) with probability proportional to
    exp((epsilon n / 2)(h(S_t) - h(mu))). T defaults to ceil(epsilon/delta),
    which can be astronomically large for small delta; passing an explicit
    T overrides it with a warning, since the monitor is a diagnostic.

    Population values use exact query means, so candidates must be
    {0,1}-valued predicates over measures with exact inference.
    """
    if T is None:
        if budget.delta <= 0.0:
            raise ValidationError("default T = ceil(epsilon/delta) needs delta > 0")
        T = math.ceil(budget.epsilon / budget.delta)
        if T > t_cap:
            raise ValidationError(
                f"T = ceil(epsilon/delta) = {T} exceeds the cap {t_cap}; "
                "pass an explicit T to override"
            )
    else:
        T = int(T)
        if T < 1:
            raise ValidationError("T must be >= 1")
        warnings.warn(
            "monitor running with an explicit T override; the diagnostic bound "
            "uses this T, not ceil(epsilon/delta)",
            stacklevel=2,
        )
    datasets = [measure.sample(rng) for _ in range(T)]
    candidates: list[tuple[StatisticalQuery, int]] = []
    algorithm_calls = 0
    for t, dataset in enumerate(datasets):
        predicates = list(algorithm(dataset, rng))
        algorithm_calls += 1
        for h in predicates:
            if not h.is_predicate:
                raise ValidationError("monitor candidates must be {0,1}-valued")
            candidates.append((h, t))
            candidates.append((h.negate(), t))
    emp = np.array([h.on_dataset(datasets[t]) for h, t in candidates])
    pop = np.array([measure.query_mean(h) for h, _ in candidates])
    scale = budget.epsilon * measure.n / 2.0
    chosen = exponential_mechanism(emp - pop, scale, rng)
    h_star, t_star = candidates[chosen]
    return MonitorResult(
        query=h_star,
        t_index=t_star,
        empirical_value=float(emp[chosen]),
        population_value=float(pop[chosen]),
        candidates=len(candidates),
        algorithm_calls=algorithm_calls,
        exp_mech_draws=1,
    )


@dataclass(frozen=True)
class GapEstimate:
    """|E[h(mu) - h(S_t)]| estimate for the monitor's output."""

    estimate: float
    mean_signed: float
    stderr: float
    trials: int


def expectation_gap(
    algorithm: PredicateAlgorithm,
    measure: Measure,
    budget: PrivacyBudget,
    trials: int,
    rng: np.random.Generator,
    T: int | None = None,
    t_cap: int = 64,
) -> GapEstimate:
    """Monte Carlo estimate of the monitor's expected generalization gap."""
    if trials < 100:
        raise ValidationError("expectation_gap needs at least 100 trials")
    gaps = np.empty(trials)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for j in range(trials):
            result = monitor(algorithm, measure, budget, rng, T=T, t_cap=t_cap)
            gaps[j] = result.population_value - result.empirical_value
    mean = float(gaps.mean())
    stderr = float(gaps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return GapEstimate(estimate=abs(mean), mean_signed=mean, stderr=stderr, trials=trials)
