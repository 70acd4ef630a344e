"""Game protocol, error measures, gamma estimation, and the monitor."""
from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

import corradapt as ca
from corradapt.seeding import derive_seed, rng_from


def uniform_product(alphabet: int, n: int):
    return ca.make_product([np.full(alphabet, 1.0 / alphabet)] * n)


class ConstantMechanism(ca.MechanismRole):
    def __init__(self, value):
        self.value = value

    def receive_dataset(self, dataset):
        pass

    def answer(self, query):
        return self.value


class FailingMechanism(ca.MechanismRole):
    def __init__(self, fail_at):
        self.fail_at = fail_at
        self.round = 0

    def receive_dataset(self, dataset):
        self.dataset = dataset

    def answer(self, query):
        self.round += 1
        if self.round >= self.fail_at:
            raise RuntimeError("mechanism fell over")
        return query.on_dataset(self.dataset)


# -- run_game -------------------------------------------------------------------


def test_exact_mechanism_answers_empirical_values():
    mu = uniform_product(4, 12)
    dataset = mu.sample(rng_from(0))
    queries = [ca.sign_query(derive_seed(1, j)) for j in range(5)]
    transcript = ca.run_game(ca.NaiveMechanism(), ca.ScriptedAnalyst(queries), dataset, 5)
    for q, (_, answer) in zip(transcript.queries(), transcript.rounds):
        assert answer == q.on_dataset(dataset)
    assert ca.empirical_error(transcript, dataset).max_error == 0.0


def test_game_rejects_zero_rounds():
    with pytest.raises(ca.ValidationError):
        ca.run_game(ca.NaiveMechanism(), ca.ScriptedAnalyst([ca.zero_query()]), [0], 0)


def test_game_replay_is_byte_identical():
    mu = uniform_product(6, 10)

    def play():
        dataset = mu.sample(rng_from(5))
        attacker = ca.RandomSignAttacker(6, 17, measure=mu)
        return ca.run_game(ca.NaiveMechanism(), attacker, dataset, 6, seeds={"master": 5})

    assert play().to_jsonl() == play().to_jsonl()


def test_game_abort_flags_partial_transcript():
    mu = uniform_product(3, 6)
    dataset = mu.sample(rng_from(1))
    queries = [ca.sign_query(j) for j in range(5)]
    with pytest.raises(ca.GameAborted) as excinfo:
        ca.run_game(FailingMechanism(fail_at=3), ca.ScriptedAnalyst(queries), dataset, 5)
    partial = excinfo.value.transcript
    assert partial.complete is False
    assert len(partial.rounds) == 2
    assert "complete\": false" in partial.to_jsonl()


def test_transcript_jsonl_roundtrip():
    mu = uniform_product(3, 4)
    dataset = mu.sample(rng_from(2))
    transcript = ca.run_game(
        ca.NaiveMechanism(), ca.ScriptedAnalyst([ca.singleton_query(0)]), dataset, 1
    )
    clone = ca.Transcript.from_jsonl(transcript.to_jsonl())
    assert clone.to_jsonl() == transcript.to_jsonl()


# -- error measures ----------------------------------------------------------------


def test_constant_mechanism_empirical_error():
    dataset = np.zeros(10, dtype=int)
    q = ca.table_query([1.0, 1.0])
    transcript = ca.run_game(ConstantMechanism(0.5), ca.ScriptedAnalyst([q]), dataset, 1)
    result = ca.empirical_error(transcript, dataset)
    assert result.max_error == pytest.approx(0.5)
    assert result.per_round_errors == (0.5,)


def test_gaussian_max_error_order_statistic():
    """Across k rounds, max |noise| concentrates near sigma*sqrt(2 ln k)."""
    sigma, k = 0.01, 200
    mu = uniform_product(2, 50)
    queries = [ca.sign_query(derive_seed(3, j)) for j in range(k)]
    target = sigma * math.sqrt(2.0 * math.log(k))
    for trial in range(100):
        dataset = mu.sample(rng_from(derive_seed(4, trial)))
        mech = ca.GaussianMechanism(
            ca.NoiseSpec("gaussian", sigma), rng_from(derive_seed(5, trial))
        )
        transcript = ca.run_game(mech, ca.ScriptedAnalyst(queries), dataset, k)
        observed = ca.empirical_error(transcript, dataset).max_error
        assert target / 2.0 < observed < target * 2.0


def test_statistical_error_zero_for_population_oracle():
    mu = uniform_product(4, 20)
    dataset = mu.sample(rng_from(6))
    queries = [ca.sign_query(derive_seed(7, j)) for j in range(4)]
    transcript = ca.run_game(
        ca.PopulationOracleMechanism(mu), ca.ScriptedAnalyst(queries), dataset, 4
    )
    assert ca.statistical_error(transcript, mu).max_error == 0.0


def test_nonadaptive_hoeffding_scale():
    """Naive answers to fixed queries stay within the union Hoeffding bound."""
    n, k = 10**4, 20
    mu = uniform_product(2, n)
    bound = math.sqrt(math.log(2 * k / 0.01) / (2 * n))
    inside = 0
    trials = 100
    for trial in range(trials):
        dataset = mu.sample(rng_from(derive_seed(8, trial)))
        queries = [ca.sign_query(derive_seed(9, trial, j)) for j in range(k)]
        transcript = ca.run_game(ca.NaiveMechanism(), ca.ScriptedAnalyst(queries), dataset, k)
        inside += ca.statistical_error(transcript, mu).max_error <= bound
    assert inside / trials >= 0.99


def test_attack_final_round_dominates():
    """The adaptive final query overfits; scripted probes do not."""
    mu = uniform_product(1000, 100)
    wins = 0
    trials = 50
    for trial in range(trials):
        dataset = mu.sample(rng_from(derive_seed(10, trial)))
        attacker = ca.RandomSignAttacker(300, derive_seed(11, trial), measure=mu)
        transcript = ca.run_game(ca.NaiveMechanism(), attacker, dataset, 300)
        errors = ca.statistical_error(transcript, mu).per_round_errors
        wins += errors[-1] > max(errors[:-1])
    assert wins / trials >= 0.9


def test_triangle_inequality_per_transcript():
    mu = uniform_product(50, 40)
    dataset = mu.sample(rng_from(12))
    attacker = ca.RandomSignAttacker(8, 13, measure=mu)
    mech = ca.GaussianMechanism(ca.NoiseSpec("gaussian", 0.05), rng_from(14))
    transcript = ca.run_game(mech, attacker, dataset, 8)
    emp = ca.empirical_error(transcript, dataset)
    stat = ca.statistical_error(transcript, mu)
    gap = max(
        abs(q.on_dataset(dataset) - mu.query_mean(q)) for q in transcript.queries()
    )
    assert stat.max_error <= emp.max_error + gap + 1e-12


# -- gamma_estimate ----------------------------------------------------------------


def test_gamma_constant_query_is_zero():
    mu = uniform_product(3, 30)
    gamma = ca.gamma_estimate(ca.table_query([0.4] * 3), mu, 0.05, 400, rng_from(0))
    assert gamma <= 1e-15  # summation-order noise only


def test_gamma_product_below_hoeffding():
    mu = uniform_product(2, 100)
    gamma = ca.gamma_estimate(ca.singleton_query(1), mu, 0.05, 400, rng_from(1))
    hoeffding = math.sqrt(math.log(2.0 / 0.05) / (2 * 100))
    assert gamma <= 1.1 * hoeffding


def test_gamma_planted_inflation():
    q = ca.singleton_query(1)
    product = ca.gamma_estimate(q, uniform_product(2, 100), 0.05, 400, rng_from(2))
    planted = ca.gamma_estimate(q, ca.make_planted(0.5, 2, 100), 0.05, 400, rng_from(3))
    assert planted > product


def test_gamma_requires_enough_trials():
    mu = uniform_product(2, 10)
    with pytest.raises(ca.ValidationError):
        ca.gamma_estimate(ca.singleton_query(0), mu, 0.05, 100, rng_from(0))


# -- monitor -----------------------------------------------------------------------


def zero_predicate_algorithm(dataset, rng):
    return [ca.zero_query()]


def test_monitor_two_candidate_case():
    mu = uniform_product(2, 4)
    budget = ca.PrivacyBudget(0.5, 0.5)  # T = ceil(eps/delta) = 1
    picks = []
    rng = rng_from(20)
    for _ in range(2000):
        result = ca.monitor(zero_predicate_algorithm, mu, budget, rng)
        assert result.candidates == 2
        assert result.algorithm_calls == 1
        assert result.exp_mech_draws == 1
        picks.append(result.query == ca.zero_query())
    # Scores are 0 for both h=0 and its negation h=1: selection is uniform.
    frac = np.mean(picks)
    assert abs(frac - 0.5) < 5 * math.sqrt(0.25 / 2000)


def test_monitor_uniform_over_zero_gap_candidates():
    mu = uniform_product(2, 6)

    def constants(dataset, rng):
        return [ca.zero_query(), ca.zero_query().negate()]

    budget = ca.PrivacyBudget(1.0, 0.5)  # T = 2
    counts = np.zeros(8)
    rng = rng_from(21)
    for _ in range(4000):
        result = ca.monitor(constants, mu, budget, rng)
        assert result.candidates == 8
        assert result.gap == 0.0
    # all gaps are zero, so every run must report a zero selected gap


def test_monitor_requires_predicates():
    mu = uniform_product(2, 4)

    def soft(dataset, rng):
        return [ca.table_query([0.3, 0.7])]

    with pytest.raises(ca.ValidationError):
        ca.monitor(soft, mu, ca.PrivacyBudget(0.5, 0.5), rng_from(0))


def test_monitor_default_T_cap():
    mu = uniform_product(2, 4)
    with pytest.raises(ca.ValidationError, match="cap"):
        ca.monitor(zero_predicate_algorithm, mu, ca.PrivacyBudget(1.0, 1e-9), rng_from(0))
    with pytest.warns(UserWarning):
        ca.monitor(
            zero_predicate_algorithm, mu, ca.PrivacyBudget(1.0, 1e-9), rng_from(0), T=2
        )


def test_monitor_audit_counts():
    mu = uniform_product(3, 5)

    def two_predicates(dataset, rng):
        return [ca.sign_query(int(rng.integers(2**62))), ca.singleton_query(0)]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = ca.monitor(two_predicates, mu, ca.PrivacyBudget(0.3, 1e-6), rng_from(1), T=7)
    assert result.algorithm_calls == 7
    assert result.exp_mech_draws == 1
    assert result.candidates == 2 * 2 * 7


def test_monitor_dp_pipeline_gap_within_bound():
    """Gaussian-DP pipeline: selected gap stays under 2*eps + psi + margin."""
    rng_chain = rng_from(derive_seed(7, "chain"))
    chain = ca.make_chain(rng_chain.uniform(1.0, 3.0, size=(11, 2, 2)))
    psi = ca.gibbs_dependence(chain).psi
    k, eps, delta = 10, 0.1, 1e-6
    spec = ca.calibrate_gaussian(k, chain.n, ca.PrivacyBudget(eps, delta))

    def pipeline(dataset, rng):
        mech = ca.GaussianMechanism(spec, rng_from(int(rng.integers(2**63))))
        analyst = ca.DeterministicAdaptiveAnalyst(k, int(rng.integers(2**63)))
        return ca.run_game(mech, analyst, dataset, k).queries()

    gaps = []
    rng = rng_from(30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(100):
            gaps.append(ca.monitor(pipeline, chain, ca.PrivacyBudget(eps, delta), rng, T=10).gap)
    margin = 3 * np.std(gaps, ddof=1) / math.sqrt(len(gaps))
    assert np.mean(gaps) <= 2 * eps + psi + margin


# -- expectation_gap ----------------------------------------------------------------


def test_expectation_gap_constant_predicate():
    mu = uniform_product(2, 8)
    est = ca.expectation_gap(
        zero_predicate_algorithm, mu, ca.PrivacyBudget(0.5, 0.5), 100, rng_from(0)
    )
    assert est.estimate <= 3 * max(est.stderr, 1e-12)
    assert est.trials == 100


def test_expectation_gap_nonprivate_memorizer_exceeds_bound():
    """Without privacy the selected predicate overfits far beyond the bound."""
    m, n = 10**4, 100
    planted = ca.make_planted(0.2, m, n)

    def memorizer(dataset, rng):
        values = np.zeros(m)
        values[np.unique(dataset)] = 1.0
        return [ca.table_query(values)]

    eps, delta, T = 0.05, 1e-6, 3
    est = ca.expectation_gap(
        memorizer, planted, ca.PrivacyBudget(eps, delta), 100, rng_from(3), T=T
    )
    bound = math.exp(eps) + T * delta + 0.2 - 1.0  # psi(mu) <= 0.2 for this family
    assert est.estimate > bound + 3 * est.stderr


def test_expectation_gap_dp_pipeline_within_bound():
    rng_chain = rng_from(derive_seed(7, "chain"))
    chain = ca.make_chain(rng_chain.uniform(1.0, 3.0, size=(11, 2, 2)))
    psi = ca.gibbs_dependence(chain).psi
    k, eps, delta, T = 10, 0.2, 1e-6, 20
    spec = ca.calibrate_gaussian(k, chain.n, ca.PrivacyBudget(eps / 2.0, delta))

    def pipeline(dataset, rng):
        mech = ca.GaussianMechanism(spec, rng_from(int(rng.integers(2**63))))
        analyst = ca.DeterministicAdaptiveAnalyst(k, int(rng.integers(2**63)))
        return ca.run_game(mech, analyst, dataset, k).queries()

    est = ca.expectation_gap(
        pipeline, chain, ca.PrivacyBudget(eps, delta), 100, rng_from(8), T=T
    )
    bound = math.exp(eps) + T * delta + psi - 1.0
    assert est.estimate <= bound + 3 * est.stderr


def test_expectation_gap_needs_100_trials():
    mu = uniform_product(2, 4)
    with pytest.raises(ca.ValidationError):
        ca.expectation_gap(zero_predicate_algorithm, mu, ca.PrivacyBudget(0.5, 0.5), 50, rng_from(0))


def test_analyst_has_no_dataset_channel():
    """Structural post-processing: the harness hands analysts answers only."""
    assert set(ca.AnalystRole.__dict__) & {"next_query", "receive_answer"} == {
        "next_query",
        "receive_answer",
    }
    mu = uniform_product(4, 6)
    dataset = mu.sample(rng_from(40))
    attacker = ca.RandomSignAttacker(3, 41, measure=mu)
    ca.run_game(ca.NaiveMechanism(), attacker, dataset, 3)
    leaked = [
        v
        for v in vars(attacker).values()
        if isinstance(v, np.ndarray) and v.shape == dataset.shape and np.array_equal(v, dataset)
    ]
    assert leaked == []
