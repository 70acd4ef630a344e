"""Configuration-driven experiments with seeded, reproducible reports.

Every experiment consumes a JSON-able config dict (master ``seed``
mandatory), derives one independent random stream per trial from the
pinned BLAKE2b hash of (seed, "trial", index), and produces an
``ExperimentReport``: per-trial rows under a fixed CSV schema plus a JSON
summary that is recomputable from the rows.

The CSV column schema is pinned across experiments:

    trial,seed,k,n,max_emp_err,max_stat_err,gamma_max,success,wall_ms

Experiments that do not measure a given column leave it empty; analytic
experiments reuse the error columns for their headline statistics, as
documented per experiment below (e.g. ``psi-product`` stores the exact
dependence coefficient in ``max_stat_err``). ``wall_ms`` is 0 unless
timing is explicitly enabled, because measured wall time would break the
byte-identical reproducibility contract of reports.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .analysts import DeterministicAdaptiveAnalyst, RandomSignAttacker
from .dependence import gibbs_dependence, markov_psi_bound
from .errors import ValidationError
from .game import gamma_estimate, monitor, run_game
from .measures import Measure, make_chain, make_planted, make_product
from .mechanisms import (
    CompressionSpec,
    GaussianMechanism,
    NaiveMechanism,
    RoundedMechanism,
    transcript_bound,
)
from .privacy import PrivacyBudget, calibrate_gaussian, deviating_algorithm
from .queries import StatisticalQuery
from .seeding import derive_seed, rng_from

CSV_COLUMNS = (
    "trial",
    "seed",
    "k",
    "n",
    "max_emp_err",
    "max_stat_err",
    "gamma_max",
    "success",
    "wall_ms",
)


@dataclass
class TrialRow:
    trial: int
    seed: int
    k: int
    n: int
    max_emp_err: float | None
    max_stat_err: float | None
    gamma_max: float | None
    success: int
    wall_ms: int = 0

    def as_record(self) -> dict[str, Any]:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    rows: list[TrialRow]
    checks: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        return summarize_rows(self.rows)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            rec = row.as_record()
            writer.writerow(["" if rec[c] is None else rec[c] for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json_text(self) -> str:
        payload = {
            "experiment": self.experiment,
            "config": self.config,
            "summary": self.summary,
            "checks": self.checks,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def write(self, out_prefix: str) -> tuple[str, str]:
        csv_path = f"{out_prefix}.csv"
        json_path = f"{out_prefix}.json"
        with open(csv_path, "w") as fh:
            fh.write(self.to_csv_text())
        with open(json_path, "w") as fh:
            fh.write(self.to_json_text())
        return csv_path, json_path

    def all_checks_pass(self) -> bool:
        return all(c.get("passed", False) for c in self.checks.values())


def summarize_rows(rows: list[TrialRow]) -> dict:
    """Aggregate statistics; recomputable from the CSV rows alone."""
    out: dict[str, Any] = {"trials": len(rows)}
    if rows:
        out["success_fraction"] = float(np.mean([r.success for r in rows]))
    columns = {}
    for col in ("max_emp_err", "max_stat_err", "gamma_max"):
        vals = np.array([getattr(r, col) for r in rows if getattr(r, col) is not None])
        if vals.size:
            columns[col] = {
                "mean": float(vals.mean()),
                "min": float(vals.min()),
                "max": float(vals.max()),
                "p50": float(np.quantile(vals, 0.5)),
                "p90": float(np.quantile(vals, 0.9)),
            }
    out["columns"] = columns
    return out


def _check(value: float, threshold: float, cmp: str) -> dict:
    ok = {"<=": value <= threshold, ">=": value >= threshold, "==": value == threshold}[cmp]
    return {"value": float(value), "threshold": float(threshold), "cmp": cmp, "passed": bool(ok)}


def trial_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, "trial", trial)


# -- config handling -----------------------------------------------------------


_DEFAULTS: dict[str, dict[str, Any]] = {
    "psi-product": {"trials": 100, "n_max": 6, "alphabet_max": 3, "psi_tol": 1e-12},
    "chain-bound": {
        "trials": 200,
        "n_max": 6,
        "alphabet_max": 3,
        "potential_range": [1.0, 3.0],
        "bound_tol": 1e-12,
    },
    "skip-contraction": {
        "trials": 100,
        "n": 12,
        "alphabet": 2,
        "potential_range": [1.0, 3.0],
        "t_values": [2, 3],
        "tol": 1e-9,
    },
    "negative": {
        "trials": 200,
        "psi": 0.2,
        "m": 10**6,
        "epsilon": 1.0,
        "delta": 1e-6,
        "beta": 0.1,
        "n": None,  # ceil((16/(psi*eps)) * ln(2/(beta*delta))) when absent
        "margin": 0.05,
    },
    "attack": {
        "trials": 50,
        "n": 100,
        "k": 5000,
        "alphabet": 10**4,
        "epsilon": 7.6,
        "delta": 1e-5,
        "beta": 0.05,
        "naive_factor": 2.0,
        "dp_ratio": 0.5,
        "naive_fraction": 0.9,
        "dp_fraction": 0.9,
    },
    "compress": {
        "trials": 500,
        "alpha": 0.25,
        "k": 6,
        "n": 50,
        "alphabet": 4,
        "potential_range": [1.0, 3.0],
        "delta": 0.05,
        "gamma_trials": 400,
        "enumeration": {"alphabet": 2, "n": 4, "k": 3, "alpha": 0.25},
    },
    "monitor": {
        "trials": 100,
        "n": 12,
        "alphabet": 2,
        "potential_range": [1.0, 3.0],
        "k": 10,
        "epsilon": 0.2,
        "delta": 1e-6,
        "T": 20,
    },
}

EXPERIMENTS = tuple(_DEFAULTS)


def prepare_config(config: dict) -> dict:
    """Validate a raw config dict and fill experiment defaults."""
    if not isinstance(config, dict):
        raise ValidationError("config: must be a JSON object")
    name = config.get("experiment")
    if name not in _DEFAULTS:
        raise ValidationError(
            f"config.experiment: expected one of {sorted(_DEFAULTS)}, got {name!r}"
        )
    if "seed" not in config:
        raise ValidationError("config.seed: a master seed is mandatory")
    if not isinstance(config["seed"], int):
        raise ValidationError("config.seed: must be an integer")
    merged = dict(_DEFAULTS[name])
    known = set(merged) | {"experiment", "seed", "trials", "workers", "timing", "out"}
    for key, value in config.items():
        if key not in known:
            raise ValidationError(f"config.{key}: unknown field for experiment {name!r}")
        merged[key] = value
    merged["experiment"] = name
    merged["seed"] = config["seed"]
    merged.setdefault("workers", 1)
    merged.setdefault("timing", False)
    _validate_prepared(merged)
    return merged


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ValidationError(f"config.{path}: {message}")


def _validate_prepared(cfg: dict) -> None:
    name = cfg["experiment"]
    _require(int(cfg["trials"]) >= 1, "trials", "must be >= 1")
    _require(int(cfg["workers"]) >= 1, "workers", "must be >= 1")
    if name in ("chain-bound", "skip-contraction", "compress", "monitor"):
        lo, hi = cfg["potential_range"]
        _require(0 < lo <= hi, "potential_range", "needs 0 < lo <= hi")
    if name == "psi-product":
        _require(int(cfg["n_max"]) >= 1, "n_max", "must be >= 1")
        _require(int(cfg["alphabet_max"]) >= 2, "alphabet_max", "must be >= 2")
    if name == "skip-contraction":
        n = int(cfg["n"])
        for t in cfg["t_values"]:
            _require(n % int(t) == 0, "t_values", f"{t} must divide n={n}")
    if name == "negative":
        _require(0.0 < cfg["psi"] < 1.0, "psi", "must lie in (0,1)")
        _require(int(cfg["m"]) >= 2, "m", "must be >= 2")
        _require(0.0 < cfg["beta"] < 1.0, "beta", "must lie in (0,1)")
        _require(cfg["epsilon"] > 0.0, "epsilon", "must be positive")
        _require(0.0 < cfg["delta"] < 1.0, "delta", "must lie in (0,1)")
    if name == "attack":
        _require(int(cfg["k"]) >= 2, "k", "must be >= 2")
        _require(int(cfg["n"]) >= 1, "n", "must be >= 1")
        _require(int(cfg["alphabet"]) >= 2, "alphabet", "must be >= 2")
    if name == "compress":
        _require(0.0 < cfg["alpha"] <= 1.0, "alpha", "must lie in (0,1]")
        _require(0.0 < cfg["delta"] < 1.0, "delta", "must lie in (0,1)")
        _require(
            int(cfg["gamma_trials"]) >= math.ceil(20.0 / cfg["delta"]),
            "gamma_trials",
            f"needs at least ceil(20/delta) = {math.ceil(20.0 / cfg['delta'])}",
        )
    if name == "monitor":
        _require(int(cfg["T"]) >= 1, "T", "must be >= 1")
        _require(int(cfg["trials"]) >= 100, "trials", "the gap estimate needs >= 100 runs")


# -- experiment bodies ---------------------------------------------------------


def _random_sizes(rng: np.random.Generator, n_max: int, s_max: int) -> tuple[int, int]:
    return int(rng.integers(2, n_max + 1)), int(rng.integers(2, s_max + 1))


def _psi_product_trial(cfg: dict, trial: int) -> TrialRow:
    seed = trial_seed(cfg["seed"], trial)
    rng = rng_from(seed)
    n, s = _random_sizes(rng, int(cfg["n_max"]), int(cfg["alphabet_max"]))
    mu = make_product([rng.dirichlet(np.ones(s)) for _ in range(n)])
    psi = gibbs_dependence(mu).psi
    return TrialRow(
        trial=trial,
        seed=seed,
        k=0,
        n=n,
        max_emp_err=None,
        max_stat_err=psi,
        gamma_max=None,
        success=int(psi <= cfg["psi_tol"]),
    )


def _chain_bound_trial(cfg: dict, trial: int) -> TrialRow:
    seed = trial_seed(cfg["seed"], trial)
    rng = rng_from(seed)
    n, s = _random_sizes(rng, int(cfg["n_max"]), int(cfg["alphabet_max"]))
    lo, hi = cfg["potential_range"]
    mu = make_chain(rng.uniform(lo, hi, size=(n - 1, s, s)))
    psi = gibbs_dependence(mu).psi
    r_bar = markov_psi_bound(mu).R_bar
    return TrialRow(
        trial=trial,
        seed=seed,
        k=0,
        n=n,
        max_emp_err=None,
        max_stat_err=psi,
        gamma_max=r_bar,
        success=int(psi <= r_bar + cfg["bound_tol"]),
    )


def _skip_contraction_trial(cfg: dict, trial: int) -> TrialRow:
    seed = trial_seed(cfg["seed"], trial)
    rng = rng_from(seed)
    n, s = int(cfg["n"]), int(cfg["alphabet"])
    lo, hi = cfg["potential_range"]
    mu = make_chain(rng.uniform(lo, hi, size=(n - 1, s, s)))
    psi = gibbs_dependence(mu).psi
    excess = -math.inf
    for t in cfg["t_values"]:
        psi_skipped = gibbs_dependence(mu.skip(int(t))).psi
        excess = max(excess, psi_skipped - psi ** int(t))
    return TrialRow(
        trial=trial,
        seed=seed,
        k=0,
        n=n,
        max_emp_err=None,
        max_stat_err=psi,
        gamma_max=excess,
        success=int(excess <= cfg["tol"]),
    )


def negative_sample_size(cfg: dict) -> int:
    if cfg.get("n"):
        return int(cfg["n"])
    return math.ceil(
        (16.0 / (cfg["psi"] * cfg["epsilon"])) * math.log(2.0 / (cfg["beta"] * cfg["delta"]))
    )


def _negative_trial(cfg: dict, trial: int) -> TrialRow:
    seed = trial_seed(cfg["seed"], trial)
    rng = rng_from(seed)
    n = negative_sample_size(cfg)
    mu = make_planted(cfg["psi"], int(cfg["m"]), n)
    budget = PrivacyBudget(cfg["epsilon"], cfg["delta"])
    dataset = mu.sample(rng)
    h = deviating_algorithm(dataset, budget, cfg["beta"], rng)
    h_emp = h.on_dataset(dataset)
    h_pop = mu.query_mean(h)
    hit = h_emp >= cfg["psi"] / 2.0 and abs(h_pop - 1.0 / cfg["m"]) <= 1e-15
    return TrialRow(
        trial=trial,
        seed=seed,
        k=1,
        n=n,
        max_emp_err=None,
        max_stat_err=abs(h_emp - h_pop),
        gamma_max=None,
        success=int(hit),
    )


def _uniform_product(alphabet: int, n: int) -> Measure:
    return make_product([np.full(alphabet, 1.0 / alphabet)] * n)


def _attack_final_error(cfg: dict, trial: int, mechanism_kind: str) -> tuple[float, float, float]:
    """(final-round |a_k - q_k(mu)|, |a_k - q_k(S)|, overfit gap |q_k(S) - q_k(mu)|)."""
    mu = _uniform_product(int(cfg["alphabet"]), int(cfg["n"]))
    seed = trial_seed(cfg["seed"], trial)
    dataset = mu.sample(rng_from(derive_seed(seed, "data")))
    attacker = RandomSignAttacker(int(cfg["k"]), derive_seed(seed, "attacker"), measure=mu)
    if mechanism_kind == "naive":
        mech = NaiveMechanism()
    else:
        spec = calibrate_gaussian(
            int(cfg["k"]), int(cfg["n"]), PrivacyBudget(cfg["epsilon"], cfg["delta"])
        )
        mech = GaussianMechanism(spec, rng_from(derive_seed(seed, "mech")))
    transcript = run_game(mech, attacker, dataset, int(cfg["k"]))
    desc, answer = transcript.rounds[-1]
    q_final = StatisticalQuery.from_json(desc)
    emp = q_final.on_dataset(dataset)
    pop = mu.query_mean(q_final)
    return abs(answer - pop), abs(answer - emp), abs(emp - pop)


def hoeffding_width(n: int, beta: float) -> float:
    """Non-adaptive deviation bound sqrt(ln(2/beta) / (2n))."""
    return math.sqrt(math.log(2.0 / beta) / (2.0 * n))


def _attack_trial(cfg: dict, trial: int) -> TrialRow:
    """One paired trial; both mechanisms see the same dataset and attacker seed.

    Column semantics for this experiment: max_emp_err is the naive
    mechanism's final-round statistical error, max_stat_err the Gaussian
    mechanism's, gamma_max their ratio (gaussian / naive).
    """
    naive_err, _, _ = _attack_final_error(cfg, trial, "naive")
    dp_err, _, _ = _attack_final_error(cfg, trial, "gaussian")
    bound = hoeffding_width(int(cfg["n"]), cfg["beta"])
    ratio = dp_err / naive_err if naive_err > 0 else math.inf
    success = int(naive_err >= cfg["naive_factor"] * bound and ratio <= cfg["dp_ratio"])
    return TrialRow(
        trial=trial,
        seed=trial_seed(cfg["seed"], trial),
        k=int(cfg["k"]),
        n=int(cfg["n"]),
        max_emp_err=naive_err,
        max_stat_err=dp_err,
        gamma_max=ratio,
        success=success,
    )


def _compress_trial(cfg: dict, trial: int) -> TrialRow:
    seed = trial_seed(cfg["seed"], trial)
    n, s, k = int(cfg["n"]), int(cfg["alphabet"]), int(cfg["k"])
    lo, hi = cfg["potential_range"]
    chain_rng = rng_from(derive_seed(cfg["seed"], "chain"))
    mu = make_chain(chain_rng.uniform(lo, hi, size=(n - 1, s, s)))
    dataset = mu.sample(rng_from(derive_seed(seed, "data")))
    spec = CompressionSpec(cfg["alpha"])
    analyst = DeterministicAdaptiveAnalyst(k, derive_seed(seed, "analyst"))
    transcript = run_game(RoundedMechanism(spec), analyst, dataset, k)
    gamma_rng = rng_from(derive_seed(seed, "gamma"))
    max_emp = 0.0
    max_stat = 0.0
    gamma_max = 0.0
    qualifying = True
    for q, (_, answer) in zip(transcript.queries(), transcript.rounds):
        emp = q.on_dataset(dataset)
        pop = mu.query_mean(q)
        gamma = gamma_estimate(q, mu, cfg["delta"], int(cfg["gamma_trials"]), gamma_rng)
        max_emp = max(max_emp, abs(answer - emp))
        max_stat = max(max_stat, abs(answer - pop))
        gamma_max = max(gamma_max, gamma)
        if abs(emp - pop) > gamma:
            qualifying = False
    # On qualifying runs the rounded answers must stay within
    # alpha/2 + max gamma of the population values.
    ok = (not qualifying) or (max_stat <= cfg["alpha"] / 2.0 + gamma_max + 1e-12)
    return TrialRow(
        trial=trial,
        seed=seed,
        k=k,
        n=n,
        max_emp_err=max_emp,
        max_stat_err=max_stat,
        gamma_max=gamma_max,
        success=int(ok),
    )


def _monitor_trial(cfg: dict, trial: int) -> TrialRow:
    seed = trial_seed(cfg["seed"], trial)
    n, s, k = int(cfg["n"]), int(cfg["alphabet"]), int(cfg["k"])
    lo, hi = cfg["potential_range"]
    chain_rng = rng_from(derive_seed(cfg["seed"], "chain"))
    mu = make_chain(chain_rng.uniform(lo, hi, size=(n - 1, s, s)))
    budget = PrivacyBudget(cfg["epsilon"], cfg["delta"])
    mech_spec = calibrate_gaussian(k, n, PrivacyBudget(cfg["epsilon"] / 2.0, cfg["delta"]))

    def algorithm(dataset: np.ndarray, rng: np.random.Generator) -> list[StatisticalQuery]:
        mech = GaussianMechanism(mech_spec, rng_from(int(rng.integers(2**63))))
        analyst = DeterministicAdaptiveAnalyst(k, int(rng.integers(2**63)))
        transcript = run_game(mech, analyst, dataset, k)
        return transcript.queries()

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = monitor(algorithm, mu, budget, rng_from(seed), T=int(cfg["T"]))
    return TrialRow(
        trial=trial,
        seed=seed,
        k=k,
        n=n,
        max_emp_err=None,
        max_stat_err=result.population_value - result.empirical_value,
        gamma_max=None,
        success=1,
    )


_TRIAL_FUNCTIONS: dict[str, Callable[[dict, int], TrialRow]] = {
    "psi-product": _psi_product_trial,
    "chain-bound": _chain_bound_trial,
    "skip-contraction": _skip_contraction_trial,
    "negative": _negative_trial,
    "attack": _attack_trial,
    "compress": _compress_trial,
    "monitor": _monitor_trial,
}


def _timed_trial(args: tuple[str, dict, int, bool]) -> TrialRow:
    name, cfg, trial, timing = args
    start = time.perf_counter()
    row = _TRIAL_FUNCTIONS[name](cfg, trial)
    if timing:
        row.wall_ms = int(round(1000.0 * (time.perf_counter() - start)))
    return row


def _experiment_checks(cfg: dict, rows: list[TrialRow]) -> dict:
    name = cfg["experiment"]
    checks: dict[str, dict] = {}
    success_fraction = float(np.mean([r.success for r in rows]))
    if name == "psi-product":
        max_psi = max(r.max_stat_err for r in rows)
        checks["max_psi"] = _check(max_psi, cfg["psi_tol"], "<=")
    elif name == "chain-bound":
        violations = sum(1 - r.success for r in rows)
        checks["bound_violations"] = _check(violations, 0, "==")
    elif name == "skip-contraction":
        violations = sum(1 - r.success for r in rows)
        checks["contraction_violations"] = _check(violations, 0, "==")
    elif name == "negative":
        n = negative_sample_size(cfg)
        floor = 1.0 - cfg["beta"] - math.exp(-n / 8.0) - cfg["margin"]
        checks["success_fraction"] = _check(success_fraction, floor, ">=")
    elif name == "attack":
        bound = hoeffding_width(int(cfg["n"]), cfg["beta"])
        naive_frac = float(
            np.mean([r.max_emp_err >= cfg["naive_factor"] * bound for r in rows])
        )
        dp_frac = float(np.mean([r.gamma_max <= cfg["dp_ratio"] for r in rows]))
        checks["naive_overfits"] = _check(naive_frac, cfg["naive_fraction"], ">=")
        checks["dp_resists"] = _check(dp_frac, cfg["dp_fraction"], ">=")
    elif name == "compress":
        violations = sum(1 - r.success for r in rows)
        checks["accuracy_violations"] = _check(violations, 0, "==")
        checks.update(_enumeration_checks(cfg))
    elif name == "monitor":
        gaps = np.array([r.max_stat_err for r in rows])
        mean_gap = abs(float(gaps.mean()))
        stderr = float(gaps.std(ddof=1) / math.sqrt(len(gaps)))
        chain_rng = rng_from(derive_seed(cfg["seed"], "chain"))
        lo, hi = cfg["potential_range"]
        mu = make_chain(
            chain_rng.uniform(lo, hi, size=(int(cfg["n"]) - 1, int(cfg["alphabet"]), int(cfg["alphabet"])))
        )
        psi = gibbs_dependence(mu).psi
        bound = math.exp(cfg["epsilon"]) + int(cfg["T"]) * cfg["delta"] + psi - 1.0
        checks["expectation_gap"] = _check(mean_gap, bound + 3.0 * stderr, "<=")
    return checks


def _enumeration_checks(cfg: dict) -> dict:
    """Exhaustive transcript enumeration over a tiny dataset universe."""
    enum = cfg["enumeration"]
    s, n, k, alpha = int(enum["alphabet"]), int(enum["n"]), int(enum["k"]), float(enum["alpha"])
    spec = CompressionSpec(alpha)
    analyst_seed = derive_seed(cfg["seed"], "enumeration-analyst")
    transcripts = set()
    worst_emp = 0.0
    for flat in range(s**n):
        dataset = np.array(np.unravel_index(flat, (s,) * n), dtype=np.int64)
        analyst = DeterministicAdaptiveAnalyst(k, analyst_seed)
        transcript = run_game(RoundedMechanism(spec), analyst, dataset, k)
        transcripts.add(transcript.to_jsonl())
        for q, (_, answer) in zip(transcript.queries(), transcript.rounds):
            worst_emp = max(worst_emp, abs(answer - q.on_dataset(dataset)))
    bound = transcript_bound(spec, k)
    return {
        "distinct_transcripts": _check(len(transcripts), bound, "<="),
        "enumeration_emp_err": _check(worst_emp, alpha / 2.0, "<="),
    }


def run_experiment(config: dict) -> ExperimentReport:
    """Execute a named experiment; deterministic given the config."""
    cfg = prepare_config(config)
    name = cfg["experiment"]
    trials = int(cfg["trials"])
    timing = bool(cfg["timing"])
    jobs = [(name, cfg, t, timing) for t in range(trials)]
    workers = int(cfg["workers"])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_timed_trial, jobs))
    else:
        rows = [_timed_trial(job) for job in jobs]
    rows.sort(key=lambda r: r.trial)
    report_cfg = {key: cfg[key] for key in sorted(cfg) if key not in ("workers", "timing")}
    return ExperimentReport(
        experiment=name,
        config=report_cfg,
        rows=rows,
        checks=_experiment_checks(cfg, rows),
    )
