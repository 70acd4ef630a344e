"""Command-line testbed.

Subcommands:

* ``psi <measure.json>``        exact dependence coefficient of a measure
* ``bound <chain.json>``        closed-form chain bound from the potentials
* ``skip-check <chain.json> --t T``  compare the skipped chain's coefficient
  against the t-th power of the original's
* ``game <config.json>``        one seeded game, transcript as JSON lines
* ``run <config.json>``         any named experiment from the config
* ``attack | negative | compress | monitor <config.json>``  shortcuts that
  pin the experiment name

Experiment outputs are a CSV of per-trial rows plus a JSON summary; both
are byte-identical across reruns of the same config (pass ``--timing`` to
record real wall times at the cost of that guarantee). Exit codes: 0 on
success, 1 on invalid input, 2 when ``--check`` is passed and a check
threshold fails.
"""
from __future__ import annotations

import argparse
import json
import sys

from .dependence import gibbs_dependence, markov_psi_bound
from .errors import ValidationError
from .experiments import EXPERIMENTS, run_experiment
from .game import run_game
from .measures import ChainMeasure, measure_from_json
from .mechanisms import CompressionSpec, GaussianMechanism, NaiveMechanism, RoundedMechanism
from .privacy import NoiseSpec, PrivacyBudget, calibrate_gaussian
from .analysts import DeterministicAdaptiveAnalyst, RandomSignAttacker, ScriptedAnalyst
from .queries import StatisticalQuery
from .seeding import derive_seed, rng_from


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read JSON from {path}: {exc}") from None


def _load_measure(path: str):
    return measure_from_json(_load_json(path))


def _cmd_psi(args) -> int:
    report = gibbs_dependence(_load_measure(args.measure))
    print(json.dumps(report.to_json(), sort_keys=True))
    return 0


def _cmd_bound(args) -> int:
    measure = _load_measure(args.measure)
    print(json.dumps(markov_psi_bound(measure).to_json(), sort_keys=True))
    return 0


def _cmd_skip_check(args) -> int:
    measure = _load_measure(args.measure)
    if not isinstance(measure, ChainMeasure):
        raise ValidationError("skip-check needs a chain measure")
    psi = gibbs_dependence(measure).psi
    psi_skipped = gibbs_dependence(measure.skip(args.t)).psi
    power = psi**args.t
    passed = psi_skipped <= power + args.tol
    print(
        json.dumps(
            {
                "t": args.t,
                "psi": psi,
                "psi_skipped": psi_skipped,
                "psi_power": power,
                "tol": args.tol,
                "verdict": "PASS" if passed else "FAIL",
            },
            sort_keys=True,
        )
    )
    print(f"psi(mu_x{args.t}) = {psi_skipped!r}  psi^{args.t} = {power!r}  "
          f"{'PASS' if passed else 'FAIL'}")
    return 0 if passed else 2


def _build_mechanism(spec: dict, k: int, n: int, seed: int):
    kind = spec.get("kind", "naive")
    if kind == "naive":
        return NaiveMechanism()
    if kind == "gaussian":
        if "sigma" in spec:
            noise = NoiseSpec("gaussian", float(spec["sigma"]))
        else:
            noise = calibrate_gaussian(
                k, n, PrivacyBudget(float(spec["epsilon"]), float(spec["delta"]))
            )
        return GaussianMechanism(noise, rng_from(derive_seed(seed, "mechanism")))
    if kind == "rounded":
        return RoundedMechanism(CompressionSpec(float(spec["alpha"])))
    raise ValidationError(f"config.mechanism.kind: unknown kind {kind!r}")


def _build_analyst(spec: dict, k: int, seed: int, measure):
    kind = spec.get("kind", "random-sign")
    if kind == "random-sign":
        granted = measure if spec.get("oracle_reference", True) else None
        return RandomSignAttacker(k, derive_seed(seed, "analyst"), measure=granted)
    if kind == "adaptive-deterministic":
        return DeterministicAdaptiveAnalyst(k, derive_seed(seed, "analyst"))
    if kind == "scripted":
        return ScriptedAnalyst([StatisticalQuery.from_json(q) for q in spec["queries"]])
    raise ValidationError(f"config.analyst.kind: unknown kind {kind!r}")


def _cmd_game(args) -> int:
    cfg = _load_json(args.config)
    for field in ("seed", "k", "measure"):
        if field not in cfg:
            raise ValidationError(f"config.{field}: required for the game command")
    seed = int(cfg["seed"])
    k = int(cfg["k"])
    measure = measure_from_json(cfg["measure"])
    dataset = measure.sample(rng_from(derive_seed(seed, "data")))
    mechanism = _build_mechanism(cfg.get("mechanism", {}), k, measure.n, seed)
    analyst = _build_analyst(cfg.get("analyst", {}), k, seed, measure)
    transcript = run_game(mechanism, analyst, dataset, k, seeds={"master": seed})
    text = transcript.to_jsonl()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {k}-round transcript to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_experiment(args, pinned: str | None = None) -> int:
    cfg = _load_json(args.config)
    if pinned is not None:
        declared = cfg.get("experiment", pinned)
        if declared != pinned:
            raise ValidationError(
                f"config.experiment: {declared!r} conflicts with subcommand {pinned!r}"
            )
        cfg["experiment"] = pinned
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.workers is not None:
        cfg["workers"] = args.workers
    if args.timing:
        cfg["timing"] = True
    report = run_experiment(cfg)
    out = args.out or cfg.get("out") or f"{report.experiment}-report"
    csv_path, json_path = report.write(out)
    print(f"{report.experiment}: {len(report.rows)} trials -> {csv_path}, {json_path}")
    for name, check in sorted(report.checks.items()):
        status = "ok" if check["passed"] else "FAILED"
        print(
            f"  check {name}: value={check['value']:.6g} "
            f"{check['cmp']} {check['threshold']:.6g} ... {status}"
        )
    if args.check and not report.all_checks_pass():
        return 2
    return 0


def main(argv=None) -> int:
    parser = _Parser(prog="corradapt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    p_psi = sub.add_parser("psi", help="exact Gibbs-dependence of a measure")
    p_psi.add_argument("measure")

    p_bound = sub.add_parser("bound", help="closed-form chain bound")
    p_bound.add_argument("measure")

    p_skip = sub.add_parser("skip-check", help="skipped-chain contraction check")
    p_skip.add_argument("measure")
    p_skip.add_argument("--t", type=int, required=True)
    p_skip.add_argument("--tol", type=float, default=1e-9)

    p_game = sub.add_parser("game", help="run one seeded game, dump the transcript")
    p_game.add_argument("config")
    p_game.add_argument("--out")

    def add_experiment_parser(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out")
        p.add_argument("--check", action="store_true")
        p.add_argument("--timing", action="store_true")
        return p

    add_experiment_parser("run", f"run a named experiment ({', '.join(EXPERIMENTS)})")
    add_experiment_parser("attack", "paired naive-vs-private attack experiment")
    add_experiment_parser("negative", "planted-measure deviating-algorithm experiment")
    add_experiment_parser("compress", "rounding-mechanism accuracy and transcript counting")
    add_experiment_parser("monitor", "generalization-gap monitor diagnostics")

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "psi":
            return _cmd_psi(args)
        if args.command == "bound":
            return _cmd_bound(args)
        if args.command == "skip-check":
            return _cmd_skip_check(args)
        if args.command == "game":
            return _cmd_game(args)
        if args.command == "run":
            return _cmd_experiment(args)
        return _cmd_experiment(args, pinned=args.command)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
