"""Command-line front end.

Subcommands: ``iterate`` (run one dampened Mann iteration against a model
file), ``classify`` (structural value classes of a Markov chain), ``solve``
(exact game value), ``generate`` (write random benchmark models) and
``experiment`` (the full benchmark harness emitting CSV/JSON).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import analysis, experiments, iteration, models, schemes


def _load_x0(spec: str, d: int) -> np.ndarray:
    if spec == "zero":
        return np.zeros(d)
    with open(spec, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    x0 = np.asarray(data, dtype=float)
    if x0.shape != (d,):
        raise SystemExit(f"x0 file has {x0.shape} entries, model has {d} states")
    return x0


def _reference_or_none(game: models.SSG):
    try:
        return analysis.reference_value(game).value
    except analysis.BudgetExceeded:
        return None


def cmd_iterate(args) -> int:
    game = models.load_model(args.model)
    scheme = schemes.parse_scheme(args.scheme)
    op = analysis.bellman_operator(game)
    provider = iteration.OperatorProvider.constant(op)
    x0 = _load_x0(args.x0, game.num_states)
    stop = iteration.StoppingRule(max_steps=args.max_steps, change_threshold=args.threshold)
    reference = _reference_or_none(game)

    d = game.num_states
    if args.mode == "full":
        traj = iteration.iterate(provider, scheme, x0, stop, reference)
    elif args.mode == "chaotic":
        vscheme = schemes.DerivedChaoticScheme(scheme, lambda n: [n % d], d)
        traj = iteration.chaotic_iterate(provider, vscheme, lambda n: [n % d], x0, stop, reference)
    else:
        traj = iteration.random_chaotic_iterate(provider, scheme, args.seed, x0, stop, reference)

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "error", "max_change", "alpha_min", "beta_min"])
        for k, step in enumerate(traj.steps):
            err = traj.errors[k] if traj.errors is not None else float("nan")
            w.writerow([int(step), repr(float(err)), repr(float(traj.max_changes[k])),
                        repr(float(traj.alpha_mins[k])), repr(float(traj.beta_mins[k]))])
    print(f"{traj.num_steps} steps ({traj.termination}); wrote {args.out}")
    return 0


def cmd_classify(args) -> int:
    game = models.load_model(args.model)
    result = analysis.exact_chain_value(game)
    assert result.classification is not None
    for s, (label, value) in enumerate(zip(result.classification.labels, result.value)):
        print(f"state {s}: {label} value={value}")
    return 0


def cmd_solve(args) -> int:
    game = models.load_model(args.model)
    if args.method == "enum":
        result = analysis.exact_ssg_value(game, budget=args.budget)
        witness = result.witness or ({}, {})
        payload = {
            "method": result.method,
            "value": [float(v) if np.isfinite(v) else "inf" for v in result.value],
            "policy_min": {str(s): a for s, a in witness[0].items()},
            "policy_max": {str(s): a for s, a in witness[1].items()},
        }
    else:
        res = iteration.kleene_iterate(
            analysis.bellman_operator(game),
            iteration.StoppingRule(max_steps=args.max_steps, change_threshold=args.threshold),
        )
        payload = {
            "method": "kleene",
            "converged": bool(res.converged),
            "steps": int(res.steps),
            "value": [float(v) for v in res.value],
        }
    json.dump(payload, sys.stdout, indent=1)
    print()
    return 0


def _generator_config(data: dict) -> experiments.GeneratorConfig:
    known = {f.name for f in fields(experiments.GeneratorConfig)}
    unknown = set(data) - known
    if unknown:
        raise SystemExit(f"unknown generator settings: {sorted(unknown)}")
    if "term_mass_range" in data:
        data = dict(data, term_mass_range=tuple(data["term_mass_range"]))
    return experiments.GeneratorConfig(**data)


def _load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    gen = _generator_config(cfg.get("generator", {}))
    return cfg, gen


def cmd_generate(args) -> int:
    cfg, gen = _load_config(args.config)
    del cfg
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(gen.seed)
    for i in range(args.count):
        game = experiments.generate_random_ssg(gen, rng)
        models.save_model(game, out / f"model_{i:03d}.json")
    print(f"wrote {args.count} models to {out}")
    return 0


def cmd_experiment(args) -> int:
    cfg, gen = _load_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    n_games = int(cfg.get("games", 10))
    full_steps = int(cfg.get("full_steps", 1000))
    chaotic_steps = int(cfg.get("chaotic_steps", 30_000))
    samples_per_step = int(cfg.get("samples_per_step", 30))
    seeds = [int(s) for s in cfg.get("seeds", [0])]
    x0 = cfg.get("x0", "zeros")
    record_every = int(cfg.get("record_every", 30))
    table = experiments.benchmark_schemes(uniform_seed=int(cfg.get("uniform_seed", 20_000)))

    rng = np.random.default_rng(gen.seed)
    games = [experiments.generate_random_ssg(gen, rng) for _ in range(n_games)]

    records: list[experiments.RunRecord] = []
    if args.mode in ("full", "both"):
        records += experiments.run_full_experiment(
            games, table, steps=full_steps, samples_per_step=samples_per_step, seeds=seeds, x0=x0
        )
    if args.mode in ("chaotic", "both"):
        records += experiments.run_chaotic_experiment(
            games, table, steps=chaotic_steps, seeds=seeds, x0=x0, record_every=record_every
        )

    experiments.write_records_csv(records, out / "records.csv")
    experiments.write_aggregate_csv(experiments.aggregate(records), out / "aggregate.csv")
    experiments.write_meta_json(
        out / "meta.json",
        gen,
        games=n_games,
        full_steps=full_steps,
        chaotic_steps=chaotic_steps,
        samples_per_step=samples_per_step,
        seeds=seeds,
        x0=x0,
        record_every=record_every,
        mode=args.mode,
        schemes={name: s.spec() for name, s in table.items()},
    )
    print(f"wrote records.csv, aggregate.csv, meta.json to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mannfp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iterate", help="run dampened Mann iteration on a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--scheme", required=True, help="e.g. 'alpha=const:0.5,beta=harmonic'")
    p.add_argument("--x0", default="zero", help="'zero' or a JSON file with one value per state")
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--threshold", type=float, default=None, help="stop when the step change drops below this")
    p.add_argument("--mode", choices=["full", "chaotic", "random-chaotic"], default="full",
                   help="'chaotic' sweeps components round-robin, 'random-chaotic' picks uniformly")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("classify", help="zero/infinite/finite classes of a Markov chain")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("solve", help="exact value of a game")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=["enum", "kleene"], default="enum")
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--threshold", type=float, default=1e-10)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="write random benchmark models")
    p.add_argument("--config", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("experiment", help="run the benchmark harness")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["full", "chaotic", "both"], default="both")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
