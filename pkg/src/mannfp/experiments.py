"""Random game generation and the benchmark harness.

Games are drawn with a fixed number of max- and min-player states, a bounded
number of actions and successors, and are kept only when plain Kleene
iteration converges within a budget; rewards are then rescaled so the value
vector has sup-norm 1 (the value is linear in the rewards, so one rescale
suffices and is re-verified).  The harness runs dampened Mann iteration
against freshly sampled empirical games, either with full sweeps (a batch of
observations before every step) or in the random single-component variant
(one observation and one component update per step), and aggregates sup-norm
error curves across games.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analysis import bellman_operator
from .iteration import StoppingRule, error_vs_reference, kleene_iterate, mann_step
from .models import MAX_PLAYER, MIN_PLAYER, SSG, Action, validate_ssg
from .sampling import SamplerState, StructuralPrior
from .schemes import Const, Harmonic, InvPow, OneMinusInv, Scheme, UniformRandom


class GenerationError(RuntimeError):
    """Raised when no game passes the filters within the attempt cap."""


@dataclass
class GeneratorConfig:
    """Knobs for the random game population.

    ``termination_probability`` is the chance that an action reserves part of
    its mass for immediate termination; the reserved share is drawn uniformly
    from ``term_mass_range``.
    """

    n_min_states: int = 15
    n_max_states: int = 15
    max_actions: int = 5
    max_successors: int = 5
    termination_probability: float = 0.5
    term_mass_range: tuple[float, float] = (0.0, 0.5)
    reward_max: float = 1.0
    kleene_budget: int = 10_000
    kleene_threshold: float = 1e-8
    max_attempts: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if min(self.n_min_states + self.n_max_states, self.max_actions, self.max_successors) < 1:
            raise ValueError("state, action and successor bounds must be positive")
        if self.kleene_threshold <= 0:
            raise ValueError("kleene threshold must be > 0")


def _draw_game(cfg: GeneratorConfig, rng: np.random.Generator) -> SSG:
    n = cfg.n_min_states + cfg.n_max_states
    players = [MAX_PLAYER] * cfg.n_max_states + [MIN_PLAYER] * cfg.n_min_states
    rng.shuffle(players)
    actions = []
    for _ in range(n):
        acts = []
        for _ in range(int(rng.integers(1, cfg.max_actions + 1))):
            k = int(rng.integers(1, min(cfg.max_successors, n) + 1))
            succs = rng.choice(n, size=k, replace=False)
            weights = rng.uniform(0.0, 1.0, size=k) + 1e-12
            weights = weights / weights.sum()
            if rng.random() < cfg.termination_probability:
                lo, hi = cfg.term_mass_range
                weights = weights * (1.0 - rng.uniform(lo, hi))
            reward = float(rng.uniform(0.0, cfg.reward_max))
            acts.append(Action(reward, tuple((int(t), float(p)) for t, p in zip(succs, weights))))
        actions.append(tuple(acts))
    return SSG(players=tuple(players), actions=tuple(actions))


def _scale_rewards(game: SSG, factor: float) -> SSG:
    actions = tuple(
        tuple(Action(act.reward * factor, act.transitions) for act in acts) for acts in game.actions
    )
    return SSG(players=game.players, actions=actions)


def generate_random_ssg(cfg: GeneratorConfig, rng: np.random.Generator | None = None) -> SSG:
    """Draw games until one passes the filters; return it value-normalized.

    A draw is kept when (a) Kleene iteration on its Bellman operator
    converges within the configured budget and threshold and (b) the reward
    rescale to unit value norm verifies to within 1e-6.  Raises
    GenerationError with the rejection tallies when the attempt cap runs out.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    rejected_kleene = 0
    rejected_zero = 0
    rejected_norm = 0
    stop = StoppingRule(max_steps=cfg.kleene_budget, change_threshold=cfg.kleene_threshold)
    for _ in range(cfg.max_attempts):
        game = _draw_game(cfg, rng)
        assert not validate_ssg(game), "generator produced an invalid game"
        res = kleene_iterate(bellman_operator(game), stop)
        if not res.converged:
            rejected_kleene += 1
            continue
        norm = float(np.max(res.value))
        if norm <= 0.0:
            rejected_zero += 1
            continue
        scaled = _scale_rewards(game, 1.0 / norm)
        res2 = kleene_iterate(bellman_operator(scaled), stop)
        if not res2.converged or abs(float(np.max(res2.value)) - 1.0) > 1e-6:
            rejected_norm += 1
            continue
        return scaled
    raise GenerationError(
        f"no game passed the filters in {cfg.max_attempts} attempts "
        f"(kleene: {rejected_kleene}, zero value: {rejected_zero}, norm: {rejected_norm})"
    )


def benchmark_schemes(uniform_seed: int = 20_000) -> dict[str, Scheme]:
    """The six learning-rate families benchmarked against each other.

    All share the dampening sequence 1/n; the learning rates range from
    tending to 1 (Kleene-like) over constants and vanishing powers to fresh
    uniform draws at every step.
    """
    return {
        "one-minus-inv": Scheme(OneMinusInv(), Harmonic()),
        "const-0.5": Scheme(Const(0.5), Harmonic()),
        "const-0.01": Scheme(Const(0.01), Harmonic()),
        "inv-sqrt": Scheme(InvPow(0.5), Harmonic()),
        "inv-pow-0.01": Scheme(InvPow(0.01), Harmonic()),
        "uniform": Scheme(UniformRandom(uniform_seed), Harmonic()),
    }


@dataclass(frozen=True)
class RunRecord:
    game_id: str
    scheme: str
    mode: str
    seed: int
    step: int
    error: float


def _reference_values(games: Sequence[SSG], cfg_threshold: float = 1e-10, budget: int = 10**5) -> list[np.ndarray]:
    refs = []
    for game in games:
        res = kleene_iterate(bellman_operator(game), StoppingRule(max_steps=budget, change_threshold=cfg_threshold))
        if not res.converged:
            raise GenerationError("reference Kleene iteration did not converge; game should have been filtered")
        refs.append(res.value)
    return refs


def _start_point(mode: str, d: int, rng: np.random.Generator) -> np.ndarray:
    if mode == "zeros":
        return np.zeros(d)
    if mode == "random":
        return rng.uniform(0.0, 2.0, size=d)
    raise ValueError(f"unknown start mode {mode!r}")


def run_full_experiment(
    games: Sequence[SSG],
    schemes: Mapping[str, Scheme],
    steps: int,
    samples_per_step: int = 30,
    seeds: Sequence[int] = (0,),
    x0: str = "zeros",
) -> list[RunRecord]:
    """Full-sweep runs: observe a batch, rebuild the empirical operator,
    apply one Mann update; record the sup-norm error against the true value
    at every step (step 0 carries the starting error)."""
    references = _reference_values(games)
    records = []
    for g, (game, ref) in enumerate(zip(games, references)):
        game_id = f"g{g:03d}"
        prior = StructuralPrior.from_model(game)
        for si, (scheme_name, scheme) in enumerate(schemes.items()):
            for seed in seeds:
                rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, g, si, 0)))
                sampler = SamplerState(prior)
                kernel = sampler.kernel()
                x = _start_point(x0, game.num_states, rng)
                records.append(RunRecord(game_id, scheme_name, "full", seed, 0, error_vs_reference(x, ref)))
                for n in range(steps):
                    for _ in range(samples_per_step):
                        sampler.observe_pair(int(rng.integers(prior.num_pairs)), rng)
                    fx = kernel.apply(x)
                    alpha, beta = scheme.at(n)
                    x = mann_step(x, fx, alpha, beta)
                    records.append(RunRecord(game_id, scheme_name, "full", seed, n + 1, error_vs_reference(x, ref)))
    return records


def run_chaotic_experiment(
    games: Sequence[SSG],
    schemes: Mapping[str, Scheme],
    steps: int,
    seeds: Sequence[int] = (0,),
    x0: str = "zeros",
    record_every: int = 30,
) -> list[RunRecord]:
    """Single-component runs at matched resources.

    Each step observes one model step at a uniformly random pair, rebuilds
    the empirical operator, and updates one uniformly random component with
    that component's own parameter counter.  After d steps this has consumed
    the same number of observations and component updates as one full-sweep
    step on a d-state game.  Errors are recorded every ``record_every`` steps
    (and at step 0), which keeps record volume in check while landing exactly
    on the matched-resource grid.
    """
    references = _reference_values(games)
    records = []
    for g, (game, ref) in enumerate(zip(games, references)):
        game_id = f"g{g:03d}"
        prior = StructuralPrior.from_model(game)
        d = game.num_states
        for si, (scheme_name, scheme) in enumerate(schemes.items()):
            for seed in seeds:
                rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, g, si, 1)))
                sampler = SamplerState(prior)
                kernel = sampler.kernel()
                counters = np.zeros(d, dtype=int)
                x = _start_point(x0, d, rng)
                records.append(RunRecord(game_id, scheme_name, "chaotic", seed, 0, error_vs_reference(x, ref)))
                for n in range(steps):
                    sampler.observe_pair(int(rng.integers(prior.num_pairs)), rng)
                    i = int(rng.integers(d))
                    alpha, beta = scheme.at(int(counters[i]))
                    fx_i = kernel.apply(x)[i]
                    x[i] = (1.0 - beta) * ((1.0 - alpha) * x[i] + alpha * fx_i)
                    counters[i] += 1
                    if (n + 1) % record_every == 0 or n + 1 == steps:
                        records.append(
                            RunRecord(game_id, scheme_name, "chaotic", seed, n + 1, error_vs_reference(x, ref))
                        )
    return records


@dataclass(frozen=True)
class StepStats:
    scheme: str
    mode: str
    step: int
    mean: float
    p25: float
    p75: float
    min: float
    max: float


@dataclass
class AggregateStats:
    rows: list[StepStats]

    def series(self, scheme: str, mode: str) -> list[StepStats]:
        return sorted((r for r in self.rows if r.scheme == scheme and r.mode == mode), key=lambda r: r.step)

    def at(self, scheme: str, mode: str, step: int) -> StepStats:
        for r in self.rows:
            if (r.scheme, r.mode, r.step) == (scheme, mode, step):
                return r
        raise KeyError((scheme, mode, step))


def _nearest_rank(sorted_vals: np.ndarray, pct: float) -> float:
    n = len(sorted_vals)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_vals[rank - 1])


def aggregate(records: Iterable[RunRecord]) -> AggregateStats:
    """Per (scheme, mode, step) statistics across games and seeds.

    Percentiles use the nearest-rank convention.  All runs of one
    (scheme, mode) must share the same step grid.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple[str, str, int], list[float]] = {}
    run_steps: dict[tuple[str, str, str, int], set[int]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.mode, r.step), []).append(r.error)
        run_steps.setdefault((r.scheme, r.mode, r.game_id, r.seed), set()).add(r.step)
    grids: dict[tuple[str, str], set[int]] = {}
    for (scheme, mode, _, _), steps_seen in run_steps.items():
        prev = grids.setdefault((scheme, mode), steps_seen)
        if prev != steps_seen:
            raise ValueError(f"runs of ({scheme}, {mode}) disagree on the step grid")
    rows = []
    for (scheme, mode, step), errs in sorted(groups.items()):
        vals = np.sort(np.asarray(errs))
        rows.append(
            StepStats(
                scheme=scheme,
                mode=mode,
                step=step,
                mean=float(vals.mean()),
                p25=_nearest_rank(vals, 25),
                p75=_nearest_rank(vals, 75),
                min=float(vals[0]),
                max=float(vals[-1]),
            )
        )
    return AggregateStats(rows=rows)


# ---------------------------------------------------------------------------
# File output


def write_records_csv(records: Iterable[RunRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["game_id", "scheme", "mode", "seed", "step", "error"])
        for r in records:
            w.writerow([r.game_id, r.scheme, r.mode, r.seed, r.step, repr(r.error)])


def write_aggregate_csv(stats: AggregateStats, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scheme", "mode", "step", "mean", "p25", "p75", "min", "max"])
        for r in stats.rows:
            w.writerow([r.scheme, r.mode, r.step, repr(r.mean), repr(r.p25), repr(r.p75), repr(r.min), repr(r.max)])


def write_meta_json(path, cfg: GeneratorConfig, **extra) -> None:
    meta = {"generator": asdict(cfg)}
    meta.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, default=str)
        fh.write("\n")
