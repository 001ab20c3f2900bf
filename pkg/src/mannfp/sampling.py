"""Count-based empirical estimation of a game from simulated observations.

The sampler knows the true game's structure (transition supports, which
actions can terminate, which rewards are positive) and only estimates the
numbers.  Every empirical game it emits is therefore structurally faithful by
construction: mass never appears outside a support, termination never appears
on a non-terminating action, and unobserved rewards stay at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import MASS_TOL, SSG, Action, BellmanKernel, ModelError, StateActionIndex


@dataclass(frozen=True)
class PairStructure:
    support: tuple[int, ...]
    probs: tuple[float, ...]  # true successor probabilities, for simulation
    terminating: bool  # true termination probability > 0
    reward: float
    reward_positive: bool


@dataclass(frozen=True)
class StructuralPrior:
    """Immutable structural facts extracted from the true game."""

    num_states: int
    players: tuple[str, ...]
    pairs: tuple[PairStructure, ...]
    offsets: tuple[int, ...]

    @classmethod
    def from_model(cls, game: SSG) -> "StructuralPrior":
        index = StateActionIndex(game)
        pairs = []
        for idx in range(index.num_pairs):
            s, a = index.pair(idx)
            act = game.actions[s][a]
            mass = act.mass()
            if mass > 1.0 + MASS_TOL:
                raise ModelError(f"state {s} action {a}: outgoing mass {mass} exceeds 1")
            pairs.append(
                PairStructure(
                    support=tuple(t for t, _ in act.transitions),
                    probs=tuple(p for _, p in act.transitions),
                    terminating=mass < 1.0 - MASS_TOL,
                    reward=act.reward,
                    reward_positive=act.reward > 0.0,
                )
            )
        return cls(
            num_states=game.num_states,
            players=game.players,
            pairs=tuple(pairs),
            offsets=tuple(int(o) for o in index.offsets),
        )

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    def flat(self, s: int, a: int) -> int:
        if not 0 <= a < self.offsets[s + 1] - self.offsets[s]:
            raise ModelError(f"action {a} not enabled in state {s}")
        return self.offsets[s] + a


def _exact_unit_row(probs: list[float], small: int) -> list[float]:
    """Adjust entry ``small`` so the float sum of the row is exactly 1.0.

    Works whenever the remaining entries sum to at least 1/2, which holds
    when ``small`` carries the least mass of a probability row.
    """
    rest = math.fsum(p for i, p in enumerate(probs) if i != small)
    out = list(probs)
    out[small] = 1.0 - rest
    return out


class SamplerState:
    """Observation counts for one exploration run of a true game.

    Tracks per state-action pair the successor counts over the declared
    support, the termination count, and the last observed reward.  The
    instance also maintains a dense Bellman kernel of the current empirical
    game so experiment loops can re-apply the empirical operator cheaply;
    the kernel is owned by this run and must not be shared.
    """

    def __init__(self, prior: StructuralPrior, reward_noise: Callable[[float, np.random.Generator], float] | None = None):
        self.prior = prior
        m = prior.num_pairs
        self.counts = [np.zeros(len(p.support), dtype=np.int64) for p in prior.pairs]
        self.n_term = np.zeros(m, dtype=np.int64)
        self.n_total = np.zeros(m, dtype=np.int64)
        self.reward_seen = np.zeros(m, dtype=bool)
        self.reward_val = np.zeros(m)
        self.steps = 0
        self.reward_noise = reward_noise
        self._cum = [np.cumsum(p.probs) for p in prior.pairs]
        self._kernel: BellmanKernel | None = None

    # -- observation ----------------------------------------------------

    def observe_pair(self, idx: int, rng: np.random.Generator) -> None:
        """Draw one outcome of the true distribution and count it."""
        pair = self.prior.pairs[idx]
        cum = self._cum[idx]
        u = rng.random()
        if pair.terminating:
            hit = int(np.searchsorted(cum, u, side="right"))
            if hit >= len(cum):
                self.n_term[idx] += 1
            else:
                self.counts[idx][hit] += 1
        else:
            # full outgoing mass: renormalize so termination is impossible
            total = cum[-1]
            hit = min(int(np.searchsorted(cum, u * total, side="right")), len(cum) - 1)
            self.counts[idx][hit] += 1
        self.n_total[idx] += 1
        if not self.reward_seen[idx]:
            r = pair.reward
            if self.reward_noise is not None and pair.reward_positive:
                r = max(0.0, self.reward_noise(r, rng))
            self.reward_val[idx] = r
            self.reward_seen[idx] = True
        self.steps += 1
        if self._kernel is not None:
            self._refresh_kernel_row(idx)

    def observe_pair_many(self, idx: int, k: int, rng: np.random.Generator) -> None:
        """Add k observations of one pair in a single multinomial draw."""
        pair = self.prior.pairs[idx]
        p = np.array(pair.probs)
        if pair.terminating:
            p = np.append(p, max(0.0, 1.0 - p.sum()))
        else:
            p = p / p.sum()
        draws = rng.multinomial(k, p / p.sum())
        if pair.terminating:
            self.counts[idx] += draws[:-1]
            self.n_term[idx] += draws[-1]
        else:
            self.counts[idx] += draws
        self.n_total[idx] += k
        if k > 0 and not self.reward_seen[idx]:
            r = pair.reward
            if self.reward_noise is not None and pair.reward_positive:
                r = max(0.0, self.reward_noise(r, rng))
            self.reward_val[idx] = r
            self.reward_seen[idx] = True
        self.steps += k
        if self._kernel is not None:
            self._refresh_kernel_row(idx)

    # -- empirical game -------------------------------------------------

    def _empirical_row(self, idx: int) -> tuple[list[tuple[int, float]], float]:
        """Sparse empirical transition row and reward for one pair."""
        pair = self.prior.pairs[idx]
        n = int(self.n_total[idx])
        if n == 0:
            k = len(pair.support)
            if not pair.terminating:
                if k == 0:
                    raise ModelError("non-terminating pair with empty support")
                probs = _exact_unit_row([1.0 / k] * k, int(np.argmin(pair.probs)))
            else:
                probs = [1.0 / (k + 1)] * k  # one extra share is termination
            trans = [(t, p) for t, p in zip(pair.support, probs) if p > 0.0]
        else:
            counts = self.counts[idx]
            if not pair.terminating:
                assert self.n_term[idx] == 0, "termination count on a non-terminating pair"
                probs = [c / n for c in counts]
                positive = [i for i, c in enumerate(counts) if c > 0]
                small = min(positive, key=lambda i: counts[i])
                adjusted = _exact_unit_row([probs[i] for i in positive], positive.index(small))
                trans = [(pair.support[i], adjusted[j]) for j, i in enumerate(positive)]
            else:
                trans = [(pair.support[i], c / n) for i, c in enumerate(counts) if c > 0]
        reward = float(self.reward_val[idx]) if self.reward_seen[idx] else 0.0
        if not pair.reward_positive:
            reward = 0.0
        return trans, reward

    def empirical_game(self) -> SSG:
        actions: list[list[Action]] = [[] for _ in range(self.prior.num_states)]
        for idx in range(self.prior.num_pairs):
            trans, reward = self._empirical_row(idx)
            s = int(np.searchsorted(self.prior.offsets, idx, side="right")) - 1
            actions[s].append(Action(reward, tuple(trans)))
        return SSG(players=self.prior.players, actions=tuple(tuple(a) for a in actions))

    def kernel(self) -> BellmanKernel:
        """Bellman kernel of the current empirical game, updated in place
        row by row as observations arrive."""
        if self._kernel is None:
            self._kernel = BellmanKernel(self.empirical_game())
        return self._kernel

    def _refresh_kernel_row(self, idx: int) -> None:
        trans, reward = self._empirical_row(idx)
        self._kernel.update_pair(idx, reward, trans)


def observe_step(state: SamplerState, true_model: SSG, s: int, a: int, rng: np.random.Generator) -> SamplerState:
    """Observe one model step for (s, a); counts update in place.

    The true distributions live in the sampler's structural prior, which was
    extracted from ``true_model``; the model argument is kept for call-site
    clarity.
    """
    if a >= len(true_model.actions[s]):
        raise ModelError(f"action {a} not enabled in state {s}")
    state.observe_pair(state.prior.flat(s, a), rng)
    return state


def batch_observe(state: SamplerState, true_model: SSG, k: int, rng: np.random.Generator) -> SamplerState:
    """Observe k model steps at uniformly random state-action pairs."""
    if state.prior.num_pairs == 0:
        raise ModelError("model has no enabled actions to observe")
    if k < 0:
        raise ValueError("k must be >= 0")
    for _ in range(k):
        state.observe_pair(int(rng.integers(state.prior.num_pairs)), rng)
    return state


def empirical_ssg(state: SamplerState, prior: StructuralPrior | None = None) -> SSG:
    """The empirical game for the current counts.

    Unobserved pairs fall back to the uniform distribution over their
    declared support (plus one termination share if the true action can
    terminate), so the result is a valid game at every stage.
    """
    if prior is not None and prior is not state.prior:
        raise ValueError("prior does not belong to this sampler state")
    return state.empirical_game()


def sampling_validity_check(empirical: SSG, prior: StructuralPrior, true_model: SSG) -> list[str]:
    """Check the structural faithfulness constraints on one empirical game.

    Verified per state-action pair: no mass outside the true support, no
    reward where the true reward is zero, and full outgoing mass wherever the
    true action cannot terminate.  The limit statements (empirical numbers
    converging to the true ones) are statistical and are exercised by the
    acceptance suite instead.
    """
    violations = []
    index = StateActionIndex(true_model)
    if empirical.num_states != true_model.num_states:
        return [f"state count mismatch: {empirical.num_states} vs {true_model.num_states}"]
    for s in range(true_model.num_states):
        if len(empirical.actions[s]) != len(true_model.actions[s]):
            violations.append(f"states[{s}]: action count mismatch")
            continue
        for a in range(len(true_model.actions[s])):
            pair = prior.pairs[index.flat(s, a)]
            emp = empirical.actions[s][a]
            where = f"states[{s}].actions[{a}]"
            support = set(pair.support)
            for t, p in emp.transitions:
                if p > 0 and t not in support:
                    violations.append(f"{where}: mass {p} on non-existing transition to {t}")
            if not pair.reward_positive and emp.reward != 0.0:
                violations.append(f"{where}: reward {emp.reward} where the true reward is 0")
            if not pair.terminating:
                mass = emp.mass()
                if abs(mass - 1.0) > 1e-15:
                    violations.append(
                        f"{where}: outgoing mass {mass!r} on a non-terminating action"
                    )
    return violations
