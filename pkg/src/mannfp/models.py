"""Simple stochastic games and their Bellman operators.

A game is a finite set of states, each controlled by the max- or the
min-player, with a list of enabled actions per state.  An action carries a
non-negative reward and a sub-stochastic transition row stored sparsely as
(successor, probability > 0) pairs; the missing mass 1 - sum(p) is the
probability that the system terminates.  States with no actions are final
and have value 0.  Markov chains (at most one action everywhere) and MDPs
(choices for one player only) are special cases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_PLAYER = "max"
MIN_PLAYER = "min"

# Slack on the sub-stochasticity bound; absorbs float accumulation when
# probabilities come from empirical counts.
MASS_TOL = 1e-12


class ModelError(ValueError):
    """Raised for malformed games or model files."""


@dataclass(frozen=True)
class Action:
    reward: float
    transitions: tuple[tuple[int, float], ...]

    def mass(self) -> float:
        return math.fsum(p for _, p in self.transitions)


@dataclass(frozen=True)
class SSG:
    """A simple stochastic game.  Construction does not validate; see
    ``validate_ssg`` (violations are data, e.g. for checking hand-built
    empirical games)."""

    players: tuple[str, ...]
    actions: tuple[tuple[Action, ...], ...]

    @property
    def num_states(self) -> int:
        return len(self.players)

    def enabled(self, s: int) -> tuple[Action, ...]:
        return self.actions[s]

    def is_final(self, s: int) -> bool:
        return not self.actions[s]

    def final_states(self) -> list[int]:
        return [s for s in range(self.num_states) if self.is_final(s)]

    def is_chain(self) -> bool:
        return all(len(acts) <= 1 for acts in self.actions)

    def is_max_state(self, s: int) -> bool:
        return self.players[s] == MAX_PLAYER

    def state_action_pairs(self) -> list[tuple[int, int]]:
        return [(s, a) for s in range(self.num_states) for a in range(len(self.actions[s]))]


def make_ssg(players: Sequence[str], actions: Sequence[Sequence[tuple[float, Sequence[tuple[int, float]]]]]) -> SSG:
    """Build an SSG from plain lists: per state a player label and a list of
    (reward, [(successor, prob), ...]) actions."""
    acts = tuple(
        tuple(Action(float(r), tuple((int(t), float(p)) for t, p in trans)) for r, trans in state_acts)
        for state_acts in actions
    )
    return SSG(players=tuple(players), actions=acts)


def validate_ssg(game: SSG) -> list[str]:
    """Return a list of structural violations (empty when well formed)."""
    violations = []
    n = game.num_states
    for s, player in enumerate(game.players):
        if player not in (MAX_PLAYER, MIN_PLAYER):
            violations.append(f"states[{s}]: unknown player label {player!r}")
    for s in range(n):
        for a, act in enumerate(game.actions[s]):
            where = f"states[{s}].actions[{a}]"
            if act.reward < 0:
                violations.append(f"{where}: negative reward {act.reward}")
            seen = set()
            for t, p in act.transitions:
                if not 0 <= t < n:
                    violations.append(f"{where}: successor {t} out of range")
                if p <= 0:
                    violations.append(f"{where}: non-positive probability {p} for successor {t}")
                if t in seen:
                    violations.append(f"{where}: duplicate successor {t}")
                seen.add(t)
            mass = act.mass()
            if mass > 1.0 + MASS_TOL:
                violations.append(f"{where}: outgoing mass {mass} exceeds 1")
    return violations


# ---------------------------------------------------------------------------
# State-action indexing


class StateActionIndex:
    """Bijection between enabled (state, action) pairs and 0..num_pairs-1."""

    def __init__(self, game: SSG):
        self.offsets = np.zeros(game.num_states + 1, dtype=int)
        for s in range(game.num_states):
            self.offsets[s + 1] = self.offsets[s] + len(game.actions[s])
        self.num_pairs = int(self.offsets[-1])
        self._states = np.repeat(np.arange(game.num_states), np.diff(self.offsets))

    def flat(self, s: int, a: int) -> int:
        if not 0 <= a < self.offsets[s + 1] - self.offsets[s]:
            raise ModelError(f"action {a} not enabled in state {s}")
        return int(self.offsets[s] + a)

    def pair(self, idx: int) -> tuple[int, int]:
        if not 0 <= idx < self.num_pairs:
            raise ModelError(f"pair index {idx} out of range")
        s = int(self._states[idx])
        return s, int(idx - self.offsets[s])


# ---------------------------------------------------------------------------
# Bellman operators


class BellmanKernel:
    """Dense-array form of a game's Bellman operator.

    Rows of ``T`` and entries of ``R`` are indexed by the game's
    StateActionIndex; per-state action blocks are contiguous, which lets
    max/min over actions run as a segmented reduction.
    """

    def __init__(self, game: SSG):
        self.index = StateActionIndex(game)
        n, m = game.num_states, self.index.num_pairs
        self.num_states = n
        self.T = np.zeros((m, n))
        self.R = np.zeros(m)
        for s in range(n):
            for a, act in enumerate(game.actions[s]):
                row = self.index.flat(s, a)
                self.R[row] = act.reward
                for t, p in act.transitions:
                    self.T[row, t] += p
        offs = self.index.offsets
        self.nonfinal = np.flatnonzero(np.diff(offs) > 0)
        self.block_starts = offs[self.nonfinal]
        self.is_max_nonfinal = np.array([game.is_max_state(int(s)) for s in self.nonfinal], dtype=bool)

    def update_pair(self, row: int, reward: float, transitions: Iterable[tuple[int, float]]) -> None:
        """Overwrite one state-action row (used by samplers owning a kernel)."""
        self.T[row, :] = 0.0
        for t, p in transitions:
            self.T[row, t] += p
        self.R[row] = reward

    def state_values(self, q: np.ndarray) -> np.ndarray:
        """Per-state max/min over the state's action block; 0 on final states."""
        v = np.zeros(self.num_states)
        if self.nonfinal.size:
            mx = np.maximum.reduceat(q, self.block_starts)
            mn = np.minimum.reduceat(q, self.block_starts)
            v[self.nonfinal] = np.where(self.is_max_nonfinal, mx, mn)
        return v

    def apply(self, v: np.ndarray) -> np.ndarray:
        """The state-value Bellman update."""
        return self.state_values(self.R + self.T @ v)

    def apply_sa(self, q: np.ndarray) -> np.ndarray:
        """The state-action Bellman update."""
        return self.R + self.T @ self.state_values(q)


def bellman_apply(game: SSG, v: np.ndarray) -> np.ndarray:
    """One Bellman update, computed directly from the sparse representation.

    Reference implementation; hot paths should compile a BellmanKernel once
    and reuse it.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (game.num_states,):
        raise ModelError(f"value vector has shape {v.shape}, expected ({game.num_states},)")
    out = np.zeros(game.num_states)
    for s in range(game.num_states):
        acts = game.actions[s]
        if not acts:
            continue
        vals = [act.reward + sum(p * v[t] for t, p in act.transitions) for act in acts]
        out[s] = max(vals) if game.is_max_state(s) else min(vals)
    return out


def state_action_bellman_apply(game: SSG, q: np.ndarray) -> np.ndarray:
    """One state-action Bellman update on a vector over enabled pairs.

    Successor states resolve their own value as max/min over their enabled
    actions' q-entries; final successors contribute 0.
    """
    index = StateActionIndex(game)
    q = np.asarray(q, dtype=float)
    if q.shape != (index.num_pairs,):
        raise ModelError(f"q vector has shape {q.shape}, expected ({index.num_pairs},)")
    v = np.zeros(game.num_states)
    for s in range(game.num_states):
        if game.actions[s]:
            block = q[index.offsets[s]:index.offsets[s + 1]]
            v[s] = block.max() if game.is_max_state(s) else block.min()
    out = np.empty(index.num_pairs)
    for s in range(game.num_states):
        for a, act in enumerate(game.actions[s]):
            out[index.flat(s, a)] = act.reward + sum(p * v[t] for t, p in act.transitions)
    return out


def k_step_operator(game: SSG, k: int):
    """v -> f^k(v), the k-fold composition of the Bellman update."""
    if k < 1:
        raise ValueError("k must be >= 1")
    kernel = BellmanKernel(game)

    def op(v: np.ndarray) -> np.ndarray:
        for _ in range(k):
            v = kernel.apply(v)
        return v

    return op


# ---------------------------------------------------------------------------
# Policies


def restrict_policy(game: SSG, policy: Mapping[int, int]) -> SSG:
    """Replace the action sets on the policy's domain by the chosen action."""
    new_actions = []
    for s in range(game.num_states):
        if s in policy:
            a = policy[s]
            if not 0 <= a < len(game.actions[s]):
                raise ModelError(f"policy picks action {a} not enabled in state {s}")
            new_actions.append((game.actions[s][a],))
        else:
            new_actions.append(game.actions[s])
    return SSG(players=game.players, actions=tuple(new_actions))


# ---------------------------------------------------------------------------
# Probabilistic / non-deterministic split


def split_state_action(game: SSG) -> SSG:
    """Split each move into a choice step followed by a chance step.

    The result has one state per original state plus one per enabled
    (state, action) pair (numbered |S| + flat pair index).  Choosing action a
    in s moves deterministically, with reward 0, to the pair state (s, a);
    the pair state has a single action carrying the original reward and
    transition row.  Pair states are assigned to the min-player (they offer
    no choice, so the owner is irrelevant).
    """
    index = StateActionIndex(game)
    n = game.num_states
    players = list(game.players) + [MIN_PLAYER] * index.num_pairs
    actions: list[tuple[Action, ...]] = []
    for s in range(n):
        actions.append(
            tuple(Action(0.0, ((n + index.flat(s, a), 1.0),)) for a in range(len(game.actions[s])))
        )
    for idx in range(index.num_pairs):
        s, a = index.pair(idx)
        act = game.actions[s][a]
        actions.append((Action(act.reward, act.transitions),))
    return SSG(players=tuple(players), actions=tuple(actions))


# ---------------------------------------------------------------------------
# Model files

_MODEL_DOC = 'expected {"states": [{"player": "max"|"min", "actions": [{"reward": r, "transitions": [[s, p], ...]}]}]}'


def model_from_dict(data) -> SSG:
    if not isinstance(data, dict) or "states" not in data:
        raise ModelError(f"bad model: {_MODEL_DOC}")
    players = []
    actions = []
    for s, state in enumerate(data["states"]):
        where = f"states[{s}]"
        if not isinstance(state, dict) or "player" not in state:
            raise ModelError(f"{where}: missing 'player'")
        players.append(state["player"])
        acts = []
        for a, act in enumerate(state.get("actions", [])):
            if not isinstance(act, dict) or "reward" not in act:
                raise ModelError(f"{where}.actions[{a}]: missing 'reward'")
            trans = []
            for j, pair in enumerate(act.get("transitions", [])):
                if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                    raise ModelError(f"{where}.actions[{a}].transitions[{j}]: expected [state, prob]")
                trans.append((int(pair[0]), float(pair[1])))
            acts.append((float(act["reward"]), trans))
        actions.append(acts)
    game = make_ssg(players, actions)
    violations = validate_ssg(game)
    if violations:
        raise ModelError("invalid model:\n  " + "\n  ".join(violations))
    return game


def model_to_dict(game: SSG) -> dict:
    return {
        "states": [
            {
                "player": game.players[s],
                "actions": [
                    {"reward": act.reward, "transitions": [[t, p] for t, p in act.transitions]}
                    for act in game.actions[s]
                ],
            }
            for s in range(game.num_states)
        ]
    }


def load_model(path) -> SSG:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(game: SSG, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(game), fh, indent=1)
        fh.write("\n")
