"""Ground-truth machinery: exact values, structural classification, checks.

For Markov chains the states split into three classes determined purely by
the support structure: zero-value states (nothing reachable carries reward),
infinite-value states (an essential state with positive reward is reachable),
and the rest, on which the restricted Bellman operator is a power contraction
and the value solves a linear system.  Small games are solved exactly by
enumerating memoryless deterministic policies for both players, which is the
independent oracle the iteration schemes are measured against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .iteration import Operator, StoppingRule, ZeroBox, kleene_iterate, sup_norm
from .models import MASS_TOL, SSG, BellmanKernel, ModelError, restrict_policy

ZERO = "zero"
INFINITE = "infinite"
FINITE = "finite"

RESIDUAL_TOL = 1e-9


class BudgetExceeded(RuntimeError):
    """Raised when policy enumeration would exceed the allowed count."""


@dataclass(frozen=True)
class Classification:
    """Per-state label: zero, infinite or finite value."""

    labels: tuple[str, ...]

    def states(self, label: str) -> list[int]:
        return [s for s, l in enumerate(self.labels) if l == label]


@dataclass
class ExactValue:
    """An exact value vector, possibly with +inf entries.

    ``witness`` carries optimal (min-player, max-player) policies when the
    value came from policy enumeration.
    """

    value: np.ndarray
    method: str
    witness: tuple[dict[int, int], dict[int, int]] | None = None
    classification: Classification | None = None


# ---------------------------------------------------------------------------
# Markov chains


def _chain_structure(chain: SSG):
    """(rewards, successor lists, full-mass flags) of a chain; final states
    act as zero-reward, zero-mass sinks."""
    if not chain.is_chain():
        raise ModelError("expected a Markov chain (at most one action per state)")
    n = chain.num_states
    rewards = np.zeros(n)
    succs: list[list[int]] = [[] for _ in range(n)]
    full_mass = np.zeros(n, dtype=bool)
    for s in range(n):
        if chain.actions[s]:
            act = chain.actions[s][0]
            rewards[s] = act.reward
            succs[s] = [t for t, p in act.transitions if p > 0]
            full_mass[s] = abs(act.mass() - 1.0) <= MASS_TOL
    return rewards, succs, full_mass


def _backward_closure(succs: Sequence[Sequence[int]], seeds: Sequence[int]) -> np.ndarray:
    """States from which some seed state is reachable (seeds included)."""
    n = len(succs)
    preds: list[list[int]] = [[] for _ in range(n)]
    for s, ts in enumerate(succs):
        for t in ts:
            preds[t].append(s)
    reach = np.zeros(n, dtype=bool)
    stack = list(seeds)
    reach[list(seeds)] = True
    while stack:
        t = stack.pop()
        for s in preds[t]:
            if not reach[s]:
                reach[s] = True
                stack.append(s)
    return reach


def classify_chain(chain: SSG) -> Classification:
    """Label every state of a Markov chain as zero / infinite / finite.

    A state is essential iff its strongly connected component has no outgoing
    edge and all members carry full outgoing probability mass; reaching an
    essential state that can reach positive reward forces an infinite value,
    while states that cannot reach positive reward at all have value zero.
    """
    rewards, succs, full_mass = _chain_structure(chain)
    n = chain.num_states
    if n == 0:
        return Classification(labels=())

    can_reach_pos = _backward_closure(succs, [s for s in range(n) if rewards[s] > 0])

    rows = [s for s, ts in enumerate(succs) for _ in ts]
    cols = [t for ts in succs for t in ts]
    graph = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_comp, labels = connected_components(graph, connection="strong", directed=True)

    comp_has_exit = np.zeros(n_comp, dtype=bool)
    comp_full = np.ones(n_comp, dtype=bool)
    for s in range(n):
        comp_full[labels[s]] &= bool(full_mass[s])
        for t in succs[s]:
            if labels[t] != labels[s]:
                comp_has_exit[labels[s]] = True
    essential = np.array([comp_full[labels[s]] and not comp_has_exit[labels[s]] for s in range(n)])

    inf_seeds = [s for s in range(n) if essential[s] and can_reach_pos[s]]
    reaches_inf = _backward_closure(succs, inf_seeds) if inf_seeds else np.zeros(n, dtype=bool)

    out = []
    for s in range(n):
        if reaches_inf[s]:
            out.append(INFINITE)
        elif not can_reach_pos[s]:
            out.append(ZERO)
        else:
            out.append(FINITE)
    return Classification(labels=tuple(out))


def _chain_matrix(chain: SSG):
    n = chain.num_states
    T = np.zeros((n, n))
    R = np.zeros(n)
    for s in range(n):
        if chain.actions[s]:
            act = chain.actions[s][0]
            R[s] = act.reward
            for t, p in act.transitions:
                T[s, t] += p
    return T, R


def exact_chain_value(chain: SSG, method: str = "solve") -> ExactValue:
    """Exact value of a Markov chain.

    Zero and infinite states are read off the classification; on the
    remaining block the value solves (I - T)v = R, by partial-pivot
    elimination with a residual check (method 'solve', the default) or by
    Kleene iteration to threshold 1e-12 (method 'kleene').  A failed residual
    check falls back to the iterative path.
    """
    cls = classify_chain(chain)
    n = chain.num_states
    value = np.zeros(n)
    inf_states = cls.states(INFINITE)
    value[inf_states] = np.inf
    finite = cls.states(FINITE)
    used = "chain-solve" if method == "solve" else "kleene"
    if finite:
        T, R = _chain_matrix(chain)
        Tf = T[np.ix_(finite, finite)]
        Rf = R[finite]
        v = None
        if method == "solve":
            try:
                v = np.linalg.solve(np.eye(len(finite)) - Tf, Rf)
            except np.linalg.LinAlgError as exc:
                raise AssertionError(
                    "singular system on the finite-value block; classification is broken"
                ) from exc
            if sup_norm((np.eye(len(finite)) - Tf) @ v - Rf) > RESIDUAL_TOL:
                v = None
                used = "kleene"
        if v is None:
            v = np.zeros(len(finite))
            for _ in range(10**6):
                v_next = Rf + Tf @ v
                if sup_norm(v_next - v) < 1e-12:
                    v = v_next
                    break
                v = v_next
        if (v < -RESIDUAL_TOL).any():
            raise AssertionError("negative chain value; classification is broken")
        value[finite] = np.maximum(v, 0.0)
    return ExactValue(value=value, method=used, classification=cls)


# ---------------------------------------------------------------------------
# Games, by policy enumeration


def _player_choice_states(game: SSG, player: str) -> list[int]:
    return [
        s
        for s in range(game.num_states)
        if game.players[s] == player and len(game.actions[s]) > 0
    ]


def _enumerate_policies(game: SSG, states: list[int]):
    ranges = [range(len(game.actions[s])) for s in states]
    for combo in itertools.product(*ranges):
        yield dict(zip(states, combo))


def _values_match(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    inf_a, inf_b = np.isinf(a), np.isinf(b)
    if (inf_a != inf_b).any():
        return False
    fin = ~inf_a
    return bool(np.all(np.abs(a[fin] - b[fin]) <= tol))


def exact_ssg_value(game: SSG, budget: int = 100_000) -> ExactValue:
    """Game value by brute-force enumeration of memoryless policies.

    Computes min over min-player policies of (max over max-player policies of
    the doubly restricted chain's exact value), pointwise per state, and
    returns the first policies (in lowest-action-index order) realizing the
    optimum.  Raises BudgetExceeded when the joint policy count passes
    ``budget``; callers should fall back to Kleene iteration as an
    approximate reference in that case.
    """
    total = 1
    for s in range(game.num_states):
        if game.actions[s]:
            total *= len(game.actions[s])
            if total > budget:
                raise BudgetExceeded(f"joint policy count exceeds budget {budget}")

    min_states = _player_choice_states(game, "min")
    max_states = _player_choice_states(game, "max")

    min_results = []
    for pi_min in _enumerate_policies(game, min_states):
        restricted = restrict_policy(game, pi_min)
        best = None
        max_values = []
        for pi_max in _enumerate_policies(restricted, max_states):
            chain = restrict_policy(restricted, pi_max)
            val = exact_chain_value(chain).value
            max_values.append((pi_max, val))
            best = val if best is None else np.maximum(best, val)
        min_results.append((pi_min, best, max_values))

    value = min_results[0][1].copy()
    for _, w, _ in min_results[1:]:
        value = np.minimum(value, w)

    tol = 1e-9
    witness = None
    for pi_min, w, max_values in min_results:
        if not _values_match(w, value, tol):
            continue
        for pi_max, val in max_values:
            if _values_match(val, w, tol):
                witness = (pi_min, pi_max)
                break
        if witness:
            break
    return ExactValue(value=value, method="policy-enumeration", witness=witness)


# ---------------------------------------------------------------------------
# Operator diagnostics


def sup_envelope(ops: Sequence[Operator]) -> Operator:
    """Pointwise maximum of finitely many operators on a shared box.

    Preserves monotonicity and non-expansiveness of the inputs.  The usual
    use is diagnostic: Kleene-iterating the envelope of a tail window
    f_n..f_N approximates the least fixpoint of the tail supremum.
    """
    if not ops:
        raise ValueError("need at least one operator")
    d = ops[0].dimension
    for op in ops[1:]:
        if op.dimension != d:
            raise ValueError("operators disagree on dimension")

    def env(x):
        out = np.asarray(ops[0](x), dtype=float)
        for op in ops[1:]:
            out = np.maximum(out, op(x))
        return out

    return Operator(func=env, box=ops[0].box)


@dataclass
class PropertyReport:
    """Empirical monotonicity / Lipschitz report over sampled pairs."""

    samples: int
    monotone_violations: list[tuple[np.ndarray, np.ndarray]]
    max_lipschitz_ratio: float
    lipschitz_witness: tuple[np.ndarray, np.ndarray] | None

    @property
    def monotone(self) -> bool:
        return not self.monotone_violations

    def non_expansive(self, tol: float = 1e-12) -> bool:
        return self.max_lipschitz_ratio <= 1.0 + tol


def check_operator_properties(
    f: Callable[[np.ndarray], np.ndarray],
    box: ZeroBox,
    samples: int,
    seed: int = 0,
    probe_bound: float = 10.0,
    max_witnesses: int = 10,
) -> PropertyReport:
    """Sample random pairs in the box and test monotonicity and expansion.

    Ordered pairs for the monotonicity test come from the pointwise min/max
    of two draws.  Unbounded box components are probed up to ``probe_bound``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    top = np.minimum(box.bound, probe_bound)
    violations: list[tuple[np.ndarray, np.ndarray]] = []
    max_ratio = 0.0
    lip_witness = None
    for _ in range(samples):
        x = rng.uniform(0.0, top)
        y = rng.uniform(0.0, top)
        lo, hi = np.minimum(x, y), np.maximum(x, y)
        flo, fhi = np.asarray(f(lo), dtype=float), np.asarray(f(hi), dtype=float)
        if (flo > fhi + 1e-12).any() and len(violations) < max_witnesses:
            violations.append((lo, hi))
        dist = sup_norm(x - y)
        if dist > 0:
            ratio = sup_norm(np.asarray(f(x), dtype=float) - np.asarray(f(y), dtype=float)) / dist
            if ratio > max_ratio:
                max_ratio = ratio
                lip_witness = (x, y)
    return PropertyReport(
        samples=samples,
        monotone_violations=violations,
        max_lipschitz_ratio=max_ratio,
        lipschitz_witness=lip_witness,
    )


# ---------------------------------------------------------------------------
# Convenience: operators from games


def bellman_operator(game: SSG) -> Operator:
    """The game's Bellman operator on the unbounded orthant."""
    kernel = BellmanKernel(game)
    return Operator(func=kernel.apply, box=ZeroBox.unbounded(game.num_states))


def reference_value(game: SSG, budget: int = 100_000,
                    kleene_steps: int = 10**5, kleene_threshold: float = 1e-10) -> ExactValue:
    """Exact value when enumeration fits the budget, else converged Kleene."""
    try:
        return exact_ssg_value(game, budget=budget)
    except BudgetExceeded:
        res = kleene_iterate(bellman_operator(game), StoppingRule(max_steps=kleene_steps, change_threshold=kleene_threshold))
        if not res.converged:
            raise
        return ExactValue(value=res.value, method="kleene")
