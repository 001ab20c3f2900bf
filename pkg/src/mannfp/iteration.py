"""Dampened Mann iteration over an abstract operator provider.

The update is pointwise

    x'(i) = (1 - beta(i)) * ((1 - alpha(i)) * x(i) + alpha(i) * fx(i))

with learning rates alpha and dampening factors beta in [0, 1).  Alongside
the plain loop this module implements the generalized (vector-parameter)
form, chaotic iteration over explicit index sets, the random single-component
variant with per-component parameter counters, Kleene iteration, and the
clamping extension of an operator from a bounded box to the whole
non-negative orthant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .schemes import PARAM_CAP, DerivedChaoticScheme, Scheme, VectorScheme

BOX_TOL = 1e-9


class IterationError(RuntimeError):
    """Raised when a provider's evaluation leaves its declared box."""


@dataclass(frozen=True)
class ZeroBox:
    """The set {x >= 0 : x <= bound}; bound entries may be +inf."""

    bound: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.bound)

    @classmethod
    def cube(cls, top: float, d: int) -> "ZeroBox":
        return cls(np.full(d, float(top)))

    @classmethod
    def unbounded(cls, d: int) -> "ZeroBox":
        return cls(np.full(d, np.inf))

    def contains(self, x: np.ndarray, tol: float = BOX_TOL) -> bool:
        x = np.asarray(x)
        return bool((x >= -tol).all() and (x <= self.bound + tol).all())

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, 0.0), self.bound)


@dataclass(frozen=True)
class Operator:
    """A map on a 0-box, bundled with the box so dimensions travel along."""

    func: Callable[[np.ndarray], np.ndarray]
    box: ZeroBox

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.func(x)

    @property
    def dimension(self) -> int:
        return self.box.dimension


class OperatorProvider:
    """Accessor n -> f_n for a sequence of operators on one shared box."""

    def __init__(self, box: ZeroBox, at: Callable[[int], Callable[[np.ndarray], np.ndarray]]):
        self.box = box
        self._at = at

    def at(self, n: int) -> Callable[[np.ndarray], np.ndarray]:
        return self._at(n)

    @classmethod
    def constant(cls, op: Operator) -> "OperatorProvider":
        return cls(op.box, lambda n: op.func)

    @classmethod
    def from_sequence(cls, box: ZeroBox, fns: Callable[[int], Callable]) -> "OperatorProvider":
        return cls(box, fns)


@dataclass
class StoppingRule:
    """Termination bounds; at least one must be set.

    ``change_threshold`` stops once the sup-norm of the successive difference
    falls below it; ``reference_threshold`` stops once the error against the
    run's reference value does.
    """

    max_steps: int | None = None
    change_threshold: float | None = None
    reference_threshold: float | None = None

    def __post_init__(self):
        if self.max_steps is None and self.change_threshold is None and self.reference_threshold is None:
            raise ValueError("stopping rule needs at least one bound")
        if self.change_threshold is not None and self.change_threshold < 0:
            raise ValueError("change threshold must be >= 0")


@dataclass
class Trajectory:
    """Recorded run of an iteration.

    Scalar series (error, change, parameter minima) are recorded at every
    step; full iterates are kept at a configurable stride to bound memory.
    ``errors`` is present iff a reference value was provided.  For the random
    single-component variant, ``selected`` holds the component updated at
    each step.
    """

    steps: np.ndarray
    errors: np.ndarray | None
    max_changes: np.ndarray
    alpha_mins: np.ndarray
    beta_mins: np.ndarray
    iterates: list[tuple[int, np.ndarray]]
    final: np.ndarray
    termination: str
    selected: np.ndarray | None = None

    @property
    def num_steps(self) -> int:
        return int(self.steps[-1])


def sup_norm(x: np.ndarray) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x))) if x.size else 0.0


def error_vs_reference(x: np.ndarray, reference: np.ndarray) -> float:
    """Sup-norm distance, skipping components whose reference is +inf."""
    reference = np.asarray(reference, dtype=float)
    finite = np.isfinite(reference)
    if not finite.any():
        return 0.0
    return sup_norm(np.asarray(x)[finite] - reference[finite])


def mann_step(x: np.ndarray, fx: np.ndarray, alpha, beta) -> np.ndarray:
    """One dampened Mann update; alpha/beta may be scalars or vectors."""
    x = np.asarray(x, dtype=float)
    fx = np.asarray(fx, dtype=float)
    if x.shape != fx.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs fx {fx.shape}")
    for p in (alpha, beta):
        arr = np.asarray(p)
        if arr.ndim and arr.shape != x.shape:
            raise ValueError(f"parameter shape {arr.shape} does not match x {x.shape}")
    return (1.0 - beta) * ((1.0 - alpha) * x + alpha * fx)


class _Recorder:
    def __init__(self, x0, reference, dense_until, stride):
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self.dense_until = dense_until
        self.stride = stride
        self.steps = [0]
        if reference is None:
            self.errors = None
            self._finite_ref = None
            self._all_finite = False
        else:
            self._finite_ref = np.isfinite(self.reference)
            self._all_finite = bool(self._finite_ref.all())
            self.errors = [self._error(np.asarray(x0, dtype=float))]
        self.max_changes = [np.nan]
        self.alpha_mins = [np.nan]
        self.beta_mins = [np.nan]
        self.iterates = [(0, np.array(x0, dtype=float))]
        self.selected: list[int] = []

    def _error(self, x):
        if self._all_finite:
            return float(np.abs(x - self.reference).max())
        mask = self._finite_ref
        if not mask.any():
            return 0.0
        return float(np.abs(x[mask] - self.reference[mask]).max())

    def record(self, step, x, change, alpha, beta):
        self.steps.append(step)
        if self.errors is not None:
            self.errors.append(self._error(x))
        self.max_changes.append(change)
        self.alpha_mins.append(alpha if isinstance(alpha, float) else float(np.min(alpha)))
        self.beta_mins.append(beta if isinstance(beta, float) else float(np.min(beta)))
        if step <= self.dense_until or step % self.stride == 0:
            self.iterates.append((step, np.array(x)))

    def finish(self, x, termination, selected=None) -> Trajectory:
        if self.iterates[-1][0] != self.steps[-1]:
            self.iterates.append((self.steps[-1], np.array(x)))
        return Trajectory(
            steps=np.array(self.steps),
            errors=None if self.errors is None else np.array(self.errors),
            max_changes=np.array(self.max_changes),
            alpha_mins=np.array(self.alpha_mins),
            beta_mins=np.array(self.beta_mins),
            iterates=self.iterates,
            final=np.array(x),
            termination=termination,
            selected=None if selected is None else np.array(selected),
        )


def _box_checker(box):
    """Cheap per-step containment test; skips the upper bound when infinite."""
    bound = box.bound + BOX_TOL
    bounded = bool(np.isfinite(box.bound).any())

    def check(fx, step):
        if fx.min() < -BOX_TOL or (bounded and (fx > bound).any()):
            raise IterationError(f"provider output left the box at step {step}: {fx}")

    return check


def _run(provider, params_at, x0, stop, reference, dense_until, stride, mask_at=None, selected_log=None):
    box = provider.box
    x = np.asarray(x0, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("starting point must be finite")
    if not box.contains(x):
        raise ValueError("starting point outside the provider's box")
    check_box = _box_checker(box)
    rec = _Recorder(x, reference, dense_until, stride)

    def below_reference():
        return (
            stop.reference_threshold is not None
            and rec.errors is not None
            and rec.errors[-1] <= stop.reference_threshold
        )

    termination = "max-steps"
    n = 0
    while True:
        if below_reference():
            termination = "reference-threshold"
            break
        if stop.max_steps is not None and n >= stop.max_steps:
            termination = "max-steps"
            break
        fx = np.asarray(provider.at(n)(x), dtype=float)
        check_box(fx, n)
        alpha, beta = params_at(n)
        # same expression as mann_step, inlined; shapes are fixed for the run
        stepped = (1.0 - beta) * ((1.0 - alpha) * x + alpha * fx)
        if mask_at is None:
            x_next = stepped
        else:
            x_next = x.copy()
            active = mask_at(n)
            x_next[active] = stepped[active]
        change = float(np.abs(x_next - x).max())
        x = x_next
        n += 1
        rec.record(n, x, change, alpha, beta)
        if stop.change_threshold is not None and change < stop.change_threshold:
            termination = "change-threshold"
            break
    if termination == "change-threshold" and below_reference():
        termination = "reference-threshold"
    return rec.finish(x, termination, selected_log)


def iterate(
    provider: OperatorProvider,
    scheme: Scheme | VectorScheme,
    x0: np.ndarray,
    stop: StoppingRule,
    reference: np.ndarray | None = None,
    dense_until: int = 1000,
    stride: int = 10,
) -> Trajectory:
    """Run dampened Mann iteration with scalar or per-component parameters.

    At step n the provider's f_n is applied to the current iterate and the
    scheme's step-n parameters drive the update.  Recording starts at step 0
    with the initial point.
    """
    return _run(provider, scheme.at, x0, stop, reference, dense_until, stride)


def chaotic_iterate(
    provider: OperatorProvider,
    vscheme: VectorScheme,
    index_sets: Callable[[int], Sequence[int]],
    x0: np.ndarray,
    stop: StoppingRule,
    reference: np.ndarray | None = None,
    dense_until: int = 1000,
    stride: int = 10,
) -> Trajectory:
    """Update only the components in index_sets(n) at step n; copy the rest.

    Equivalent, step by step, to ``iterate`` with the vector scheme derived
    by zeroing parameters outside the active sets; the two code paths are
    kept separate so the equivalence stays testable.
    """
    d = provider.box.dimension

    def mask_at(n):
        mask = np.zeros(d, dtype=bool)
        active = list(index_sets(n))
        if active:
            mask[np.asarray(active, dtype=int)] = True
        return mask

    return _run(provider, vscheme.at, x0, stop, reference, dense_until, stride, mask_at=mask_at)


def random_chaotic_iterate(
    provider: OperatorProvider,
    base: Scheme,
    rng_seed,
    x0: np.ndarray,
    stop: StoppingRule,
    reference: np.ndarray | None = None,
    dense_until: int = 1000,
    stride: int = 10,
) -> Trajectory:
    """Update one uniformly chosen component per step with local parameters.

    Each component keeps its own counter into the base scheme's sequences,
    advanced only when that component is selected.  Runs are reproducible
    given the seed.
    """
    d = provider.box.dimension
    rng = np.random.default_rng(rng_seed)
    selections: list[int] = []

    def index_sets(n):
        while len(selections) <= n:
            selections.append(int(rng.integers(d)))
        return [selections[n]]

    derived = DerivedChaoticScheme(base, index_sets, d)
    traj = _run(
        provider, derived.at, x0, stop, reference, dense_until, stride,
        mask_at=lambda n: _single_mask(d, index_sets(n)[0]),
        selected_log=selections,
    )
    return traj


def _single_mask(d, j):
    mask = np.zeros(d, dtype=bool)
    mask[j] = True
    return mask


def clamp_extend(f: Callable[[np.ndarray], np.ndarray], x_star: np.ndarray) -> Operator:
    """Extend an operator on {0 <= x <= x_star} to all of the orthant.

    The extension first clamps the argument into the box and then applies f;
    it agrees with f on the box and preserves monotonicity and
    non-expansiveness.
    """
    bound = np.asarray(x_star, dtype=float)
    box = ZeroBox.unbounded(len(bound))

    def extended(x):
        return f(np.minimum(np.asarray(x, dtype=float), bound))

    return Operator(func=extended, box=box)


class KleeneResult(NamedTuple):
    value: np.ndarray
    converged: bool
    steps: int


def kleene_iterate(f: Operator, stop: StoppingRule) -> KleeneResult:
    """Plain fixpoint iteration x_{n+1} = f(x_n) from x_0 = 0.

    Converged means the sup-norm change dropped below the rule's threshold
    before max_steps applications.
    """
    if stop.change_threshold is None or stop.max_steps is None:
        raise ValueError("kleene iteration needs both max_steps and change_threshold")
    x = np.zeros(f.dimension)
    for n in range(1, stop.max_steps + 1):
        x_next = np.asarray(f(x), dtype=float)
        if sup_norm(x_next - x) < stop.change_threshold:
            return KleeneResult(x_next, True, n)
        x = x_next
    return KleeneResult(x, False, stop.max_steps)
