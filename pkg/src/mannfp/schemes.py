"""Parameter-sequence families for dampened Mann iteration.

A scheme is a pair of sequences (alpha_n, beta_n) in [0, 1): learning rates
and dampening factors.  Sequences are 0-indexed internally; families that are
written with a 1/n term evaluate the formula at index n+1, so the value at
step m equals the formula at formula-index m+1.  ``eval_params`` and
``eval_vector_params`` take the 1-based formula index to match the usual way
these families are written down.

Vector schemes carry one (alpha, beta) pair per component and are the basis
for chaotic iteration, where inactive components receive (0, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Largest parameter value we ever emit; keeps every sequence inside [0, 1)
# even where a formula (e.g. 1/n at n=1) reaches 1 exactly.
PARAM_CAP = 1.0 - 2.0**-52


@dataclass(frozen=True)
class AnalyticFlags:
    """Declared limit behaviour of a parameter sequence.

    These are declarations made at construction time, never inferred from a
    finite prefix of the sequence.
    """

    to_zero: bool
    sum_diverges: bool


class SchemeFamily:
    """One parameter sequence.  Subclasses define ``formula(n)`` for n >= 1."""

    kind: str = "abstract"
    flags = AnalyticFlags(to_zero=False, sum_diverges=False)

    def formula(self, n: int) -> float:
        raise NotImplementedError

    def value(self, n: int) -> float:
        """Value at 1-based formula index n, capped into [0, 1)."""
        if n < 1:
            raise ValueError(f"formula index must be >= 1, got {n}")
        v = self.formula(n)
        if v < 0.0:
            raise ValueError(f"{self.kind} produced negative value {v} at n={n}")
        return min(v, PARAM_CAP)

    def at(self, step: int) -> float:
        """Value at 0-based iteration step."""
        return self.value(step + 1)

    def spec(self) -> str:
        """Round-trippable textual form (see ``parse_scheme``)."""
        return self.kind

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec()}>"


class OneMinusInv(SchemeFamily):
    """alpha_n = 1 - 1/n, the learning rate tending to full Kleene updates."""

    kind = "one-minus-inv"
    flags = AnalyticFlags(to_zero=False, sum_diverges=True)

    def formula(self, n):
        return 1.0 - 1.0 / n


class Harmonic(SchemeFamily):
    """beta_n = 1/n, the canonical dampening sequence."""

    kind = "harmonic"
    flags = AnalyticFlags(to_zero=True, sum_diverges=True)

    def formula(self, n):
        return 1.0 / n


class Const(SchemeFamily):
    """Constant sequence c, with c in [0, 1)."""

    kind = "const"

    def __init__(self, c: float):
        if not 0.0 <= c < 1.0:
            raise ValueError(f"constant family requires c in [0, 1), got {c}")
        self.c = float(c)
        self.flags = AnalyticFlags(to_zero=c == 0.0, sum_diverges=c > 0.0)

    def formula(self, n):
        return self.c

    def spec(self):
        return f"const:{self.c:g}"


class Zero(Const):
    """The all-zero sequence (no update / no dampening)."""

    kind = "zero"

    def __init__(self):
        super().__init__(0.0)

    def spec(self):
        return "zero"


class InvPow(SchemeFamily):
    """1/n**eps with 0 < eps < 1: a slowly vanishing sequence."""

    kind = "inv-pow"
    flags = AnalyticFlags(to_zero=True, sum_diverges=True)

    def __init__(self, eps: float):
        if not 0.0 < eps < 1.0:
            raise ValueError(f"inv-pow exponent must be in (0, 1), got {eps}")
        self.eps = float(eps)

    def formula(self, n):
        return n ** -self.eps

    def spec(self):
        return f"inv-pow:{self.eps:g}"


class UniformRandom(SchemeFamily):
    """Independent U[0,1) draws, keyed by (seed, n) via a counter-based RNG.

    Re-evaluating at the same index always yields the same value, so runs
    using this family are reproducible.
    """

    kind = "uniform"
    flags = AnalyticFlags(to_zero=False, sum_diverges=True)

    def __init__(self, seed: int):
        self.seed = int(seed)

    def formula(self, n):
        bitgen = np.random.Philox(key=self.seed, counter=n)
        return float(np.random.Generator(bitgen).random())

    def spec(self):
        return f"uniform:{self.seed}"


class _SynthCore:
    """Shared generator state for a synthesized (alpha, beta) pair.

    Level k collects the indices whose running error envelope lies in
    (2**-(k+1), 2**-k]; the first ceil(2**(k/2)) indices of each level get
    alpha = 1/2 and the rest alpha = 0.  beta = alpha / ln(2 + m) where m
    counts prior nonzero-alpha indices.  An envelope value of exactly 0 gets
    alpha = 1/2 unconditionally (the "level" is bottomless, and it no longer
    contributes to the alpha*eps budget).  Evaluation is streamed and cached
    so that lookups at arbitrary indices are deterministic.
    """

    def __init__(self, eps: Callable[[int], float]):
        self.eps = eps
        self.alphas: list[float] = []
        self.betas: list[float] = []
        self.levels: list[int | None] = []  # None encodes the zero-error level
        self._env = math.inf
        self._used: dict[int, int] = {}
        self._nonzero = 0

    def _extend_to(self, idx: int) -> None:
        while len(self.alphas) <= idx:
            i = len(self.alphas)
            e = float(self.eps(i))
            if e < 0.0 or not math.isfinite(e):
                raise ValueError(f"error bound must be finite and >= 0, got eps({i})={e}")
            self._env = min(self._env, e)
            if self._env == 0.0:
                level = None
                alpha = 0.5
            else:
                level = math.floor(-math.log2(self._env))
                budget = math.ceil(2.0 ** (level / 2.0))
                if self._used.get(level, 0) < budget:
                    self._used[level] = self._used.get(level, 0) + 1
                    alpha = 0.5
                else:
                    alpha = 0.0
            if alpha > 0.0:
                beta = alpha / math.log(2.0 + self._nonzero)
                self._nonzero += 1
            else:
                beta = 0.0
            self.alphas.append(alpha)
            self.betas.append(min(beta, PARAM_CAP))
            self.levels.append(level)

    def alpha_at(self, idx: int) -> float:
        self._extend_to(idx)
        return self.alphas[idx]

    def beta_at(self, idx: int) -> float:
        self._extend_to(idx)
        return self.betas[idx]

    def entered_levels(self, upto: int) -> list[int]:
        """Finite levels entered among indices 0..upto-1."""
        self._extend_to(max(upto - 1, 0))
        return sorted({k for k in self.levels[:upto] if k is not None})


class _SynthFamily(SchemeFamily):
    kind = "synth"

    def __init__(self, core: _SynthCore, which: str):
        self.core = core
        self.which = which
        if which == "alpha":
            self.flags = AnalyticFlags(to_zero=False, sum_diverges=True)
        else:
            self.flags = AnalyticFlags(to_zero=True, sum_diverges=True)

    def formula(self, n):
        idx = n - 1
        return self.core.alpha_at(idx) if self.which == "alpha" else self.core.beta_at(idx)


@dataclass(frozen=True)
class Scheme:
    """A (dampened) Mann scheme: learning rates alpha and dampening betas.

    ``progressing`` declares whether beta_n -> 0, sum beta_n = inf and
    beta_n/alpha_n -> 0 all hold; it is derived from the family kinds when
    not given explicitly.
    """

    alpha: SchemeFamily
    beta: SchemeFamily
    progressing: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.progressing is None:
            object.__setattr__(self, "progressing", _derive_progressing(self.alpha, self.beta))

    def at(self, step: int) -> tuple[float, float]:
        """(alpha, beta) at 0-based iteration step."""
        return self.alpha.at(step), self.beta.at(step)

    def spec(self) -> str:
        return f"alpha={self.alpha.spec()},beta={self.beta.spec()}"


def _ratio_vanishes(alpha: SchemeFamily, beta: SchemeFamily) -> bool:
    """Whether beta_n/alpha_n -> 0 holds analytically for this family pair."""
    if isinstance(beta, Zero) or (isinstance(beta, Const) and beta.c == 0.0):
        return True  # ratio is 0/x or 0/0, both 0 by convention
    if isinstance(beta, _SynthFamily) and isinstance(alpha, _SynthFamily):
        return True  # beta/alpha = 1/ln(2+m) on the nonzero subsequence
    if isinstance(beta, Harmonic):
        if isinstance(alpha, OneMinusInv):
            return True
        if isinstance(alpha, Const) and alpha.c > 0.0:
            return True
        if isinstance(alpha, InvPow):
            return True  # ratio n**(eps-1) with eps < 1
    return False


def _derive_progressing(alpha: SchemeFamily, beta: SchemeFamily) -> bool:
    return beta.flags.to_zero and beta.flags.sum_diverges and _ratio_vanishes(alpha, beta)


def eval_params(scheme: Scheme, n: int) -> tuple[float, float]:
    """(alpha_n, beta_n) at 1-based formula index n.

    The iteration loop itself evaluates 0-based steps via ``Scheme.at``;
    this entry point exists for working with the families as written
    (e.g. beta = 1/n at n = 2 gives 0.5).
    """
    if n < 1:
        raise ValueError(f"formula index must be >= 1, got {n}")
    return scheme.alpha.value(n), scheme.beta.value(n)


def synthesize_scheme(eps: Callable[[int], float]) -> Scheme:
    """Build a progressing scheme adapted to an error-bound sequence.

    ``eps(m)`` is a nonincreasing bound on the approximation error at step m
    with eps(m) -> 0 (declared by the caller; a running monotone envelope is
    applied defensively).  The returned scheme satisfies, by construction:
    sum alpha = inf, sum alpha*eps < inf, beta/alpha -> 0 and sum beta = inf.
    Negative or non-finite eps values are rejected.
    """
    core = _SynthCore(eps)
    return Scheme(_SynthFamily(core, "alpha"), _SynthFamily(core, "beta"), progressing=True)


def synthesis_budget_bound(scheme: Scheme, upto: int) -> float:
    """Analytic bound on sum_{m<upto} alpha_m*eps(m) for a synthesized scheme.

    Sums ceil(2**(k/2)) * (1/2) * 2**-k over the finite levels actually
    entered within the first ``upto`` indices.
    """
    alpha = scheme.alpha
    if not isinstance(alpha, _SynthFamily):
        raise TypeError("budget bound is only defined for synthesized schemes")
    levels = alpha.core.entered_levels(upto)
    return sum(math.ceil(2.0 ** (k / 2.0)) * 0.5 * 2.0**-k for k in levels)


# ---------------------------------------------------------------------------
# Vector (generalized) schemes


class VectorScheme:
    """Per-component parameter sequences: step -> (alpha, beta) in [0,1)^d."""

    dimension: int

    def at(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


class PerComponentScheme(VectorScheme):
    """d independent scalar schemes, one per component."""

    def __init__(self, schemes: Sequence[Scheme]):
        if not schemes:
            raise ValueError("need at least one component scheme")
        self.schemes = list(schemes)
        self.dimension = len(self.schemes)

    @classmethod
    def broadcast(cls, scheme: Scheme, d: int) -> "PerComponentScheme":
        return cls([scheme] * d)

    def at(self, step):
        pairs = [s.at(step) for s in self.schemes]
        alpha = np.array([p[0] for p in pairs])
        beta = np.array([p[1] for p in pairs])
        return alpha, beta


class FunctionVectorScheme(VectorScheme):
    """Vector scheme defined by an explicit step -> (alpha_vec, beta_vec) map."""

    def __init__(self, fn: Callable[[int], tuple[np.ndarray, np.ndarray]], dimension: int):
        self.fn = fn
        self.dimension = dimension

    def at(self, step):
        alpha, beta = self.fn(step)
        alpha = np.minimum(np.asarray(alpha, dtype=float), PARAM_CAP)
        beta = np.minimum(np.asarray(beta, dtype=float), PARAM_CAP)
        if alpha.shape != (self.dimension,) or beta.shape != (self.dimension,):
            raise ValueError("vector scheme function returned wrong dimension")
        if (alpha < 0).any() or (beta < 0).any():
            raise ValueError("vector scheme function returned negative parameters")
        return alpha, beta


class DerivedChaoticScheme(VectorScheme):
    """Chaotic derivation of a base scheme from a sequence of index sets.

    At step n, components in ``index_sets(n)`` receive the base scheme's
    values indexed by their own update counter (number of prior active
    steps); every other component receives (0, 0).  Steps are consumed in
    order and cached, so evaluation at the same step is reproducible.
    Instances carry mutable counters and must not be shared across runs.
    """

    def __init__(self, base: Scheme, index_sets: Callable[[int], Sequence[int]], dimension: int):
        self.base = base
        self.index_sets = index_sets
        self.dimension = dimension
        self._counters = np.zeros(dimension, dtype=int)
        self._cache: list[tuple[np.ndarray, np.ndarray]] = []
        self._active: list[list[int]] = []

    def active_at(self, step: int) -> list[int]:
        self._extend_to(step)
        return self._active[step]

    def _extend_to(self, step: int) -> None:
        while len(self._cache) <= step:
            n = len(self._cache)
            active = sorted(set(self.index_sets(n)))
            alpha = np.zeros(self.dimension)
            beta = np.zeros(self.dimension)
            for j in active:
                if not 0 <= j < self.dimension:
                    raise ValueError(f"index set at step {n} contains invalid component {j}")
                a, b = self.base.at(int(self._counters[j]))
                alpha[j] = a
                beta[j] = b
                self._counters[j] += 1
            self._cache.append((alpha, beta))
            self._active.append(active)

    def at(self, step):
        self._extend_to(step)
        return self._cache[step]


def eval_vector_params(vscheme: VectorScheme, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(alpha, beta) vectors at 1-based formula index n (see ``eval_params``)."""
    if n < 1:
        raise ValueError(f"formula index must be >= 1, got {n}")
    return vscheme.at(n - 1)


# ---------------------------------------------------------------------------
# Finite-horizon diagnostics


@dataclass
class ProgressingReport:
    """Finite-prefix diagnostic for the beta/alpha ratio condition."""

    horizon: int
    ratios: np.ndarray  # beta_m/alpha_m, conventions 0/0 = 0 and x/0 = inf
    beta_sum: float
    last_decile_max_ratio: float
    alpha_flags: AnalyticFlags
    beta_flags: AnalyticFlags
    declared_progressing: bool


def progressing_diagnostic(scheme: Scheme, horizon: int) -> ProgressingReport:
    """Ratio/partial-sum diagnostics over steps 0..horizon-1.

    This inspects a finite prefix only; the analytic flags echoed in the
    report are the construction-time declarations.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ratios = np.empty(horizon)
    beta_sum = 0.0
    for m in range(horizon):
        a, b = scheme.at(m)
        beta_sum += b
        if b == 0.0:
            ratios[m] = 0.0
        elif a == 0.0:
            ratios[m] = math.inf
        else:
            ratios[m] = b / a
    tail = ratios[int(math.floor(horizon * 0.9)):]
    return ProgressingReport(
        horizon=horizon,
        ratios=ratios,
        beta_sum=beta_sum,
        last_decile_max_ratio=float(np.max(tail)),
        alpha_flags=scheme.alpha.flags,
        beta_flags=scheme.beta.flags,
        declared_progressing=scheme.progressing,
    )


@dataclass
class SweepReport:
    """Sweep structure of a vector scheme over a finite horizon.

    ``boundaries`` is the strictly increasing list m_0 = 0 < m_1 < ... of
    complete-sweep boundaries: m_{k+1} is the least m such that every
    component i has alpha_l(i) > 0 for some l in [m_k, m).  ``last_update``
    row k holds l_k(i), the last active step of component i within
    [m_k, m_{k+1}), and ``min_beta_partial_sums`` the running sums of
    min_i beta_{l_k(i)}(i).  A trailing interval that never completes within
    the horizon is reported via ``incomplete_tail``.
    """

    horizon: int
    boundaries: list[int]
    last_update: np.ndarray  # shape (k, d)
    min_beta: np.ndarray  # shape (k,)
    min_beta_partial_sums: np.ndarray  # shape (k,)
    complete: list[bool]
    incomplete_tail: bool


def sweep_analysis(vscheme: VectorScheme, horizon: int) -> SweepReport:
    """Decompose steps 0..horizon-1 into complete sweeps and sum worst betas."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    d = vscheme.dimension
    boundaries = [0]
    last_update_rows: list[np.ndarray] = []
    min_betas: list[float] = []
    last = np.full(d, -1, dtype=int)
    beta_at_last = np.zeros(d)
    for m in range(horizon):
        alpha, beta = vscheme.at(m)
        hit = np.asarray(alpha) > 0.0
        last[hit] = m
        beta_at_last[hit] = np.asarray(beta)[hit]
        if (last >= boundaries[-1]).all():
            last_update_rows.append(last.copy())
            min_betas.append(float(beta_at_last.min()))
            boundaries.append(m + 1)
    min_beta = np.array(min_betas)
    return SweepReport(
        horizon=horizon,
        boundaries=boundaries,
        last_update=(np.array(last_update_rows) if last_update_rows else np.zeros((0, d), dtype=int)),
        min_beta=min_beta,
        min_beta_partial_sums=np.cumsum(min_beta),
        complete=[True] * len(min_betas),
        incomplete_tail=boundaries[-1] < horizon,
    )


# ---------------------------------------------------------------------------
# Textual scheme specifications (shared with the command line)

_FAMILY_PARSERS: dict[str, Callable[[str | None], SchemeFamily]] = {
    "one-minus-inv": lambda p: OneMinusInv(),
    "harmonic": lambda p: Harmonic(),
    "zero": lambda p: Zero(),
    "const": lambda p: Const(float(_require_param("const", p))),
    "inv-pow": lambda p: InvPow(float(_require_param("inv-pow", p))),
    "uniform": lambda p: UniformRandom(int(_require_param("uniform", p))),
}


def _require_param(kind: str, p: str | None) -> str:
    if p is None:
        raise ValueError(f"family '{kind}' requires a parameter, e.g. '{kind}:0.5'")
    return p


def _parse_family(text: str) -> tuple[str, str | None]:
    kind, _, param = text.partition(":")
    return kind.strip(), (param.strip() or None)


def parse_scheme(spec: str) -> Scheme:
    """Parse 'alpha=<family>[:<param>],beta=<family>[:<param>]'.

    Families: one-minus-inv, const:<c>, inv-pow:<eps>, uniform:<seed>,
    harmonic, zero, synth[:<p>].  'synth' builds the synthesized scheme for
    the envelope eps(m) = 1/(m+1)**p (default p = 1) and must be used for
    alpha and beta together.
    """
    parts = dict()
    for chunk in spec.split(","):
        key, _, val = chunk.partition("=")
        key = key.strip()
        if key not in ("alpha", "beta") or not val:
            raise ValueError(f"bad scheme spec {spec!r}; expected 'alpha=...,beta=...'")
        parts[key] = val.strip()
    if set(parts) != {"alpha", "beta"}:
        raise ValueError(f"scheme spec must set both alpha and beta, got {spec!r}")

    akind, aparam = _parse_family(parts["alpha"])
    bkind, bparam = _parse_family(parts["beta"])
    if akind == "synth" or bkind == "synth":
        if akind != bkind:
            raise ValueError("'synth' must be used for alpha and beta together")
        p = float(aparam) if aparam is not None else 1.0
        return synthesize_scheme(lambda m: (m + 1.0) ** -p)
    if akind not in _FAMILY_PARSERS:
        raise ValueError(f"unknown alpha family {akind!r}")
    if bkind not in _FAMILY_PARSERS:
        raise ValueError(f"unknown beta family {bkind!r}")
    return Scheme(_FAMILY_PARSERS[akind](aparam), _FAMILY_PARSERS[bkind](bparam))
