"""Swap-based local optimization of marked configurations.

A swap proposal replaces the opt marks of a set of points.  Its gain is the
sum of per-point score differences under the conventions of
``core.sum_score_diffs``: a swap that repairs an inadmissible point while
breaking none has gain +inf and is always accepted first, a swap that breaks
any point has gain -inf and is never accepted.  Search is exhaustive over
all swaps up to a size cap when the mark space is small enough to certify
the result, and randomized proposal sampling otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .core import (
    Configuration,
    NEG_INF,
    POS_INF,
    OptMark,
    ValidationError,
    Window,
    _replace_points,
    graph_neighbors,
    rng,
    score_diff,
    sum_score_diffs,
    total_score,
    torus_distance_linf,
)
from .models import ScoreModel

# stream ids for the seeded parts of the search
_INIT_STREAM = 91
_PROPOSAL_STREAM = 92


@dataclass(frozen=True)
class SwapProposal:
    """Replace the opt marks at ``indices`` (strictly increasing) by ``new_marks``."""

    indices: tuple[int, ...]
    new_marks: tuple[OptMark, ...]

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.new_marks):
            raise ValidationError("indices and new_marks must have equal length")
        if not self.indices:
            raise ValidationError("a swap must change at least one point")
        if list(self.indices) != sorted(set(self.indices)):
            raise ValidationError(f"indices must be strictly increasing, got {self.indices}")


@dataclass(frozen=True)
class SearchParams:
    k_max: int = 1  # largest swap size considered
    trial_budget: int = 1000  # proposals per round in randomized mode
    delta_min: float = 0.0  # accept only gains strictly above this
    epsilon: float = 1e-6  # influence domain tail tolerance
    max_rounds: int = 10000
    seed: int = 0
    mode: str = "auto"  # "auto" | "exhaustive" | "randomized"
    indices: tuple[int, ...] | None = None  # restrict swaps to these points

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValidationError(f"k_max must be >= 1, got {self.k_max}")
        if self.mode not in ("auto", "exhaustive", "randomized"):
            raise ValidationError(f"unknown search mode {self.mode!r}")
        if self.indices is not None:
            indices = tuple(self.indices)
            object.__setattr__(self, "indices", indices)
            if not indices or list(indices) != sorted(set(indices)):
                raise ValidationError(
                    f"indices must be nonempty and strictly increasing, got {indices}"
                )


@dataclass(frozen=True)
class TraceStep:
    round_index: int
    indices: tuple[int, ...]
    gain: float
    total_after: float


@dataclass
class SearchTrace:
    initial_total: float
    steps: list[TraceStep] = field(default_factory=list)
    certificate: str = ""
    swap_evaluations: int = 0


def total_window_score(c: Configuration, model: ScoreModel) -> float:
    """Score sum over the window; -inf as soon as any point is inadmissible."""
    return total_score(model.checked_score_at(c, i) for i in range(c.n_points))


def apply_swap(c: Configuration, swap: SwapProposal) -> Configuration:
    for i in swap.indices:
        if not 0 <= i < c.n_points:
            raise ValidationError(f"swap index {i} outside configuration of {c.n_points}")
    return c.with_opt_marks(dict(zip(swap.indices, swap.new_marks)))


def score_difference(c: Configuration, swap: SwapProposal, model: ScoreModel) -> float:
    """Gain of the swap over the current configuration."""
    after = apply_swap(c, swap)
    affected = model.affected_points(c, swap.indices)
    return sum_score_diffs(
        score_diff(model.score_at(after, j), model.score_at(c, j)) for j in affected
    )


def _before_scores(c: Configuration, model: ScoreModel) -> list[float]:
    return [model.checked_score_at(c, i) for i in range(c.n_points)]


def _gain(
    c: Configuration,
    model: ScoreModel,
    after: Configuration,
    affected: tuple[int, ...],
    before: list[float],
) -> float:
    return sum_score_diffs(
        score_diff(model.score_at(after, j), before[j]) for j in affected
    )


def _swap_pool(c: Configuration, params: SearchParams) -> tuple[int, ...]:
    if params.indices is None:
        return tuple(range(c.n_points))
    for i in params.indices:
        if not 0 <= i < c.n_points:
            raise ValidationError(f"restricted index {i} outside configuration")
    return params.indices


def exhaustive_feasible(
    c: Configuration, model: ScoreModel, indices: tuple[int, ...] | None = None
) -> bool:
    """Whether full enumeration fits the work bound used by mode "auto"."""
    pool = indices if indices is not None else tuple(range(c.n_points))
    if not pool:
        return True
    width = 0
    for i in pool:
        cand = model.mark_candidates(c, i)
        if cand is None:
            return False
        width = max(width, len(cand))
    return width ** len(pool) * len(pool) <= 10**6


def find_valid_swap(
    c: Configuration,
    model: ScoreModel,
    params: SearchParams,
    stream: int = 0,
) -> SwapProposal | None:
    """Best swap of size <= k_max with gain above delta_min, or None.

    Exhaustive mode scans every swap in deterministic order (sizes ascending,
    index tuples lexicographic, candidate marks in model order) and returns
    the highest gain, ties resolved by enumeration order.  A gain of +inf
    (repair) is returned as soon as it is seen.  Randomized mode evaluates
    trial_budget seeded proposals and keeps the best.  Swaps touch only
    params.indices when that restriction is set.
    """
    if c.n_points == 0:
        return None
    pool = _swap_pool(c, params)
    exhaustive = params.mode == "exhaustive" or (
        params.mode == "auto" and exhaustive_feasible(c, model, pool)
    )
    if exhaustive:
        return _find_swap_exhaustive(c, model, params, pool)
    return _find_swap_randomized(c, model, params, pool, stream)


def _find_swap_exhaustive(
    c: Configuration, model: ScoreModel, params: SearchParams, pool: tuple[int, ...]
) -> SwapProposal | None:
    k_max = min(params.k_max, len(pool))
    before = _before_scores(c, model)
    base_points = list(c.points)
    shared = list(c.points)
    after = _replace_points(c, shared)
    alternatives: dict[int, tuple[OptMark, ...]] = {}
    repl: dict[int, list] = {}
    for i in pool:
        cand = model.mark_candidates(c, i)
        if cand is None:
            raise ValidationError("exhaustive search needs a finite mark space")
        alts = tuple(m for m in cand if m != c.points[i].opt)
        alternatives[i] = alts
        repl[i] = [replace(c.points[i], opt=m) for m in alts]
    best_gain = params.delta_min
    best: SwapProposal | None = None
    for k in range(1, k_max + 1):
        for combo in itertools.combinations(pool, k):
            if not all(alternatives[i] for i in combo):
                continue
            affected = model.affected_points(c, combo)
            for choice in itertools.product(*(range(len(alternatives[i])) for i in combo)):
                for i, mi in zip(combo, choice):
                    shared[i] = repl[i][mi]
                gain = _gain(c, model, after, affected, before)
                for i in combo:
                    shared[i] = base_points[i]
                if gain == POS_INF:
                    return SwapProposal(
                        combo, tuple(alternatives[i][mi] for i, mi in zip(combo, choice))
                    )
                if gain > best_gain:
                    best_gain = gain
                    best = SwapProposal(
                        combo, tuple(alternatives[i][mi] for i, mi in zip(combo, choice))
                    )
    return best


def _find_swap_randomized(
    c: Configuration,
    model: ScoreModel,
    params: SearchParams,
    pool: tuple[int, ...],
    stream: int,
) -> SwapProposal | None:
    k_max = min(params.k_max, len(pool))
    g = rng(params.seed, _PROPOSAL_STREAM, stream)
    before = _before_scores(c, model)
    best_gain = params.delta_min
    best: SwapProposal | None = None
    for _ in range(params.trial_budget):
        k = int(g.integers(1, k_max + 1))
        combo = tuple(sorted(pool[int(j)] for j in g.choice(len(pool), size=k, replace=False)))
        marks = []
        for i in combo:
            cand = model.mark_candidates(c, i)
            if cand is None:
                marks.append(model.perturb_mark(c, i, c.points[i].opt, g))
            else:
                alts = [m for m in cand if m != c.points[i].opt]
                if not alts:
                    marks.append(c.points[i].opt)
                    continue
                marks.append(alts[int(g.integers(0, len(alts)))])
        swap = SwapProposal(combo, tuple(marks))
        after = apply_swap(c, swap)
        affected = model.affected_points(c, combo)
        gain = _gain(c, model, after, affected, before)
        if gain == POS_INF:
            return swap
        if gain > best_gain:
            best_gain = gain
            best = swap
    return best


def initialize_marks(
    c: Configuration, model: ScoreModel, params: SearchParams
) -> Configuration:
    """Fill unset opt marks: the neutral mark where the model has one,
    otherwise iid samples from the mark space."""
    missing = [i for i in range(c.n_points) if c.points[i].opt is None]
    if not missing:
        return c
    neutral = model.neutral_mark()
    if neutral is not None:
        return c.with_opt_marks({i: neutral for i in missing})
    g = rng(params.seed, _INIT_STREAM)
    return c.with_opt_marks({i: model.sample_mark(c, i, g) for i in missing})


def local_search(
    c: Configuration, model: ScoreModel, params: SearchParams
) -> tuple[Configuration, SearchTrace]:
    """Ascend the window score by repeatedly applying the best valid swap.

    Stops when no swap clears delta_min (certified "locally-optimal-k{k}"
    when the scan was exhaustive, "uncertified" otherwise) or when max_rounds
    is hit.  The trace records every accepted swap, its gain, and the running
    total, which is strictly increasing whenever finite.
    """
    c = initialize_marks(c, model, params)
    trace = SearchTrace(initial_total=total_window_score(c, model))
    pool = _swap_pool(c, params) if c.n_points else ()
    exhaustive = params.mode == "exhaustive" or (
        params.mode == "auto" and exhaustive_feasible(c, model, pool)
    )
    for round_index in range(params.max_rounds):
        swap = find_valid_swap(c, model, params, stream=round_index)
        if swap is None:
            trace.certificate = (
                f"locally-optimal-k{min(params.k_max, max(len(pool), 1))}"
                if exhaustive
                else "uncertified-budget-exhausted"
            )
            return c, trace
        gain = score_difference(c, swap, model)
        c = apply_swap(c, swap)
        trace.steps.append(
            TraceStep(round_index, swap.indices, gain, total_window_score(c, model))
        )
    trace.certificate = "max-rounds"
    return c, trace


# ---------------------------------------------------------------------------
# influence domains and compatible swap selection


@dataclass(frozen=True)
class InfluenceDomain:
    """Region a swap can influence: cubes on torus windows, sites on graphs.

    A cube (center, r) is the closed axis cube of side r around the center.
    """

    window: Window
    cubes: tuple[tuple[tuple[float, ...], float], ...] = ()
    sites: tuple[int, ...] = ()

    def contains_position(self, position) -> bool:
        if self.window.kind != "cube":
            return position in self.sites
        for center, r in self.cubes:
            if torus_distance_linf(self.window, center, position) <= r / 2.0:
                return True
        return False

    def intersects(self, other: "InfluenceDomain") -> bool:
        if self.window.kind != "cube":
            return bool(set(self.sites) & set(other.sites))
        for (ca, ra) in self.cubes:
            for (cb, rb) in other.cubes:
                if torus_distance_linf(self.window, ca, cb) <= (ra + rb) / 2.0:
                    return True
        return False


def influence_domain(
    c: Configuration, model: ScoreModel, swap: SwapProposal, epsilon: float
) -> InfluenceDomain:
    """Union of per-point influence regions of the changed points, with radii
    evaluated under both the old and the new marks (the larger wins)."""
    if c.window.kind != "cube":
        return InfluenceDomain(window=c.window, sites=_graph_domain(c, swap.indices))
    after = apply_swap(c, swap)
    cubes = []
    for i in swap.indices:
        r = max(
            model.stabilization_radius(c, i, epsilon),
            model.stabilization_radius(after, i, epsilon),
        )
        cubes.append((c.points[i].position, r))
    return InfluenceDomain(window=c.window, cubes=tuple(cubes))


def _graph_domain(c: Configuration, indices: tuple[int, ...]) -> tuple[int, ...]:
    out = set(indices)
    for i in indices:
        out.update(graph_neighbors(c.window, i))
    return tuple(sorted(out))


def iterate_influence_domain(
    c: Configuration, model: ScoreModel, domain: InfluenceDomain, epsilon: float
) -> InfluenceDomain:
    """Grow a domain once: add the influence region of every point inside it."""
    if c.window.kind != "cube":
        return InfluenceDomain(window=c.window, sites=_graph_domain(c, domain.sites))
    cubes = list(domain.cubes)
    for j in range(c.n_points):
        if domain.contains_position(c.points[j].position):
            r = model.stabilization_radius(c, j, epsilon)
            cubes.append((c.points[j].position, r))
    return InfluenceDomain(window=c.window, cubes=tuple(cubes))


def matern_compatible_subset(
    c: Configuration,
    model: ScoreModel,
    swaps: list[SwapProposal],
    epsilon: float,
    priorities: list[float] | None = None,
) -> list[int]:
    """Indices of a maximal compatible set of swaps.

    Conflict means the once-iterated influence domains intersect.  Swaps are
    visited in order of priority (ties by list position) and retained when
    they conflict with no previously retained swap, so every rejected swap
    conflicts with a retained one of lower priority.
    """
    if priorities is None:
        priorities = [float(k) for k in range(len(swaps))]
    if len(priorities) != len(swaps):
        raise ValidationError("need one priority per swap")
    iterated = [
        iterate_influence_domain(
            c, model, influence_domain(c, model, swap, epsilon), epsilon
        )
        for swap in swaps
    ]
    order = sorted(range(len(swaps)), key=lambda k: (priorities[k], k))
    retained: list[int] = []
    for k in order:
        if all(not iterated[k].intersects(iterated[r]) for r in retained):
            retained.append(k)
    return sorted(retained)


def apply_swaps(c: Configuration, swaps: list[SwapProposal]) -> Configuration:
    """Apply index-disjoint swaps simultaneously."""
    assignments: dict[int, OptMark] = {}
    for swap in swaps:
        for i, mark in zip(swap.indices, swap.new_marks):
            if i in assignments:
                raise ValidationError(f"swaps overlap at point {i}")
            assignments[i] = mark
    for i in assignments:
        if not 0 <= i < c.n_points:
            raise ValidationError(f"swap index {i} outside configuration")
    return c.with_opt_marks(assignments)
