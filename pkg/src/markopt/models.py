"""Score models.

Each model assigns a per-point score to a fully marked configuration; the
window total divided by volume is the quantity the optimization drives up.
Scores live in R plus -inf for inadmissible local patterns, and every model
declares a sign regime: "nonneg" scores lie in [0, inf) and "nonpos" in
(-inf, 0], always excluding NaN and +inf.

The model objects also expose the metadata the search and estimation layers
need: the neutral mark (scores 0 itself and never affects the others), the
mark space (finite candidate lists or continuous proposal rules), a superset
of points whose scores a mark change can touch, and default base mark
samplers for the generation pipeline.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    GEOM_TOL,
    NEG_INF,
    AccessProb,
    BaseSampler,
    ColorMark,
    Configuration,
    GrainRadius,
    ItemSet,
    MarkSpaceError,
    MarkedPoint,
    OptMark,
    PartnerIndex,
    RadiusMark,
    ReceiverOffset,
    Retain,
    SignMark,
    ValidationError,
    WeightPair,
    Window,
    color_sampler,
    grain_radius_sampler,
    graph_neighbors,
    receiver_offset_sampler,
    torus_distance,
    weight_pair_sampler,
    wrap_position,
)


def _opt_mark(c: Configuration, i: int, cls: type) -> OptMark:
    mark = c.points[i].opt
    if mark is None:
        raise MarkSpaceError(f"point {i} has no opt mark assigned")
    if not isinstance(mark, cls):
        raise MarkSpaceError(
            f"point {i} carries {type(mark).__name__}, model needs {cls.__name__}"
        )
    return mark


def _base_mark(c: Configuration, i: int, cls: type):
    mark = c.points[i].base
    if not isinstance(mark, cls):
        raise MarkSpaceError(
            f"point {i} carries base {type(mark).__name__}, model needs {cls.__name__}"
        )
    return mark


# ---------------------------------------------------------------------------
# hard-core thinning


def grain_volume(dim: int, radius: float) -> float:
    if dim == 1:
        return 2.0 * radius
    if dim == 2:
        return math.pi * radius * radius
    raise ValidationError(f"hard-core grains support dim 1 or 2, got {dim}")


def hardcore_score_at(c: Configuration, i: int) -> float:
    """Grain volume if retained and interior-disjoint from all other retained
    grains, 0 if deleted (even when overlapping), -inf on a retained overlap.

    Interiors are open, so grains that exactly touch are admissible.
    """
    if not _opt_mark(c, i, Retain).keep:
        return 0.0
    p = c.points[i]
    r_i = _base_mark(c, i, GrainRadius).radius
    w = c.window
    for j, q in enumerate(c.points):
        if j == i or not _opt_mark(c, j, Retain).keep:
            continue
        r_j = _base_mark(c, j, GrainRadius).radius
        if torus_distance(w, p.position, q.position) < r_i + r_j - GEOM_TOL:
            return NEG_INF
    return grain_volume(w.dim, r_i)


# ---------------------------------------------------------------------------
# Widom-Rowlinson on graphs


def _wr_score_at(c: Configuration, i: int) -> float:
    sign = _opt_mark(c, i, SignMark).sign
    if sign == "0":
        return 0.0
    opposite = "-" if sign == "+" else "+"
    for j in graph_neighbors(c.window, i):
        if _opt_mark(c, j, SignMark).sign == opposite:
            return NEG_INF
    weights = _base_mark(c, i, WeightPair)
    return weights.w_plus if sign == "+" else weights.w_minus


def wr_line_score_at(c: Configuration, i: int) -> float:
    """Sign 0 scores 0, signs +/- score their weight unless a line neighbor
    carries the opposite sign, which is inadmissible."""
    if c.window.kind != "line":
        raise ValidationError("wr_line_score_at needs a line window")
    return _wr_score_at(c, i)


def wr_tree_score_at(c: Configuration, i: int) -> float:
    if c.window.kind != "tree":
        raise ValidationError("wr_tree_score_at needs a tree window")
    return _wr_score_at(c, i)


# ---------------------------------------------------------------------------
# lilypond growth


def lilypond_constraint(c: Configuration, i: int, j: int) -> float:
    """Largest radius of point i compatible with point j's ball: the midpoint
    distance while j is no larger, else the distance minus j's radius."""
    d = torus_distance(c.window, c.points[i].position, c.points[j].position)
    r_j = _opt_mark(c, j, RadiusMark).radius
    return max(0.5 * d, d - r_j)


def lilypond_score_at(c: Configuration, i: int) -> float:
    """Own radius minus the tightest constraint over the other points; -inf
    once the radius exceeds that constraint.  A single point scores 0."""
    r_i = _opt_mark(c, i, RadiusMark).radius
    if c.n_points == 1:
        return 0.0
    tightest = min(lilypond_constraint(c, i, j) for j in range(c.n_points) if j != i)
    if r_i <= tightest + GEOM_TOL:
        return r_i - tightest
    return NEG_INF


# ---------------------------------------------------------------------------
# Aloha medium access


def aloha_receiver(c: Configuration, i: int) -> tuple[float, ...]:
    offset = _base_mark(c, i, ReceiverOffset).offset
    pos = c.points[i].position
    return wrap_position(c.window, tuple(a + b for a, b in zip(pos, offset)))


def aloha_score_at(c: Configuration, i: int, beta: float) -> float:
    """Log throughput of link i: own log access probability plus the log
    success factors of all interferers at i's receiver."""
    if beta <= c.window.dim:
        raise ValidationError(f"aloha needs beta > dim, got beta={beta}, dim={c.window.dim}")
    p_i = _opt_mark(c, i, AccessProb).prob
    receiver = aloha_receiver(c, i)
    acc = math.log(p_i)
    for j in range(c.n_points):
        if j == i:
            continue
        p_j = _opt_mark(c, j, AccessProb).prob
        d = torus_distance(c.window, c.points[j].position, receiver)
        x = p_j / (1.0 + d**beta)
        if x >= 1.0:
            return NEG_INF
        acc += math.log1p(-x)
    return acc


# ---------------------------------------------------------------------------
# caching


def caching_score_at(
    c: Configuration,
    i: int,
    popularity: tuple[float, ...],
    k_items: int,
    resolution: float | None = None,
) -> float:
    """Popularity-weighted coverage of cache i's ball, where every covered
    location splits each stored item's credit evenly among the caches that
    hold it there.

    Exact interval sweep in dimension 1; grid quadrature at the given
    resolution (default: smallest grain radius / 20) in dimension 2.
    """
    items = _opt_mark(c, i, ItemSet).items
    if len(items) != k_items:
        raise MarkSpaceError(f"point {i} stores {len(items)} items, model needs {k_items}")
    n_items = len(popularity)
    if items and items[-1] > n_items:
        raise MarkSpaceError(f"point {i} stores item {items[-1]} > catalogue size {n_items}")
    _base_mark(c, i, GrainRadius)
    if c.window.dim == 1:
        return _caching_score_1d(c, i, popularity, items)
    if c.window.dim == 2:
        return _caching_score_2d(c, i, popularity, items, resolution)
    raise ValidationError(f"caching supports dim 1 or 2, got {c.window.dim}")


def _caching_score_1d(
    c: Configuration, i: int, popularity: tuple[float, ...], items: tuple[int, ...]
) -> float:
    side = c.window.side
    x_i = c.points[i].position[0]
    r_i = c.points[i].base.radius
    ball_len = min(2.0 * r_i, side)
    start = (x_i - r_i) % side
    total = 0.0
    for k in items:
        # coverage pieces of item k inside the ball, in ball-local coordinates
        pieces: list[tuple[float, float]] = []
        cuts = {0.0, ball_len}
        for j, q in enumerate(c.points):
            if k not in _opt_mark(c, j, ItemSet).items:
                continue
            r_j = _base_mark(c, j, GrainRadius).radius
            width = min(2.0 * r_j, side)
            s = ((q.position[0] - r_j) - start) % side
            for lo, hi in ((s, s + width), (s - side, s + width - side)):
                lo, hi = max(lo, 0.0), min(hi, ball_len)
                if hi > lo:
                    pieces.append((lo, hi))
                    cuts.add(lo)
                    cuts.add(hi)
        xs = sorted(cuts)
        weight = popularity[k - 1]
        for lo, hi in zip(xs, xs[1:]):
            mid = 0.5 * (lo + hi)
            n_k = sum(1 for plo, phi in pieces if plo <= mid <= phi)
            if n_k:
                total += weight * (hi - lo) / n_k
    return total


def _caching_score_2d(
    c: Configuration,
    i: int,
    popularity: tuple[float, ...],
    items: tuple[int, ...],
    resolution: float | None,
) -> float:
    side = c.window.side
    radii = np.array([_base_mark(c, j, GrainRadius).radius for j in range(c.n_points)])
    if resolution is None:
        resolution = float(radii.min()) / 20.0
    x_i = np.asarray(c.points[i].position)
    r_i = radii[i]
    m = max(1, math.ceil(2.0 * r_i / resolution))
    axis = x_i[None, :] - r_i + (np.arange(m)[:, None] + 0.5) * resolution
    gx, gy = np.meshgrid(axis[:, 0], axis[:, 1], indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1) % side
    delta = np.abs(grid[:, None, :] - np.array([p.position for p in c.points])[None, :, :])
    delta = np.minimum(delta, side - delta)
    dist = np.sqrt((delta**2).sum(axis=2))
    covered = dist <= radii[None, :]
    inside = covered[:, i]
    total = 0.0
    cell = resolution * resolution
    for k in items:
        holders = np.array([k in c.points[j].opt.items for j in range(c.n_points)])
        n_k = (covered[inside][:, holders]).sum(axis=1)
        total += popularity[k - 1] * cell * (1.0 / n_k).sum()
    return float(total)


# ---------------------------------------------------------------------------
# mutual nearest matching


def matching_score_at(c: Configuration, i: int) -> float:
    """Minus the torus distance to the designated partner when the pairing is
    reciprocal and joins opposite colors, -inf otherwise (including partner
    indices that fall outside the configuration)."""
    idx = _opt_mark(c, i, PartnerIndex).index
    if not 0 <= idx < c.n_points or idx == i:
        return NEG_INF
    own = _base_mark(c, i, ColorMark).color
    other = _base_mark(c, idx, ColorMark).color
    if own == other:
        return NEG_INF
    back = c.points[idx].opt
    if not isinstance(back, PartnerIndex) or back.index != i:
        return NEG_INF
    return -torus_distance(c.window, c.points[i].position, c.points[idx].position)


# ---------------------------------------------------------------------------
# model objects


@dataclass(frozen=True)
class ScoreModel:
    """Shared behavior; concrete models override the hooks they support."""

    kind: str = field(init=False, default="")
    sign_regime: str = field(init=False, default="nonneg")

    def score_at(self, c: Configuration, i: int) -> float:
        raise NotImplementedError

    def checked_score_at(self, c: Configuration, i: int) -> float:
        v = self.score_at(c, i)
        if math.isnan(v) or v == math.inf:
            raise AssertionError(f"{self.kind} produced score {v!r}")
        if self.sign_regime == "nonneg":
            assert v >= 0.0 or v == NEG_INF, f"{self.kind} broke its sign regime: {v}"
        else:
            assert v <= 0.0, f"{self.kind} broke its sign regime: {v}"
        return v

    def neutral_mark(self) -> OptMark | None:
        return None

    def mark_candidates(self, c: Configuration, i: int) -> tuple[OptMark, ...] | None:
        """Finite candidate list in deterministic order, or None if continuous."""
        return None

    def sample_mark(self, c: Configuration, i: int, g: np.random.Generator) -> OptMark:
        raise NotImplementedError

    def perturb_mark(
        self, c: Configuration, i: int, current: OptMark, g: np.random.Generator
    ) -> OptMark:
        return self.sample_mark(c, i, g)

    def affected_points(self, c: Configuration, changed: tuple[int, ...]) -> tuple[int, ...]:
        """Superset of points whose score can move when the given marks change."""
        return tuple(range(c.n_points))

    def default_base_sampler(self, window: Window) -> BaseSampler | None:
        return None

    def validate_for_window(self, window: Window) -> None:
        pass

    def stabilization_radius(self, c: Configuration, i: int, epsilon: float) -> float:
        from .core import UnsupportedModelError

        raise UnsupportedModelError(f"{self.kind} has no stabilization radius")


def _graph_affected(c: Configuration, changed: tuple[int, ...]) -> tuple[int, ...]:
    out = set(changed)
    for i in changed:
        out.update(graph_neighbors(c.window, i))
    return tuple(sorted(out))


@dataclass(frozen=True)
class HardcoreModel(ScoreModel):
    radius_lo: float = 0.05
    radius_hi: float = 0.15

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", "hardcore")
        object.__setattr__(self, "sign_regime", "nonneg")

    def score_at(self, c: Configuration, i: int) -> float:
        return hardcore_score_at(c, i)

    def neutral_mark(self) -> OptMark:
        return Retain(False)

    def mark_candidates(self, c: Configuration, i: int) -> tuple[OptMark, ...]:
        return (Retain(False), Retain(True))

    def sample_mark(self, c: Configuration, i: int, g: np.random.Generator) -> OptMark:
        return Retain(bool(g.integers(0, 2)))

    def affected_points(self, c: Configuration, changed: tuple[int, ...]) -> tuple[int, ...]:
        out = set(changed)
        w = c.window
        for i in changed:
            r_i = c.points[i].base.radius
            for j in range(c.n_points):
                if j in out:
                    continue
                r_j = c.points[j].base.radius
                d = torus_distance(w, c.points[i].position, c.points[j].position)
                if d < r_i + r_j + GEOM_TOL:
                    out.add(j)
        return tuple(sorted(out))

    def default_base_sampler(self, window: Window) -> BaseSampler:
        return grain_radius_sampler(self.radius_lo, self.radius_hi)

    def validate_for_window(self, window: Window) -> None:
        if window.kind != "cube" or window.dim not in (1, 2):
            raise ValidationError("hardcore needs a cube window of dim 1 or 2")

    def stabilization_radius(self, c: Configuration, i: int, epsilon: float) -> float:
        from .estimate import hardcore_stab_radius

        return hardcore_stab_radius(c, i)


@dataclass(frozen=True)
class WidomRowlinsonModel(ScoreModel):
    graph: str = "line"  # "line" or "tree"
    weight_lo: float = 0.0
    weight_hi: float = 1.0

    def __post_init__(self) -> None:
        if self.graph not in ("line", "tree"):
            raise ValidationError(f"graph must be line or tree, got {self.graph!r}")
        object.__setattr__(self, "kind", f"wr_{self.graph}")
        object.__setattr__(self, "sign_regime", "nonneg")

    def score_at(self, c: Configuration, i: int) -> float:
        return wr_line_score_at(c, i) if self.graph == "line" else wr_tree_score_at(c, i)

    def mark_candidates(self, c: Configuration, i: int) -> tuple[OptMark, ...]:
        return (SignMark("0"), SignMark("+"), SignMark("-"))

    def sample_mark(self, c: Configuration, i: int, g: np.random.Generator) -> OptMark:
        return SignMark(("0", "+", "-")[int(g.integers(0, 3))])

    def affected_points(self, c: Configuration, changed: tuple[int, ...]) -> tuple[int, ...]:
        return _graph_affected(c, changed)

    def default_base_sampler(self, window: Window) -> BaseSampler:
        return weight_pair_sampler(self.weight_lo, self.weight_hi)

    def validate_for_window(self, window: Window) -> None:
        if window.kind != self.graph:
            raise ValidationError(f"{self.kind} needs a {self.graph} window")

    def stabilization_radius(self, c: Configuration, i: int, epsilon: float) -> float:
        # signs interact through single edges only
        return 1.0


@dataclass(frozen=True)
class LilypondModel(ScoreModel):
    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", "lilypond")
        object.__setattr__(self, "sign_regime", "nonpos")

    def score_at(self, c: Configuration, i: int) -> float:
        return lilypond_score_at(c, i)

    def sample_mark(self, c: Configuration, i: int, g: np.random.Generator) -> OptMark:
        return RadiusMark(float(g.uniform(0.0, c.window.side / 2.0)))

    def perturb_mark(
        self, c: Configuration, i: int, current: OptMark, g: np.random.Generator
    ) -> OptMark:
        if g.random() < 0.5:
            return RadiusMark(abs(current.radius + float(g.normal(0.0, c.window.side / 20.0))))
        return self.sample_mark(c, i, g)

    def validate_for_window(self, window: Window) -> None:
        if window.kind != "cube":
            raise ValidationError("lilypond needs a cube window")

    def stabilization_radius(self, c: Configuration, i: int, epsilon: float) -> float:
        # nearest-neighbor balls bound the direct interaction range
        w = c.window
        n = c.n_points
        if n < 2:
            return 0.0
        pos_i = c.points[i].position
        nn = [
            min(
                torus_distance(w, c.points[a].position, c.points[b].position)
                for b in range(n)
                if b != a
            )
            for a in range(n)
        ]
        out = 0.0
        for j in range(n):
            if j == i:
                continue
            if torus_distance(w, pos_i, c.points[j].position) < nn[i] + nn[j] + GEOM_TOL:
                d = max(
                    abs_wrapped
                    for abs_wrapped in _linf_delta(w, pos_i, c.points[j].position)
                )
                out = max(out, 2.0 * d)
        return out


def _linf_delta(w: Window, x, y):
    side = w.side
    return [min(abs(a - b), side - abs(a - b)) for a, b in zip(x, y)]


@dataclass(frozen=True)
class AlohaModel(ScoreModel):
    beta: float = 4.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", "aloha")
        object.__setattr__(self, "sign_regime", "nonpos")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValidationError(f"beta must be positive, got {self.beta}")

    def score_at(self, c: Configuration, i: int) -> float:
        return aloha_score_at(c, i, self.beta)

    def sample_mark(self, c: Configuration, i: int, g: np.random.Generator) -> OptMark:
        return AccessProb(1.0 - float(g.random()))

    def perturb_mark(
        self, c: Configuration, i: int, current: OptMark, g: np.random.Generator
    ) -> OptMark:
        if g.random() < 0.5:
            p = current.prob + float(g.normal(0.0, 0.1))
            p = abs(p)
            if p > 1.0:
                p = 2.0 - p
            return AccessProb(min(1.0, max(1e-12, p)))
        return self.sample_mark(c, i, g)

    def default_base_sampler(self, window: Window) -> BaseSampler:
        return receiver_offset_sampler(window.dim)

    def validate_for_window(self, window: Window) -> None:
        if window.kind != "cube":
            raise ValidationError("aloha needs a cube window")
        if self.beta <= window.dim:
            raise ValidationError(
                f"aloha needs beta > dim for summable interference, got beta={self.beta}, dim={window.dim}"
            )

    def stabilization_radius(self, c: Configuration, i: int, epsilon: float) -> float:
        from .estimate import aloha_stab_radii

        internal, external = aloha_stab_radii(c, i, epsilon, self.beta)
        return max(internal, external)


@dataclass(frozen=True)
class CachingModel(ScoreModel):
    popularity: tuple[float, ...] = (0.5, 0.3, 0.2)
    k_items: int = 1
    reserve_neutral: bool = False
    radius_lo: float = 0.5
    radius_hi: float = 1.5
    resolution: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", "caching")
        object.__setattr__(self, "sign_regime", "nonneg")
        pop = tuple(float(p) for p in self.popularity)
        if self.reserve_neutral:
            # reserve k_items zero-popularity items at the top of the catalogue
            pop = pop + (0.0,) * self.k_items
        object.__setattr__(self, "popularity", pop)
        if any(p < 0.0 for p in pop):
            raise ValidationError("popularities must be >= 0")
        if abs(sum(pop) - 1.0) > 1e-9:
            raise ValidationError(f"popularities must sum to 1, got {sum(pop)}")
        if not 1 <= self.k_items <= len(pop):
            raise ValidationError(
                f"cache size must be in [1, {len(pop)}], got {self.k_items}"
            )

    @property
    def n_items(self) -> int:
        return len(self.popularity)

    def score_at(self, c: Configuration, i: int) -> float:
        return caching_score_at(c, i, self.popularity, self.k_items, self.resolution)

    def neutral_mark(self) -> OptMark | None:
        """Cache of zero-popularity items, when the catalogue has enough of
        them; otherwise the model has no neutral mark and returns None."""
        zeros = [k + 1 for k, p in enumerate(self.popularity) if p == 0.0]
        if len(zeros) < self.k_items:
            return None
        return ItemSet(tuple(zeros[-self.k_items :]))

    def mark_candidates(self, c: Configuration, i: int) -> tuple[OptMark, ...]:
        return tuple(
            ItemSet(combo)
            for combo in itertools.combinations(range(1, self.n_items + 1), self.k_items)
        )

    def sample_mark(self, c: Configuration, i: int, g: np.random.Generator) -> OptMark:
        picked = g.choice(self.n_items, size=self.k_items, replace=False)
        return ItemSet(tuple(sorted(int(k) + 1 for k in picked)))

    def affected_points(self, c: Configuration, changed: tuple[int, ...]) -> tuple[int, ...]:
        out = set(changed)
        w = c.window
        for i in changed:
            r_i = c.points[i].base.radius
            for j in range(c.n_points):
                if j in out:
                    continue
                r_j = c.points[j].base.radius
                if torus_distance(w, c.points[i].position, c.points[j].position) <= r_i + r_j + GEOM_TOL:
                    out.add(j)
        return tuple(sorted(out))

    def default_base_sampler(self, window: Window) -> BaseSampler:
        return grain_radius_sampler(self.radius_lo, self.radius_hi)

    def validate_for_window(self, window: Window) -> None:
        if window.kind != "cube" or window.dim not in (1, 2):
            raise ValidationError("caching needs a cube window of dim 1 or 2")

    def stabilization_radius(self, c: Configuration, i: int, epsilon: float) -> float:
        w = c.window
        r_i = c.points[i].base.radius
        out = 0.0
        for j in range(c.n_points):
            if j == i:
                continue
            r_j = c.points[j].base.radius
            if torus_distance(w, c.points[i].position, c.points[j].position) <= r_i + r_j + GEOM_TOL:
                d = max(_linf_delta(w, c.points[i].position, c.points[j].position))
                out = max(out, 2.0 * d)
        return out


@dataclass(frozen=True)
class MatchingModel(ScoreModel):
    p_blue: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", "matching")
        object.__setattr__(self, "sign_regime", "nonpos")

    def score_at(self, c: Configuration, i: int) -> float:
        return matching_score_at(c, i)

    def mark_candidates(self, c: Configuration, i: int) -> tuple[OptMark, ...]:
        own = _base_mark(c, i, ColorMark).color
        return tuple(
            PartnerIndex(j)
            for j in range(c.n_points)
            if j != i and _base_mark(c, j, ColorMark).color != own
        )

    def sample_mark(self, c: Configuration, i: int, g: np.random.Generator) -> OptMark:
        candidates = self.mark_candidates(c, i)
        if not candidates:
            return PartnerIndex(-1)
        return candidates[int(g.integers(0, len(candidates)))]

    def affected_points(self, c: Configuration, changed: tuple[int, ...]) -> tuple[int, ...]:
        out = set(changed)
        for j in range(c.n_points):
            mark = c.points[j].opt
            if isinstance(mark, PartnerIndex) and mark.index in out:
                out.add(j)
        return tuple(sorted(out))

    def default_base_sampler(self, window: Window) -> BaseSampler:
        return color_sampler(self.p_blue)

    def validate_for_window(self, window: Window) -> None:
        if window.kind != "cube":
            raise ValidationError("matching needs a cube window")

    def stabilization_radius(self, c: Configuration, i: int, epsilon: float) -> float:
        from .core import UnsupportedModelError

        raise UnsupportedModelError("matching does not stabilize externally")


MODEL_KINDS = ("hardcore", "wr_line", "wr_tree", "lilypond", "aloha", "caching", "matching")


def build_model(kind: str, **params) -> ScoreModel:
    """Construct a model from its id and keyword parameters."""
    if kind == "hardcore":
        return HardcoreModel(**params)
    if kind == "wr_line":
        return WidomRowlinsonModel(graph="line", **params)
    if kind == "wr_tree":
        return WidomRowlinsonModel(graph="tree", **params)
    if kind == "lilypond":
        return LilypondModel(**params)
    if kind == "aloha":
        return AlohaModel(**params)
    if kind == "caching":
        if "popularity" in params:
            params = dict(params)
            params["popularity"] = tuple(params["popularity"])
        return CachingModel(**params)
    if kind == "matching":
        return MatchingModel(**params)
    raise ValidationError(f"unknown model kind {kind!r}")


def validate_marked_configuration(c: Configuration, model: ScoreModel) -> None:
    """Window compatibility plus one checked score per point."""
    model.validate_for_window(c.window)
    if c.model_id != model.kind:
        raise ValidationError(f"configuration is for {c.model_id!r}, model is {model.kind!r}")
    for i in range(c.n_points):
        model.checked_score_at(c, i)
