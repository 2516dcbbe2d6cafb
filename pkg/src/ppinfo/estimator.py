"""MAP estimation of point patterns and its dependence on the constant ``c``.

The objective ``c**n * p^(n)(x_1, ..., x_n)`` is searched exhaustively over
cardinalities ``n <= n_max`` and tuples of distinct cell midpoints.  Within
one cardinality the ranking of tuples does not involve ``c``, so the best
tuple per ``n`` is found once and ``c`` only decides between slices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .measure import MAX_TUPLES, QuadratureBudgetExceeded, ReferenceMeasure, pdf
from .models import MultiBernoulliModel, PointProcessModel
from .space import PointPattern, QuadratureGrid
from .units import Quantity, mul, power, unitless

__all__ = [
    "MapEstimate",
    "SetDensityView",
    "Crossing",
    "CSensitivity",
    "map_estimate",
    "set_map_estimate",
    "c_sensitivity",
    "TIE_RTOL",
]

# scores within this relative distance of the best count as ties
TIE_RTOL = 1e-12
# bisection stops once the bracket is this tight (relative)
CROSSING_RTOL = 1e-4


@dataclass(frozen=True)
class MapEstimate:
    """The maximizing pattern with its unitless score; ``cells`` holds its cell indices."""

    pattern: PointPattern
    score: float
    c_used: Quantity
    cells: Tuple[int, ...]

    @property
    def n_hat(self) -> int:
        return len(self.pattern)


class SetDensityView:
    """``X -> n! * p^(n)(x_1, ..., x_n)`` on sets of distinct points (unit iota^-n)."""

    def __init__(self, model: PointProcessModel):
        self.model = model

    def __call__(self, points) -> Quantity:
        pattern = points if isinstance(points, PointPattern) else PointPattern(tuple(points))
        n = len(pattern)
        return Quantity(math.factorial(n), 0) * self.model.janossy(pattern)

    def at_cells(self, n: int, idx: np.ndarray) -> np.ndarray:
        return math.factorial(n) * self.model.slice_values(n, idx)


def _ties(scores: np.ndarray) -> np.ndarray:
    best = scores.max()
    return np.nonzero(scores >= best - TIE_RTOL * abs(best))[0]


def _single_product(model: PointProcessModel, n: int) -> Optional[np.ndarray]:
    """The shared factor when ``p^(n)`` is one coefficient times ``prod s(x_j)``."""
    terms = model.kernel(n)
    if len(terms) != 1 or n == 0:
        return None
    factors = terms[0][1]
    first = factors[0]
    if all(f is first or np.array_equal(f, first) for f in factors):
        return first
    return None


def _best_tuple(values_of, model: PointProcessModel, n: int) -> Tuple[float, Tuple[int, ...]]:
    """Largest slice value over distinct-cell tuples, with its lexicographically first argmax.

    ``values_of(n, idx)`` gives the objective at rows of cell indices.
    """
    size = model.lattice.size
    if n == 0:
        return float(values_of(0, None)[0]), ()
    if n > size:
        return 0.0, ()
    shared = _single_product(model, n)
    if shared is not None:
        # product of n distinct cell values: take the n largest, smaller index first on ties
        order = np.lexsort((np.arange(size), -shared))
        cells = tuple(sorted(int(i) for i in order[:n]))
        return float(values_of(n, np.asarray([cells]))[0]), cells
    if size**n > MAX_TUPLES:
        raise QuadratureBudgetExceeded(f"{size}**{n} cell tuples exceed the search budget")
    # rows of np.indices come out in lexicographic order
    idx = np.indices((size,) * n).reshape(n, -1).T
    distinct = np.all(np.diff(np.sort(idx, axis=1), axis=1) != 0, axis=1)
    idx = idx[distinct]
    scores = values_of(n, idx)
    first = int(_ties(scores)[0])
    return float(scores[first]), tuple(int(i) for i in idx[first])


def _pattern(model: PointProcessModel, cells: Tuple[int, ...]) -> PointPattern:
    mids = model.lattice.midpoints
    return PointPattern(tuple(tuple(mids[i]) for i in cells))


def _slice_bests(model, grid, values_of):
    if grid.cells != model.lattice.cells:
        raise ValueError(f"grid has {grid.cells} cells per axis, model has {model.lattice.cells}")
    return [_best_tuple(values_of, model, n) for n in range(grid.resolve_n_max(model) + 1)]


def _choose(bests, weights: Sequence[float]) -> int:
    """Index of the best weighted slice; smaller ``n`` wins ties."""
    scores = np.array([w * v for w, (v, _) in zip(weights, bests)])
    return int(_ties(scores)[0])


def _estimate(model, ref, bests, n: int) -> MapEstimate:
    cells = bests[n][1]
    pattern = _pattern(model, cells)
    return MapEstimate(pattern, pdf(model, ref, pattern), ref.c, cells)


def _c_weights(ref: ReferenceMeasure, n_count: int) -> List[float]:
    # c^n p^(n) is unitless: c^n carries iota^n against the density's iota^-n
    weights = []
    for n in range(n_count):
        weights.append(unitless(mul(power(ref.c, n), Quantity(1.0, -n))))
    return weights


def map_estimate(model: PointProcessModel, ref: ReferenceMeasure, grid: QuadratureGrid) -> MapEstimate:
    """``arg sup c**n p^(n)(x)`` over ``n <= n_max`` and distinct cell midpoints.

    Ties go to the smaller ``n``, then to the lexicographically smallest
    tuple of cell indices.
    """
    bests = _slice_bests(model, grid, model.slice_values)
    return _estimate(model, ref, bests, _choose(bests, _c_weights(ref, len(bests))))


def set_map_estimate(model: PointProcessModel, ref: ReferenceMeasure, grid: QuadratureGrid) -> MapEstimate:
    """``arg sup (c**|X| / |X|!) f(X)`` with the set density ``f(X) = n! p^(n)``.

    The factorials cancel, so the result must coincide with
    :func:`map_estimate`; this is checked on every call.
    """
    view = SetDensityView(model)
    bests = _slice_bests(model, grid, view.at_cells)
    weights = [w / math.factorial(n) for n, w in enumerate(_c_weights(ref, len(bests)))]
    est = _estimate(model, ref, bests, _choose(bests, weights))
    ordered = map_estimate(model, ref, grid)
    if est.cells != ordered.cells:
        raise AssertionError(f"set-form MAP {est.cells} differs from ordered MAP {ordered.cells}")
    return est


@dataclass(frozen=True)
class Crossing:
    """A change of MAP cardinality between two neighbouring swept ``c`` values."""

    c_low: float
    c_high: float
    c_star: float
    n_below: int
    n_above: int


@dataclass(frozen=True)
class CSensitivity:
    rows: Tuple[Tuple[float, MapEstimate], ...]
    crossings: Tuple[Crossing, ...]
    # window measure divided by the number of components (or the mean count)
    guidance_scale: float

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    @property
    def guidance_ratios(self) -> Tuple[float, ...]:
        """``c* / guidance_scale`` per crossing: a report, not a criterion."""
        return tuple(x.c_star / self.guidance_scale for x in self.crossings)


def _guidance_scale(model: PointProcessModel, grid: QuadratureGrid) -> float:
    if isinstance(model, MultiBernoulliModel):
        count = len(model.q)
    else:
        count = model.mean_cardinality(grid.resolve_n_max(model))
    return model.space.volume / count if count > 0 else math.inf


def c_sensitivity(model: PointProcessModel, grid: QuadratureGrid, c_values: Sequence[float]) -> CSensitivity:
    """MAP estimates across ``c`` and bisected cardinality crossings between neighbours."""
    cs = sorted(float(c) for c in c_values)
    if not cs or cs[0] <= 0:
        raise ValueError("c values must be positive")
    bests = _slice_bests(model, grid, model.slice_values)

    def n_hat(c: float) -> int:
        return _choose(bests, _c_weights(ReferenceMeasure.of(c), len(bests)))

    rows = tuple((c, _estimate(model, ReferenceMeasure.of(c), bests, n_hat(c))) for c in cs)
    crossings = []
    for (lo, a), (hi, b) in zip(rows, rows[1:]):
        # n_hat is non-decreasing in c, so each change inside the bracket is
        # found by bisecting for the first c that leaves the current value
        start, n_lo = lo, a.n_hat
        while n_lo != b.n_hat:
            l, h = start, hi
            while h / l - 1 > CROSSING_RTOL:
                mid = math.sqrt(l * h)
                if n_hat(mid) == n_lo:
                    l = mid
                else:
                    h = mid
            n_up = n_hat(h)
            crossings.append(Crossing(lo, hi, math.sqrt(l * h), n_lo, n_up))
            start, n_lo = h, n_up
    return CSensitivity(rows, tuple(crossings), _guidance_scale(model, grid))
