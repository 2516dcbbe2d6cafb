"""Measure and integration on the space of finite point patterns.

The reference measure ``lambda_c`` weights the ``n``-point slice by
``c**-n`` so that every slice contributes a unitless amount; the density
of a process with respect to it is ``f(phi) = c**|phi| * p^(|phi|)(phi)``.

Integrals are midpoint tensor-product sums on the model's grid.  When the
integrand is a Janossy density times a product of per-point factors the
sum factors exactly into one-dimensional dot products; otherwise every
cell tuple is visited, which is only affordable for small ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .models import PointProcessModel
from .space import BaseSpace, Lattice, PointPattern, QuadratureGrid, Region, TestFunction
from .units import (
    NotUnitless,
    Quantity,
    checked_sum,
    mul,
    power,
)

__all__ = [
    "ReferenceMeasure",
    "PatternSet",
    "DensityIntegrand",
    "QuadratureBudgetExceeded",
    "lambda_c",
    "integrate",
    "pdf",
    "prob_measure",
    "slice_expectation",
    "slice_log_moments",
    "slice_power_integral",
    "slice_log_ratio",
    "AbsoluteContinuityViolation",
    "SUPPORT_FLOOR",
]

# Cell tuples with a density below this are excluded from log integrands.
SUPPORT_FLOOR = 1e-300
# Largest number of cell tuples visited by brute-force paths.
MAX_TUPLES = 4_000_000
MAX_CALLABLE_TUPLES = 250_000


class QuadratureBudgetExceeded(RuntimeError):
    pass


class AbsoluteContinuityViolation(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceMeasure:
    """The constant ``c > 0`` (unit iota) that defines ``lambda_c``."""

    c: Quantity

    def __post_init__(self):
        c = self.c if isinstance(self.c, Quantity) else Quantity(float(self.c), 1)
        if c.unit != 1:
            raise ValueError(f"c must carry unit iota^1, got iota^{c.unit}")
        if not c.value > 0:
            raise ValueError(f"c must be positive, got {c.value!r}")
        object.__setattr__(self, "c", c)

    @classmethod
    def of(cls, value: float) -> "ReferenceMeasure":
        return cls(Quantity(value, 1))

    @property
    def value(self) -> float:
        return self.c.value

    def convert(self, k: float) -> "ReferenceMeasure":
        return ReferenceMeasure(Quantity(self.c.value * float(k), 1))


@dataclass(frozen=True)
class PatternSet:
    """A measurable set of patterns given slice by slice.

    ``slices[n]`` is the product ``B_1 x ... x B_n`` of the ``n``-point
    slice.  ``unbounded=True`` adds the full slice ``X^n`` for every
    ``n >= 1`` not listed explicitly (``whole`` builds all of ``X^inf``).
    """

    space: BaseSpace
    slices: Dict[int, Tuple[Region, ...]] = field(default_factory=dict)
    contains_empty: bool = False
    unbounded: bool = False

    def __post_init__(self):
        clean = {}
        for n, regions in self.slices.items():
            regions = tuple(regions)
            if n < 1 or len(regions) != n:
                raise ValueError(f"slice {n} needs exactly {n} regions, got {len(regions)}")
            for r in regions:
                r.check_inside(self.space)
            clean[int(n)] = regions
        object.__setattr__(self, "slices", dict(sorted(clean.items())))

    @classmethod
    def whole(cls, space: BaseSpace) -> "PatternSet":
        return cls(space, {}, True, True)

    @classmethod
    def empty_pattern(cls, space: BaseSpace) -> "PatternSet":
        return cls(space, {}, True, False)

    @classmethod
    def product(cls, space: BaseSpace, *regions: Region, with_empty: bool = False) -> "PatternSet":
        return cls(space, {len(regions): tuple(regions)}, with_empty, False)

    @classmethod
    def full_slice(cls, space: BaseSpace, n: int) -> "PatternSet":
        full = Region.full(space)
        return cls(space, {n: (full,) * n}, False, False)

    def regions(self, n: int) -> Optional[Tuple[Region, ...]]:
        if n in self.slices:
            return self.slices[n]
        if self.unbounded and n >= 1:
            return (Region.full(self.space),) * n
        return None

    def cardinalities(self, n_max: int) -> Iterable[int]:
        if self.unbounded:
            return [n for n in range(1, n_max + 1)]
        return [n for n in self.slices if n <= n_max]

    def convert(self, k: float) -> "PatternSet":
        return PatternSet(
            self.space.convert(k),
            {n: tuple(r.convert(k) for r in rs) for n, rs in self.slices.items()},
            self.contains_empty,
            self.unbounded,
        )


def _check_unitless(q: Quantity) -> float:
    if q.unit != 0:
        raise NotUnitless(q.unit)
    return q.value


def lambda_c(B: PatternSet, ref: ReferenceMeasure) -> float:
    """Reference measure of ``B``; ``math.inf`` flags an infinite value."""
    terms = [Quantity(1.0 if B.contains_empty else 0.0)]
    for n, regions in B.slices.items():
        vol = Quantity(1.0)
        for r in regions:
            vol = mul(vol, r.measure(B.space))
        terms.append(mul(vol, power(ref.c, -n)))
    total = _check_unitless(checked_sum(terms))
    if B.unbounded:
        ratio = _check_unitless(mul(B.space.measure, power(ref.c, -1)))
        if ratio >= 1:
            return math.inf
        # geometric tail over the slices not listed explicitly
        tail = ratio / (1.0 - ratio) - sum(ratio**n for n in B.slices)
        total += tail
    return total


class DensityIntegrand:
    """``g(phi) = scale**|phi| * p^(|phi|)(phi) * prod_i h(x_i)``.

    With ``scale=c`` this is the density ``f`` of the process; with no
    scale it is the Janossy density itself (unit ``iota**-n``).
    """

    def __init__(self, model: PointProcessModel, scale: Optional[Quantity] = None, h=None):
        self.model = model
        self.scale = scale
        if h is None:
            self.h = None
        elif isinstance(h, TestFunction):
            self.h = h.values
        else:
            self.h = np.broadcast_to(np.asarray(h, dtype=float), (model.lattice.size,))

    def unit(self, n: int) -> Fraction:
        scale_unit = self.scale.unit if self.scale is not None else 0
        return Fraction(n * scale_unit - n)

    def __call__(self, pattern: PointPattern) -> Quantity:
        q = self.model.janossy(pattern)
        if self.h is not None and len(pattern):
            idx = self.model.lattice.locate(pattern.as_array(self.model.lattice.dimension))
            q = mul(q, Quantity(float(np.prod(self.h[idx]))))
        if self.scale is not None:
            q = mul(power(self.scale, len(pattern)), q)
        return q

    def slice_integral(self, n: int, weights: Sequence[np.ndarray]) -> float:
        """``int_{B_1 x ... x B_n} g dx`` with per-point cell weights (coverage)."""
        lat = self.model.lattice
        factor = 1.0 if self.scale is None else self.scale.value**n
        dots: Dict[Tuple[int, int], float] = {}
        total = 0.0
        for coef, factors in self.model.kernel(n):
            term = coef
            for j, s in enumerate(factors):
                key = (id(s), id(weights[j]))
                if key not in dots:
                    w = weights[j] if self.h is None else weights[j] * self.h
                    dots[key] = float(np.dot(w, s)) * lat.cell_volume
                term *= dots[key]
            total += term
        return factor * total


def _tuple_offsets(lattice: Lattice, idx: np.ndarray) -> np.ndarray:
    """Evaluation points for a cell tuple: midpoints, spread out when a cell repeats."""
    pts = lattice.midpoints[idx].copy()
    n = len(idx)
    if n > 1:
        for cell in np.unique(idx):
            where = np.nonzero(idx == cell)[0]
            if len(where) > 1:
                c = len(where)
                lo = lattice.edges[0][np.unravel_index(cell, lattice.shape)[0]]
                for r, j in enumerate(where):
                    pts[j, 0] = lo + (r + 0.5) / c * lattice.widths[0]
    return pts


def _brute_slice(g: Callable, lattice: Lattice, n: int, weights: Sequence[np.ndarray]):
    supports = [np.nonzero(w)[0] for w in weights]
    count = math.prod(len(s) for s in supports)
    if count > MAX_CALLABLE_TUPLES:
        raise QuadratureBudgetExceeded(
            f"{count} cell tuples on slice {n}; pass a DensityIntegrand or coarsen the grid"
        )
    total, unit = 0.0, None
    dv = lattice.cell_volume**n
    for combo in np.array(np.meshgrid(*supports, indexing="ij")).reshape(n, -1).T:
        w = math.prod(weights[j][combo[j]] for j in range(n))
        pts = _tuple_offsets(lattice, combo)
        q = g(PointPattern(tuple(map(tuple, pts))))
        q = q if isinstance(q, Quantity) else Quantity(float(q))
        if unit is None:
            unit = q.unit
        elif q.unit != unit:
            raise ValueError(f"integrand changes unit within slice {n}")
        total += q.value * w * dv
    return total, (unit if unit is not None else Fraction(0))


def _slice_n_max(g, grid: QuadratureGrid) -> int:
    if grid.n_max is not None:
        return grid.n_max
    if isinstance(g, DensityIntegrand):
        return g.model.truncation(grid.tail_tolerance)
    raise ValueError("integrating an arbitrary function over all slices needs grid.n_max")


def integrate(
    g,
    B: PatternSet,
    ref: Optional[ReferenceMeasure],
    grid: QuadratureGrid,
    *,
    lattice: Optional[Lattice] = None,
    form: str = "reference",
) -> Quantity:
    """Integral of ``g`` over ``B``.

    ``form="reference"`` integrates against ``lambda_c`` (each slice
    weighted by ``c**-n``); ``form="base"`` integrates slice by slice
    against the product base measure, which is how probabilities are
    written in terms of Janossy densities.  Slice terms are summed with
    unit checks, so an integrand whose unit does not cancel raises
    :class:`~ppinfo.units.IncommensurableSum`.
    """
    if form not in ("reference", "base"):
        raise ValueError("form must be 'reference' or 'base'")
    if form == "reference" and ref is None:
        raise ValueError("the reference form needs a ReferenceMeasure")
    if isinstance(g, DensityIntegrand):
        lattice = g.model.lattice
    if lattice is None:
        raise ValueError("a lattice is required for arbitrary integrands")
    if lattice.space != B.space:
        raise ValueError("pattern set and integrand live on different windows")

    n_max = _slice_n_max(g, grid) if B.unbounded else max(B.slices, default=0)
    terms = []
    if B.contains_empty:
        q = g(PointPattern())
        terms.append(q if isinstance(q, Quantity) else Quantity(float(q)))
    for n in B.cardinalities(n_max):
        weights = [lattice.coverage(r) for r in B.regions(n)]
        if isinstance(g, DensityIntegrand):
            raw, unit = g.slice_integral(n, weights), g.unit(n)
        else:
            raw, unit = _brute_slice(g, lattice, n, weights)
        q = Quantity(raw, unit + n)
        if form == "reference":
            q = mul(power(ref.c, -n), q)
        terms.append(q)
    return checked_sum(terms)


def pdf(model: PointProcessModel, ref: ReferenceMeasure, pattern: PointPattern) -> float:
    """The unitless density ``c**|phi| * p^(|phi|)(phi)`` with respect to ``lambda_c``."""
    q = mul(power(ref.c, len(pattern)), model.janossy(pattern))
    return _check_unitless(q)


def prob_measure(model: PointProcessModel, B: PatternSet, grid: QuadratureGrid) -> float:
    """``P(B)`` as a sum of Janossy integrals; no reference measure involved."""
    q = integrate(DensityIntegrand(model), B, None, grid, form="base")
    return _check_unitless(q)


def slice_expectation(
    model: PointProcessModel,
    g: Callable,
    n: int,
    grid: QuadratureGrid,
    ref: Optional[ReferenceMeasure] = None,
) -> Quantity:
    """``int g dP^(n)`` over the full ``n``-slice.

    With ``ref`` the integral runs through the density: ``g * f``
    integrated against ``lambda_c``.  Without it, ``g * p^(n)`` is
    integrated against the base measure.  Both must agree.
    """
    B = PatternSet.full_slice(model.space, n) if n else PatternSet.empty_pattern(model.space)
    lat = model.lattice
    if ref is not None:
        return integrate(lambda phi: mul(g(phi), Quantity(pdf(model, ref, phi))), B, ref, grid,
                         lattice=lat)
    return integrate(lambda phi: mul(g(phi), model.janossy(phi)), B, None, grid, lattice=lat,
                     form="base")


# -- slice engines used by the information functionals ------------------------


def _all_tuples(size: int, n: int) -> np.ndarray:
    count = size**n
    if count > MAX_TUPLES:
        raise QuadratureBudgetExceeded(f"{count} cell tuples on slice {n}")
    return np.stack(np.unravel_index(np.arange(count), (size,) * n), axis=1)


def _single_term(model: PointProcessModel, n: int):
    k = model.kernel(n)
    return k[0] if len(k) == 1 else None


def _binomial_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Raw moments of X+Y from raw moments of independent X and Y."""
    out = np.zeros_like(a)
    for r in range(len(a)):
        out[r] = sum(math.comb(r, k) * a[k] * b[r - k] for k in range(r + 1))
    return out


def slice_log_moments(
    model: PointProcessModel, n: int, max_order: int, log_shift: float = 0.0
) -> Tuple[np.ndarray, float]:
    """``int (log p^(n) + log_shift)**r p^(n) dx`` for ``r = 0..max_order``.

    Tuples where the density vanishes (below :data:`SUPPORT_FLOOR` on the
    brute-force path) are left out; their probability mass is returned
    alongside.
    """
    lat = model.lattice
    orders = np.arange(max_order + 1)
    single = _single_term(model, n)
    if not model.kernel(n):
        return np.zeros(max_order + 1), 0.0
    if single is not None:
        coef, factors = single
        if coef <= 0:
            return np.zeros(max_order + 1), 0.0
        mass = coef
        s_moments = np.zeros(max_order + 1)
        s_moments[0] = 1.0
        cache = {}
        for s in factors:
            if id(s) not in cache:
                on = s > 0
                mu = s[on] * lat.cell_volume
                M = mu.sum()
                y = np.log(s[on])
                cache[id(s)] = (M, np.array([np.dot(mu / M, y**r) for r in orders]))
            M, mom = cache[id(s)]
            mass *= M
            s_moments = _binomial_convolve(s_moments, mom)
        A = math.log(coef) + log_shift
        out = np.array(
            [sum(math.comb(r, k) * A ** (r - k) * s_moments[k] for k in range(r + 1)) for r in orders]
        )
        return mass * out, 0.0
    idx = _all_tuples(lat.size, n)
    p = model.slice_values(n, idx)
    dv = lat.cell_volume**n
    on = p >= SUPPORT_FLOOR
    L = np.log(p[on]) + log_shift
    w = p[on] * dv
    return np.array([np.dot(w, L**r) for r in orders]), float(p[~on].sum() * dv)


def slice_power_integral(
    model: PointProcessModel, n: int, h: np.ndarray, exponent: float
) -> float:
    """Raw value of ``int prod h(x_i) * p^(n)(x)**exponent dx`` over the support."""
    lat = model.lattice
    if not model.kernel(n):
        return 0.0
    single = _single_term(model, n)
    if single is not None:
        coef, factors = single
        if coef <= 0:
            return 0.0
        out = coef**exponent
        cache = {}
        for s in factors:
            if id(s) not in cache:
                on = s > 0
                cache[id(s)] = float(np.dot(h[on], s[on] ** exponent)) * lat.cell_volume
            out *= cache[id(s)]
        return out
    idx = _all_tuples(lat.size, n)
    p = model.slice_values(n, idx)
    on = p >= SUPPORT_FLOOR
    hp = np.prod(h[idx[on]], axis=1) if n else np.ones(on.sum())
    return float(np.dot(hp, p[on] ** exponent) * lat.cell_volume**n)


def slice_log_ratio(model_1: PointProcessModel, model_0: PointProcessModel, n: int) -> float:
    """``int log(p1^(n) / p0^(n)) p1^(n) dx``; raises if p0 vanishes where p1 does not."""
    lat = model_1.lattice
    if not model_1.kernel(n):
        return 0.0
    t1, t0 = _single_term(model_1, n), _single_term(model_0, n)
    if t1 is not None and t1[0] <= 0:
        return 0.0
    if t1 is not None and t0 is not None:
        (a1, f1), (a0, f0) = t1, t0
        if a0 <= 0:
            raise AbsoluteContinuityViolation(f"reference model has no mass on slice {n}")
        masses, means = [], []
        for s1, s0 in zip(f1, f0):
            on = s1 > 0
            if np.any(s0[on] <= 0):
                raise AbsoluteContinuityViolation(f"reference density vanishes on slice {n}")
            mu = s1[on] * lat.cell_volume
            M = mu.sum()
            masses.append(M)
            means.append(float(np.dot(mu / M, np.log(s1[on]) - np.log(s0[on]))))
        mass = a1 * math.prod(masses)
        return mass * (math.log(a1) - math.log(a0) + sum(means))
    if not model_0.kernel(n):
        raise AbsoluteContinuityViolation(f"reference model has no mass on slice {n}")
    idx = _all_tuples(lat.size, n)
    p1 = model_1.slice_values(n, idx)
    p0 = model_0.slice_values(n, idx)
    on = p1 >= SUPPORT_FLOOR
    if np.any(p0[on] <= 0):
        raise AbsoluteContinuityViolation(f"reference density vanishes on slice {n}")
    dv = lat.cell_volume**n
    return float(np.dot(p1[on] * dv, np.log(p1[on]) - np.log(p0[on])))
