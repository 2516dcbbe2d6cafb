"""Probability generating functionals and their chain differentials.

The p.g.fl. is evaluated as its truncated series.  Differentials are
limits of difference quotients along ``h + eps * eta``; a Dirac
direction ``delta_x`` is the limit of ``dG(h; 1_B) / |B|`` over boxes
``B`` shrinking onto ``x``.  Both limits are taken by Richardson
extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .models import PointProcessModel
from .space import Lattice, PointPattern, QuadratureGrid, Region, TestFunction
from .units import NotUnitless, Quantity, checked_sum

__all__ = [
    "Perturbation",
    "Indicator",
    "Dirac",
    "NonConvergent",
    "pgfl_eval",
    "chain_differential",
    "nth_differential",
    "janossy_from_pgfl",
    "RICHARDSON_LEVELS",
    "EPS0",
    "RTOL",
]

RICHARDSON_LEVELS = 4
EPS0 = 1e-2
RTOL = 1e-4


class NonConvergent(ArithmeticError):
    def __init__(self, last: float, previous: float):
        self.last = last
        self.previous = previous
        super().__init__(f"extrapolants disagree: {last!r} vs {previous!r}")


@dataclass(frozen=True)
class Perturbation:
    """A unitless direction given by its value on every cell."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())


@dataclass(frozen=True)
class Indicator:
    """The set indicator ``1_B`` of a box union ``B``."""

    region: Region


@dataclass(frozen=True)
class Dirac:
    """``delta_x``: differentiating along it yields a density (unit iota^-1)."""

    point: tuple

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(c) for c in np.atleast_1d(self.point)))


Direction = Union[Perturbation, Indicator, Dirac]


def _h_values(model: PointProcessModel, h) -> np.ndarray:
    if isinstance(h, TestFunction):
        return h.values
    return TestFunction(model.lattice, h).values


_LD_EPS = float(np.finfo(np.longdouble).eps)


def _series(model: PointProcessModel, h: np.ndarray, n_max: int):
    """Truncated p.g.fl. series in extended precision, with a rounding bound.

    ``h`` may leave [0, 1] (the series is a polynomial in ``h``).  Nested
    difference quotients lose roughly ``log10(1 / (eps * |B|))`` digits per
    level, which double precision cannot spare at depth two.
    """
    dv = np.longdouble(model.lattice.cell_volume)
    dots = {}
    total = np.longdouble(0)
    magnitude = np.longdouble(0)
    for n in range(n_max + 1):
        for coef, factors in model.kernel(n):
            term = np.longdouble(coef)
            for s in factors:
                key = id(s)
                if key not in dots:
                    dots[key] = np.dot(h, s.astype(np.longdouble)) * dv
                term *= dots[key]
            total += term
            magnitude += abs(term)
    return total, 64 * _LD_EPS * float(magnitude)


def pgfl_eval(model: PointProcessModel, h, grid: QuadratureGrid) -> float:
    """``G(h) = sum_n int prod h(x_i) p^(n)(x) dx``, truncated at the grid's ``n_max``."""
    hv = _h_values(model, h)
    dv = Quantity(model.lattice.cell_volume, 1)
    terms = []
    for n in range(grid.resolve_n_max(model) + 1):
        raw = 0.0
        dots = {}
        for coef, factors in model.kernel(n):
            term = coef
            for s in factors:
                if id(s) not in dots:
                    dots[id(s)] = float(np.dot(hv, s))
                term *= dots[id(s)]
            raw += term
        # p^(n) carries iota^-n and the n cell volumes iota^n
        q = Quantity(raw, -n) * dv**n
        if q.unit != 0:
            raise NotUnitless(q.unit)
        terms.append(q)
    return float(checked_sum(terms))


def _extrapolate(values: Sequence[float], ratio: float = 4.0) -> tuple:
    """Richardson tableau for a sequence computed at halving steps.

    ``ratio=4`` removes even powers of the step, ``ratio=2`` all powers.
    """
    table = [list(values)]
    for j in range(1, len(values)):
        prev = table[-1]
        table.append([prev[i] + (prev[i] - prev[i - 1]) / (ratio**j - 1) for i in range(1, len(prev))])
    last = table[-1][-1]
    previous = table[-2][-1]
    return last, previous


def _converged(last, previous, noise: float):
    if abs(last - previous) > RTOL * abs(last) + noise:
        raise NonConvergent(float(last), float(previous))
    return last


# Richardson tableaux with 4 levels amplify input errors by less than this
_AMPLIFICATION = 8.0


def _directional(F, h: np.ndarray, eta: np.ndarray):
    """Extrapolated central differences of ``F`` along ``eta``; returns (value, noise)."""
    if not np.any(eta):
        return np.longdouble(0), 0.0
    quotients, noise = [], 0.0
    for i in range(RICHARDSON_LEVELS):
        eps = np.longdouble(EPS0) * np.longdouble(2.0) ** -i
        (up, e_up), (down, e_down) = F(h + eps * eta), F(h - eps * eta)
        quotients.append((up - down) / (2 * eps))
        noise = max(noise, (e_up + e_down) / (2 * float(eps)))
    noise *= _AMPLIFICATION
    return _converged(*_extrapolate(quotients), noise), noise


def _dirac_boxes(lattice: Lattice, x: tuple):
    """Boxes containing ``x`` that contract onto it: the cell of ``x``, then
    its images under homotheties of ratio 1/2, 1/4, ... centred at ``x``."""
    space = lattice.space
    if len(x) != space.dimension or not space.contains(x):
        raise ValueError(f"Dirac point {x} is not in the window")
    cell = np.unravel_index(int(lattice.locate(np.asarray([x]))[0]), lattice.shape)
    lo = [lattice.edges[a][i] for a, i in enumerate(cell)]
    hi = [lattice.edges[a][i + 1] for a, i in enumerate(cell)]
    for i in range(RICHARDSON_LEVELS):
        t = 2.0**-i
        yield Region.box(*[(xa + t * (a - xa), xa + t * (b - xa)) for xa, a, b in zip(x, lo, hi)])


def _dirac_directional(F, h, lattice: Lattice, x: tuple):
    ratios, noise = [], 0.0
    for box in _dirac_boxes(lattice, x):
        eta = lattice.coverage(box).astype(np.longdouble)
        # |B| from the same weights as the perturbation, so the ratio is exact
        # for densities that are constant on the cell
        volume = eta.sum() * np.longdouble(lattice.cell_volume)
        value, err = _directional(F, h, eta)
        ratios.append(value / volume)
        noise = max(noise, err / float(volume))
    noise *= _AMPLIFICATION
    # one-sided boxes: the error expansion is in powers of the box size
    return _converged(*_extrapolate(ratios, ratio=2.0), noise), noise


def _differentiate(F, eta: Direction, lattice: Lattice):
    if isinstance(eta, Dirac):
        return lambda h: _dirac_directional(F, h, lattice, eta.point)
    if isinstance(eta, Indicator):
        eta.region.check_inside(lattice.space)
        vals = lattice.coverage(eta.region).astype(np.longdouble)
    else:
        vals = eta.values.astype(np.longdouble)
        if vals.shape != (lattice.size,):
            raise ValueError(f"perturbation needs {lattice.size} cell values")
    return lambda h: _directional(F, h, vals)


def nth_differential(
    model: PointProcessModel, h, etas: Sequence[Direction], grid: QuadratureGrid
) -> Quantity:
    """``d^n G(h; eta_1, ..., eta_n)`` by nested extrapolated differences.

    Each Dirac direction contributes a factor ``iota^-1`` to the unit.
    """
    if len(etas) > 3:
        raise ValueError("at most three nested differentials are supported")
    hv = _h_values(model, h)
    n_max = grid.resolve_n_max(model)
    F = lambda v: _series(model, v, n_max)  # noqa: E731
    for eta in etas:
        F = _differentiate(F, eta, model.lattice)
    unit = -sum(isinstance(e, Dirac) for e in etas)
    value, _ = F(hv.astype(np.longdouble))
    return Quantity(float(value), unit)


def chain_differential(model: PointProcessModel, h, eta: Direction, grid: QuadratureGrid) -> Quantity:
    return nth_differential(model, h, [eta], grid)


def janossy_from_pgfl(model: PointProcessModel, pattern: PointPattern, grid: QuadratureGrid) -> Quantity:
    """Janossy density recovered as ``d^n G(0; delta_x1, ..., delta_xn) / n!``."""
    pts = pattern.validate(model.space)
    n = len(pts)
    if n > 2:
        raise ValueError("Janossy recovery is limited to patterns of at most two points")
    zero = np.zeros(model.lattice.size)
    q = nth_differential(model, zero, [Dirac(tuple(p)) for p in pts], grid)
    return Quantity(q.value / math.factorial(n), q.unit)
