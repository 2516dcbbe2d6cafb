"""Exact unit bookkeeping for a single base unit.

Every dimensional scalar in the package is a :class:`Quantity`: a float
value paired with the exponent of the base unit ``iota`` (the unit of the
base measure on the window).  Exponents are :class:`fractions.Fraction`
values, so "same unit" is an exact predicate and never a tolerance.

Unit failures are raised as exceptions that carry the offending
exponents as attributes, so callers can turn them into structured
reports instead of parsing messages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational, Real
from typing import Union

__all__ = [
    "UnitExp",
    "Quantity",
    "UnitError",
    "IncommensurableSum",
    "DimensionalLog",
    "DimensionalExp",
    "NonpositiveLog",
    "NegativeBase",
    "NotUnitless",
    "unit_exp",
    "format_unit",
    "unitless",
    "mul",
    "div",
    "power",
    "checked_add",
    "checked_sum",
    "checked_log",
    "checked_exp",
    "convert_unit_system",
]

UnitExp = Fraction
ZERO = Fraction(0)

ExpLike = Union[int, str, Fraction, Rational]


def unit_exp(e: ExpLike) -> Fraction:
    """Coerce ``e`` to an exact exponent.

    Accepts ints, Fractions and "p/q" strings.  Floats are rejected:
    a float exponent would make commensurability a fuzzy question.
    """
    if isinstance(e, bool):
        raise TypeError("bool is not a unit exponent")
    if isinstance(e, Fraction):
        return e
    if isinstance(e, (int, Rational)):
        return Fraction(e)
    if isinstance(e, str):
        return Fraction(e.strip())
    raise TypeError(f"unit exponents must be exact rationals, got {type(e).__name__}")


def format_unit(e: Fraction) -> str:
    """Render an exponent as ``"p/q"`` (or ``"p"`` for integers)."""
    return str(Fraction(e))


class UnitError(ArithmeticError):
    """Base class for all unit-algebra failures."""


class IncommensurableSum(UnitError):
    def __init__(self, left_unit: Fraction, right_unit: Fraction):
        self.left_unit = Fraction(left_unit)
        self.right_unit = Fraction(right_unit)
        super().__init__(
            f"cannot add iota^{format_unit(self.left_unit)} "
            f"to iota^{format_unit(self.right_unit)}"
        )


class DimensionalLog(UnitError):
    def __init__(self, unit: Fraction):
        self.unit = Fraction(unit)
        super().__init__(f"log of a quantity with unit iota^{format_unit(self.unit)}")


class DimensionalExp(UnitError):
    def __init__(self, unit: Fraction):
        self.unit = Fraction(unit)
        super().__init__(f"exp of a quantity with unit iota^{format_unit(self.unit)}")


class NonpositiveLog(UnitError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(f"log of non-positive value {value!r}")


class NegativeBase(UnitError):
    def __init__(self, value: float, exponent: Fraction):
        self.value = value
        self.exponent = Fraction(exponent)
        super().__init__(
            f"non-integer power {format_unit(self.exponent)} of non-positive value {value!r}"
        )


class NotUnitless(UnitError):
    """A dimensional quantity was used where a plain number is required."""

    def __init__(self, unit: Fraction):
        self.unit = Fraction(unit)
        super().__init__(f"expected a unitless quantity, got iota^{format_unit(self.unit)}")


@dataclass(frozen=True)
class Quantity:
    """A finite real value carrying the unit ``iota**unit``."""

    value: float
    unit: Fraction = ZERO

    def __post_init__(self):
        value = float(self.value)
        if not math.isfinite(value):
            raise ValueError(f"Quantity values must be finite, got {self.value!r}")
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "unit", unit_exp(self.unit))

    @property
    def is_unitless(self) -> bool:
        return self.unit == 0

    def __float__(self) -> float:
        if self.unit != 0:
            raise NotUnitless(self.unit)
        return self.value

    def __mul__(self, other):
        return mul(self, _as_quantity(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_quantity(other))

    def __rtruediv__(self, other):
        return div(_as_quantity(other), self)

    def __pow__(self, e):
        return power(self, e)

    def __add__(self, other):
        return checked_add(self, _as_quantity(other))

    __radd__ = __add__

    def __neg__(self):
        return Quantity(-self.value, self.unit)

    def __sub__(self, other):
        return checked_add(self, -_as_quantity(other))

    def __rsub__(self, other):
        return checked_add(_as_quantity(other), -self)

    def __repr__(self):
        return f"Quantity({self.value!r}, iota^{format_unit(self.unit)})"


def _as_quantity(x) -> Quantity:
    if isinstance(x, Quantity):
        return x
    if isinstance(x, Real):
        return Quantity(float(x), ZERO)
    return NotImplemented


def unitless(x: Union[Quantity, float]) -> float:
    """Return the plain value of a unitless quantity (or pass a float through)."""
    if isinstance(x, Quantity):
        return float(x)
    return float(x)


def mul(a: Quantity, b: Quantity) -> Quantity:
    return Quantity(a.value * b.value, a.unit + b.unit)


def div(a: Quantity, b: Quantity) -> Quantity:
    return Quantity(a.value / b.value, a.unit - b.unit)


def power(a: Quantity, e: ExpLike) -> Quantity:
    """Raise ``a`` to an exact rational power; exponents scale the unit."""
    e = unit_exp(e)
    if e == 0:
        return Quantity(1.0, ZERO)
    if e.denominator != 1:
        if a.value <= 0:
            raise NegativeBase(a.value, e)
        value = a.value ** float(e)
    else:
        value = a.value ** int(e)
    return Quantity(value, a.unit * e)


def checked_add(a: Quantity, b: Quantity) -> Quantity:
    if a.unit != b.unit:
        raise IncommensurableSum(a.unit, b.unit)
    return Quantity(a.value + b.value, a.unit)


def checked_sum(terms) -> Quantity:
    """Left-to-right sum with a commensurability check on every addition."""
    terms = iter(terms)
    try:
        total = next(terms)
    except StopIteration:
        return Quantity(0.0)
    for t in terms:
        total = checked_add(total, t)
    return total


def checked_log(a: Quantity) -> Quantity:
    if a.unit != 0:
        raise DimensionalLog(a.unit)
    if a.value <= 0:
        raise NonpositiveLog(a.value)
    return Quantity(math.log(a.value), ZERO)


def checked_exp(a: Quantity) -> Quantity:
    if a.unit != 0:
        raise DimensionalExp(a.unit)
    return Quantity(math.exp(a.value), ZERO)


def convert_unit_system(a: Quantity, k: float) -> Quantity:
    """Re-express ``a`` in a unit system where ``1 iota = k iota'``.

    The exponent is unchanged; the value picks up ``k**unit``.
    """
    if not k > 0:
        raise ValueError(f"unit conversion factor must be positive, got {k!r}")
    if a.unit == 0:
        return a
    return Quantity(a.value * float(k) ** float(a.unit), a.unit)
