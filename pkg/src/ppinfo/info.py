"""Information functionals on point processes, and their unit audit.

The well-defined functionals (differential entropy, KL divergence, the
log-moments of the density) integrate logarithms of the unitless density
``f = c**n * p^(n)`` or of Janossy ratios.  The audit functionals mirror
formulas that put ``p^(n)`` itself under a power or a logarithm; in
``Checked`` mode every slice term is built through the unit engine, and a
failure is returned as an :class:`AuditReport` verdict rather than raised.
``Nondimensionalized(k)`` mode drops the units after moving to the unit
system ``1 iota = k iota'`` and returns whatever number comes out, to show
how that number depends on ``k``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Tuple, Union

import numpy as np

from .measure import (
    AbsoluteContinuityViolation,
    ReferenceMeasure,
    slice_log_moments,
    slice_log_ratio,
    slice_power_integral,
)
from .models import PointProcessModel, sample_many
from .space import NonnegFunction, QuadratureGrid, TestFunction
from .units import (
    DimensionalLog,
    IncommensurableSum,
    Quantity,
    checked_log,
    checked_sum,
    format_unit,
    mul,
    power,
    unit_exp,
)

__all__ = [
    "Checked",
    "Nondimensionalized",
    "CHECKED",
    "Verdict",
    "AuditTerm",
    "AuditReport",
    "NonpositiveDensity",
    "AbsoluteContinuityViolation",
    "differential_entropy",
    "kl_divergence",
    "mc_entropy",
    "clark_igf",
    "clark_igf_f_substituted",
    "laplace_functional",
    "cumulant_functional",
    "shannon_entropy_audit",
    "entropy_moments_audit",
    "corrected_entropy_moments",
]

# probability mass the log integrands may drop before we refuse to answer
EXCLUDED_MASS_LIMIT = 1e-12


class NonpositiveDensity(ValueError):
    pass


@dataclass(frozen=True)
class Checked:
    """Evaluate with full unit tracking."""

    def describe(self) -> str:
        return "checked"


@dataclass(frozen=True)
class Nondimensionalized:
    """Strip units in the system ``1 iota = k iota'`` (not a defined quantity)."""

    k: float = 1.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")

    def describe(self) -> str:
        return f"nondimensionalized(k={self.k!r})"


CHECKED = Checked()
Mode = Union[Checked, Nondimensionalized]


class Verdict(str, enum.Enum):
    WELL_DEFINED = "WellDefined"
    INCOMMENSURABLE_SUM = "IncommensurableSum"
    DIMENSIONAL_LOG = "DimensionalLog"


@dataclass(frozen=True)
class AuditTerm:
    """One cardinality slice of an audited sum.

    ``value`` is None when the term itself is undefined (a logarithm of a
    dimensional quantity); ``log_argument_exponent`` records that unit.
    """

    n: int
    value: Optional[float]
    unit_exponent: Optional[Fraction]
    log_argument_exponent: Optional[Fraction] = None

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "value": self.value,
            "unit_exponent": None if self.unit_exponent is None else format_unit(self.unit_exponent),
        }
        if self.log_argument_exponent is not None:
            d["log_argument_unit_exponent"] = format_unit(self.log_argument_exponent)
        return d


@dataclass(frozen=True)
class AuditReport:
    functional: str
    mode: str
    terms: Tuple[AuditTerm, ...]
    verdict: Verdict
    offending: Tuple = ()
    value: Optional[float] = None
    alpha: Optional[Fraction] = None
    excluded_mass: float = 0.0
    notes: Tuple[str, ...] = field(default=())

    @property
    def well_defined(self) -> bool:
        return self.verdict is Verdict.WELL_DEFINED

    @property
    def exponents(self) -> Tuple[Fraction, ...]:
        return tuple(t.unit_exponent for t in self.terms if t.unit_exponent is not None)

    def to_dict(self) -> dict:
        return {
            "functional": self.functional,
            "mode": self.mode,
            "alpha": None if self.alpha is None else format_unit(self.alpha),
            "verdict": self.verdict.value,
            "value": self.value,
            "value_unit_exponent": "0" if self.value is not None else None,
            "offending": [list(p) if isinstance(p, tuple) else p for p in self.offending],
            "excluded_mass": self.excluded_mass,
            "terms": [t.to_dict() for t in self.terms],
            "notes": list(self.notes),
        }


_NONDIM_NOTE = "units stripped: this number depends on the unit system and is not a defined quantity"


def _n_range(model: PointProcessModel, grid: QuadratureGrid) -> range:
    if grid.cells != model.lattice.cells:
        raise ValueError(f"grid has {grid.cells} cells per axis, model has {model.lattice.cells}")
    return range(grid.resolve_n_max(model) + 1)


def _require_unitless_log(unit) -> None:
    """Ask the unit engine whether a log of something with this unit is defined."""
    checked_log(Quantity(1.0, unit))


def _janossy_unit(n: int) -> Fraction:
    return Fraction(-n)


def _dx_unit(n: int) -> Fraction:
    return Fraction(n)


# -- well-defined functionals -------------------------------------------------


def differential_entropy(model: PointProcessModel, ref: ReferenceMeasure, grid: QuadratureGrid) -> float:
    """``-sum_n int log f(x) p^(n)(x) dx`` with ``f = c**n p^(n)``."""
    return 0.0 - corrected_entropy_moments(model, ref, 1, grid)


def corrected_entropy_moments(
    model: PointProcessModel, ref: ReferenceMeasure, m: int, grid: QuadratureGrid
) -> float:
    """``E[(log f(Phi))**m]`` for the unitless density ``f``."""
    if not 0 <= m <= 4:
        raise ValueError("moment order must lie in 0..4")
    log_c = math.log(ref.value)
    total, excluded = 0.0, 0.0
    for n in _n_range(model, grid):
        # f restricted to the n-slice is c^n * p^(n): the log argument must be unitless
        _require_unitless_log(mul(power(ref.c, n), Quantity(1.0, _janossy_unit(n))).unit)
        moments, dropped = slice_log_moments(model, n, m, n * log_c)
        total += moments[m]
        excluded += dropped
    if excluded > EXCLUDED_MASS_LIMIT:
        raise NonpositiveDensity(f"density underflows on mass {excluded:.3g}")
    return float(total)


def kl_divergence(model_1: PointProcessModel, model_0: PointProcessModel, grid: QuadratureGrid) -> float:
    """``KL(P_1 || P_0) = sum_n int log(p1^(n) / p0^(n)) p1^(n) dx``.

    The reference constant cancels from the density ratio, so none is taken.
    """
    if model_1.lattice != model_0.lattice:
        raise ValueError("KL needs both models on the same grid")
    total = 0.0
    for n in _n_range(model_1, grid):
        ratio = Quantity(1.0, _janossy_unit(n)) / Quantity(1.0, _janossy_unit(n))
        _require_unitless_log(ratio.unit)
        total += slice_log_ratio(model_1, model_0, n)
    return float(total)


def mc_entropy(
    model: PointProcessModel, ref: ReferenceMeasure, sample_count: int, seed: int
) -> Tuple[float, float]:
    """Monte Carlo mean of ``-log f(Phi)`` and its standard error."""
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    log_c = math.log(ref.value)
    dim = model.lattice.dimension
    by_size = {}
    for phi in sample_many(model, sample_count, seed):
        by_size.setdefault(len(phi), []).append(model.lattice.locate(phi.as_array(dim)))
    values = []
    # one vectorized density evaluation per sampled cardinality
    for n in sorted(by_size):
        idx = np.stack(by_size[n]) if n else None
        p = model.slice_values(n, idx)
        if n == 0:
            p = np.full(len(by_size[0]), p[0])
        if np.any(p <= 0):
            raise NonpositiveDensity("sampled a pattern where the density vanishes")
        values.append(-(n * log_c + np.log(p)))
    values = np.concatenate(values)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(sample_count))


# -- audited functionals -------------------------------------------------------


def _sum_or_report(functional, mode, terms, alpha, excluded=0.0) -> AuditReport:
    quantities = [Quantity(t.value, t.unit_exponent) for t in terms]
    offending = tuple(
        (a.n, b.n) for a, b in zip(terms, terms[1:]) if a.unit_exponent != b.unit_exponent
    )
    notes = ()
    try:
        value = float(checked_sum(quantities).value)
        verdict = Verdict.WELL_DEFINED
    except IncommensurableSum:
        verdict = Verdict.INCOMMENSURABLE_SUM
        value = None
    if isinstance(mode, Nondimensionalized):
        value = float(sum(t.value for t in terms))
        notes = (_NONDIM_NOTE,)
    return AuditReport(
        functional, mode.describe(), tuple(terms), verdict, offending, value, alpha, excluded, notes
    )


def _h_array(model: PointProcessModel, h) -> np.ndarray:
    if isinstance(h, TestFunction):
        return h.values
    return TestFunction(model.lattice, h).values


def _power_terms(model, ref, h, alpha, grid, mode, substitute_density: bool):
    """Slice terms of ``int prod h * g**(1 - alpha) dx`` with g = p^(n) or c^n p^(n)."""
    alpha = unit_exp(alpha)
    hv = _h_array(model, h)
    if isinstance(mode, Nondimensionalized):
        model = model.convert(mode.k)
        ref = ref.convert(mode.k) if ref is not None else None
    exponent = 1 - alpha
    terms = []
    for n in _n_range(model, grid):
        # unit bookkeeping with placeholder magnitudes; the engine derives the exponent
        density = Quantity(1.0, _janossy_unit(n))
        if substitute_density:
            density = mul(power(Quantity(1.0, 1), n), density)
        unit = mul(power(density, exponent), Quantity(1.0, _dx_unit(n))).unit
        raw = slice_power_integral(model, n, hv, float(exponent))
        if substitute_density:
            raw *= ref.value ** (n * float(exponent))
        terms.append(AuditTerm(n, float(raw), unit))
    return terms, alpha


def clark_igf(
    model: PointProcessModel, h, alpha, grid: QuadratureGrid, mode: Mode = CHECKED
) -> AuditReport:
    """Audit ``sum_n int prod h(x_i) p^(n)(x)**(1-alpha) dx`` slice by slice.

    Each slice carries ``iota**(n * alpha)``, so the sum is only defined
    for ``alpha = 0`` or when a single slice carries all the mass.
    """
    terms, alpha = _power_terms(model, None, h, alpha, grid, mode, substitute_density=False)
    return _sum_or_report("information_generating_functional", mode, terms, alpha)


def clark_igf_f_substituted(
    model: PointProcessModel, ref: ReferenceMeasure, h, alpha, grid: QuadratureGrid, mode: Mode = CHECKED
) -> AuditReport:
    """The same sum with the unitless density ``c**n p^(n)`` in place of ``p^(n)``.

    Every slice then carries ``iota**n`` whatever ``alpha`` is.
    """
    terms, alpha = _power_terms(model, ref, h, alpha, grid, mode, substitute_density=True)
    return _sum_or_report("information_generating_functional_f_substituted", mode, terms, alpha)


def laplace_functional(
    model: PointProcessModel, f, alpha, grid: QuadratureGrid, mode: Mode = CHECKED
) -> AuditReport:
    """``L^alpha(f) = G^alpha(exp(-f))`` for a non-negative unitless ``f``."""
    if not isinstance(f, NonnegFunction):
        f = NonnegFunction(model.lattice, f)
    terms, alpha = _power_terms(model, None, f.exp_neg(), alpha, grid, mode, substitute_density=False)
    return _sum_or_report("laplace_functional", mode, terms, alpha)


def cumulant_functional(
    model: PointProcessModel, f, alpha, grid: QuadratureGrid, mode: Mode = CHECKED
) -> AuditReport:
    """``log L^alpha(f)``; an undefined ``L`` leaves the verdict in place."""
    lap = laplace_functional(model, f, alpha, grid, mode)
    value = None
    if lap.value is not None:
        value = checked_log(Quantity(lap.value)).value
    return AuditReport(
        "cumulant_functional", lap.mode, lap.terms, lap.verdict, lap.offending, value, lap.alpha,
        lap.excluded_mass, lap.notes,
    )


def _log_janossy_report(functional, model, grid, mode, order, sign) -> AuditReport:
    """Terms ``sign * int (log p^(n))**order p^(n) dx`` under the given mode."""
    if isinstance(mode, Nondimensionalized):
        model = model.convert(mode.k)
    terms, failed, excluded = [], [], 0.0
    for n in _n_range(model, grid):
        log_unit = _janossy_unit(n)
        try:
            if isinstance(mode, Checked):
                _require_unitless_log(log_unit)
        except DimensionalLog as err:
            failed.append(n)
            terms.append(AuditTerm(n, None, None, err.unit))
            continue
        moments, dropped = slice_log_moments(model, n, order)
        excluded += dropped
        # the log is taken of a raw number; the product with dP is unitless
        terms.append(AuditTerm(n, sign * float(moments[order]), Fraction(0), log_unit))
    if failed:
        return AuditReport(
            functional, mode.describe(), tuple(terms), Verdict.DIMENSIONAL_LOG, tuple(failed),
            None, None, excluded,
        )
    value = float(sum(t.value for t in terms))
    notes = (_NONDIM_NOTE,) if isinstance(mode, Nondimensionalized) else ()
    return AuditReport(
        functional, mode.describe(), tuple(terms), Verdict.WELL_DEFINED, (), value, None, excluded, notes
    )


def shannon_entropy_audit(model: PointProcessModel, grid: QuadratureGrid, mode: Mode = CHECKED) -> AuditReport:
    """Audit ``-sum_n int log p^(n) dP^(n)``; defined only when no slice n >= 1 is present."""
    return _log_janossy_report("shannon_entropy", model, grid, mode, 1, -1.0)


def entropy_moments_audit(
    model: PointProcessModel, m: int, grid: QuadratureGrid, mode: Mode = CHECKED
) -> AuditReport:
    """Audit ``E[(log p^(|Phi|)(Phi))**m]``."""
    if not 0 <= m <= 4:
        raise ValueError("moment order must lie in 0..4")
    return _log_janossy_report(f"entropy_moment_{m}", model, grid, mode, m, 1.0)
