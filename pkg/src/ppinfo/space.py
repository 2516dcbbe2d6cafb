"""The window with its cell lattice, plus the point patterns that live in it.

The window is an axis-aligned box.  Its total hypervolume carries unit
``iota``, so a single coordinate axis of a ``d``-dimensional window carries
``iota**(1/d)``.  All densities in the package are piecewise constant on a
uniform grid of cells; cells are flattened in C order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from .units import Quantity

__all__ = [
    "BaseSpace",
    "QuadratureGrid",
    "Lattice",
    "PointPattern",
    "Region",
    "OutOfWindow",
    "DuplicatePoints",
    "TestFunction",
    "NonnegFunction",
]

Interval = Tuple[float, float]


class OutOfWindow(ValueError):
    pass


class DuplicatePoints(ValueError):
    """Raised for patterns with repeated points (not a simple process)."""


@dataclass(frozen=True)
class BaseSpace:
    """Axis-aligned window ``prod_i [lower_i, upper_i]``."""

    lower: Tuple[float, ...] = (0.0,)
    upper: Tuple[float, ...] = (10.0,)
    unit_name: str = "iota"

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or not lower:
            raise ValueError("lower and upper bounds must have the same positive length")
        if len(lower) > 3:
            raise ValueError("windows of dimension > 3 are not supported")
        for lo, hi in zip(lower, upper):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid axis bounds [{lo}, {hi}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def interval(cls, lo: float, hi: float, unit_name: str = "iota") -> "BaseSpace":
        return cls((lo,), (hi,), unit_name)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def axis_unit(self) -> Fraction:
        return Fraction(1, self.dimension)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def measure(self) -> Quantity:
        return Quantity(self.volume, 1)

    def contains(self, point: Sequence[float]) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def convert(self, k: float) -> "BaseSpace":
        """Bounds re-expressed in a system where ``1 iota = k iota'``."""
        s = float(k) ** (1.0 / self.dimension)
        return BaseSpace(
            tuple(v * s for v in self.lower), tuple(v * s for v in self.upper), self.unit_name
        )


@dataclass(frozen=True)
class QuadratureGrid:
    """Resolution and truncation shared by every integral over patterns.

    ``n_max=None`` means "choose per model so the cardinality tail mass
    is below ``tail_tolerance``".
    """

    cells: int = 100
    n_max: Optional[int] = None
    tail_tolerance: float = 1e-10

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("cells must be positive")
        if self.n_max is not None and self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        if not 0 < self.tail_tolerance < 1:
            raise ValueError("tail_tolerance must lie in (0, 1)")

    def resolve_n_max(self, model) -> int:
        if self.n_max is not None:
            return self.n_max
        return model.truncation(self.tail_tolerance)


class Lattice:
    """A window cut into ``cells`` equal intervals along every axis."""

    def __init__(self, space: BaseSpace, cells: int = 100):
        if cells < 1:
            raise ValueError("cells must be positive")
        self.space = space
        self.cells = int(cells)
        self.edges = [np.linspace(lo, hi, self.cells + 1) for lo, hi in zip(space.lower, space.upper)]
        self.widths = [(hi - lo) / self.cells for lo, hi in zip(space.lower, space.upper)]
        self.cell_volume = float(np.prod(self.widths))
        self.shape = (self.cells,) * space.dimension
        self.size = self.cells ** space.dimension
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        self.midpoints = np.stack([g.ravel() for g in grids], axis=1)

    def __eq__(self, other):
        return (
            isinstance(other, Lattice) and self.space == other.space and self.cells == other.cells
        )

    def __hash__(self):
        return hash((self.space, self.cells))

    def __repr__(self):
        return f"Lattice({self.space!r}, cells={self.cells})"

    @property
    def dimension(self) -> int:
        return self.space.dimension

    def convert(self, k: float) -> "Lattice":
        return Lattice(self.space.convert(k), self.cells)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Flat cell index for each row of ``points`` (upper edges go to the last cell)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.zeros(len(points), dtype=np.int64)
        for axis in range(self.dimension):
            lo = self.space.lower[axis]
            i = np.floor((points[:, axis] - lo) / self.widths[axis]).astype(np.int64)
            i = np.clip(i, 0, self.cells - 1)
            idx = idx * self.cells + i
        return idx

    def sample_function(self, fn) -> np.ndarray:
        """Evaluate ``fn`` at every cell midpoint (rows of ``midpoints``)."""
        return np.array([float(fn(m if self.dimension > 1 else m[0])) for m in self.midpoints])

    def coverage(self, region: "Region") -> np.ndarray:
        """Fraction of each cell covered by ``region`` (exact for box unions)."""
        per_axis = []
        for axis, intervals in enumerate(region.axes):
            e = self.edges[axis]
            frac = np.zeros(self.cells)
            for a, b in intervals:
                overlap = np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None)
                frac += overlap / self.widths[axis]
            per_axis.append(np.clip(frac, 0.0, 1.0))
        out = per_axis[0]
        for f in per_axis[1:]:
            out = np.multiply.outer(out, f)
        return np.asarray(out).ravel()


def _canonical(intervals: Sequence[Interval]) -> Tuple[Interval, ...]:
    ivs = sorted((float(a), float(b)) for a, b in intervals if float(b) > float(a))
    merged = []
    for a, b in ivs:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return tuple(merged)


@dataclass(frozen=True)
class Region:
    """Product over axes of finite interval unions, in canonical form."""

    axes: Tuple[Tuple[Interval, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(_canonical(ax) for ax in self.axes))

    @classmethod
    def box(cls, *bounds: Interval) -> "Region":
        """``Region.box((0, 2))`` in 1-D, ``Region.box((0, 1), (2, 3))`` in 2-D."""
        return cls(tuple((b,) for b in bounds))

    @classmethod
    def full(cls, space: BaseSpace) -> "Region":
        return cls(tuple(((lo, hi),) for lo, hi in zip(space.lower, space.upper)))

    @property
    def volume(self) -> float:
        return float(np.prod([sum(b - a for a, b in ax) for ax in self.axes]))

    def measure(self, space: BaseSpace) -> Quantity:
        self.check_inside(space)
        return Quantity(self.volume, 1)

    def check_inside(self, space: BaseSpace):
        if len(self.axes) != space.dimension:
            raise ValueError("region dimension does not match the window")
        for ax, lo, hi in zip(self.axes, space.lower, space.upper):
            for a, b in ax:
                if a < lo or b > hi:
                    raise OutOfWindow(f"interval [{a}, {b}] leaves the window [{lo}, {hi}]")

    def convert(self, k: float) -> "Region":
        s = float(k) ** (1.0 / len(self.axes))
        return Region(tuple(tuple((a * s, b * s) for a, b in ax) for ax in self.axes))


@dataclass(frozen=True)
class PointPattern:
    """A finite ordered tuple of points; the empty tuple is the empty pattern."""

    points: Tuple[Tuple[float, ...], ...] = field(default=())

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in np.atleast_1d(p)) for p in self.points)
        if pts and len({len(p) for p in pts}) != 1:
            raise ValueError("all points must have the same dimension")
        object.__setattr__(self, "points", pts)

    @classmethod
    def of(cls, *points) -> "PointPattern":
        """``PointPattern.of(1.0, 2.5)`` for 1-D points, tuples otherwise."""
        return cls(tuple(points))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def as_array(self, dimension: int) -> np.ndarray:
        if not self.points:
            return np.empty((0, dimension))
        arr = np.asarray(self.points, dtype=float)
        if arr.shape[1] != dimension:
            raise ValueError(f"points have dimension {arr.shape[1]}, window has {dimension}")
        return arr

    def permuted(self, order: Sequence[int]) -> "PointPattern":
        return PointPattern(tuple(self.points[i] for i in order))

    def convert(self, k: float) -> "PointPattern":
        if not self.points:
            return self
        s = float(k) ** (1.0 / len(self.points[0]))
        return PointPattern(tuple(tuple(c * s for c in p) for p in self.points))

    def validate(self, space: BaseSpace) -> np.ndarray:
        """Check window membership and distinctness; return the (n, d) array."""
        arr = self.as_array(space.dimension)
        for p in arr:
            if not space.contains(p):
                raise OutOfWindow(f"point {tuple(p)} lies outside the window")
        if len(arr) > 1 and len({tuple(p) for p in arr}) != len(arr):
            raise DuplicatePoints("pattern has repeated points; only simple processes are supported")
        return arr


def _grid_values(lattice: Lattice, values, what: str) -> np.ndarray:
    if callable(values):
        arr = lattice.sample_function(values)
    else:
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 0:
            arr = np.full(lattice.size, float(arr))
        arr = arr.ravel()
    if arr.shape != (lattice.size,):
        raise ValueError(f"{what} needs {lattice.size} cell values, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} has non-finite values")
    return arr


class TestFunction:
    """Unitless function with values in [0, 1], constant on each cell."""

    __test__ = False  # not a pytest class

    def __init__(self, lattice: Lattice, values):
        self.lattice = lattice
        self.values = _grid_values(lattice, values, "test function")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("test function values must lie in [0, 1]")
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, lattice: Lattice, value: float) -> "TestFunction":
        return cls(lattice, float(value))

    def convert(self, k: float) -> "TestFunction":
        return TestFunction(self.lattice.convert(k), self.values)


class NonnegFunction:
    """Unitless non-negative function, constant on each cell."""

    def __init__(self, lattice: Lattice, values):
        self.lattice = lattice
        self.values = _grid_values(lattice, values, "non-negative function")
        if np.any(self.values < 0):
            raise ValueError("function values must be non-negative")
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, lattice: Lattice, value: float) -> "NonnegFunction":
        return cls(lattice, float(value))

    def exp_neg(self) -> TestFunction:
        return TestFunction(self.lattice, np.exp(-self.values))
