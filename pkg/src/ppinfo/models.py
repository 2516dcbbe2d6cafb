"""Simple finite point-process models on a gridded window.

Each model describes its ``n``-point Janossy density as a finite mixture
of product kernels,

    p^(n)(x_1, ..., x_n) = sum_k coef_k * prod_j s_kj(x_j),

where each ``s_kj`` is a per-cell density with unit ``iota**-1``.  That
representation is all the integration layer needs: integrals of product
integrands factor exactly, and anything else falls back to brute-force
summation over cell tuples.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .space import BaseSpace, Lattice, PointPattern, TestFunction, _grid_values
from .units import Quantity

__all__ = [
    "PointProcessModel",
    "PoissonModel",
    "IIDClusterModel",
    "MultiBernoulliModel",
    "EmptyOnlyModel",
    "UnsupportedModel",
    "janossy",
    "cardinality_pmf",
    "sample",
    "sample_many",
    "pgfl_closed_form",
    "desk_lattice",
    "desk_models",
]

SliceTerm = Tuple[float, Tuple[np.ndarray, ...]]
SeedLike = Union[int, np.random.Generator, None]

# Pdfs built from closed forms are renormalized on the grid; a midpoint
# rule that is off by more than this is treated as a specification error.
PDF_NORMALIZATION_TOL = 1e-3


class UnsupportedModel(TypeError):
    pass


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _normalized_pdf(lattice: Lattice, pdf, what: str) -> np.ndarray:
    if pdf is None or (isinstance(pdf, str) and pdf == "uniform"):
        return _frozen(np.full(lattice.size, 1.0 / lattice.space.volume))
    arr = _grid_values(lattice, pdf, what)
    if np.any(arr < 0):
        raise ValueError(f"{what} must be non-negative")
    total = arr.sum() * lattice.cell_volume
    if abs(total - 1.0) > PDF_NORMALIZATION_TOL:
        raise ValueError(f"{what} integrates to {total:.6g} on the window, not 1")
    return _frozen(arr / total)


class PointProcessModel:
    """Common interface of all models.  Instances are immutable."""

    name = "model"

    def __init__(self, lattice: Lattice):
        self.lattice = lattice

    @property
    def space(self) -> BaseSpace:
        return self.lattice.space

    # -- structure ---------------------------------------------------------

    def kernel(self, n: int) -> Tuple[SliceTerm, ...]:
        raise NotImplementedError

    def cardinality_pmf(self, n: int) -> float:
        raise NotImplementedError

    def support_max(self) -> Optional[int]:
        """Largest cardinality with positive mass, or None if unbounded."""
        return None

    def tail_mass(self, n: int) -> float:
        """P(|Phi| > n)."""
        raise NotImplementedError

    def truncation(self, tail_tolerance: float = 1e-10) -> int:
        """Smallest ``n`` with ``P(|Phi| > n) < tail_tolerance``."""
        top = self.support_max()
        n = 0
        while self.tail_mass(n) >= tail_tolerance:
            n += 1
            if top is not None and n >= top:
                return top
        return n

    def convert(self, k: float) -> "PointProcessModel":
        """The same process described in a system where ``1 iota = k iota'``."""
        raise NotImplementedError

    def pgfl_closed_form(self, h: np.ndarray) -> float:
        raise UnsupportedModel(f"no closed-form p.g.fl. for {type(self).__name__}")

    def _draw(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # -- evaluation --------------------------------------------------------

    def slice_values(self, n: int, idx: np.ndarray) -> np.ndarray:
        """Janossy values at cell midpoints for rows of cell-index tuples ``idx``."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, n) if n else np.zeros((1, 0), np.int64)
        # kernels are symmetric sums; a canonical order makes the rounding symmetric too
        idx = np.sort(idx, axis=1)
        out = np.zeros(len(idx))
        for coef, factors in self.kernel(n):
            term = np.full(len(idx), coef)
            for j, s in enumerate(factors):
                term *= s[idx[:, j]]
            out += term
        return out

    def janossy(self, pattern: PointPattern) -> Quantity:
        pts = pattern.validate(self.space)
        n = len(pts)
        if n == 0:
            return Quantity(self.slice_values(0, None)[0], 0)
        idx = self.lattice.locate(pts)
        return Quantity(self.slice_values(n, idx[None, :])[0], -n)

    def mean_cardinality(self, n_max: int) -> float:
        return float(sum(n * self.cardinality_pmf(n) for n in range(n_max + 1)))

    def sample(self, seed: SeedLike = None) -> PointPattern:
        pts = self._draw(_rng(seed))
        return PointPattern(tuple(map(tuple, pts)))

    def _cdf(self, weights: np.ndarray) -> np.ndarray:
        # weight arrays are frozen model attributes, so their identity is a safe key
        cache = self.__dict__.setdefault("_cdf_cache", {})
        key = id(weights)
        if key not in cache:
            cdf = np.cumsum(weights)
            cache[key] = (weights, cdf / cdf[-1])
        return cache[key][1]

    def _points_from_cells(self, rng, weights: np.ndarray, count: int) -> np.ndarray:
        """Inverse-CDF draw of cells by mass, then uniform within the cell."""
        if count == 0:
            return np.empty((0, self.lattice.dimension))
        cdf = self._cdf(weights)
        cells = np.searchsorted(cdf, rng.random(count), side="right")
        cells = np.minimum(cells, len(cdf) - 1)
        multi = np.unravel_index(cells, self.lattice.shape)
        u = rng.random((count, self.lattice.dimension))
        cols = [
            self.lattice.edges[a][multi[a]] + u[:, a] * self.lattice.widths[a]
            for a in range(self.lattice.dimension)
        ]
        return np.stack(cols, axis=1)


class PoissonModel(PointProcessModel):
    """Poisson process with a piecewise-constant intensity (unit iota^-1)."""

    name = "poisson"

    def __init__(self, lattice: Lattice, intensity=0.5):
        super().__init__(lattice)
        lam = _grid_values(lattice, intensity, "intensity")
        if np.any(lam < 0):
            raise ValueError("intensity must be non-negative")
        self.intensity = _frozen(lam)
        self.total = float(lam.sum() * lattice.cell_volume)
        self._kernels = {}

    def kernel(self, n):
        if n not in self._kernels:
            coef = math.exp(-self.total - gammaln(n + 1))
            self._kernels[n] = ((coef, (self.intensity,) * n),)
        return self._kernels[n]

    def cardinality_pmf(self, n):
        return float(stats.poisson.pmf(n, self.total)) if n >= 0 else 0.0

    def tail_mass(self, n):
        return float(stats.poisson.sf(n, self.total))

    def support_max(self):
        return 0 if self.total == 0 else None

    def convert(self, k):
        return PoissonModel(self.lattice.convert(k), self.intensity / float(k))

    def pgfl_closed_form(self, h):
        return math.exp(float(np.sum((h - 1.0) * self.intensity)) * self.lattice.cell_volume)

    def _draw(self, rng):
        n = int(rng.poisson(self.total))
        return self._points_from_cells(rng, self.intensity, n)


class IIDClusterModel(PointProcessModel):
    """Arbitrary cardinality law with i.i.d. point locations."""

    name = "iid_cluster"

    def __init__(self, lattice: Lattice, cardinality: Sequence[float], spatial_pdf=None):
        super().__init__(lattice)
        pmf = np.asarray(cardinality, dtype=float)
        if pmf.ndim != 1 or len(pmf) == 0 or np.any(pmf < 0):
            raise ValueError("cardinality must be a non-empty non-negative sequence")
        if abs(pmf.sum() - 1.0) > 1e-10:
            raise ValueError(f"cardinality pmf sums to {pmf.sum()!r}, not 1")
        nz = np.nonzero(pmf)[0]
        self.pmf = _frozen(pmf[: nz[-1] + 1])
        self.spatial_pdf = _normalized_pdf(lattice, spatial_pdf, "spatial pdf")
        self._tails = _frozen(np.append(np.cumsum(self.pmf[::-1])[::-1][1:], 0.0))

    def kernel(self, n):
        if n >= len(self.pmf) or n < 0:
            return ()
        return ((float(self.pmf[n]), (self.spatial_pdf,) * n),)

    def cardinality_pmf(self, n):
        return float(self.pmf[n]) if 0 <= n < len(self.pmf) else 0.0

    def tail_mass(self, n):
        return float(self._tails[n]) if n < len(self._tails) else 0.0

    def support_max(self):
        return len(self.pmf) - 1

    def convert(self, k):
        return IIDClusterModel(self.lattice.convert(k), self.pmf, self.spatial_pdf / float(k))

    def pgfl_closed_form(self, h):
        a = float(np.sum(h * self.spatial_pdf)) * self.lattice.cell_volume
        return float(sum(p * a**n for n, p in enumerate(self.pmf)))

    def _draw(self, rng):
        cdf = np.cumsum(self.pmf)
        n = int(min(np.searchsorted(cdf / cdf[-1], rng.random(), side="right"), len(cdf) - 1))
        return self._points_from_cells(rng, self.spatial_pdf, n)


class MultiBernoulliModel(PointProcessModel):
    """Independent components, each present with probability ``q_i``."""

    name = "multi_bernoulli"

    def __init__(self, lattice: Lattice, components):
        super().__init__(lattice)
        qs, pdfs = [], []
        for i, (q, pdf) in enumerate(components):
            q = float(q)
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"component {i}: existence probability {q} outside [0, 1]")
            qs.append(q)
            pdfs.append(_normalized_pdf(lattice, pdf, f"component {i} pdf"))
        self.q = tuple(qs)
        self.pdfs = tuple(pdfs)
        # Poisson-binomial cardinality law
        pmf = np.array([1.0])
        for q in self.q:
            pmf = np.convolve(pmf, [1.0 - q, q])
        self.pmf = _frozen(pmf)
        self._tails = _frozen(np.append(np.cumsum(pmf[::-1])[::-1][1:], 0.0))
        self._kernels = {}

    def kernel(self, n):
        m = len(self.q)
        if n < 0 or n > m:
            return ()
        if n not in self._kernels:
            terms = []
            fact = math.factorial(n)
            for chosen in itertools.permutations(range(m), n):
                present = set(chosen)
                w = math.prod(self.q[i] for i in chosen)
                w *= math.prod(1.0 - self.q[i] for i in range(m) if i not in present)
                if w > 0:
                    terms.append((w / fact, tuple(self.pdfs[i] for i in chosen)))
            self._kernels[n] = tuple(terms)
        return self._kernels[n]

    def cardinality_pmf(self, n):
        return float(self.pmf[n]) if 0 <= n < len(self.pmf) else 0.0

    def tail_mass(self, n):
        return float(self._tails[n]) if n < len(self._tails) else 0.0

    def support_max(self):
        nz = np.nonzero(self.pmf)[0]
        return int(nz[-1])

    def convert(self, k):
        pdfs = [p / float(k) for p in self.pdfs]
        return MultiBernoulliModel(self.lattice.convert(k), list(zip(self.q, pdfs)))

    def pgfl_closed_form(self, h):
        dv = self.lattice.cell_volume
        return float(
            math.prod(1.0 - q + q * float(np.sum(h * s)) * dv for q, s in zip(self.q, self.pdfs))
        )

    def _draw(self, rng):
        present = rng.random(len(self.q)) < np.asarray(self.q)
        pts = [self._points_from_cells(rng, s, 1) for s, on in zip(self.pdfs, present) if on]
        if not pts:
            return np.empty((0, self.lattice.dimension))
        pts = np.concatenate(pts)
        return pts[rng.permutation(len(pts))]


class EmptyOnlyModel(PointProcessModel):
    """The process that never has any points."""

    name = "empty"

    def kernel(self, n):
        return ((1.0, ()),) if n == 0 else ()

    def cardinality_pmf(self, n):
        return 1.0 if n == 0 else 0.0

    def tail_mass(self, n):
        return 0.0

    def support_max(self):
        return 0

    def convert(self, k):
        return EmptyOnlyModel(self.lattice.convert(k))

    def pgfl_closed_form(self, h):
        return 1.0

    def _draw(self, rng):
        return np.empty((0, self.lattice.dimension))


# -- functional interface ----------------------------------------------------


def janossy(model: PointProcessModel, pattern: PointPattern) -> Quantity:
    """``p^(|phi|)(phi)``, carrying unit ``iota**-|phi|``."""
    return model.janossy(pattern)


def cardinality_pmf(model: PointProcessModel, n: int) -> float:
    return model.cardinality_pmf(n)


def sample(model: PointProcessModel, seed: SeedLike = None) -> PointPattern:
    return model.sample(seed)


def sample_many(model: PointProcessModel, count: int, seed: SeedLike = None):
    """``count`` independent patterns from one seeded stream."""
    rng = _rng(seed)
    return [model.sample(rng) for _ in range(count)]


def pgfl_closed_form(model: PointProcessModel, h) -> float:
    values = h.values if isinstance(h, TestFunction) else TestFunction(model.lattice, h).values
    return model.pgfl_closed_form(values)


# -- desk-scale reference models ---------------------------------------------


def desk_lattice(cells: int = 100) -> Lattice:
    """The default window: [0, 10] in one dimension."""
    return Lattice(BaseSpace.interval(0.0, 10.0), cells)


def _bump(center: float, width: float):
    return lambda x: math.exp(-0.5 * ((x - center) / width) ** 2)


def _normalize_on(lattice: Lattice, fn) -> np.ndarray:
    v = lattice.sample_function(fn)
    return v / (v.sum() * lattice.cell_volume)


def desk_models(lattice: Optional[Lattice] = None) -> dict:
    """Registered desk-scale models used throughout the tests and the CLI."""
    lattice = lattice or desk_lattice()
    ramp = _normalize_on(lattice, lambda x: 1.0 + 0.1 * x)
    return {
        "poisson": PoissonModel(lattice, 0.5),
        "poisson_ramp": PoissonModel(lattice, lambda x: 0.05 + 0.06 * x),
        "multi_bernoulli": MultiBernoulliModel(lattice, [(0.5, "uniform")]),
        "multi_bernoulli_2": MultiBernoulliModel(
            lattice,
            [
                (0.9, _normalize_on(lattice, _bump(3.0, 1.0))),
                (0.6, _normalize_on(lattice, _bump(7.0, 1.5))),
            ],
        ),
        "iid_cluster": IIDClusterModel(lattice, [0.1, 0.3, 0.4, 0.2], ramp),
        "empty": EmptyOnlyModel(lattice),
    }
