import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppinfo.models import (
    IIDClusterModel,
    MultiBernoulliModel,
    PoissonModel,
    cardinality_pmf,
    desk_models,
    janossy,
    pgfl_closed_form,
    sample,
    sample_many,
)
from ppinfo.space import DuplicatePoints, OutOfWindow, PointPattern, TestFunction

E5 = math.exp(-5.0)

N_MC = 100_000


class TestJanossy:
    def test_poisson_empty(self, poisson):
        p = janossy(poisson, PointPattern())
        assert p.value == pytest.approx(E5, rel=1e-12) and p.unit == 0

    def test_poisson_one_point(self, poisson):
        p = janossy(poisson, PointPattern.of(3.3))
        assert p.value == pytest.approx(0.5 * E5, rel=1e-12) and p.unit == -1

    def test_multi_bernoulli(self, mb):
        assert janossy(mb, PointPattern()).value == pytest.approx(0.5)
        p = janossy(mb, PointPattern.of(7.1))
        assert p.value == pytest.approx(0.05) and p.unit == -1
        assert janossy(mb, PointPattern.of(1.0, 2.0)).value == 0.0

    def test_rejects_invalid_patterns(self, poisson):
        with pytest.raises(DuplicatePoints):
            janossy(poisson, PointPattern.of(1.0, 1.0))
        with pytest.raises(OutOfWindow):
            janossy(poisson, PointPattern.of(-1.0))


class TestCardinality:
    def test_poisson(self, poisson):
        assert cardinality_pmf(poisson, 2) == pytest.approx(E5 * 12.5, rel=1e-12)

    def test_empty_only(self, models):
        e = models["empty"]
        assert cardinality_pmf(e, 0) == 1.0 and cardinality_pmf(e, 3) == 0.0

    def test_multi_bernoulli(self, mb, models):
        assert cardinality_pmf(mb, 1) == pytest.approx(0.5)
        mb2 = models["multi_bernoulli_2"]
        assert [cardinality_pmf(mb2, n) for n in range(3)] == pytest.approx([0.04, 0.42, 0.54])

    def test_tail_rule(self, models):
        for m in models.values():
            n_max = m.truncation(1e-10)
            assert sum(m.cardinality_pmf(n) for n in range(n_max + 1)) >= 1 - 1e-8
        assert models["poisson"].truncation(1e-10) == 25

    def test_invalid_pmf(self, lattice):
        with pytest.raises(ValueError):
            IIDClusterModel(lattice, [0.5, 0.6])
        with pytest.raises(ValueError):
            MultiBernoulliModel(lattice, [(1.2, "uniform")])
        with pytest.raises(ValueError):
            PoissonModel(lattice, -1.0)


class TestSampling:
    def test_empty_only(self, models):
        assert len(sample(models["empty"], 3)) == 0

    def test_reproducible(self, models):
        m = models["iid_cluster"]
        assert sample(m, 11) == sample(m, 11)
        assert sample_many(m, 5, 2) == sample_many(m, 5, 2)

    def test_points_in_window_and_distributed(self, models):
        m = models["poisson_ramp"]
        pts = np.concatenate([p.as_array(1) for p in sample_many(m, 2000, 5)])
        assert np.all((pts >= 0) & (pts <= 10))
        # ramp intensity 0.05 + 0.06 x puts 2.5 of its 3.5 mass on the right half
        assert np.mean(pts > 5) == pytest.approx(2.5 / 3.5, abs=0.02)

    def test_poisson_mean_cardinality(self, poisson):
        counts = np.array([len(p) for p in sample_many(poisson, N_MC, 1)])
        assert abs(counts.mean() - 5.0) <= 3 * math.sqrt(5.0 / N_MC)

    def test_bernoulli_empty_frequency(self, mb):
        counts = np.array([len(p) for p in sample_many(mb, N_MC, 2)])
        assert abs(np.mean(counts == 0) - 0.5) <= 3 * math.sqrt(0.25 / N_MC)

    @pytest.mark.parametrize("name", ["multi_bernoulli_2", "iid_cluster"])
    def test_frequencies_match_pmf(self, models, name):
        m = models[name]
        counts = np.bincount([len(p) for p in sample_many(m, N_MC, 3)], minlength=5)
        for n in range(5):
            p = m.cardinality_pmf(n)
            se = math.sqrt(p * (1 - p) / N_MC)
            assert abs(counts[n] / N_MC - p) <= 3 * se + 1e-12


class TestClosedFormPgfl:
    def test_unit_function(self, models, lattice):
        for name, m in models.items():
            assert pgfl_closed_form(m, TestFunction.constant(lattice, 1.0)) == pytest.approx(1.0, abs=1e-12), name

    def test_poisson_constant(self, poisson):
        assert pgfl_closed_form(poisson, 0.8) == pytest.approx(math.exp(-1), rel=1e-12)

    def test_bernoulli_at_zero(self, mb):
        assert pgfl_closed_form(mb, 0.0) == pytest.approx(0.5)


class TestConvert:
    @pytest.mark.parametrize("k", [0.1, 3.28084])
    def test_janossy_scales_by_k_power(self, models, k):
        phi = PointPattern.of(2.05, 6.35)
        for m in models.values():
            mk = m.convert(k)
            assert mk.janossy(phi.convert(k)).value == pytest.approx(
                m.janossy(phi).value * k**-2, rel=1e-10
            )


MODELS = desk_models()
cells = st.integers(min_value=0, max_value=99)


@settings(max_examples=60, deadline=None)
@given(st.lists(cells, min_size=0, max_size=3, unique=True), st.permutations(range(3)))
def test_janossy_symmetric_with_unit_law(idx, perm):
    models = MODELS
    pts = tuple((0.1 * i + 0.05,) for i in idx)
    phi = PointPattern(pts)
    order = [i for i in perm if i < len(pts)]
    for m in models.values():
        a, b = m.janossy(phi), m.janossy(phi.permuted(order))
        assert a == b
        assert a.unit == -len(pts)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=100, max_size=100), st.lists(st.floats(0, 1), min_size=100, max_size=100))
def test_closed_form_in_unit_interval_and_monotone(a, b):
    models = MODELS
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    for m in models.values():
        g_lo, g_hi = m.pgfl_closed_form(lo), m.pgfl_closed_form(hi)
        assert -1e-12 <= g_lo <= g_hi + 1e-12 <= 1 + 2e-12
