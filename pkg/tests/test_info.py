import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ppinfo.info import (
    CHECKED,
    AbsoluteContinuityViolation,
    Nondimensionalized,
    Verdict,
    clark_igf,
    clark_igf_f_substituted,
    corrected_entropy_moments,
    cumulant_functional,
    differential_entropy,
    entropy_moments_audit,
    kl_divergence,
    laplace_functional,
    mc_entropy,
    shannon_entropy_audit,
)
from ppinfo.measure import ReferenceMeasure
from ppinfo.models import IIDClusterModel, MultiBernoulliModel, PoissonModel, desk_lattice, desk_models
from ppinfo.space import QuadratureGrid
from ppinfo.units import NonpositiveLog

MODELS = desk_models()
GRID = QuadratureGrid(100)
LAT = desk_lattice()
KS = [0.1, 1.0, 3.28084, 1000.0]


def ref(c):
    return ReferenceMeasure.of(c)


def poisson_de_series(total, c_lambda):
    """Independent oracle: sum over n of pmf(n) * (Lambda - n log(c lambda) + log n!)."""
    n = np.arange(int(stats.poisson.isf(1e-13, total)) + 1)
    pmf = stats.poisson.pmf(n, total)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    return float(np.sum(pmf * (total - n * math.log(c_lambda) + logfact)))


def mean_count(m):
    return m.mean_cardinality(GRID.resolve_n_max(m))


class TestDifferentialEntropy:
    def test_empty_only(self):
        assert differential_entropy(MODELS["empty"], ref(2.0), GRID) == 0.0

    def test_poisson_series(self, poisson):
        assert differential_entropy(poisson, ref(2.0), GRID) == pytest.approx(
            poisson_de_series(5.0, 1.0), abs=1e-6
        )

    def test_doubling_c(self, poisson):
        d2 = differential_entropy(poisson, ref(2.0), GRID)
        d4 = differential_entropy(poisson, ref(4.0), GRID)
        assert d2 - d4 == pytest.approx(5 * math.log(2), abs=1e-8)
        assert d4 == pytest.approx(poisson_de_series(5.0, 2.0), abs=1e-6)

    @pytest.mark.parametrize("name", sorted(MODELS))
    def test_c_shift_law(self, name):
        m = MODELS[name]
        a = differential_entropy(m, ref(2.0), GRID)
        b = differential_entropy(m, ref(7.0), GRID)
        assert b == pytest.approx(a - mean_count(m) * math.log(3.5), abs=1e-8)

    @pytest.mark.parametrize("k", KS)
    def test_relabeling_invariance(self, k):
        for name, m in MODELS.items():
            a = differential_entropy(m, ref(2.0), GRID)
            b = differential_entropy(m.convert(k), ref(2.0).convert(k), GRID)
            assert b == pytest.approx(a, abs=1e-8), name


class TestKL:
    def test_self(self):
        for name, m in MODELS.items():
            assert abs(kl_divergence(m, m, GRID)) <= 1e-10, name

    def test_poisson_closed_form(self):
        got = kl_divergence(PoissonModel(LAT, 0.5), PoissonModel(LAT, 0.4), GRID)
        assert got == pytest.approx(4 - 5 + 5 * math.log(5 / 4), abs=1e-6)

    def test_absolute_continuity(self, mb):
        with pytest.raises(AbsoluteContinuityViolation):
            kl_divergence(MODELS["poisson"], mb, GRID)

    @pytest.mark.parametrize("k", KS)
    def test_relabeling_invariance(self, k):
        m1, m0 = MODELS["poisson_ramp"], MODELS["poisson"]
        a = kl_divergence(m1, m0, GRID)
        assert kl_divergence(m1.convert(k), m0.convert(k), GRID) == pytest.approx(a, abs=1e-8)


def random_model(rng, kind):
    pdf = rng.uniform(0.1, 1.0, LAT.size)
    pdf /= pdf.sum() * LAT.cell_volume
    if kind == "poisson":
        return PoissonModel(LAT, rng.uniform(0.05, 0.6) * pdf / pdf.mean())
    if kind == "iid":
        return IIDClusterModel(LAT, rng.dirichlet(np.ones(4)), pdf)
    return MultiBernoulliModel(LAT, [(rng.uniform(0.05, 0.95), pdf), (rng.uniform(0.05, 0.95), pdf[::-1])])


@pytest.mark.parametrize("seed", range(20))
def test_kl_nonnegative_on_random_pairs(seed):
    rng = np.random.default_rng(seed)
    kind = ["poisson", "iid", "mb"][seed % 3]
    m1, m0 = random_model(rng, kind), random_model(rng, kind)
    assert kl_divergence(m1, m0, GRID) >= -1e-9


class TestMonteCarlo:
    def test_empty_only(self):
        assert mc_entropy(MODELS["empty"], ref(2.0), 50, 0) == (0.0, 0.0)

    def test_needs_two_samples(self, poisson):
        with pytest.raises(ValueError):
            mc_entropy(poisson, ref(2.0), 1, 0)

    def test_reproducible(self, poisson):
        assert mc_entropy(poisson, ref(2.0), 500, 9) == mc_entropy(poisson, ref(2.0), 500, 9)

    @pytest.mark.parametrize("name", sorted(set(MODELS) - {"empty"}))
    def test_agrees_with_quadrature(self, name):
        m = MODELS[name]
        est, se = mc_entropy(m, ref(2.0), 100_000, 11)
        assert abs(est - differential_entropy(m, ref(2.0), GRID)) <= 3 * se

    def test_standard_error_scaling(self, poisson):
        _, se1 = mc_entropy(poisson, ref(2.0), 20_000, 3)
        _, se2 = mc_entropy(poisson, ref(2.0), 40_000, 4)
        assert se2 / se1 == pytest.approx(1 / math.sqrt(2), rel=0.2)


class TestClarkIgf:
    def test_alpha_zero(self, poisson):
        r = clark_igf(poisson, 1.0, 0, GRID)
        assert r.verdict is Verdict.WELL_DEFINED
        assert r.value == pytest.approx(1.0, abs=1e-6)

    def test_alpha_half(self, poisson):
        r = clark_igf(poisson, 1.0, "1/2", GRID)
        assert r.verdict is Verdict.INCOMMENSURABLE_SUM and r.value is None
        assert r.exponents[:4] == (0, Fraction(1, 2), 1, Fraction(3, 2))
        assert r.offending[0] == (0, 1)

    def test_nondimensionalized_depends_on_k(self, poisson):
        a = clark_igf(poisson, 1.0, "1/2", GRID, Nondimensionalized(1.0))
        b = clark_igf(poisson, 1.0, "1/2", GRID, Nondimensionalized(2.0))
        assert abs(a.value - b.value) > 0.1
        assert "not a defined quantity" in a.notes[0]

    def test_nondimensionalized_matches_direct_recomputation(self, poisson):
        # alpha = 1/2: sum_n e^{-5(1/2)} / sqrt(n!) * (sqrt(lambda/k) L k)^n ... computed directly
        k = 2.0
        lam, L = 0.5 / k, 10.0 * k
        direct = sum(
            math.exp(-2.5 - 0.5 * math.lgamma(n + 1)) * (math.sqrt(lam) * L) ** n
            for n in range(GRID.resolve_n_max(poisson) + 1)
        )
        r = clark_igf(poisson, 1.0, "1/2", GRID, Nondimensionalized(k))
        assert r.value == pytest.approx(direct, rel=1e-10)

    def test_rejects_float_alpha(self, poisson):
        with pytest.raises(TypeError):
            clark_igf(poisson, 1.0, 0.5, GRID)


class TestFSubstituted:
    @pytest.mark.parametrize("alpha", [0, "1/2", 2])
    def test_always_incommensurable(self, poisson, alpha):
        r = clark_igf_f_substituted(poisson, ref(2.0), 1.0, alpha, GRID)
        assert r.verdict is Verdict.INCOMMENSURABLE_SUM
        assert r.exponents[:3] == (0, 1, 2)

    @pytest.mark.parametrize("alpha", [0, "1/3", -1])
    def test_empty_only_single_term(self, alpha):
        r = clark_igf_f_substituted(MODELS["empty"], ref(2.0), 1.0, alpha, GRID)
        assert r.verdict is Verdict.WELL_DEFINED and r.value == 1.0


class TestLaplaceCumulant:
    def test_trivial(self, poisson):
        assert laplace_functional(poisson, 0.0, 0, GRID).value == pytest.approx(1.0, abs=1e-6)
        assert cumulant_functional(poisson, 0.0, 0, GRID).value == pytest.approx(0.0, abs=1e-6)

    def test_poisson_closed_form(self, poisson):
        f = -math.log(0.8)
        assert laplace_functional(poisson, f, 0, GRID).value == pytest.approx(math.exp(-1), abs=1e-6)
        assert cumulant_functional(poisson, f, 0, GRID).value == pytest.approx(-1.0, abs=1e-6)

    def test_verdict_propagates(self, poisson):
        assert laplace_functional(poisson, 0.3, "1/2", GRID).verdict is Verdict.INCOMMENSURABLE_SUM
        r = cumulant_functional(poisson, 0.3, "1/2", GRID)
        assert r.verdict is Verdict.INCOMMENSURABLE_SUM and r.value is None

    def test_nonpositive_log(self, poisson):
        # exactly one point and exp(-f) underflowing to zero leave L = 0
        one_point = IIDClusterModel(LAT, [0.0, 1.0])
        with pytest.raises(NonpositiveLog):
            cumulant_functional(one_point, 1e4, 0, GRID)


class TestShannonAudit:
    def test_checked_poisson(self, poisson):
        r = shannon_entropy_audit(poisson, GRID)
        assert r.verdict is Verdict.DIMENSIONAL_LOG
        assert r.offending[0] == 1
        assert r.terms[1].log_argument_exponent == -1

    def test_checked_empty(self):
        r = shannon_entropy_audit(MODELS["empty"], GRID)
        assert r.verdict is Verdict.WELL_DEFINED and r.value == 0.0

    @pytest.mark.parametrize("k", KS)
    def test_nondimensionalized_shift(self, k):
        for name, m in MODELS.items():
            base = shannon_entropy_audit(m, GRID, Nondimensionalized(1.0)).value
            moved = shannon_entropy_audit(m, GRID, Nondimensionalized(k)).value
            assert moved - base == pytest.approx(mean_count(m) * math.log(k), abs=1e-6), name

    def test_doubling_k(self, poisson):
        a = shannon_entropy_audit(poisson, GRID, Nondimensionalized(3.0)).value
        b = shannon_entropy_audit(poisson, GRID, Nondimensionalized(6.0)).value
        assert b - a == pytest.approx(5 * math.log(2), abs=1e-6)


class TestMomentAudit:
    @pytest.mark.parametrize("m", range(5))
    def test_checked_fails_with_mass_beyond_empty(self, poisson, m):
        assert entropy_moments_audit(poisson, m, GRID).verdict is Verdict.DIMENSIONAL_LOG

    @pytest.mark.parametrize("k", [0.5, 4.0])
    def test_zeroth_moment(self, poisson, k):
        assert entropy_moments_audit(poisson, 0, GRID, Nondimensionalized(k)).value == pytest.approx(1.0, abs=1e-9)

    def test_first_moment_is_minus_shannon(self, models):
        for m in models.values():
            mode = Nondimensionalized(2.5)
            a = entropy_moments_audit(m, 1, GRID, mode).value
            assert a == pytest.approx(-shannon_entropy_audit(m, GRID, mode).value, abs=1e-10)

    def test_order_limit(self, poisson):
        with pytest.raises(ValueError):
            entropy_moments_audit(poisson, 5, GRID)


class TestCorrectedMoments:
    def test_first_is_minus_de(self):
        for m in MODELS.values():
            assert corrected_entropy_moments(m, ref(2.0), 1, GRID) == pytest.approx(
                -differential_entropy(m, ref(2.0), GRID), abs=1e-10
            )

    def test_zeroth(self):
        for m in MODELS.values():
            assert corrected_entropy_moments(m, ref(2.0), 0, GRID) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("order", range(5))
    def test_empty_only(self, order):
        expected = 1.0 if order == 0 else 0.0
        assert corrected_entropy_moments(MODELS["empty"], ref(3.0), order, GRID) == expected

    def test_poisson_second_moment_series(self, poisson):
        # log f = -5 - log n! at c lambda = 1, so the second moment is a series in n,
        # truncated where the quadrature truncates since (log n!)^2 weights the tail
        n = np.arange(GRID.resolve_n_max(poisson) + 1)
        pmf = stats.poisson.pmf(n, 5.0)
        logf = -5.0 - np.array([math.lgamma(k + 1) for k in n])
        assert corrected_entropy_moments(poisson, ref(2.0), 2, GRID) == pytest.approx(
            float(np.sum(pmf * logf**2)), rel=1e-9
        )


alphas = st.fractions(min_value=-2, max_value=2, max_denominator=6)


@settings(max_examples=25, deadline=None)
@given(alphas, st.sampled_from(sorted(MODELS)))
def test_igf_verdict_iff_alpha_zero_or_empty(alpha, name):
    r = clark_igf(MODELS[name], 1.0, alpha, GRID, CHECKED)
    assert r.well_defined == (alpha == 0 or name == "empty")
    # the verdict tracks the listed exponents exactly
    assert (r.verdict is Verdict.INCOMMENSURABLE_SUM) == (len(set(r.exponents)) > 1)


@settings(max_examples=25, deadline=None)
@given(alphas, st.sampled_from(sorted(MODELS)))
def test_f_substituted_verdict_iff_empty(alpha, name):
    r = clark_igf_f_substituted(MODELS[name], ref(2.0), 1.0, alpha, GRID, CHECKED)
    assert r.well_defined == (name == "empty")
