from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from collateral_cds import (
    CopulaSpec,
    DealSpec,
    MarginalCurve,
    ScenarioState,
    SurvivalSet,
    clayton_h0_4party,
    legs_3party,
    legs_4party,
    survival_measure_hazard,
)
from collateral_cds.copula import evaluate
from collateral_cds.mc import (
    InsufficientPathsError,
    MCEstimate,
    SimConfig,
    batch_stream,
    draw_default_times,
    mc_density_mass,
    mc_hazard_binned,
    mc_price_survival_measure,
    mc_price_weighted,
    sample_clayton,
    sample_clayton_thresholds,
    standard_gamma,
)

from conftest import curves_from

FIG1 = curves_from((200, 100, 120))
FIG2 = curves_from((200, 30, 150, 75))
Z = 3.29


class TestStreams:
    def test_same_batch_same_draws(self):
        a = batch_stream(7, 3).random(5)
        b = batch_stream(7, 3).random(5)
        assert np.array_equal(a, b)

    def test_batches_differ(self):
        assert not np.array_equal(batch_stream(7, 0).random(5), batch_stream(7, 1).random(5))

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_range(self, seed):
        with pytest.raises(ValueError):
            batch_stream(seed, 0)

    def test_config_validation(self):
        for kw in ({"paths": 0}, {"batch": 0}, {"seed": -3}, {"jobs": 0}):
            with pytest.raises(ValueError):
                SimConfig(**kw)

    def test_batches_cover_paths(self):
        sim = SimConfig(paths=123_457, batch=10_000)
        assert sum(n for _, n in sim.batches()) == 123_457
        assert [b for b, _ in sim.batches()] == list(range(13))


class TestGamma:
    @pytest.mark.parametrize("shape", [0.2, 0.5, 1.0, 3.7])
    def test_moments(self, shape):
        g = standard_gamma(batch_stream(1, 0), shape, 400_000)
        se = math.sqrt(shape / g.size)
        assert abs(g.mean() - shape) <= 4 * se
        assert g.var() == pytest.approx(shape, rel=0.03)

    @pytest.mark.parametrize("shape", [0.3, 2.0])
    def test_distribution(self, shape):
        g = standard_gamma(batch_stream(2, 0), shape, 100_000)
        assert stats.kstest(g, stats.gamma(shape).cdf).pvalue > 0.01

    def test_rejects_nonpositive_shape(self):
        with pytest.raises(ValueError):
            standard_gamma(batch_stream(0, 0), 0.0, 3)


class TestClaytonSampler:
    def test_rejects_negative_alpha(self):
        with pytest.raises(ValueError):
            sample_clayton(-0.5, 2, batch_stream(0, 0))

    def test_single_vector(self):
        u = sample_clayton(1.0, 3, batch_stream(0, 0))
        assert u.shape == (3,) and np.all((u > 0) & (u < 1))

    def test_thresholds_positive(self):
        e = sample_clayton_thresholds(2.0, 4, batch_stream(0, 0), 1000)
        assert e.shape == (1000, 4) and np.all(e > 0)

    @pytest.mark.parametrize("alpha, tol", [(0.0, 0.003), (2.0, 0.005)])
    def test_kendall_tau(self, alpha, tol):
        u = sample_clayton(alpha, 2, batch_stream(11, 0), 1_000_000)
        tau = stats.kendalltau(u[:, 0], u[:, 1]).statistic
        assert abs(tau - alpha / (alpha + 2)) <= tol

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 4.0])
    def test_uniform_margin(self, alpha):
        u = sample_clayton(alpha, 3, batch_stream(12, 0), 1_000_000)
        d = stats.kstest(u[:, 0], "uniform").statistic
        assert d < 1.628 / math.sqrt(u.shape[0])

    @pytest.mark.parametrize("dim", [2, 3, 4])
    def test_joint_law(self, dim):
        alpha = 1.5
        n = 1_000_000
        u = sample_clayton(alpha, dim, batch_stream(13, dim), n)
        spec = CopulaSpec.clayton(alpha, dim)
        grid = (0.1, 0.3, 0.5, 0.7, 0.9)
        for a, b in itertools.product(grid, repeat=2):
            point = np.array([a, b] + [0.5 * (a + b)] * (dim - 2))
            p = float(evaluate(spec, point))
            emp = np.mean(np.all(u <= point, axis=1))
            assert abs(emp - p) <= 3 * math.sqrt(p * (1 - p) / n), (a, b, emp, p)


class TestDefaultTimes:
    def test_flat_inversion(self):
        curves = (MarginalCurve.flat(0.05), MarginalCurve.flat(0.2))
        rng_a, rng_b = batch_stream(3, 0), batch_stream(3, 0)
        tau = draw_default_times(0.0, curves, rng_a, 1000)
        e = sample_clayton_thresholds(0.0, 2, rng_b, 1000)
        np.testing.assert_allclose(tau, e / [0.05, 0.2], rtol=1e-14)

    def test_no_ties(self):
        curves = (MarginalCurve.flat(0.05),) * 3
        tau = draw_default_times(3.0, curves, batch_stream(4, 0), 100_000)
        assert np.all(np.diff(np.sort(tau, axis=1), axis=1) > 0)

    def test_marginal_law(self):
        curve = MarginalCurve((0.01, 0.05), (3.0,), 0.4)
        tau = draw_default_times(2.0, (curve, MarginalCurve.flat(0.02)), batch_stream(5, 0), 200_000)
        s = curve.survival(np.array([1.0, 3.0, 6.0]))
        emp = [(tau[:, 0] > t).mean() for t in (1.0, 3.0, 6.0)]
        np.testing.assert_allclose(emp, s, atol=4 * math.sqrt(0.25 / tau.shape[0]))


class TestEstimate:
    def test_interval(self):
        lo, hi = MCEstimate(1.0, 0.1, 100).interval()
        assert (hi - 1.0) == pytest.approx(0.329, abs=5e-4) and lo == pytest.approx(2 - hi)

    def test_zscore_zero_se(self):
        assert MCEstimate(1.0, 0.0, 5).zscore(1.0) == 0.0
        assert MCEstimate(1.0, 0.0, 5).zscore(2.0) == -math.inf


class TestWeightedPricer:
    def test_independence_par_value_zero(self):
        deal = DealSpec(5.0)
        est = mc_price_weighted(0.0, FIG1, deal, SimConfig(paths=200_000, seed=21))
        assert abs(est.value(0.02).zscore(0.0)) <= Z

    def test_three_party(self):
        deal = DealSpec(5.0)
        legs = legs_3party(2.0, FIG1, deal)
        est = mc_price_weighted(2.0, FIG1, deal, SimConfig(paths=300_000, seed=22))
        assert abs(est.par.zscore(legs.par_spread)) <= Z
        assert abs(est.annuity.zscore(legs.annuity)) <= Z

    @pytest.mark.parametrize("seller", [2, 3])
    def test_four_party_both_estimators(self, seller):
        deal = DealSpec(5.0, protection_seller=seller)
        legs = legs_4party(1.0, FIG2, deal)
        sim = SimConfig(paths=200_000, seed=23)
        for est in (mc_price_weighted(1.0, FIG2, deal, sim),
                    mc_price_survival_measure(1.0, FIG2, deal, sim)):
            assert abs(est.par.zscore(legs.par_spread)) <= Z
            assert abs(est.protection.zscore(legs.protection)) <= Z

    def test_survival_measure_needs_outside_party(self):
        with pytest.raises(ValueError):
            mc_price_survival_measure(1.0, FIG1, DealSpec(5.0), SimConfig(paths=10))

    def test_horizon_shorter_than_deal(self):
        with pytest.raises(ValueError):
            mc_price_weighted(1.0, FIG1, DealSpec(5.0), SimConfig(paths=10, horizon=2.0))

    def test_jobs_bitwise(self):
        deal = DealSpec(5.0, protection_seller=3)
        a = mc_price_weighted(2.0, FIG2, deal, SimConfig(paths=60_000, batch=20_000, seed=9, jobs=1))
        b = mc_price_weighted(2.0, FIG2, deal, SimConfig(paths=60_000, batch=20_000, seed=9, jobs=3))
        assert a == b

    def test_seed_changes_estimate(self):
        deal = DealSpec(5.0)
        a = mc_price_weighted(2.0, FIG1, deal, SimConfig(paths=20_000, seed=1))
        b = mc_price_weighted(2.0, FIG1, deal, SimConfig(paths=20_000, seed=2))
        assert a != b


class TestDensityMass:
    @pytest.mark.parametrize("curves, alpha", [(FIG1, 2.0), (FIG2, 1.0)])
    def test_unit_mass(self, curves, alpha):
        est = mc_density_mass(alpha, curves, DealSpec(5.0), SimConfig(paths=300_000, seed=31))
        assert abs(est.zscore(1.0)) <= Z

    def test_independence_exact_weight(self):
        # without dependence the weight is deterministic on the survival event
        est = mc_density_mass(0.0, FIG1, DealSpec(2.0), SimConfig(paths=100_000, seed=3))
        assert abs(est.zscore(1.0)) <= Z


class TestBinnedHazard:
    def test_product_is_marginal(self):
        state = ScenarioState(1.0, {2: 0.8})
        est = mc_hazard_binned(0.0, FIG1, state, SurvivalSet.of(), 0,
                               SimConfig(paths=2_000_000, seed=41), dt=0.05, bin_width=0.2)
        lam = FIG1[0].intensity(1.0).item()
        assert abs(est.zscore(lam)) <= 3.0

    def test_four_party_after_outside_default(self):
        curves = tuple(MarginalCurve.flat(0.2, party=k) for k in range(4))
        alpha = 1.0
        state = ScenarioState(1.1, {3: 1.0})
        members = SurvivalSet.of(0, 1, 2)
        est = mc_hazard_binned(alpha, curves, state, members, 0,
                               SimConfig(paths=10_000_000, seed=42), dt=0.02)
        exact = survival_measure_hazard(CopulaSpec.clayton(alpha, 4), curves, state, members, 0)
        assert exact == pytest.approx(clayton_h0_4party(alpha, curves, 1.1, 1.0), rel=1e-12)
        assert est.mean == pytest.approx(exact, rel=0.10)

    def test_empty_bin(self):
        state = ScenarioState(1.0, {2: 0.5})
        with pytest.raises(InsufficientPathsError):
            mc_hazard_binned(1.0, FIG1, state, SurvivalSet.of(), 0, SimConfig(paths=100, seed=1),
                             bin_width=1e-9)

    def test_conditioned_target_rejected(self):
        with pytest.raises(ValueError):
            mc_hazard_binned(1.0, FIG1, ScenarioState(1.0, {0: 0.5}), SurvivalSet.of(), 0,
                             SimConfig(paths=10))

    def test_survival_member_conditioned_rejected(self):
        with pytest.raises(ValueError):
            mc_hazard_binned(1.0, FIG1, ScenarioState(1.0, {2: 0.5}), SurvivalSet.of(0, 2), 0,
                             SimConfig(paths=10))


@given(st.integers(1, 5), st.integers(1, 7))
def test_batching_never_depends_on_jobs(batches, jobs):
    sim = SimConfig(paths=1000 * batches + 17, batch=1000, jobs=jobs)
    ref = SimConfig(paths=1000 * batches + 17, batch=1000, jobs=1)
    assert sim.batches() == ref.batches()
