import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flgi_trials.errors import ConfigurationError, ContractError, ResourceBudgetError
from flgi_trials.qtest import (
    EXPECTATION_APPROX,
    QUADRATURE,
    AlphaSequence,
    QNull,
    QNullConfig,
    critical_value,
    decide,
    dichotomize,
    exact_q_null,
    expected_rejection_rate,
    mc_q_null,
    q_statistic,
    run_qtest,
    state_count,
)
from flgi_trials.trial_engine import run_trial


def make_null(pmf, **kw):
    pmf = np.asarray(pmf, dtype=float)
    base = dict(
        origin="test",
        p_common=0.5,
        blocks=len(pmf) - 1,
        block_size=1,
        n_categories=1,
        n_arms=2,
        burn_in=0,
        theta=0.5,
    )
    base.update(kw)
    return QNull(pmf=pmf, **base)


class TestDichotomize:
    def test_threshold_is_strict(self):
        seq = dichotomize([0.5, 0.5, 0.5], theta=0.5)
        assert seq.bits == (0, 0, 0)

    def test_burn_in_bits_kept_but_excluded_from_q(self):
        seq = dichotomize([0.2, 0.9, 0.6, 0.4], theta=0.5, burn_in=2)
        assert seq.bits == (0, 1, 1, 0)
        assert seq.post_burn_in() == (1, 0)
        assert q_statistic(seq) == 1

    def test_multiarm_threshold(self):
        seq = dichotomize([0.3, 0.25, 0.26], theta=0.25)
        assert seq.bits == (1, 0, 1)

    def test_invalid_theta(self):
        with pytest.raises(ConfigurationError):
            AlphaSequence(bits=(0, 1), theta=1.0, burn_in=0)


class TestQStatistic:
    def test_all_ones(self):
        assert q_statistic(dichotomize([0.9] * 8, 0.5)) == 8

    def test_alternating(self):
        assert q_statistic(dichotomize([0.9, 0.1] * 5, 0.5)) == 5

    def test_forty_block_range(self):
        probs = np.linspace(0.0, 1.0, 40)
        q = q_statistic(dichotomize(probs, theta=0.25, burn_in=2))
        assert 0 <= q <= 38


class TestStateCount:
    def test_block_two(self):
        assert state_count(1, 2) == 15

    def test_block_one(self):
        assert state_count(1, 1) == 5

    def test_zero_blocks(self):
        assert state_count(0, 2) == 1

    def test_matches_recursion_reachable_states(self, table_small):
        # with an interior category weight every composition is reachable
        from flgi_trials.alloc_dist import BlockConfig, mixture_null

        mix = mixture_null(2, BlockConfig(2, 2, n_mc=200), table_small, 0.5)
        n_states = len(mix.states) + (mix.point_mass_at_0 > 0) + (
            mix.point_mass_at_1 > 0
        )
        # point masses can pool several states; reachable distinct states
        # cannot exceed the composition count
        assert n_states <= state_count(1, 2)
        assert len(mix.states) >= state_count(1, 2) - 6


class TestExactQNull:
    def test_sums_to_one_and_symmetric(self, table_small):
        cfg = QNullConfig(blocks=6, block_size=2, n_categories=2, n_mc=1000)
        for mode in (QUADRATURE, EXPECTATION_APPROX):
            null = exact_q_null(cfg, 0.5, table_small, mode=mode)
            assert null.pmf.sum() == pytest.approx(1.0, abs=1e-9)
            for q in range(7):
                assert null.pmf[q] == pytest.approx(null.pmf[6 - q], abs=1e-6)

    def test_modes_agree_in_total_variation(self, table_small):
        cases = [
            QNullConfig(blocks=6, block_size=2, n_categories=1, n_mc=1000),
            QNullConfig(blocks=6, block_size=2, n_categories=2, n_mc=1000),
            QNullConfig(blocks=12, block_size=1, n_categories=1, n_mc=1000),
            QNullConfig(blocks=4, block_size=3, n_categories=3, n_mc=1000),
            QNullConfig(blocks=3, block_size=4, n_categories=2, n_mc=1000),
        ]
        for cfg in cases:
            for p_common in (0.3, 0.5, 0.7):
                quad = exact_q_null(cfg, p_common, table_small, mode=QUADRATURE)
                approx = exact_q_null(
                    cfg, p_common, table_small, mode=EXPECTATION_APPROX
                )
                tv = 0.5 * np.abs(quad.pmf - approx.pmf).sum()
                assert tv <= 0.02

    def test_matches_mc_histogram(self, table_small):
        # odd run count so the estimated ratio cannot land exactly on theta
        cfg = QNullConfig(blocks=2, block_size=1, n_categories=1, n_mc=101)
        exact = exact_q_null(cfg, 0.5, table_small, mode=QUADRATURE)
        reps = 1_000_000
        mc = mc_q_null(cfg, 0.5, table_small, reps=reps, seed=4)
        se = np.sqrt(exact.pmf * (1 - exact.pmf) / reps)
        assert np.all(np.abs(mc.pmf - exact.pmf) <= 3 * se)

    def test_budget_guard(self, table_small):
        cfg = QNullConfig(blocks=10, block_size=2, n_categories=2)
        with pytest.raises(ResourceBudgetError, match="mc_q_null"):
            exact_q_null(cfg, 0.5, table_small, mode=QUADRATURE)

    def test_multiarm_needs_mc(self, table_small):
        cfg = QNullConfig(blocks=4, block_size=2, n_arms=3, theta=1 / 3)
        with pytest.raises(ConfigurationError, match="two arms"):
            exact_q_null(cfg, 0.5, table_small)


class TestMcQNull:
    def test_null_symmetry(self, table_small):
        cfg = QNullConfig(blocks=6, block_size=2, n_categories=1, n_mc=500)
        reps = 20_000
        null = mc_q_null(cfg, 0.5, table_small, reps=reps, seed=9)
        below = null.pmf[:3].sum()
        above = null.pmf[4:].sum()
        se = np.sqrt(0.5 / reps)
        assert abs(below - above) < 3 * se

    def test_reject_region_mass_below_alpha(self, table_small):
        cfg = QNullConfig(blocks=6, block_size=2, n_categories=1, n_mc=300)
        null = mc_q_null(cfg, 0.5, table_small, reps=4000, seed=2)
        c_q, _ = critical_value(null, 0.05)
        assert null.tail(c_q) < 0.05

    def test_deterministic(self, table_small):
        cfg = QNullConfig(blocks=4, block_size=2, n_categories=1, n_mc=200)
        a = mc_q_null(cfg, 0.5, table_small, reps=500, seed=31)
        b = mc_q_null(cfg, 0.5, table_small, reps=500, seed=31)
        np.testing.assert_array_equal(a.pmf, b.pmf)


class TestCriticalValue:
    def test_degenerate_null_all_mass_at_zero(self):
        null = make_null([1.0, 0.0, 0.0])
        c_q, gamma = critical_value(null, 0.05)
        assert c_q == 0
        assert gamma == pytest.approx(0.05)

    def test_uniform_null(self):
        null = make_null(np.full(11, 1 / 11))
        c_q, gamma = critical_value(null, 0.05)
        assert null.tail(c_q) < 0.05 <= null.tail(c_q - 1)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(0.001, 1.0), min_size=2, max_size=40),
        st.floats(0.005, 0.5),
    )
    def test_randomized_rule_is_exact_level(self, weights, alpha):
        pmf = np.asarray(weights) / np.sum(weights)
        null = make_null(pmf)
        c_q, gamma = critical_value(null, alpha)
        level = null.tail(c_q) + gamma * null.pmf[c_q]
        assert level == pytest.approx(alpha, abs=1e-9)
        assert 0.0 <= gamma <= 1.0


class TestDecision:
    def test_above_critical_always_rejects(self):
        null = make_null([0.5, 0.3, 0.15, 0.05])
        c_q, _ = critical_value(null, 0.1)
        assert c_q == 2
        decision = decide(3, null, 0.1, seed=0)
        assert decision.reject and decision.q == 3
        assert decision.p_value == pytest.approx(0.05)

    def test_boundary_rejects_with_frequency_gamma(self):
        null = make_null([0.5, 0.3, 0.15, 0.05])
        c_q, gamma = critical_value(null, 0.1)
        draws = 100_000
        hits = sum(decide(c_q, null, 0.1, seed=s).reject for s in range(draws))
        se = np.sqrt(gamma * (1 - gamma) / draws)
        assert hits / draws == pytest.approx(gamma, abs=3 * se)

    def test_below_never_rejects(self):
        null = make_null([0.5, 0.3, 0.15, 0.05])
        assert not decide(0, null, 0.1, seed=1).reject

    def test_expected_rejection_rate_matches_level_under_null(self):
        null = make_null([0.4, 0.3, 0.2, 0.1])
        qs = np.random.default_rng(5).choice(4, size=200_000, p=null.pmf)
        assert expected_rejection_rate(qs, null, 0.08) == pytest.approx(
            0.08, abs=0.003
        )


class TestRunQTest:
    def test_end_to_end_decision(self, table_small):
        from flgi_trials.trial_engine import Scenario

        scn = Scenario(
            n_patients=12,
            block_size=2,
            success_probs=((0.5,), (0.5,)),
            mc_runs=300,
            burn_in=2,
        )
        rec = run_trial(scn, table=table_small, seed=3)
        cfg = QNullConfig(
            blocks=6, block_size=2, n_categories=1, n_mc=300, burn_in=2
        )
        null = exact_q_null(cfg, 0.5, table_small, mode=EXPECTATION_APPROX)
        decision = run_qtest(rec, 0, 1, null, alpha=0.05, seed=1)
        assert 0 <= decision.q <= 4
        assert 0.0 <= decision.p_value <= 1.0

    def test_mismatched_null_raises(self, table_small):
        from flgi_trials.trial_engine import Scenario

        scn = Scenario(
            n_patients=12,
            block_size=2,
            success_probs=((0.5,), (0.5,)),
            mc_runs=300,
            burn_in=2,
        )
        rec = run_trial(scn, table=table_small, seed=3)
        null = make_null(np.full(7, 1 / 7), blocks=12, block_size=1, burn_in=6)
        with pytest.raises(ContractError, match="block_size"):
            run_qtest(rec, 0, 1, null, alpha=0.05, seed=1)
