"""Acceptance suite: one test per exit criterion, each printing a PASS line
with the measured values (run with ``pytest -s`` or ``-rA`` to see them all).

Heavy shared computations (Gittins tables, the four-arm study) are module- or
session-scoped fixtures; every replication stream is seeded, so the suite is
fully reproducible.
"""

import math
import time

import numpy as np
import pytest

from flgi_trials.alloc_dist import (
    CategoryState,
    alloc_cdf,
    alloc_law,
    exact_joint_xy,
    mc_alloc_prob,
    moments_from_joint,
)
from flgi_trials.comparators import FISHER, comparator_pvalue
from flgi_trials.gittins import build_gittins_table
from flgi_trials.harness import (
    ALLOC_PROB,
    FISHER_EQUAL,
    FISHER_FLGI,
    ExperimentGrid,
    _map_replications,
    run_multiarm_example,
    run_power_grid,
)
from flgi_trials.qtest import (
    EXPECTATION_APPROX,
    QUADRATURE,
    QNullConfig,
    critical_value,
    exact_q_null,
    expected_rejection_rate,
    mc_q_null,
    q_from_record,
)
from flgi_trials.trial_engine import Scenario


def report(name: str, detail: str):
    print(f"\n[ACCEPTANCE] {name}: PASS ({detail})")


@pytest.fixture(scope="module")
def multiarm_result(table_n80_994):
    return run_multiarm_example(
        seed=0, reps=5000, calibration_reps=20000, table=table_n80_994
    )


@pytest.fixture(scope="session")
def table_n80_994():
    return build_gittins_table(0.994, max_count=86)


class TestCriterion1ExactTreeValue:
    def test_conditional_tail_is_quarter(self, table_small):
        t0 = time.time()
        joint = exact_joint_xy(CategoryState.prior(), 2, 2, table_small)
        elapsed = time.time() - t0
        assert joint.conditional_given_x(2)[2] == 0.25
        assert joint.pmf[2, 2] == pytest.approx(1 / 16, abs=1e-15)
        assert elapsed < 1.0
        report("exact tree value", f"P(Y=2|X=2) = 1/4 exactly in {elapsed*1e3:.0f} ms")


PAPER_TAIL_CFG = QNullConfig(
    blocks=10, block_size=2, n_categories=2, n_mc=1000, burn_in=0
)


@pytest.fixture(scope="module")
def exact_null(table_small):
    return exact_q_null(PAPER_TAIL_CFG, 0.5, table_small, mode=EXPECTATION_APPROX)


class TestCriterion2QNullTail:
    CFG = PAPER_TAIL_CFG

    def test_exact_tail_probability(self, exact_null):
        assert exact_null.pmf[10] == pytest.approx(0.043, abs=0.005)
        report("q-null exact tail", f"P(Q=10) = {exact_null.pmf[10]:.4f} vs 0.043±0.005")

    def test_exact_symmetry(self, exact_null):
        for q in range(11):
            assert exact_null.pmf[q] == pytest.approx(
                exact_null.pmf[10 - q], abs=1e-6
            )
        report("q-null exact symmetry", "pmf symmetric about 5 within 1e-6")

    def test_critical_value(self, exact_null):
        c_q, _ = critical_value(exact_null, 0.05)
        assert c_q == 9
        report("q-null critical value", "c_q = 9 at alpha = 0.05")

    def test_mc_tail_and_symmetry(self, table_small, exact_null):
        reps = 50_000
        mc = mc_q_null(self.CFG, 0.5, table_small, reps=reps, seed=55)
        assert mc.pmf[10] == pytest.approx(0.043, abs=0.008)
        se = np.sqrt(mc.pmf * (1 - mc.pmf) / reps)
        for q in range(11):
            tol = 3 * math.sqrt(2) * max(se[q], se[10 - q])
            assert abs(mc.pmf[q] - mc.pmf[10 - q]) <= tol
        report(
            "q-null monte carlo",
            f"P(Q=10) = {mc.pmf[10]:.4f} at 50k reps; symmetric within 3 SE",
        )


class TestCriterion3TypeIExactness:
    def test_null_rejection_rates(self, table_n40):
        cfg = QNullConfig(
            blocks=20, block_size=2, n_categories=1, n_mc=1000, burn_in=2
        )
        null = mc_q_null(cfg, 0.5, table_n40, reps=20000, seed=101)
        scn = Scenario(
            n_patients=40,
            block_size=2,
            success_probs=((0.5,), (0.5,)),
            allocation_rule="flgi",
            mc_runs=1000,
            burn_in=2,
        )
        rows = _map_replications(
            scn,
            5000,
            np.random.SeedSequence(202),
            table_n40,
            lambda r: (
                q_from_record(r, 0, 1, 0.5, 2),
                comparator_pvalue(FISHER, r),
            ),
            1,
        )
        alloc_rate = expected_rejection_rate(
            np.array([q for q, _ in rows]), null, 0.05
        )
        fisher_rate = float(np.mean([p <= 0.05 for _, p in rows]))
        assert alloc_rate == pytest.approx(0.05, abs=0.007)
        assert fisher_rate < 0.05
        report(
            "type-I exactness",
            f"randomized test {alloc_rate:.4f} (5.0%±0.7); "
            f"unadjusted Fisher {fisher_rate:.4f} < 5%",
        )


class TestCriterion4PatientBenefit:
    def test_table1_row_n40(self, table_n40):
        scn = Scenario(
            n_patients=40,
            block_size=2,
            success_probs=((0.5,), (0.7,)),
            allocation_rule="flgi",
            mc_runs=1000,
            burn_in=2,
        )
        rows = _map_replications(
            scn,
            2000,
            np.random.SeedSequence(303),
            table_n40,
            lambda r: (r.fraction_on_best_arm(), r.total_successes()),
            1,
        )
        pct = float(np.mean([f for f, _ in rows])) * 100
        successes = float(np.mean([s for _, s in rows]))
        assert pct == pytest.approx(77.0, abs=3.0)
        assert successes == pytest.approx(26.0, abs=1.0)
        report(
            "patient benefit (N=40, 20% diff)",
            f"{pct:.1f}% on correct arm (77±3); {successes:.2f} successes (26±1)",
        )

    def test_table2_row_n80(self, table_n80):
        scn = Scenario(
            n_patients=80,
            block_size=2,
            success_probs=((0.5, 0.5), (0.8, 0.8)),
            n_categories=2,
            allocation_rule="flgi",
            mc_runs=1000,
            burn_in=2,
        )
        rows = _map_replications(
            scn,
            2000,
            np.random.SeedSequence(404),
            table_n80,
            lambda r: (r.fraction_on_best_arm(), r.total_successes()),
            1,
        )
        pct = float(np.mean([f for f, _ in rows])) * 100
        successes = float(np.mean([s for _, s in rows]))
        assert pct == pytest.approx(87.0, abs=3.0)
        assert successes == pytest.approx(61.0, abs=1.5)
        report(
            "patient benefit (N=80, 30% diff, 2 categories)",
            f"{pct:.1f}% on correct arm (87±3); {successes:.2f} successes (61±1.5)",
        )


@pytest.fixture(scope="module")
def n80_results(table_n80):
    grid = ExperimentGrid(
        p_experimental_values=(0.8,),
        n_patients_values=(80,),
        n_categories_values=(1, 4),
        methods=(ALLOC_PROB, FISHER_FLGI, FISHER_EQUAL),
        reps=2000,
        calibration_reps=5000,
        mc_runs=1000,
        include_null_point=False,
        seed=424242,
    )
    results = run_power_grid(grid, table=table_n80)
    return {(r.n_categories, r.method): r.rejection_rate for r in results}


class TestCriterion5PowerOrdering:
    @pytest.mark.parametrize("n_z", [1, 4])
    def test_alloc_prob_beats_fisher_under_flgi(self, n80_results, n_z):
        gap = n80_results[(n_z, ALLOC_PROB)] - n80_results[(n_z, FISHER_FLGI)]
        assert gap >= 0.10
        report(
            f"power ordering vs Fisher-FLGI (n_z={n_z})",
            f"alloc-prob leads by {gap*100:.1f}pt (needs >= 10pt)",
        )

    @pytest.mark.parametrize("n_z", [1, 4])
    def test_alloc_prob_tracks_fisher_under_equal(self, n80_results, n_z):
        gap = abs(n80_results[(n_z, ALLOC_PROB)] - n80_results[(n_z, FISHER_EQUAL)])
        assert gap <= 0.10, (
            f"n_z={n_z}: |alloc-prob − Fisher-equal| = {gap*100:.1f}pt > 10pt. "
            "For a single category the discounted-index rule absorbs onto one "
            "arm under the null (an early-unlucky arm such as (1,4) has index "
            "0.445 < any 0.5-rate leader's index at discount 0.99), giving the "
            "null Q distribution a heavy upper tail (P(Q>34) ≈ 0.18 at N=80) "
            "and capping the level-5% test's power near 0.5; see the decisions "
            "ledger for the sensitivity analysis across discounts 0.99-0.995."
        )
        report(
            f"power tracking vs Fisher-equal (n_z={n_z})",
            f"|gap| = {gap*100:.1f}pt (needs <= 10pt)",
        )

    def test_n160_direction_spot_check(self):
        table = build_gittins_table(0.99, max_count=166)
        grid = ExperimentGrid(
            p_experimental_values=(0.7,),
            n_patients_values=(160,),
            n_categories_values=(1,),
            methods=(ALLOC_PROB, FISHER_FLGI),
            reps=500,
            calibration_reps=1500,
            mc_runs=1000,
            include_null_point=False,
            seed=77,
        )
        rates = {
            r.method: r.rejection_rate for r in run_power_grid(grid, table=table)
        }
        assert rates[ALLOC_PROB] > rates[FISHER_FLGI]
        report(
            "N=160 qualitative direction",
            f"alloc-prob {rates[ALLOC_PROB]:.3f} > Fisher-FLGI "
            f"{rates[FISHER_FLGI]:.3f} (direction only)",
        )


class TestCriterion6MultiArm:
    def test_derived_critical_value(self, multiarm_result):
        assert multiarm_result["c_q"] == 30
        report(
            "four-arm critical value",
            f"derived c_q = {multiarm_result['c_q']} (tail "
            f"{multiarm_result['null_tail_at_c_q']:.4f}) at discount "
            f"{multiarm_result['gittins_discount']}",
        )

    def test_scenario_2_rejection(self, multiarm_result):
        rate = multiarm_result["scenarios"][2]["alloc_prob_reject_any"]
        assert rate == pytest.approx(0.34, abs=0.03)
        report("four-arm scenario 2", f"rejection {rate:.3f} vs 34%±3pt")

    def test_scenario_3_rejection(self, multiarm_result):
        rate = multiarm_result["scenarios"][3]["alloc_prob_reject_any"]
        assert rate == pytest.approx(0.41, abs=0.03)
        report("four-arm scenario 3", f"rejection {rate:.3f} vs 41%±3pt")

    def test_scenario_1_type_i_controlled(self, multiarm_result):
        rates = multiarm_result["scenarios"][1]["alloc_prob_reject_per_arm"]
        for rate in rates:
            assert 0.025 <= rate <= 0.06
        fisher = multiarm_result["scenarios"][1]["fisher_equal_reject_per_arm"]
        assert all(rate < 0.05 for rate in fisher)
        report(
            "four-arm type-I control",
            f"alloc-prob per-arm {['%.3f' % r for r in rates]}; "
            f"Fisher conservative {['%.3f' % r for r in fisher]}",
        )


class TestCriterion7PropertySuites:
    def test_mirror_identity_on_fifty_random_states(self, table_small):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            state = CategoryState.two_arm(*rng.integers(1, 7, size=4))
            law = alloc_law(
                moments_from_joint(exact_joint_xy(state, 2, 2, table_small))
            )
            mirror = alloc_law(
                moments_from_joint(
                    exact_joint_xy(state.mirror(), 2, 2, table_small)
                )
            )
            for c in (0.1, 0.25, 0.5, 0.75, 0.9):
                assert law.cdf(c) == pytest.approx(
                    1.0 - mirror.cdf(1.0 - c - 1e-12), abs=1e-9
                )
        report("mirror identity", "50 random states, exact on tree laws")

    def test_gi_monotonicity_exhaustive(self, table_n80):
        vals = table_n80.values
        m = table_n80.max_count
        for s in range(1, m):
            for f in range(1, m - s + 1):
                if s + f + 1 <= m:
                    assert vals[s + 1, f] > vals[s, f]
                    assert vals[s, f + 1] < vals[s, f]
        report("index monotonicity", f"exhaustive over the {m}-count table")

    def test_expectation_approx_close_to_quadrature(self, table_small):
        worst = 0.0
        for cfg in (
            QNullConfig(blocks=6, block_size=2, n_categories=1, n_mc=1000),
            QNullConfig(blocks=6, block_size=2, n_categories=2, n_mc=1000),
            QNullConfig(blocks=12, block_size=1, n_categories=1, n_mc=1000),
            QNullConfig(blocks=4, block_size=3, n_categories=3, n_mc=1000),
        ):
            for p_common in (0.3, 0.5, 0.7):
                quad = exact_q_null(cfg, p_common, table_small, mode=QUADRATURE)
                approx = exact_q_null(
                    cfg, p_common, table_small, mode=EXPECTATION_APPROX
                )
                worst = max(worst, 0.5 * float(np.abs(quad.pmf - approx.pmf).sum()))
        assert worst <= 0.02
        report("approximation quality", f"max TV distance {worst:.2e} <= 0.02")

    def test_mc_agrees_with_exact_counterparts(self, table_small):
        # estimator vs exact tree mean
        state = CategoryState.two_arm(2, 2, 1, 1)
        m = moments_from_joint(exact_joint_xy(state, 2, 1, table_small))
        est = mc_alloc_prob([state], 2, 40_000, table_small, seed=11)[0]
        se = alloc_law(m).scale_hint() * math.sqrt(m.n_mc / 40_000)
        assert abs(est - m.ratio) < 3 * se
        # empirical Q null vs exact recursion
        cfg = QNullConfig(blocks=2, block_size=1, n_categories=1, n_mc=101)
        exact = exact_q_null(cfg, 0.5, table_small, mode=QUADRATURE)
        mc = mc_q_null(cfg, 0.5, table_small, reps=200_000, seed=4)
        se_bins = np.sqrt(exact.pmf * (1 - exact.pmf) / 200_000)
        assert np.all(np.abs(mc.pmf - exact.pmf) <= 3 * se_bins)
        report(
            "monte-carlo vs exact oracles",
            "allocation estimator and Q-null recursion agree within 3 SE",
        )

    def test_mean_q_increases_with_treatment_difference(self, table_small):
        means = []
        for p1 in (0.6, 0.7, 0.8):
            scn = Scenario(
                n_patients=20,
                block_size=2,
                success_probs=((0.5,), (p1,)),
                allocation_rule="flgi",
                mc_runs=500,
                burn_in=2,
            )
            qs = _map_replications(
                scn,
                5000,
                np.random.SeedSequence((1717, int(p1 * 10))),
                table_small,
                lambda r: q_from_record(r, 0, 1, 0.5, 2),
                1,
            )
            means.append(float(np.mean(qs)))
        assert means[0] < means[1] < means[2]
        report(
            "mean Q monotone in treatment difference",
            f"means {['%.2f' % m for m in means]} for diffs 0.1/0.2/0.3",
        )

    def test_alloc_cdf_median_at_half_for_symmetric_states(self, table_small):
        for counts in ((1, 1, 1, 1), (3, 2, 3, 2), (5, 5, 5, 5)):
            state = CategoryState.two_arm(*counts)
            m = moments_from_joint(exact_joint_xy(state, 2, 2, table_small))
            assert alloc_cdf(0.5, m) == pytest.approx(0.5, abs=1e-12)
        report("symmetric-state median", "F(0.5) = 0.5 exactly")
