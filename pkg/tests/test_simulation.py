"""Synthetic-data generation, paired t-tests, and the study harnesses."""

import math

import numpy as np
import pytest
from scipy import stats

from hiersurv.sampler import Schedule, task_rng
from hiersurv.simulation import (
    SIMULATION_PRIOR,
    GenCondition,
    OverlapTemplate,
    default_study_template,
    generate_prior_truth,
    generate_truth,
    paired_t_test,
    run_study,
    validation_study,
    validation_template,
)


def small_template(n=40):
    return default_study_template(n_groups=4, group_size=n)


def test_default_template_shape():
    tpl = default_study_template()
    assert len(tpl.group_ids) == 10
    assert len(tpl.covariate_ids) == 12
    assert tpl.avail.shape == (10, 12)
    assert tpl.avail[:, :4].all()            # global covariates
    assert (tpl.avail.sum(axis=0)[-3:] == 1).all()  # singletons


def test_validation_template_pattern():
    tpl = validation_template([100] * 12)
    assert len(tpl.group_ids) == 12
    assert tpl.covariate_ids == ("X1", "X2", "X3")
    # every covariate available somewhere, no group has all-or-nothing trivially
    assert tpl.avail.any(axis=0).all()
    assert tpl.avail.sum() == 20


def test_template_requires_full_covariate_coverage():
    with pytest.raises(ValueError, match="available somewhere"):
        OverlapTemplate(("A", "B"), (5, 5), ("x", "y"),
                        np.array([[True, False], [True, False]]))


def test_condition_validation():
    with pytest.raises(ValueError, match="unknown condition"):
        GenCondition("sometimes")
    with pytest.raises(ValueError, match="p must be"):
        GenCondition("all_or_none", p=1.5)
    assert GenCondition("all_or_none", p=0.5).label == "all_or_none(0.5)"
    assert GenCondition("none_included").label == "none_included"


def test_all_or_none_indicators_constant_within_covariate():
    cond = GenCondition("all_or_none", p=0.5, template=small_template())
    for seed in range(5):
        truth, _, _ = generate_truth(cond, SIMULATION_PRIOR,
                                     task_rng(seed), test_set=False)
        tpl = cond.template
        for l in range(len(tpl.covariate_ids)):
            vals = truth.gamma[tpl.avail[:, l], l]
            assert len(set(vals.tolist())) == 1


def test_degenerate_conditions():
    tpl = small_template()
    truth, _, _ = generate_truth(GenCondition("all_included", template=tpl),
                                 SIMULATION_PRIOR, task_rng(0), test_set=False)
    np.testing.assert_array_equal(truth.gamma[tpl.avail], 1.0)
    truth, _, _ = generate_truth(GenCondition("none_included", template=tpl),
                                 SIMULATION_PRIOR, task_rng(1), test_set=False)
    np.testing.assert_array_equal(truth.gamma, 0.0)


def test_zero_censoring_yields_all_events():
    cond = GenCondition("all_or_none", censor_fraction=0.0,
                        template=small_template())
    _, train, _ = generate_truth(cond, SIMULATION_PRIOR, task_rng(2),
                                 test_set=False)
    for g in train.groups:
        assert g.events.all()


def test_realized_censoring_near_target():
    tpl = default_study_template(n_groups=4, group_size=2500)
    cond = GenCondition("all_or_none", censor_fraction=0.5, template=tpl)
    _, train, _ = generate_truth(cond, SIMULATION_PRIOR, task_rng(3),
                                 test_set=False)
    frac = np.mean(np.concatenate([~g.events for g in train.groups]))
    assert 0.45 < frac < 0.55


def test_generate_truth_deterministic():
    cond = GenCondition("independent", p=0.3, template=small_template())
    t1, d1, _ = generate_truth(cond, SIMULATION_PRIOR, task_rng(4), test_set=False)
    t2, d2, _ = generate_truth(cond, SIMULATION_PRIOR, task_rng(4), test_set=False)
    np.testing.assert_array_equal(t1.beta, t2.beta)
    for g1, g2 in zip(d1.groups, d2.groups):
        np.testing.assert_array_equal(g1.times, g2.times)


def test_effect_floor_pushes_slab_means_out():
    cond = GenCondition("all_or_none", template=small_template())
    truth, _, _ = generate_truth(cond, SIMULATION_PRIOR, task_rng(5),
                                 effect_floor=1.0, test_set=False)
    assert np.all(np.abs(truth.beta_tilde[1:]) >= 1.0)


def test_gamma_map_covers_available_pairs():
    tpl = small_template()
    cond = GenCondition("independent", p=0.5, template=tpl)
    truth, _, _ = generate_truth(cond, SIMULATION_PRIOR, task_rng(6),
                                 test_set=False)
    gm = truth.gamma_map(tpl)
    assert set(gm) == set(tpl.pair_keys())
    assert set(gm.values()) <= {0, 1}


def test_prior_truth_generator_uses_beta_prior():
    tpl = validation_template([60] * 12)
    pis = np.array([
        generate_prior_truth(tpl, SIMULATION_PRIOR, task_rng(seed))[0].pi
        for seed in range(400)]).ravel()
    # Beta(1,1) prior: uniform inclusion probabilities
    assert stats.kstest(pis, stats.uniform.cdf).pvalue > 0.001


# ---------------------------------------------------------------------------
# Paired t-test
# ---------------------------------------------------------------------------

def test_t_test_identical_samples():
    res = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert res.p_value == 1.0 and not res.significant


def test_t_test_constant_nonzero_difference():
    res = paired_t_test([2.0] * 5, [1.0] * 5)
    assert res.p_value == 0.0 and res.significant


def test_t_test_matches_reference_implementation():
    rng = np.random.default_rng(7)
    a, b = rng.standard_normal(15), rng.standard_normal(15)
    res = paired_t_test(a, b, alpha=0.05)
    np.testing.assert_allclose(res.p_value, stats.ttest_rel(a, b).pvalue)


def test_t_test_requires_paired_samples():
    with pytest.raises(ValueError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


def test_t_test_monte_carlo_size():
    # under the null, rejection rate at level alpha is ~ alpha
    rng = np.random.default_rng(8)
    n_trials, n, alpha = 10_000, 20, 0.05
    d = rng.standard_normal((n_trials, n))
    t = d.mean(axis=1) / (d.std(axis=1, ddof=1) / math.sqrt(n))
    p = 2 * stats.t.sf(np.abs(t), df=n - 1)
    rate = float(np.mean(p < alpha))
    se = math.sqrt(alpha * (1 - alpha) / n_trials)
    assert abs(rate - alpha) < 4 * se
    # spot-check the vectorized oracle against the implementation
    res = paired_t_test(d[0], np.zeros(n), alpha=alpha)
    np.testing.assert_allclose(res.p_value, p[0], rtol=1e-10)


# ---------------------------------------------------------------------------
# Study harnesses (tiny smoke configurations)
# ---------------------------------------------------------------------------

TINY_SCHED = Schedule(total=120, burn_in=60, thin=3)


def test_run_study_shapes_and_determinism():
    tpl = small_template(n=25)
    conds = [GenCondition("all_or_none", template=tpl),
             GenCondition("none_included", template=tpl)]
    variants = ["hierarchical", "null"]
    a = run_study(conds, variants, replications=2, schedule=TINY_SCHED, seed=9)
    assert a.ssd.shape == (2, 2, 2)
    assert a.lppl.shape == (2, 2, 2)
    assert a.conditions == ["all_or_none(0.5)", "none_included"]
    assert not a.failures
    assert a.mean_table("ssd").shape == (2, 2)
    assert a.pairwise_p("ssd", 0).shape == (2, 2)
    assert a.best_set("lppl", 0) <= {"hierarchical", "null"}
    b = run_study(conds, variants, replications=2, schedule=TINY_SCHED, seed=9)
    np.testing.assert_array_equal(a.ssd, b.ssd)
    np.testing.assert_array_equal(a.lppl, b.lppl)


def test_run_study_null_variant_scores_zero_estimate():
    tpl = small_template(n=25)
    conds = [GenCondition("none_included", template=tpl)]
    res = run_study(conds, ["null"], replications=2, schedule=TINY_SCHED, seed=10)
    # the null variant estimates every inclusion probability as 0; under
    # none_included truth that is a perfect SSD
    np.testing.assert_allclose(res.ssd[0, 0], 0.0)


def test_run_study_rejects_single_replication():
    with pytest.raises(ValueError, match="at least 2"):
        run_study([GenCondition("all_or_none")], replications=1, seed=0)


def test_validation_study_tiny():
    res = validation_study(n_outer=3, schedule=Schedule(100, 50, 1), seed=11)
    assert res.n_outer == 3
    cells = dict(res.coverage_cells())
    assert ("sigma2", "sigma2") in cells
    assert ("beta_tilde", "intercept") in cells
    assert ("pi", "X1") in cells
    for val in cells.values():
        assert 0.0 <= val <= 1.0
    acc = dict(res.accuracy_cells())
    tpl = res.template
    assert set(acc) == set(tpl.pair_keys())
    assert 0.0 <= res.overall_accuracy <= 1.0
