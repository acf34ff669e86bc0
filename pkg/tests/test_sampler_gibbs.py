"""Gibbs chain behavior: variant contracts, determinism, storage schedule,
censoring augmentation, summaries, and persistence."""

import numpy as np
import pytest

from hiersurv.sampler import (
    ModelVariant,
    PosteriorSamples,
    PriorConfig,
    Schedule,
    gibbs_run,
    inclusion_matrix,
    summarize,
    task_rng,
)
from tests.conftest import toy_dataset

PRIOR = PriorConfig()
SHORT = Schedule(total=200, burn_in=100, thin=2)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(total=10, burn_in=10)
    with pytest.raises(ValueError):
        Schedule(total=10, burn_in=2, thin=0)
    assert Schedule(total=1000, burn_in=500, thin=10).n_draws == 50


def test_variant_parse():
    assert ModelVariant.parse("hierarchical") is ModelVariant.HIERARCHICAL
    assert ModelVariant.parse("NULL_INTERCEPT_ONLY") is ModelVariant.NULL_INTERCEPT_ONLY
    with pytest.raises(ValueError, match="unknown model variant"):
        ModelVariant.parse("bogus")


def test_null_variant_keeps_only_intercepts(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.NULL_INTERCEPT_ONLY, PRIOR, SHORT, seed=1)
    assert ps.covariate_ids == ()
    assert ps.gamma.shape == (SHORT.n_draws, 2, 0)
    assert ps.beta.shape == (SHORT.n_draws, 2, 1)
    state = ps.state(0)
    assert state.gamma == {}
    for gid in ps.group_ids:
        assert state.beta[gid].shape == (1,)


def test_full_variant_pins_inclusion_at_one(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.FULL_NO_SS, PRIOR, SHORT, seed=2)
    for i in range(len(ps.group_ids)):
        for l in range(len(ps.covariate_ids)):
            if ps.avail[i, l]:
                assert ps.gamma[:, i, l].mean() == 1.0
    np.testing.assert_array_equal(ps.pi, 1.0)


def test_fixed_half_variant_keeps_pi_at_half(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.FIXED_HALF, PRIOR, SHORT, seed=3)
    np.testing.assert_array_equal(ps.pi, 0.5)


def test_shared_pi_is_common_across_covariates(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.SHARED_PI, PRIOR, SHORT, seed=4)
    for t in range(ps.n_draws):
        assert len(set(ps.pi[t])) == 1


def test_unavailable_pairs_never_enter_the_slab(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=5)
    i = ps.group_ids.index("B")
    l = ps.covariate_ids.index("C3")
    assert not ps.avail[i, l]
    np.testing.assert_array_equal(ps.gamma[:, i, l], 0.0)
    np.testing.assert_array_equal(ps.beta[:, i, 1 + l], 0.0)


def test_determinism_bit_identical(toy_ds):
    a = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=42)
    b = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=42)
    for name in ("beta", "gamma", "beta_tilde", "lambda2", "pi", "sigma2",
                 "latent"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=43)
    assert not np.array_equal(a.sigma2, c.sigma2)


def test_stored_draw_count(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR,
                   Schedule(total=1000, burn_in=500, thin=10), seed=6)
    assert ps.n_draws == 50


def test_latent_log_times_exceed_censor_times(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=7)
    assert len(ps.censored_index) > 0
    for j, (gid, row) in enumerate(ps.censored_index):
        bound = np.log(toy_ds.group(gid).times[row])
        assert np.all(ps.latent[:, j] > bound)


def test_uncensored_dataset_has_no_latent_block():
    ds = toy_dataset(censor=False)
    ps = gibbs_run(ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=8)
    assert ps.censored_index == ()
    assert ps.latent.shape == (SHORT.n_draws, 0)


def test_init_override_is_used(toy_ds):
    L = len(toy_ds.covariate_registry)
    init = {
        "beta": np.full((2, L + 1), 0.25),
        "gamma": np.ones((2, L)),
        "beta_tilde": np.full(L + 1, 0.5),
        "lambda2": np.full(L + 1, 2.0),
        "pi": np.full(L, 0.9),
        "sigma2": 4.0,
    }
    one = Schedule(total=1, burn_in=0, thin=1)
    a = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, one, seed=9,
                  init=init)
    b = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, one, seed=9)
    assert a.n_draws == 1
    # the single sweep conditions on different starting values
    assert not np.array_equal(a.beta, b.beta)
    # and identical init reproduces identically
    c = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, one, seed=9,
                  init={k: np.array(v) for k, v in init.items()})
    np.testing.assert_array_equal(a.beta, c.beta)


def test_task_rng_streams_are_distinct():
    a = task_rng(1, 2, 3).uniform(size=5)
    b = task_rng(1, 2, 4).uniform(size=5)
    c = task_rng(1, 2, 3).uniform(size=5)
    np.testing.assert_array_equal(a, c)
    assert not np.array_equal(a, b)


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def _fake_posterior(gamma_draws, beta_value=2.0):
    T = len(gamma_draws)
    gamma = np.array(gamma_draws, dtype=float).reshape(T, 1, 1)
    beta = np.zeros((T, 1, 2))
    beta[:, 0, 1] = beta_value
    return PosteriorSamples(
        variant=ModelVariant.HIERARCHICAL, prior=PriorConfig(),
        schedule=Schedule(total=2 * T, burn_in=T, thin=1), seed=0,
        group_ids=("G",), covariate_ids=("x",),
        avail=np.ones((1, 1), dtype=bool), group_covariates=(("x",),),
        beta=beta, gamma=gamma,
        beta_tilde=np.zeros((T, 2)), lambda2=np.ones((T, 2)),
        pi=np.full((T, 1), 0.5), sigma2=np.ones(T),
        latent=np.zeros((T, 0)), censored_index=(),
    )


def test_summarize_inclusion_probability_is_the_mean():
    summ = summarize(_fake_posterior([1, 1, 0, 1]))
    (pair,) = [p for p in summ.pairs if p.covariate == "x"]
    assert pair.inclusion_prob == 0.75
    assert summ.selected and summ.selected[0].covariate == "x"


def test_summarize_degenerate_interval():
    summ = summarize(_fake_posterior([1, 1, 1, 1], beta_value=3.5))
    (pair,) = [p for p in summ.pairs if p.covariate == "x"]
    assert (pair.mean, pair.ci_lower, pair.ci_upper) == (3.5, 3.5, 3.5)


def test_summarize_half_probability_not_selected():
    summ = summarize(_fake_posterior([1, 0, 1, 0]))
    (pair,) = [p for p in summ.pairs if p.covariate == "x"]
    assert pair.inclusion_prob == 0.5
    assert summ.selected == []


def test_summarize_selected_sorted_descending(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=10)
    summ = summarize(ps)
    pips = [p.inclusion_prob for p in summ.selected]
    assert pips == sorted(pips, reverse=True)
    assert all(p > 0.5 for p in pips)


def test_inclusion_matrix_layout(toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=11)
    mat, cov_ids, group_ids = inclusion_matrix(ps)
    assert mat.shape == (3, 2)
    assert cov_ids == ("C1", "C2", "C3")
    i = group_ids.index("B")
    assert np.isnan(mat[cov_ids.index("C3"), i])
    assert np.isfinite(mat[cov_ids.index("C1"), i])


def test_posterior_save_load_round_trip(tmp_path, toy_ds):
    ps = gibbs_run(toy_ds, ModelVariant.HIERARCHICAL, PRIOR, SHORT, seed=12)
    ps.save(tmp_path / "post")
    back = PosteriorSamples.load(tmp_path / "post")
    assert back.variant is ps.variant
    assert back.group_ids == ps.group_ids
    assert back.covariate_ids == ps.covariate_ids
    assert back.censored_index == ps.censored_index
    for name in ("beta", "gamma", "beta_tilde", "lambda2", "pi", "sigma2",
                 "latent"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ps, name))
