"""Model comparison: cross-validated log posterior predictive likelihood and
selection-accuracy (mean squared deviation) metrics.

Held-out scoring follows the log-normal likelihood: uncensored subjects
contribute the normal density of their log time, censored subjects the
survival probability P(T > censor time). The density convention is the
density of log-time (no 1/t Jacobian); rankings across model variants are
unaffected by that choice because all variants are scored identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.special import log_ndtr, logsumexp

from hiersurv.data_model import Group, GroupedDataset
from hiersurv.sampler import (
    ModelVariant,
    PosteriorSamples,
    PriorConfig,
    Schedule,
    gibbs_run,
    task_rng,
)

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FoldSplit:
    """Assignment of every subject to one of ``fold_count`` folds, stratified
    within groups so every group keeps training subjects in every fold."""

    fold_count: int
    assignment: dict        # (group_id, row index) -> fold

    def __post_init__(self):
        if self.fold_count < 2:
            raise ValueError("need at least 2 folds")
        folds = set(self.assignment.values())
        if not folds <= set(range(self.fold_count)):
            raise ValueError("fold indices out of range")


def make_folds(ds: GroupedDataset, fold_count: int, seed: int) -> FoldSplit:
    """Seeded fold assignment, shuffled and dealt round-robin within each group."""
    rng = task_rng(seed, 104729)  # fold stream distinct from chain streams
    assignment = {}
    for g in ds.groups:
        if g.n < 2:
            raise ValueError(
                f"group {g.group_id!r} has {g.n} subject(s); every fold would "
                "leave it without training data")
        order = rng.permutation(g.n)
        for pos, row in enumerate(order):
            assignment[(g.group_id, int(row))] = pos % fold_count
    return FoldSplit(fold_count=fold_count, assignment=dict(assignment))


def split_dataset(ds: GroupedDataset, folds: FoldSplit,
                  fold: int) -> tuple[GroupedDataset, GroupedDataset]:
    """(train, test) datasets for one fold; test may omit small groups."""
    train_groups, test_groups = [], []
    for g in ds.groups:
        mask = np.array([folds.assignment[(g.group_id, j)] == fold
                         for j in range(g.n)])
        for part, rows in ((test_groups, np.flatnonzero(mask)),
                           (train_groups, np.flatnonzero(~mask))):
            if len(rows) == 0:
                if part is train_groups:
                    raise ValueError(
                        f"fold {fold} leaves group {g.group_id!r} with no "
                        "training subjects; re-stratify")
                continue
            part.append(Group(
                group_id=g.group_id, times=g.times[rows], events=g.events[rows],
                design=g.design[rows], covariate_ids=g.covariate_ids,
                subject_ids=tuple(g.subject_ids[j] for j in rows),
            ))
    return (GroupedDataset(tuple(train_groups), ds.covariate_registry),
            GroupedDataset(tuple(test_groups), ds.covariate_registry))


@dataclass(frozen=True)
class PredictiveScore:
    """log of the posterior-mean held-out likelihood (log-sum-exp over draws)."""

    log_ppl: float
    per_draw_loglik: np.ndarray
    n_test: int


def log_ppl(test: GroupedDataset, ps: PosteriorSamples) -> PredictiveScore:
    """Log posterior predictive likelihood of a held-out dataset.

    Per posterior draw t: sum of log normal densities of uncensored log
    times plus log survival probabilities of censored subjects, with
    mu_ij = intercept_i + sum_l beta_il x_ijl. Averaged across draws on the
    likelihood scale via log-sum-exp. An empty test set scores 0.
    """
    T = ps.n_draws
    per_draw = np.zeros(T)
    n_test = 0
    for g in test.groups:
        if g.group_id not in ps.group_ids:
            raise ValueError(f"test group {g.group_id!r} absent from the "
                             "training posterior; no intercept available")
        missing = set(g.covariate_ids) - set(ps.covariate_ids)
        if missing and ps.variant is not ModelVariant.NULL_INTERCEPT_ONLY:
            raise ValueError(
                f"test covariates {sorted(missing)} absent from the posterior")
        covs = [c for c in g.covariate_ids if c in ps.covariate_ids]
        beta_draws = ps.group_beta_draws(g.group_id, covs)  # (T, 1+p)
        keep = [g.covariate_ids.index(c) for c in covs]
        X = np.column_stack([np.ones(g.n), g.design[:, keep]])
        mu = beta_draws @ X.T                                # (T, n)
        sd = np.sqrt(ps.sigma2)[:, None]
        logt = g.log_times[None, :]
        unc = g.events
        if unc.any():
            zz = (logt[:, unc] - mu[:, unc]) / sd
            per_draw += np.sum(-0.5 * (zz ** 2) - np.log(sd) - 0.5 * _LOG2PI, axis=1)
        if (~unc).any():
            per_draw += np.sum(log_ndtr((mu[:, ~unc] - logt[:, ~unc]) / sd), axis=1)
        n_test += g.n
    score = float(logsumexp(per_draw) - math.log(T)) if n_test else 0.0
    return PredictiveScore(log_ppl=score, per_draw_loglik=per_draw, n_test=n_test)


@dataclass
class CVResult:
    """Per-(variant, fold) scores plus per-variant means."""

    rows: list                      # (variant, fold, log_ppl)
    means: dict                     # variant -> mean log_ppl

    def ranking(self) -> list:
        return sorted(self.means, key=lambda v: -self.means[v])


def _cv_task(ds, folds, variant, fold, prior, schedule, seed):
    train, test = split_dataset(ds, folds, fold)
    ps = gibbs_run(train, variant, prior, schedule,
                   seed=int(task_rng(seed, 1, fold, _variant_index(variant))
                            .integers(2 ** 62)))
    return variant, fold, log_ppl(test, ps).log_ppl


def _variant_index(variant: ModelVariant) -> int:
    return list(ModelVariant).index(ModelVariant(variant))


def cross_validate(ds: GroupedDataset, variants, folds: FoldSplit,
                   prior: PriorConfig, schedule: Schedule, seed: int,
                   n_jobs: int = 1) -> CVResult:
    """K-fold CV of log posterior predictive likelihood; the same fold
    assignment is used for every variant."""
    variants = [ModelVariant(v) for v in variants]
    tasks = [(v, f) for v in variants for f in range(folds.fold_count)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_cv_task)(ds, folds, v, f, prior, schedule, seed)
        for v, f in tasks)
    rows = sorted(results, key=lambda r: (_variant_index(r[0]), r[1]))
    means = {
        v: float(np.mean([r[2] for r in rows if r[0] == v])) for v in variants
    }
    return CVResult(rows=rows, means=means)


def mean_ssd(truth: dict, estimate: dict) -> float:
    """Mean squared deviation between true inclusion indicators and estimated
    inclusion probabilities over identical (group, covariate) key sets."""
    if set(truth) != set(estimate):
        diff = sorted(set(truth) ^ set(estimate), key=str)
        raise ValueError(f"truth/estimate key mismatch: {diff}")
    if not truth:
        raise ValueError("empty key set")
    return float(np.mean([(float(truth[k]) - float(estimate[k])) ** 2
                          for k in truth]))
