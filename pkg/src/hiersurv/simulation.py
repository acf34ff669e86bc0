"""Simulation studies: data-generating conditions, replication protocol with
paired t-tests, and the sampler validation studies (credible-interval
coverage and thresholded selection accuracy).

Data generation draws true parameters from the model priors, simulates
standard-normal predictors, log-normal outcomes, and right-censors subjects
by drawing censor times from the same outcome distribution (shifted to hit a
target censoring fraction).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.special import ndtri
from scipy.stats import ttest_rel

from hiersurv.data_model import Group, GroupedDataset
from hiersurv.evaluation import log_ppl, mean_ssd
from hiersurv.sampler import (
    ModelVariant,
    PriorConfig,
    Schedule,
    gibbs_run,
    summarize,
    task_rng,
)

# Prior used to draw generating truth and to fit in simulation studies. The
# error-variance prior needs a finite mean for sane synthetic data, so it is
# IG(1, 1) rather than the diffuse IG(0.01, 0.01) application default.
SIMULATION_PRIOR = PriorConfig(sigma2_shape=1.0, sigma2_rate=1.0)

ALL_VARIANTS = tuple(ModelVariant)


@dataclass(frozen=True)
class OverlapTemplate:
    """Group sizes and the covariate-availability pattern for generated data."""

    group_ids: tuple
    group_sizes: tuple
    covariate_ids: tuple
    avail: np.ndarray           # (I, L) bool

    def __post_init__(self):
        avail = np.asarray(self.avail, dtype=bool)
        object.__setattr__(self, "avail", avail)
        if avail.shape != (len(self.group_ids), len(self.covariate_ids)):
            raise ValueError("availability matrix shape mismatch")
        if not avail.any(axis=0).all():
            raise ValueError("every covariate must be available somewhere")

    def pair_keys(self) -> list:
        return [(g, c) for i, g in enumerate(self.group_ids)
                for l, c in enumerate(self.covariate_ids) if self.avail[i, l]]


def default_study_template(n_groups: int = 10, group_size: int = 150) -> OverlapTemplate:
    """Desk-scale overlap pattern: 4 global covariates, 5 shared by subsets,
    3 singletons."""
    gids = tuple(f"G{i + 1:02d}" for i in range(n_groups))
    cids = tuple(f"V{l + 1:02d}" for l in range(12))
    avail = np.zeros((n_groups, 12), dtype=bool)
    avail[:, 0:4] = True                               # global
    half = n_groups // 2
    avail[:half + 1, 4] = True                         # overlapping subsets
    avail[half - 1:, 5] = True
    avail[::2, 6] = True
    avail[1::2, 7] = True
    avail[: max(2, n_groups - 2), 8] = True
    avail[0, 9] = True                                 # singletons
    avail[half, 10] = True
    avail[-1, 11] = True
    return OverlapTemplate(gids, tuple([group_size] * n_groups), cids, avail)


def validation_template(sizes) -> OverlapTemplate:
    """The fixed 12-cluster, 3-covariate availability pattern used by the
    sampler validation studies."""
    pattern = [
        (1, 0, 1), (1, 1, 1), (0, 1, 0), (1, 1, 0), (0, 0, 1), (1, 0, 1),
        (0, 1, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 0), (0, 1, 0),
    ]
    return OverlapTemplate(
        group_ids=tuple(f"C{i + 1:02d}" for i in range(12)),
        group_sizes=tuple(int(s) for s in sizes),
        covariate_ids=("X1", "X2", "X3"),
        avail=np.array(pattern, dtype=bool),
    )


@dataclass(frozen=True)
class GenCondition:
    """One data-generating scheme for the inclusion structure.

    kinds: ``all_or_none`` (each covariate in or out for every group where it
    is available, with probability p), ``independent`` (per-group coin with
    probability p), ``all_included``, ``none_included``.
    """

    kind: str
    p: float = 0.5
    censor_fraction: float = 0.5
    template: OverlapTemplate = field(default_factory=default_study_template)

    def __post_init__(self):
        if self.kind not in ("all_or_none", "independent", "all_included",
                             "none_included"):
            raise ValueError(f"unknown condition kind {self.kind!r}")
        if self.kind in ("all_or_none", "independent") and not 0 < self.p < 1:
            raise ValueError("p must be in (0, 1)")
        if not 0 <= self.censor_fraction < 1:
            raise ValueError("censor_fraction must be in [0, 1)")

    @property
    def label(self) -> str:
        if self.kind in ("all_or_none", "independent"):
            return f"{self.kind}({self.p:g})"
        return self.kind


@dataclass(frozen=True)
class TruthParams:
    beta_tilde: np.ndarray       # (L+1,), entry 0 = intercept slab mean
    lambda2: np.ndarray          # (L+1,)
    pi: np.ndarray               # (L,), generating inclusion probabilities
    gamma: np.ndarray            # (I, L) 0/1 where available
    beta: np.ndarray             # (I, L+1), col 0 = intercept
    sigma2: float

    def gamma_map(self, template: OverlapTemplate) -> dict:
        return {
            (g, c): int(self.gamma[i, l])
            for i, g in enumerate(template.group_ids)
            for l, c in enumerate(template.covariate_ids)
            if template.avail[i, l]
        }


def _draw_gamma(cond: GenCondition, rng) -> np.ndarray:
    tpl = cond.template
    I, L = tpl.avail.shape
    gamma = np.zeros((I, L))
    if cond.kind == "all_included":
        gamma[tpl.avail] = 1.0
        pi = np.ones(L)
    elif cond.kind == "none_included":
        pi = np.zeros(L)
    elif cond.kind == "all_or_none":
        on = rng.uniform(size=L) < cond.p
        gamma[:, on] = 1.0
        gamma[~tpl.avail] = 0.0
        pi = np.full(L, cond.p)
    else:  # independent
        gamma[tpl.avail] = (rng.uniform(size=int(tpl.avail.sum())) < cond.p)
        pi = np.full(L, cond.p)
    return gamma, pi


def _draw_slab_params(template, prior, rng, effect_floor=0.0):
    L = len(template.covariate_ids)
    bt = np.empty(L + 1)
    bt[0] = rng.normal(0.0, math.sqrt(prior.tau2_intercept))
    bt[1:] = rng.normal(0.0, math.sqrt(prior.tau2_coef), size=L)
    if effect_floor > 0:
        small = np.abs(bt[1:]) < effect_floor
        bt[1:][small] = np.sign(bt[1:][small] + 1e-300) * effect_floor
    lam = np.empty(L + 1)
    lam[0] = prior.lambda0_rate / rng.gamma(prior.lambda0_shape)
    lam[1:] = prior.lambda_rate / rng.gamma(prior.lambda_shape, size=L)
    sigma2 = float(prior.sigma2_rate / rng.gamma(prior.sigma2_shape))
    return bt, lam, sigma2


def _draw_beta(template, gamma, bt, lam, z2, rng) -> np.ndarray:
    I, L = template.avail.shape
    beta = np.zeros((I, L + 1))
    beta[:, 0] = rng.normal(bt[0], math.sqrt(lam[0]), size=I)
    sd = np.where(gamma > 0.5, np.sqrt(lam[1:]), math.sqrt(z2))
    mean = np.where(gamma > 0.5, bt[1:], 0.0)
    beta[:, 1:] = rng.normal(mean, sd)
    beta[:, 1:][~template.avail] = 0.0
    return beta


def _simulate_dataset(template, beta, sigma2, censor_fraction, rng,
                      tag: str) -> GroupedDataset:
    sd = math.sqrt(sigma2)
    # shift making P(event time > censor time) equal the target fraction
    delta = (-math.sqrt(2.0) * sd * ndtri(censor_fraction)
             if censor_fraction > 0 else None)

    def gen_times(mus):
        logt = rng.normal(mus, sd)
        if delta is None:
            return logt, np.ones(len(mus), dtype=bool), logt
        logc = rng.normal(mus + delta, sd)
        return logt, logt <= logc, logc

    groups = []
    realized_cens = 0
    total = 0
    rows = []
    for i, gid in enumerate(template.group_ids):
        n = template.group_sizes[i]
        keep = np.flatnonzero(template.avail[i])
        X = rng.standard_normal((n, len(keep)))
        mus = beta[i, 0] + X @ beta[i, 1 + keep]
        logt, events, logc = gen_times(mus)
        rows.append((gid, keep, X, mus, logt, events, logc))
        realized_cens += int((~events).sum())
        total += n

    if censor_fraction > 0:
        frac = realized_cens / total
        if abs(frac - censor_fraction) > 0.15:
            # one retry with fresh censor times, then accept with a warning
            new_rows = []
            realized_cens = 0
            for gid, keep, X, mus, logt, events, logc in rows:
                logc = rng.normal(mus + delta, sd)
                events = logt <= logc
                new_rows.append((gid, keep, X, mus, logt, events, logc))
                realized_cens += int((~events).sum())
            rows = new_rows
            frac = realized_cens / total
            if abs(frac - censor_fraction) > 0.15:
                warnings.warn(
                    f"realized censoring fraction {frac:.3f} misses target "
                    f"{censor_fraction:.2f} after one retry")

    for gid, keep, X, mus, logt, events, logc in rows:
        obs_log = np.where(events, logt, logc)
        groups.append(Group(
            group_id=gid,
            times=np.exp(obs_log),
            events=events,
            design=X,
            covariate_ids=tuple(template.covariate_ids[l] for l in keep),
            subject_ids=tuple(f"{tag}-{gid}-{j}" for j in range(len(obs_log))),
        ))
    return GroupedDataset(tuple(groups), tuple(template.covariate_ids))


def generate_truth(cond: GenCondition, prior: PriorConfig,
                   rng: np.random.Generator, effect_floor: float = 0.0,
                   test_set: bool = True):
    """Draw true parameters for a condition and simulate train (and test)
    datasets sharing those parameters. Slab parameters come from the priors;
    ``effect_floor`` optionally pushes slab means away from zero."""
    gamma, pi = _draw_gamma(cond, rng)
    bt, lam, sigma2 = _draw_slab_params(cond.template, prior, rng, effect_floor)
    beta = _draw_beta(cond.template, gamma, bt, lam, prior.z2, rng)
    truth = TruthParams(beta_tilde=bt, lambda2=lam, pi=pi, gamma=gamma,
                        beta=beta, sigma2=sigma2)
    train = _simulate_dataset(cond.template, beta, sigma2,
                              cond.censor_fraction, rng, "tr")
    if not test_set:
        return truth, train, None
    test = _simulate_dataset(cond.template, beta, sigma2,
                             cond.censor_fraction, rng, "te")
    return truth, train, test


def generate_prior_truth(template: OverlapTemplate, prior: PriorConfig,
                         rng: np.random.Generator, censor_fraction: float = 0.5):
    """Validation-study generator: inclusion probabilities drawn from their
    Beta prior, indicators from those probabilities, everything else from
    the priors."""
    I, L = template.avail.shape
    pi = rng.beta(prior.pi_alpha, prior.pi_beta, size=L)
    gamma = np.zeros((I, L))
    gamma[template.avail] = (
        rng.uniform(size=int(template.avail.sum()))
        < np.broadcast_to(pi, (I, L))[template.avail])
    bt, lam, sigma2 = _draw_slab_params(template, prior, rng)
    beta = _draw_beta(template, gamma, bt, lam, prior.z2, rng)
    truth = TruthParams(beta_tilde=bt, lambda2=lam, pi=pi, gamma=gamma,
                        beta=beta, sigma2=sigma2)
    data = _simulate_dataset(template, beta, sigma2, censor_fraction, rng, "v")
    return truth, data


# ---------------------------------------------------------------------------
# Paired t-tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    p_value: float
    significant: bool


def paired_t_test(a, b, alpha: float = 0.01) -> TTestResult:
    """Two-sided paired t-test. Zero-variance differences: p = 1 when the
    mean difference is also zero, otherwise p = 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("paired samples must share length >= 2")
    d = a - b
    if np.allclose(d.std(), 0.0):
        p = 1.0 if np.allclose(d.mean(), 0.0) else 0.0
    else:
        p = float(ttest_rel(a, b).pvalue)
    return TTestResult(p_value=p, significant=p < alpha)


# ---------------------------------------------------------------------------
# Replicated comparison study
# ---------------------------------------------------------------------------

@dataclass
class StudyResult:
    conditions: list             # GenCondition labels
    variants: list               # ModelVariant values
    ssd: np.ndarray              # (C, V, R)
    lppl: np.ndarray             # (C, V, R)
    failures: list               # (condition label, variant value, rep, message)
    alpha: float = 0.01

    def mean_table(self, metric: str) -> np.ndarray:
        data = self.ssd if metric == "ssd" else self.lppl
        return np.nanmean(data, axis=2)

    def pairwise_p(self, metric: str, cond_idx: int) -> np.ndarray:
        data = self.ssd if metric == "ssd" else self.lppl
        V = len(self.variants)
        p = np.ones((V, V))
        for u in range(V):
            for v in range(u + 1, V):
                res = paired_t_test(data[cond_idx, u], data[cond_idx, v],
                                    self.alpha)
                p[u, v] = p[v, u] = res.p_value
        return p

    def best_set(self, metric: str, cond_idx: int) -> set:
        """Best performer plus variants not significantly different from it.
        Lower is better for ssd, higher for lppl."""
        means = self.mean_table(metric)[cond_idx]
        best = int(np.nanargmin(means) if metric == "ssd" else np.nanargmax(means))
        p = self.pairwise_p(metric, cond_idx)
        return {self.variants[v] for v in range(len(self.variants))
                if v == best or p[best, v] >= self.alpha}


def _study_cell(cond, ci, variant, prior, schedule, seed, rep):
    gen_rng = task_rng(seed, 2, ci, rep)
    truth, train, test = generate_truth(cond, prior, gen_rng)
    chain_seed = int(task_rng(seed, 3, ci, rep,
                              list(ModelVariant).index(variant)).integers(2 ** 62))
    ps = gibbs_run(train, variant, prior, schedule, seed=chain_seed)
    truth_map = truth.gamma_map(cond.template)
    if variant is ModelVariant.NULL_INTERCEPT_ONLY:
        estimate = {k: 0.0 for k in truth_map}
    else:
        summ = summarize(ps)
        estimate = {(p.group_id, p.covariate): p.inclusion_prob
                    for p in summ.pairs if p.covariate != "(intercept)"}
    return (mean_ssd(truth_map, estimate), log_ppl(test, ps).log_ppl)


def run_study(conditions, variants=ALL_VARIANTS, replications: int = 20,
              prior: PriorConfig = SIMULATION_PRIOR,
              schedule: Schedule = Schedule(10_000, 5_000, 10),
              seed: int = 0, n_jobs: int = 1, alpha: float = 0.01) -> StudyResult:
    """Fit every variant on data from every condition, ``replications`` times.

    Within a (condition, replication) cell all variants see the same
    generated train/test pair, so per-condition comparisons are paired.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications for paired t-tests")
    variants = [ModelVariant(v) for v in variants]
    conditions = list(conditions)
    C, V, R = len(conditions), len(variants), replications
    tasks = [(ci, vi, rep) for ci in range(C) for vi in range(V)
             for rep in range(R)]

    def run(ci, vi, rep):
        try:
            return _study_cell(conditions[ci], ci, variants[vi], prior,
                               schedule, seed, rep)
        except RuntimeError as exc:
            return ("failed", str(exc))

    results = Parallel(n_jobs=n_jobs)(
        delayed(run)(ci, vi, rep) for ci, vi, rep in tasks)
    ssd = np.full((C, V, R), np.nan)
    lppl = np.full((C, V, R), np.nan)
    failures = []
    for (ci, vi, rep), res in zip(tasks, results):
        if res[0] == "failed":
            failures.append((conditions[ci].label, variants[vi].value, rep, res[1]))
        else:
            ssd[ci, vi, rep], lppl[ci, vi, rep] = res
    return StudyResult(conditions=[c.label for c in conditions],
                       variants=[v.value for v in variants],
                       ssd=ssd, lppl=lppl, failures=failures, alpha=alpha)


# ---------------------------------------------------------------------------
# Validation studies (coverage and selection accuracy)
# ---------------------------------------------------------------------------

VALIDATION_PRIOR = PriorConfig(sigma2_shape=1.0, sigma2_rate=1.0)


@dataclass
class ValidationResult:
    template: OverlapTemplate
    n_outer: int
    coverage: dict               # row label -> {column label -> fraction}
    selection_accuracy: dict     # group id -> {covariate -> fraction}
    overall_accuracy: float
    nominal: float = 0.95

    def coverage_cells(self) -> list:
        return [((row, col), val) for row, cells in self.coverage.items()
                for col, val in cells.items()]

    def accuracy_cells(self) -> list:
        return [((g, c), val) for g, cells in self.selection_accuracy.items()
                for c, val in cells.items()]


def _validation_iter(base_template, prior, schedule, seed, outer_idx,
                     quantiles):
    rng = task_rng(seed, 4, outer_idx)
    sizes = rng.integers(50, 501, size=len(base_template.group_ids))
    template = replace(base_template, group_sizes=tuple(int(s) for s in sizes))
    truth, data = generate_prior_truth(template, prior, rng)
    chain_seed = int(task_rng(seed, 5, outer_idx).integers(2 ** 62))
    ps = gibbs_run(data, ModelVariant.HIERARCHICAL, prior, schedule,
                   seed=chain_seed)
    lo, hi = quantiles

    def covered(draws, true):
        a, b = np.quantile(draws, [lo, hi])
        return bool(a <= true <= b)

    L = len(template.covariate_ids)
    cov = {}
    cov[("beta_tilde", "intercept")] = covered(ps.beta_tilde[:, 0], truth.beta_tilde[0])
    cov[("lambda2", "intercept")] = covered(ps.lambda2[:, 0], truth.lambda2[0])
    for l in range(L):
        col = template.covariate_ids[l]
        cov[("beta_tilde", col)] = covered(ps.beta_tilde[:, 1 + l], truth.beta_tilde[1 + l])
        cov[("lambda2", col)] = covered(ps.lambda2[:, 1 + l], truth.lambda2[1 + l])
        cov[("pi", col)] = covered(ps.pi[:, l], truth.pi[l])
    for i, gid in enumerate(template.group_ids):
        cov[(f"beta[{gid}]", "intercept")] = covered(ps.beta[:, i, 0], truth.beta[i, 0])
        for l in range(L):
            if template.avail[i, l]:
                cov[(f"beta[{gid}]", template.covariate_ids[l])] = covered(
                    ps.beta[:, i, 1 + l], truth.beta[i, 1 + l])
    cov[("sigma2", "sigma2")] = covered(ps.sigma2, truth.sigma2)

    acc = {}
    for i, gid in enumerate(template.group_ids):
        for l in range(L):
            if template.avail[i, l]:
                pip = float(ps.gamma[:, i, l].mean())
                acc[(gid, template.covariate_ids[l])] = \
                    int((pip > 0.5) == bool(truth.gamma[i, l]))
    return cov, acc


def validation_study(n_outer: int = 1000, prior: PriorConfig = VALIDATION_PRIOR,
                     schedule: Schedule = Schedule(2000, 1000, 1),
                     seed: int = 0, n_jobs: int = 1,
                     nominal: float = 0.95) -> ValidationResult:
    """Repeatedly generate truth from the priors, fit the hierarchical model,
    and tally credible-interval coverage plus thresholded selection accuracy."""
    base = validation_template([100] * 12)
    half = (1.0 - nominal) / 2.0
    quantiles = (half, 1.0 - half)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_validation_iter)(base, prior, schedule, seed, k, quantiles)
        for k in range(n_outer))

    cov_counts: dict = {}
    acc_counts: dict = {}
    for cov, acc in results:
        for key, hit in cov.items():
            cov_counts[key] = cov_counts.get(key, 0) + hit
        for key, hit in acc.items():
            acc_counts[key] = acc_counts.get(key, 0) + hit

    coverage: dict = {}
    for (row, col), count in cov_counts.items():
        coverage.setdefault(row, {})[col] = count / n_outer
    selection: dict = {}
    for (g, c), count in acc_counts.items():
        selection.setdefault(g, {})[c] = count / n_outer
    overall = float(np.mean([v / n_outer for v in acc_counts.values()]))
    return ValidationResult(template=base, n_outer=n_outer, coverage=coverage,
                            selection_accuracy=selection,
                            overall_accuracy=overall, nominal=nominal)


def coverage_study(n_outer: int = 1000, **kwargs) -> dict:
    """Coverage table only (row label -> column label -> coverage rate)."""
    return validation_study(n_outer=n_outer, **kwargs).coverage


def selection_accuracy_study(n_outer: int = 1000, **kwargs) -> dict:
    """Per-(group, covariate) thresholded selection accuracy table."""
    res = validation_study(n_outer=n_outer, **kwargs)
    return res.selection_accuracy
