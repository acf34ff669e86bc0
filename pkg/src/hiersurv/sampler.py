"""Gibbs sampler for the hierarchical spike-and-slab censored log-normal model.

Each coefficient beta_{il} (group i, covariate l) follows a two-component
mixture: a near-zero "spike" Normal(0, z2) or a "slab" Normal(bt_l, lam2_l)
whose location and scale are pooled across the groups currently in the slab.
Binary indicators gamma_{il} select the component, with per-covariate
inclusion probabilities pi_l shared across groups. Outcomes are log-normal
with right censoring handled by truncated-normal data augmentation of the
censored log-times.

Sweep order: impute censored latent log-times -> per-group coefficient
vectors -> inclusion indicators -> inclusion probabilities -> slab
locations and scales (intercept hierarchy included) -> error variance.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr, ndtri

from hiersurv.data_model import GroupedDataset

_LOG2PI = math.log(2.0 * math.pi)

# Switch from inverse-CDF to exponential-proposal rejection this many sds
# into the upper tail (inverse-CDF accuracy degrades far out).
_TAIL_SWITCH = 5.0


class ModelVariant(str, Enum):
    """The five model structures compared in the study design."""

    HIERARCHICAL = "hierarchical"    # per-covariate inclusion probability
    SHARED_PI = "shared_pi"          # one inclusion probability for everything
    FIXED_HALF = "fixed_half"        # inclusion probability pinned at 0.5
    FULL_NO_SS = "full"              # no spike-and-slab, all covariates in
    NULL_INTERCEPT_ONLY = "null"     # intercepts only, no covariates

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        for v in cls:
            if v.value == name or v.name.lower() == name.lower():
                return v
        raise ValueError(f"unknown model variant {name!r}; choose from "
                         f"{[v.value for v in cls]}")


@dataclass(frozen=True)
class PriorConfig:
    """All hyperparameters of the hierarchical spike-and-slab survival model."""

    z2: float = 1e-4                 # spike variance
    tau2_intercept: float = 100.0    # prior variance of the intercept slab mean
    tau2_coef: float = 1.0           # prior variance of covariate slab means
    lambda0_shape: float = 1.0       # IG prior on intercept slab variance
    lambda0_rate: float = 1.0
    lambda_shape: float = 5.0        # IG prior on covariate slab variances
    lambda_rate: float = 1.0
    sigma2_shape: float = 0.01       # IG prior on the shared error variance
    sigma2_rate: float = 0.01
    pi_alpha: float = 1.0            # Beta prior on inclusion probabilities
    pi_beta: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"prior hyperparameter {name} must be positive, got {value}")
        if self.z2 >= self.tau2_coef:
            raise ValueError("spike variance z2 must be well below tau2_coef")


@dataclass(frozen=True)
class Schedule:
    """Iteration plan: total sweeps, burn-in length, thinning interval."""

    total: int
    burn_in: int
    thin: int = 1

    def __post_init__(self):
        if not (self.total > self.burn_in >= 0 and self.thin >= 1):
            raise ValueError(f"invalid schedule {self}: need total > burn_in >= 0, thin >= 1")

    @property
    def n_draws(self) -> int:
        return (self.total - self.burn_in) // self.thin


def task_rng(seed: int, *indices: int) -> np.random.Generator:
    """Independent random stream for a (seed, task-index) pair."""
    return np.random.default_rng([int(seed), *map(int, indices)])


# ---------------------------------------------------------------------------
# Truncated-normal sampling (lower truncation only)
# ---------------------------------------------------------------------------

def _tn_lower_tail(a: float, rng: np.random.Generator) -> float:
    # Exponential-proposal rejection for a standard normal truncated to
    # (a, inf); exact for any a and efficient deep in the tail.
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        x = a + rng.exponential(1.0 / alpha)
        if math.log(rng.uniform()) <= -0.5 * (x - alpha) ** 2:
            return x


def _tn_lower_std(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard normal draws truncated to (a_i, inf), elementwise."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    z = np.empty_like(a)
    easy = a < _TAIL_SWITCH
    if easy.any():
        ae = a[easy]
        # sample the upper-tail probability uniformly; 1-u is in (0, 1]
        u = 1.0 - rng.uniform(size=ae.shape)
        z[easy] = -ndtri(u * ndtr(-ae))
    for i in np.flatnonzero(~easy):
        z[i] = _tn_lower_tail(float(a[i]), rng)
    return z


def impute_censored(mean: float, sd: float, log_censor_time: float,
                    rng: np.random.Generator) -> float:
    """Draw a latent log event time from Normal(mean, sd^2) truncated to
    (log_censor_time, inf)."""
    if sd <= 0:
        raise ValueError(f"sd must be positive, got {sd}")
    if log_censor_time == -np.inf:
        return float(rng.normal(mean, sd))
    a = (log_censor_time - mean) / sd
    return float(mean + sd * _tn_lower_std(np.array([a]), rng)[0])


# ---------------------------------------------------------------------------
# Full conditional draws
# ---------------------------------------------------------------------------

def sample_pi(gamma_column, alpha: float, beta: float,
              rng: np.random.Generator) -> float:
    """Inclusion probability given the indicators of the groups that carry
    this covariate: Beta(alpha + sum(gamma), beta + T - sum(gamma))."""
    g = np.asarray(gamma_column, dtype=float)
    if g.size < 1:
        raise ValueError("gamma_column must be non-empty")
    s = g.sum()
    return float(rng.beta(alpha + s, beta + g.size - s))


def gamma_inclusion_prob(beta_il, beta_tilde, lambda2, pi, z2):
    """P(gamma = 1 | beta) for scalar or array inputs, computed in log space."""
    beta_il = np.asarray(beta_il, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lp1 = np.log(pi) - 0.5 * (np.log(lambda2) + (beta_il - beta_tilde) ** 2 / lambda2)
        lp0 = np.log1p(-np.asarray(pi, dtype=float)) - 0.5 * (
            np.log(z2) + beta_il ** 2 / z2)
        # expit of the log-odds, stable for both tails
        d = lp0 - lp1
        return np.where(np.isneginf(lp1), 0.0,
                        np.where(np.isneginf(lp0), 1.0, 1.0 / (1.0 + np.exp(d))))


def sample_gamma(beta_il: float, beta_tilde: float, lambda2: float, pi: float,
                 z2: float, rng: np.random.Generator) -> int:
    """Bernoulli draw of one inclusion indicator given its coefficient."""
    p = float(gamma_inclusion_prob(beta_il, beta_tilde, lambda2, pi, z2))
    return int(rng.uniform() < p)


def _draw_coef_vector(XtX, Xty, prior_mean, prior_var, sigma2,
                      rng: np.random.Generator) -> np.ndarray:
    """Joint normal draw of a group's coefficient vector.

    Posterior is Normal(Bb, B) with B = [X'X/sigma2 + D^-1]^-1 and
    b = X'y/sigma2 + D^-1 m, D = diag(prior_var), m = prior mean.
    Drawn via Cholesky of the precision, with jitter retries.
    """
    k = len(prior_mean)
    prec = XtX / sigma2 + np.diag(1.0 / prior_var)
    b = Xty / sigma2 + prior_mean / prior_var
    jitter = 0.0
    for attempt in range(4):
        try:
            chol = np.linalg.cholesky(prec + jitter * np.eye(k))
        except np.linalg.LinAlgError:
            jitter += 1e-10
            continue
        w = solve_triangular(chol, b, lower=True, check_finite=False)
        return solve_triangular(chol.T, w + rng.standard_normal(k),
                                lower=False, check_finite=False)
    raise RuntimeError("coefficient precision matrix is not positive definite "
                       "after 3 jitter retries")


def sample_beta_group(X, y, gamma, beta_tilde, lambda2, sigma2, z2,
                      rng: np.random.Generator) -> np.ndarray:
    """One joint draw of a group's coefficient vector (intercept first).

    ``X`` must carry the intercept column; ``beta_tilde`` and ``lambda2`` are
    indexed like the coefficient vector (entry 0 = intercept hierarchy). The
    prior for covariate l is Normal(beta_tilde[l], lambda2[l]) when
    gamma[l-1] = 1 and Normal(0, z2) otherwise; the intercept always uses its
    slab. An empty ``X`` (no subjects) draws from the prior.
    """
    X = np.asarray(X, dtype=float).reshape(-1, len(beta_tilde))
    y = np.asarray(y, dtype=float)
    gamma = np.asarray(gamma, dtype=bool)
    prior_mean = np.concatenate(([beta_tilde[0]], np.where(gamma, beta_tilde[1:], 0.0)))
    prior_var = np.concatenate(([lambda2[0]], np.where(gamma, lambda2[1:], z2)))
    XtX = X.T @ X
    Xty = X.T @ y if len(y) else np.zeros(len(prior_mean))
    return _draw_coef_vector(XtX, Xty, prior_mean, prior_var, sigma2, rng)


def sample_beta_tilde(betas_in_slab, lambda2: float, tau2: float,
                      rng: np.random.Generator) -> float:
    """Slab location given the coefficients currently in the slab.

    Normal(K tau2 bbar / (lambda2 + K tau2), lambda2 tau2 / (lambda2 + K tau2));
    with no slab members this is the Normal(0, tau2) prior.
    """
    b = np.asarray(betas_in_slab, dtype=float)
    k = b.size
    denom = lambda2 + k * tau2
    mean = tau2 * b.sum() / denom
    var = lambda2 * tau2 / denom if k else tau2
    return float(rng.normal(mean, math.sqrt(var)))


def _ig(shape, rate, rng: np.random.Generator):
    return rate / rng.gamma(np.asarray(shape, dtype=float))


def sample_lambda2(betas_in_slab, beta_tilde: float, shape: float, rate: float,
                   rng: np.random.Generator) -> float:
    """Slab variance: Inverse-Gamma(K/2 + shape, rate + 0.5 sum (b - bt)^2)
    over the slab members; the prior when the slab is empty."""
    b = np.asarray(betas_in_slab, dtype=float)
    w = float(np.sum((b - beta_tilde) ** 2))
    return float(_ig(b.size / 2.0 + shape, rate + 0.5 * w, rng))


def sample_sigma2(residuals, shape: float, rate: float,
                  rng: np.random.Generator) -> float:
    """Shared error variance: Inverse-Gamma(N/2 + shape, rate + 0.5 sum r^2)."""
    r = np.asarray(residuals, dtype=float)
    return float(_ig(r.size / 2.0 + shape, rate + 0.5 * float(np.sum(r ** 2)), rng))


# ---------------------------------------------------------------------------
# Chain state and stored draws
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    """One iteration's full parameter state, keyed by group/covariate ids."""

    beta: dict                 # group_id -> coefficient vector (intercept first)
    beta_tilde: np.ndarray     # (L+1,), entry 0 = intercept hierarchy
    lambda2: np.ndarray        # (L+1,)
    gamma: dict                # (group_id, covariate) -> 0/1
    pi: np.ndarray             # (L,) per-covariate inclusion probabilities
    sigma2: float
    latent_log_times: dict     # (group_id, row) -> imputed log time


@dataclass
class PosteriorSamples:
    """Thinned post-burn-in draws plus run metadata."""

    variant: ModelVariant
    prior: PriorConfig
    schedule: Schedule
    seed: int
    group_ids: tuple
    covariate_ids: tuple                 # length L (post variant filtering)
    avail: np.ndarray                    # (I, L) bool
    group_covariates: tuple              # per group: tuple of its covariate ids
    beta: np.ndarray                     # (T, I, L+1); col 0 = intercept
    gamma: np.ndarray                    # (T, I, L)
    beta_tilde: np.ndarray               # (T, L+1)
    lambda2: np.ndarray                  # (T, L+1)
    pi: np.ndarray                       # (T, L)
    sigma2: np.ndarray                   # (T,)
    latent: np.ndarray                   # (T, n_censored)
    censored_index: tuple                # ((group_id, row), ...)

    @property
    def n_draws(self) -> int:
        return len(self.sigma2)

    def state(self, t: int) -> ChainState:
        beta, gamma = {}, {}
        for i, gid in enumerate(self.group_ids):
            cols = [0] + [1 + self.covariate_ids.index(c) for c in self.group_covariates[i]]
            beta[gid] = self.beta[t, i, cols]
            for c in self.group_covariates[i]:
                gamma[(gid, c)] = int(self.gamma[t, i, self.covariate_ids.index(c)])
        latent = {key: float(self.latent[t, j]) for j, key in enumerate(self.censored_index)}
        return ChainState(beta=beta, beta_tilde=self.beta_tilde[t],
                          lambda2=self.lambda2[t], gamma=gamma, pi=self.pi[t],
                          sigma2=float(self.sigma2[t]), latent_log_times=latent)

    def group_beta_draws(self, group_id: str, covariate_ids) -> np.ndarray:
        """(T, 1+len(covariate_ids)) coefficient draws: intercept then the
        requested covariates, which must be available for the group."""
        i = self.group_ids.index(group_id)
        cols = [0]
        for c in covariate_ids:
            l = self.covariate_ids.index(c)
            if not self.avail[i, l]:
                raise ValueError(f"covariate {c!r} unavailable for group {group_id!r}")
            cols.append(1 + l)
        return self.beta[:, i, cols]

    # -- persistence --------------------------------------------------------

    def save(self, outdir):
        import pathlib

        out = pathlib.Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "variant": self.variant.value,
            "prior": asdict(self.prior),
            "schedule": asdict(self.schedule),
            "seed": self.seed,
            "group_ids": list(self.group_ids),
            "covariate_ids": list(self.covariate_ids),
            "group_covariates": [list(c) for c in self.group_covariates],
            "censored_index": [[g, r] for g, r in self.censored_index],
            "n_draws": self.n_draws,
        }
        with open(out / "meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

        def dump(name, header, matrix):
            with open(out / name, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in np.atleast_2d(matrix):
                    w.writerow([repr(float(x)) for x in row])

        pair_cols, pair_idx = [], []
        for i, gid in enumerate(self.group_ids):
            for c in self.group_covariates[i]:
                pair_cols.append(f"{gid}:{c}")
                pair_idx.append((i, 1 + self.covariate_ids.index(c)))
        icols = [f"{gid}:(intercept)" for gid in self.group_ids]
        T = self.n_draws
        beta_mat = np.empty((T, len(icols) + len(pair_cols)))
        for i in range(len(self.group_ids)):
            beta_mat[:, i] = self.beta[:, i, 0]
        for j, (i, col) in enumerate(pair_idx):
            beta_mat[:, len(icols) + j] = self.beta[:, i, col]
        dump("beta.csv", icols + pair_cols, beta_mat)
        gamma_mat = np.column_stack([self.gamma[:, i, col - 1] for i, col in pair_idx]) \
            if pair_idx else np.zeros((T, 0))
        dump("gamma.csv", pair_cols, gamma_mat)
        dump("beta_tilde.csv", ["(intercept)", *self.covariate_ids], self.beta_tilde)
        dump("lambda2.csv", ["(intercept)", *self.covariate_ids], self.lambda2)
        dump("pi.csv", list(self.covariate_ids), self.pi)
        dump("sigma2.csv", ["sigma2"], self.sigma2.reshape(-1, 1))
        dump("latent.csv", [f"{g}:{r}" for g, r in self.censored_index], self.latent)

    @classmethod
    def load(cls, outdir) -> "PosteriorSamples":
        import pathlib

        out = pathlib.Path(outdir)
        with open(out / "meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)

        def read(name):
            with open(out / name, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                data = np.array([[float(x) for x in row] for row in reader])
            return header, data.reshape(-1, len(header))

        group_ids = tuple(meta["group_ids"])
        covariate_ids = tuple(meta["covariate_ids"])
        group_covariates = tuple(tuple(c) for c in meta["group_covariates"])
        I, L = len(group_ids), len(covariate_ids)
        avail = np.zeros((I, L), dtype=bool)
        for i, covs in enumerate(group_covariates):
            for c in covs:
                avail[i, covariate_ids.index(c)] = True

        bheader, bmat = read("beta.csv")
        T = bmat.shape[0]
        beta = np.zeros((T, I, L + 1))
        for j, name in enumerate(bheader):
            gid, cov = name.split(":", 1)
            i = group_ids.index(gid)
            col = 0 if cov == "(intercept)" else 1 + covariate_ids.index(cov)
            beta[:, i, col] = bmat[:, j]
        gheader, gmat = read("gamma.csv")
        gamma = np.zeros((T, I, L))
        for j, name in enumerate(gheader):
            gid, cov = name.split(":", 1)
            gamma[:, group_ids.index(gid), covariate_ids.index(cov)] = gmat[:, j]
        _, beta_tilde = read("beta_tilde.csv")
        _, lambda2 = read("lambda2.csv")
        _, pi = read("pi.csv")
        _, sigma2 = read("sigma2.csv")
        _, latent = read("latent.csv")
        return cls(
            variant=ModelVariant.parse(meta["variant"]),
            prior=PriorConfig(**meta["prior"]),
            schedule=Schedule(**meta["schedule"]),
            seed=meta["seed"],
            group_ids=group_ids, covariate_ids=covariate_ids, avail=avail,
            group_covariates=group_covariates,
            beta=beta, gamma=gamma, beta_tilde=beta_tilde, lambda2=lambda2,
            pi=pi, sigma2=sigma2.reshape(T, -1)[:, 0] if L >= 0 else sigma2,
            latent=latent.reshape(T, -1) if latent.size else np.zeros((T, 0)),
            censored_index=tuple((g, int(r)) for g, r in meta["censored_index"]),
        )


# ---------------------------------------------------------------------------
# The Gibbs run
# ---------------------------------------------------------------------------

class _GroupData:
    __slots__ = ("gid", "X", "XtX", "n", "log_times", "cens_rows",
                 "log_censor", "cov_idx")

    def __init__(self, gid, X, log_times, cens_rows, log_censor, cov_idx):
        self.gid = gid
        self.X = X
        self.XtX = X.T @ X
        self.n = X.shape[0]
        self.log_times = log_times
        self.cens_rows = cens_rows
        self.log_censor = log_censor
        self.cov_idx = cov_idx  # global covariate indices, len p


def _prepare(ds: GroupedDataset, variant: ModelVariant):
    if variant is ModelVariant.NULL_INTERCEPT_ONLY:
        covariate_ids: tuple = ()
    else:
        covariate_ids = ds.covariate_registry
    cov_pos = {c: l for l, c in enumerate(covariate_ids)}
    I, L = len(ds.groups), len(covariate_ids)
    avail = np.zeros((I, L), dtype=bool)
    groups, group_covs = [], []
    for i, g in enumerate(ds.groups):
        keep = [k for k, c in enumerate(g.covariate_ids) if c in cov_pos]
        cov_idx = np.array([cov_pos[g.covariate_ids[k]] for k in keep], dtype=int)
        avail[i, cov_idx] = True
        X = np.column_stack([np.ones(g.n), g.design[:, keep]]) if keep \
            else np.ones((g.n, 1))
        logt = g.log_times
        cens_rows = np.flatnonzero(~g.events)
        groups.append(_GroupData(g.group_id, X, logt, cens_rows,
                                 logt[cens_rows], cov_idx))
        group_covs.append(tuple(g.covariate_ids[k] for k in keep))
    return groups, covariate_ids, avail, tuple(group_covs)


def gibbs_run(ds: GroupedDataset, variant: ModelVariant, prior: PriorConfig,
              schedule: Schedule, seed: int, progress: bool = False,
              init: dict | None = None) -> PosteriorSamples:
    """Run one chain and return the thinned post-burn-in draws.

    The dataset is expected to be standardized. Output is a deterministic
    function of (seed, dataset, variant, prior, schedule). ``init`` may
    override the default starting state with arrays keyed "beta" (I, L+1),
    "gamma" (I, L), "beta_tilde", "lambda2" (both L+1), "pi" (L,), "sigma2".
    """
    variant = ModelVariant(variant)
    rng = task_rng(seed)
    groups, covariate_ids, avail, group_covs = _prepare(ds, variant)
    I, L = len(groups), len(covariate_ids)
    N = sum(g.n for g in groups)
    spike_ss = variant in (ModelVariant.HIERARCHICAL, ModelVariant.SHARED_PI,
                           ModelVariant.FIXED_HALF)
    avail_i, avail_l = np.nonzero(avail)
    n_avail = len(avail_i)
    T_per_cov = avail.sum(axis=0).astype(float)

    # initialization; slab-variance prior mean when it exists, 1 otherwise
    lam_init = prior.lambda_rate / (prior.lambda_shape - 1.0) \
        if prior.lambda_shape > 1.0 else 1.0
    lam0_init = prior.lambda0_rate / (prior.lambda0_shape - 1.0) \
        if prior.lambda0_shape > 1.0 else 1.0
    beta_list = [np.zeros(1 + len(g.cov_idx)) for g in groups]
    Bmat = np.zeros((I, L + 1))
    beta_tilde = np.zeros(L + 1)
    lambda2 = np.concatenate(([lam0_init], np.full(L, lam_init)))
    gamma = avail.astype(float)  # start everything in the slab
    if variant is ModelVariant.FIXED_HALF:
        pi = np.full(L, 0.5)
    elif variant is ModelVariant.FULL_NO_SS:
        pi = np.ones(L)
    else:
        pi = np.full(L, 0.5)
    sigma2 = 1.0
    if init is not None:
        Bmat = np.array(init.get("beta", Bmat), dtype=float).reshape(I, L + 1)
        for i, g in enumerate(groups):
            beta_list[i] = np.concatenate(([Bmat[i, 0]], Bmat[i, 1 + g.cov_idx]))
        if "gamma" in init and spike_ss:
            gamma = np.array(init["gamma"], dtype=float).reshape(I, L) * avail
        beta_tilde = np.array(init.get("beta_tilde", beta_tilde), dtype=float)
        lambda2 = np.array(init.get("lambda2", lambda2), dtype=float)
        if "pi" in init and variant in (ModelVariant.HIERARCHICAL,
                                        ModelVariant.SHARED_PI):
            pi = np.array(init["pi"], dtype=float).reshape(L)
        sigma2 = float(init.get("sigma2", sigma2))
    y = [g.log_times.copy() for g in groups]
    for g, yi in zip(groups, y):
        yi[g.cens_rows] = g.log_censor + 0.1

    n_draws = schedule.n_draws
    cens_index = tuple((g.gid, int(r)) for g in groups for r in g.cens_rows)
    store = {
        "beta": np.zeros((n_draws, I, L + 1)),
        "gamma": np.zeros((n_draws, I, L)),
        "beta_tilde": np.zeros((n_draws, L + 1)),
        "lambda2": np.zeros((n_draws, L + 1)),
        "pi": np.zeros((n_draws, L)),
        "sigma2": np.zeros(n_draws),
        "latent": np.zeros((n_draws, len(cens_index))),
    }

    z2 = prior.z2
    tau2 = prior.tau2_coef
    t_stored = 0
    for it in range(1, schedule.total + 1):
        sd = math.sqrt(sigma2)
        resid_ss = 0.0
        for i, g in enumerate(groups):
            yi = y[i]
            # latent log-times for censored subjects
            if len(g.cens_rows):
                mu_c = g.X[g.cens_rows] @ beta_list[i]
                a = (g.log_censor - mu_c) / sd
                yi[g.cens_rows] = mu_c + sd * _tn_lower_std(a, rng)
            # joint coefficient draw
            gam_i = gamma[i, g.cov_idx].astype(bool)
            prior_mean = np.concatenate(
                ([beta_tilde[0]], np.where(gam_i, beta_tilde[1 + g.cov_idx], 0.0)))
            prior_var = np.concatenate(
                ([lambda2[0]], np.where(gam_i, lambda2[1 + g.cov_idx], z2)))
            beta_i = _draw_coef_vector(g.XtX, g.X.T @ yi, prior_mean, prior_var,
                                       sigma2, rng)
            beta_list[i] = beta_i
            Bmat[i, 0] = beta_i[0]
            Bmat[i, 1 + g.cov_idx] = beta_i[1:]
            r = yi - g.X @ beta_i
            resid_ss += float(r @ r)

        if spike_ss and n_avail:
            # inclusion indicators given current coefficients
            b_flat = Bmat[avail_i, 1 + avail_l]
            p_inc = gamma_inclusion_prob(b_flat, beta_tilde[1 + avail_l],
                                         lambda2[1 + avail_l], pi[avail_l], z2)
            gamma[avail_i, avail_l] = (rng.uniform(size=n_avail) < p_inc)
            # inclusion probabilities
            if variant is ModelVariant.HIERARCHICAL:
                s = gamma.sum(axis=0)
                pi = rng.beta(prior.pi_alpha + s, prior.pi_beta + T_per_cov - s)
            elif variant is ModelVariant.SHARED_PI:
                s = float(gamma.sum())
                pi[:] = rng.beta(prior.pi_alpha + s, prior.pi_beta + n_avail - s)
            # FIXED_HALF keeps pi at 0.5

        # slab locations and scales
        slab = avail & (gamma > 0.5)
        K = slab.sum(axis=0).astype(float)
        denom0 = lambda2[0] + I * prior.tau2_intercept
        mean0 = prior.tau2_intercept * Bmat[:, 0].sum() / denom0
        beta_tilde[0] = rng.normal(mean0, math.sqrt(
            lambda2[0] * prior.tau2_intercept / denom0))
        if L:
            S = np.where(slab, Bmat[:, 1:], 0.0).sum(axis=0)
            denom = lambda2[1:] + K * tau2
            mean = tau2 * S / denom
            var = np.where(K > 0, lambda2[1:] * tau2 / denom, tau2)
            beta_tilde[1:] = rng.normal(mean, np.sqrt(var))
        w0 = float(np.sum((Bmat[:, 0] - beta_tilde[0]) ** 2))
        lambda2[0] = _ig(I / 2.0 + prior.lambda0_shape,
                         prior.lambda0_rate + 0.5 * w0, rng)
        if L:
            W = np.where(slab, (Bmat[:, 1:] - beta_tilde[1:]) ** 2, 0.0).sum(axis=0)
            lambda2[1:] = _ig(K / 2.0 + prior.lambda_shape,
                              prior.lambda_rate + 0.5 * W, rng)

        sigma2 = float(_ig(N / 2.0 + prior.sigma2_shape,
                           prior.sigma2_rate + 0.5 * resid_ss, rng))

        if not math.isfinite(sigma2 + float(beta_tilde.sum()) + float(lambda2.sum())):
            raise RuntimeError(f"non-finite sampler state at iteration {it}")

        if it > schedule.burn_in and (it - schedule.burn_in) % schedule.thin == 0:
            store["beta"][t_stored] = Bmat
            store["gamma"][t_stored] = gamma
            store["beta_tilde"][t_stored] = beta_tilde
            store["lambda2"][t_stored] = lambda2
            store["pi"][t_stored] = pi
            store["sigma2"][t_stored] = sigma2
            if cens_index:
                store["latent"][t_stored] = np.concatenate(
                    [y[i][g.cens_rows] for i, g in enumerate(groups)
                     if len(g.cens_rows)])
            t_stored += 1

        if progress and it % 1000 == 0:
            print(f"iteration {it}/{schedule.total}", file=sys.stderr)

    return PosteriorSamples(
        variant=variant, prior=prior, schedule=schedule, seed=seed,
        group_ids=tuple(g.gid for g in groups), covariate_ids=covariate_ids,
        avail=avail, group_covariates=group_covs,
        beta=store["beta"], gamma=store["gamma"],
        beta_tilde=store["beta_tilde"], lambda2=store["lambda2"],
        pi=store["pi"], sigma2=store["sigma2"], latent=store["latent"],
        censored_index=cens_index,
    )


# ---------------------------------------------------------------------------
# Posterior summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairSummary:
    group_id: str
    covariate: str
    inclusion_prob: float      # nan for intercept rows
    mean: float
    ci_lower: float
    ci_upper: float


@dataclass
class PosteriorSummary:
    pairs: list                      # PairSummary rows, intercepts included
    covariate_stats: dict            # covariate -> (pi_mean, beta_tilde_mean, lambda2_mean)
    sigma2_mean: float
    selected: list                   # PairSummary rows with inclusion_prob > 0.5,
                                     # descending inclusion probability


def summarize(ps: PosteriorSamples) -> PosteriorSummary:
    """Posterior inclusion probabilities, coefficient means, and equal-tailed
    95% credible intervals per (group, covariate); per-covariate hierarchy
    means. Selection uses a strict > 0.5 inclusion-probability rule."""
    if ps.n_draws < 1:
        raise ValueError("empty posterior")
    pairs = []
    for i, gid in enumerate(ps.group_ids):
        draws = ps.beta[:, i, 0]
        lo, hi = np.quantile(draws, [0.025, 0.975])
        pairs.append(PairSummary(gid, "(intercept)", float("nan"),
                                 float(draws.mean()), float(lo), float(hi)))
        for c in ps.group_covariates[i]:
            l = ps.covariate_ids.index(c)
            draws = ps.beta[:, i, 1 + l]
            lo, hi = np.quantile(draws, [0.025, 0.975])
            pip = float(ps.gamma[:, i, l].mean())
            pairs.append(PairSummary(gid, c, pip, float(draws.mean()),
                                     float(lo), float(hi)))
    covariate_stats = {
        c: (float(ps.pi[:, l].mean()), float(ps.beta_tilde[:, 1 + l].mean()),
            float(ps.lambda2[:, 1 + l].mean()))
        for l, c in enumerate(ps.covariate_ids)
    }
    covariate_stats["(intercept)"] = (
        float("nan"), float(ps.beta_tilde[:, 0].mean()), float(ps.lambda2[:, 0].mean()))
    selected = sorted(
        (p for p in pairs if p.covariate != "(intercept)" and p.inclusion_prob > 0.5),
        key=lambda p: (-p.inclusion_prob, p.group_id, p.covariate),
    )
    return PosteriorSummary(pairs=pairs, covariate_stats=covariate_stats,
                            sigma2_mean=float(ps.sigma2.mean()), selected=selected)


def inclusion_matrix(ps: PosteriorSamples) -> tuple[np.ndarray, tuple, tuple]:
    """Covariates x groups posterior inclusion probability matrix; NaN where a
    covariate is unavailable for a group (plot-ready heatmap data)."""
    I, L = ps.avail.shape
    mat = np.full((L, I), np.nan)
    for i in range(I):
        for l in range(L):
            if ps.avail[i, l]:
                mat[l, i] = float(ps.gamma[:, i, l].mean())
    return mat, ps.covariate_ids, ps.group_ids
