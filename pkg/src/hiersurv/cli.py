"""Batch command-line frontend.

Commands: extract (component scores -> design), fit (Gibbs run + summaries),
cv (variant comparison), simulate (replicated condition study), validate
(coverage / selection accuracy), summarize (re-summarize a stored posterior).
Every command is a pure function of (config file, input files, seed); runs
with identical configs produce byte-identical outputs. Options may come from
a JSON config file (--config) and/or flags; flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from hiersurv import components as comp
from hiersurv import data_model as dm
from hiersurv import evaluation as ev
from hiersurv import simulation as sim
from hiersurv.sampler import (
    ModelVariant,
    PosteriorSamples,
    PriorConfig,
    Schedule,
    gibbs_run,
    inclusion_matrix,
    summarize,
)


class ConfigError(ValueError):
    pass


def fmt(x, sig: int = 6) -> str:
    """Fixed significant-digit float formatting for CSV output."""
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), f".{sig}g")


def fmt_ll(x) -> str:
    return fmt(x, sig=10)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    return cfg


def _merged(args, cfg: dict, defaults: dict) -> dict:
    """defaults <- config file <- explicitly passed flags."""
    eff = dict(defaults)
    eff.update({k: v for k, v in cfg.items() if k in defaults})
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            eff[key] = val
    if eff.get("seed") is None:
        raise ConfigError("a seed is required (--seed or config key 'seed')")
    return eff


def _echo_config(eff: dict, outdir: Path):
    with open(outdir / "config_echo.json", "w", encoding="utf-8") as fh:
        json.dump(eff, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prior_from(eff: dict) -> PriorConfig:
    overrides = eff.get("prior") or {}
    try:
        return PriorConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad prior config: {exc}")


def _schedule_from(eff: dict) -> Schedule:
    try:
        return Schedule(total=int(eff["total"]), burn_in=int(eff["burnin"]),
                        thin=int(eff["thin"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad schedule: {exc}")


def _threads(eff: dict) -> int:
    n = eff.get("threads")
    if n:
        return int(n)
    env = os.environ.get("HIERSURV_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _outdir(eff: dict) -> Path:
    if not eff.get("out"):
        raise ConfigError("an output directory is required (--out)")
    out = Path(eff["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_extract(args) -> int:
    cfg = _load_config(args)
    defaults = {"manifest": None, "data": None, "threshold": 0.01,
                "total_variance": None, "max_components": None,
                "standardize": "pooled", "seed": None, "out": None}
    eff = _merged(args, cfg, defaults)
    out = _outdir(eff)
    if not eff["manifest"] or not eff["data"]:
        raise ConfigError("extract needs --manifest and --data")

    ds = dm.load_dataset(eff["data"])
    membership = {sid: g.group_id for g in ds.groups for sid in g.subject_ids}
    modules, manifest_tv = comp.load_manifest(eff["manifest"])
    total_variance = eff["total_variance"] or manifest_tv

    all_scores = []
    for module_id, path in modules:
        m = comp.load_module_csv(path, module_id, membership)
        all_scores.extend(comp.svd_scores(
            m, max_components=eff["max_components"],
            total_variance=total_variance))
    selected = comp.filter_components(all_scores, total_variance=total_variance,
                                      threshold=float(eff["threshold"]))
    if not selected:
        print("warning: empty manifest, writing empty design", file=sys.stderr)
    merged = comp.assemble_design(selected, ds)
    merged, record = dm.standardize(merged, scope=eff["standardize"])

    comp.write_scores_csv(selected, out / "scores.csv")
    dm.write_dataset_csv(merged, out / "design.csv")
    record.save(out / "standardization.csv")
    provenance = {
        "threshold": float(eff["threshold"]),
        "total_variance": total_variance,
        "n_modules": len(modules),
        "n_candidates": len(all_scores),
        "n_selected": len(selected),
        "selected": [c.name for c in selected],
        "n_dropped_rows": ds.n_dropped,
    }
    with open(out / "provenance.json", "w", encoding="utf-8") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _echo_config(eff, out)
    return 0


def write_summary_csv(summary, path):
    rows = [
        (p.group_id, p.covariate, fmt(p.mean), fmt(p.ci_lower),
         fmt(p.ci_upper), fmt(p.inclusion_prob))
        for p in summary.pairs
    ]
    _write_csv(path, ["group", "covariate", "mean_effect", "ci_lower",
                      "ci_upper", "inclusion_prob"], rows)


def write_selected_csv(summary, path):
    rows = [
        (p.covariate, p.group_id, fmt(p.mean), fmt(p.ci_lower),
         fmt(p.ci_upper), fmt(p.inclusion_prob))
        for p in summary.selected
    ]
    _write_csv(path, ["covariate", "group", "mean_effect", "ci_lower",
                      "ci_upper", "inclusion_prob"], rows)


def write_inclusion_matrix_csv(ps, path):
    mat, cov_ids, group_ids = inclusion_matrix(ps)
    rows = [
        (cov, *(fmt(mat[l, i]) if np.isfinite(mat[l, i]) else ""
                for i in range(len(group_ids))))
        for l, cov in enumerate(cov_ids)
    ]
    _write_csv(path, ["covariate", *group_ids], rows)


def write_hyper_csv(summary, path):
    rows = []
    for cov in sorted(summary.covariate_stats):
        pi_m, bt_m, lam_m = summary.covariate_stats[cov]
        rows.append((cov, fmt(pi_m), fmt(bt_m), fmt(lam_m)))
    rows.append(("sigma2", "", fmt(summary.sigma2_mean), ""))
    _write_csv(path, ["covariate", "pi_mean", "location_mean", "scale_mean"], rows)


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    defaults = {"data": None, "variant": "hierarchical", "total": 10_000,
                "burnin": 5_000, "thin": 10, "standardize": "pooled",
                "prior": None, "seed": None, "out": None}
    eff = _merged(args, cfg, defaults)
    out = _outdir(eff)
    if not eff["data"]:
        raise ConfigError("fit needs --data")
    ds = dm.load_dataset(eff["data"])
    if eff["standardize"] != "none":
        ds, record = dm.standardize(ds, scope=eff["standardize"])
        record.save(out / "standardization.csv")
    variant = ModelVariant.parse(eff["variant"])
    ps = gibbs_run(ds, variant, _prior_from(eff), _schedule_from(eff),
                   seed=int(eff["seed"]), progress=True)
    ps.save(out / "posterior")
    summary = summarize(ps)
    write_summary_csv(summary, out / "summary.csv")
    write_selected_csv(summary, out / "selected.csv")
    write_inclusion_matrix_csv(ps, out / "inclusion_matrix.csv")
    write_hyper_csv(summary, out / "hyperparameters.csv")
    _echo_config(eff, out)
    return 0


def cmd_cv(args) -> int:
    cfg = _load_config(args)
    defaults = {"data": None, "variants": [v.value for v in ModelVariant],
                "folds": 5, "total": 10_000, "burnin": 5_000, "thin": 10,
                "standardize": "pooled", "prior": None, "threads": None,
                "seed": None, "out": None}
    eff = _merged(args, cfg, defaults)
    out = _outdir(eff)
    if not eff["data"]:
        raise ConfigError("cv needs --data")
    ds = dm.load_dataset(eff["data"])
    if eff["standardize"] != "none":
        ds, _ = dm.standardize(ds, scope=eff["standardize"])
    variants = [ModelVariant.parse(v) for v in eff["variants"]]
    folds = ev.make_folds(ds, int(eff["folds"]), seed=int(eff["seed"]))
    res = ev.cross_validate(ds, variants, folds, _prior_from(eff),
                            _schedule_from(eff), seed=int(eff["seed"]),
                            n_jobs=_threads(eff))
    rows = [(v.value, str(f), fmt_ll(score)) for v, f, score in res.rows]
    rows += [(v.value, "mean", fmt_ll(res.means[v])) for v in variants]
    _write_csv(out / "cv_results.csv", ["variant", "fold", "log_ppl"], rows)
    _echo_config(eff, out)
    return 0


_CONDITION_DEFAULTS = [
    {"kind": "all_or_none", "p": 0.5},
    {"kind": "all_or_none", "p": 0.1},
    {"kind": "independent", "p": 0.5},
    {"kind": "independent", "p": 0.1},
    {"kind": "all_included"},
    {"kind": "none_included"},
]


def _conditions_from(eff: dict) -> list:
    template = sim.default_study_template(
        n_groups=int(eff["groups"]), group_size=int(eff["group_size"]))
    conds = []
    for spec in eff["conditions"]:
        conds.append(sim.GenCondition(
            kind=spec["kind"], p=float(spec.get("p", 0.5)),
            censor_fraction=float(spec.get("censor_fraction",
                                           eff["censor_fraction"])),
            template=template))
    return conds


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    defaults = {"conditions": _CONDITION_DEFAULTS,
                "variants": [v.value for v in ModelVariant],
                "replications": 10, "groups": 10, "group_size": 150,
                "censor_fraction": 0.5, "total": 10_000, "burnin": 5_000,
                "thin": 10, "alpha": 0.01, "threads": None,
                "seed": None, "out": None}
    eff = _merged(args, cfg, defaults)
    out = _outdir(eff)
    if int(eff["replications"]) < 2:
        raise ConfigError("simulate needs at least 2 replications")
    conds = _conditions_from(eff)
    variants = [ModelVariant.parse(v) for v in eff["variants"]]
    result = sim.run_study(
        conds, variants, replications=int(eff["replications"]),
        schedule=_schedule_from(eff), seed=int(eff["seed"]),
        n_jobs=_threads(eff), alpha=float(eff["alpha"]))
    _write_study_outputs(result, out)
    _echo_config(eff, out)
    if result.failures:
        print(f"{len(result.failures)} cells failed", file=sys.stderr)
        return 1
    return 0


def _write_study_outputs(result: sim.StudyResult, out: Path):
    for metric, name, formatter in (("ssd", "ssd.csv", fmt),
                                    ("lppl", "log_ppl.csv", fmt_ll)):
        means = result.mean_table(metric)
        rows = [
            (cond, *(formatter(means[ci, vi])
                     for vi in range(len(result.variants))))
            for ci, cond in enumerate(result.conditions)
        ]
        _write_csv(out / name, ["condition", *result.variants], rows)
        data = result.ssd if metric == "ssd" else result.lppl
        rep_rows = []
        for ci, cond in enumerate(result.conditions):
            for vi, var in enumerate(result.variants):
                for rep in range(data.shape[2]):
                    rep_rows.append((cond, var, str(rep),
                                     formatter(data[ci, vi, rep])))
        _write_csv(out / f"{metric}_replications.csv",
                   ["condition", "variant", "replication", "value"], rep_rows)

    lines = [f"pairwise paired t-tests at alpha = {result.alpha:g}", ""]
    for metric in ("ssd", "lppl"):
        lines.append(f"metric: {metric}")
        for ci, cond in enumerate(result.conditions):
            best = sorted(result.best_set(metric, ci))
            lines.append(f"  {cond}: best = {', '.join(best)}")
            p = result.pairwise_p(metric, ci)
            for u in range(len(result.variants)):
                for v in range(u + 1, len(result.variants)):
                    lines.append(
                        f"    {result.variants[u]} vs {result.variants[v]}: "
                        f"p = {fmt(p[u, v])}")
        lines.append("")
    if result.failures:
        lines.append("failed cells:")
        for cond, var, rep, msg in result.failures:
            lines.append(f"  {cond} / {var} / rep {rep}: {msg}")
    with open(out / "significance.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    defaults = {"outer": 1000, "total": 2000, "burnin": 1000, "thin": 1,
                "threads": None, "seed": None, "out": None}
    eff = _merged(args, cfg, defaults)
    out = _outdir(eff)
    res = sim.validation_study(
        n_outer=int(eff["outer"]), schedule=_schedule_from(eff),
        seed=int(eff["seed"]), n_jobs=_threads(eff))
    cols = ["intercept", *res.template.covariate_ids]
    rows = []
    for row_label in sorted(res.coverage):
        cells = res.coverage[row_label]
        if row_label == "sigma2":
            rows.append((row_label, fmt(cells["sigma2"]), "", "", ""))
        else:
            rows.append((row_label,
                         *(fmt(cells[c]) if c in cells else "" for c in cols)))
    _write_csv(out / "coverage.csv", ["parameter", *cols], rows)

    acc_rows = []
    for gid in res.template.group_ids:
        cells = res.selection_accuracy.get(gid, {})
        acc_rows.append((gid, *(fmt(cells[c]) if c in cells else ""
                                for c in res.template.covariate_ids)))
    acc_rows.append(("overall", fmt(res.overall_accuracy), "", ""))
    _write_csv(out / "selection_accuracy.csv",
               ["group", *res.template.covariate_ids], acc_rows)
    _echo_config(eff, out)
    return 0


def cmd_summarize(args) -> int:
    cfg = _load_config(args)
    defaults = {"posterior": None, "seed": 0, "out": None}
    eff = _merged(args, cfg, defaults)
    out = _outdir(eff)
    if not eff["posterior"]:
        raise ConfigError("summarize needs --posterior DIR")
    ps = PosteriorSamples.load(eff["posterior"])
    summary = summarize(ps)
    write_summary_csv(summary, out / "summary.csv")
    write_selected_csv(summary, out / "selected.csv")
    write_inclusion_matrix_csv(ps, out / "inclusion_matrix.csv")
    write_hyper_csv(summary, out / "hyperparameters.csv")
    _echo_config(eff, out)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiersurv",
        description="Hierarchical spike-and-slab survival regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, help="random seed (required)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="parallel task cap")

    def schedule_flags(p):
        p.add_argument("--total", type=int, help="total Gibbs iterations")
        p.add_argument("--burnin", type=int, help="burn-in iterations")
        p.add_argument("--thin", type=int, help="thinning interval")

    p = sub.add_parser("extract", help="SVD component scores -> merged design")
    common(p)
    p.add_argument("--manifest", help="module manifest JSON")
    p.add_argument("--data", help="survival dataset CSV")
    p.add_argument("--threshold", type=float, help="variance-ratio threshold")
    p.add_argument("--total-variance", dest="total_variance", type=float)
    p.add_argument("--max-components", dest="max_components", type=int)
    p.add_argument("--standardize", choices=["pooled", "per_group"])
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    common(p)
    schedule_flags(p)
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--variant", help="model variant name")
    p.add_argument("--standardize", choices=["pooled", "per_group", "none"])
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validated variant comparison")
    common(p)
    schedule_flags(p)
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--variants", nargs="+", help="variant names")
    p.add_argument("--folds", type=int, help="fold count")
    p.add_argument("--standardize", choices=["pooled", "per_group", "none"])
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="replicated condition study")
    common(p)
    schedule_flags(p)
    p.add_argument("--variants", nargs="+", help="variant names")
    p.add_argument("--replications", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--group-size", dest="group_size", type=int)
    p.add_argument("--censor-fraction", dest="censor_fraction", type=float)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="coverage and selection accuracy")
    common(p)
    schedule_flags(p)
    p.add_argument("--outer", type=int, help="outer iterations")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("summarize", help="re-summarize a stored posterior")
    common(p)
    p.add_argument("--posterior", help="posterior directory from fit")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (dm.DatasetError, comp.ComponentError, ValueError, OSError,
            RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
