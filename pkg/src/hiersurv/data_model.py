"""Grouped, censored, availability-masked survival datasets.

A dataset is a collection of groups (e.g. cancer types). Each group carries
its own design matrix over the subset of globally registered covariates that
are fully observed within that group. Covariates that are missing for every
subject in a group are simply absent from that group's covariate set; a
covariate that is missing for only some subjects of a group is a data error.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MISSING_TOKENS = {"", "NA", "NaN", "nan", "na"}


class DatasetError(ValueError):
    """Malformed input file or violated dataset invariant."""


@dataclass(frozen=True)
class SurvivalOutcome:
    """One subject's (possibly right-censored) event time.

    ``event`` is True when the event was observed; False means the subject
    was right-censored at ``time``.
    """

    time: float
    event: bool

    def __post_init__(self):
        if not (self.time > 0 and math.isfinite(math.log(self.time))):
            raise DatasetError(f"survival time must be positive and finite, got {self.time}")


@dataclass(frozen=True)
class Group:
    """One group's outcomes and design over its available covariates."""

    group_id: str
    times: np.ndarray          # (n,) positive event/censor times
    events: np.ndarray         # (n,) bool, True = event observed
    design: np.ndarray         # (n, p) covariate values, no missing entries
    covariate_ids: tuple[str, ...]
    subject_ids: tuple[str, ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        events = np.asarray(self.events, dtype=bool)
        design = np.asarray(self.design, dtype=float)
        if design.ndim != 2:
            design = design.reshape(len(times), -1)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "design", design)
        if not self.subject_ids:
            object.__setattr__(
                self, "subject_ids",
                tuple(f"{self.group_id}-{j}" for j in range(len(times))),
            )
        self._check()
        for arr in (times, events, design):
            arr.flags.writeable = False

    def _check(self):
        n = len(self.times)
        if n < 1:
            raise DatasetError(f"group {self.group_id!r} is empty")
        if len(self.events) != n or self.design.shape[0] != n or len(self.subject_ids) != n:
            raise DatasetError(f"group {self.group_id!r}: inconsistent row counts")
        if self.design.shape[1] != len(self.covariate_ids):
            raise DatasetError(
                f"group {self.group_id!r}: design has {self.design.shape[1]} columns "
                f"for {len(self.covariate_ids)} covariates"
            )
        if len(set(self.covariate_ids)) != len(self.covariate_ids):
            raise DatasetError(f"group {self.group_id!r}: duplicate covariate ids")
        if np.any(self.times <= 0) or not np.all(np.isfinite(np.log(self.times))):
            raise DatasetError(f"group {self.group_id!r}: non-positive or non-finite time")
        if not np.all(np.isfinite(self.design)):
            raise DatasetError(f"group {self.group_id!r}: non-finite design entries")

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def outcomes(self) -> list[SurvivalOutcome]:
        return [SurvivalOutcome(t, bool(e)) for t, e in zip(self.times, self.events)]

    @property
    def log_times(self) -> np.ndarray:
        return np.log(self.times)


@dataclass(frozen=True)
class GroupedDataset:
    """All groups plus the global covariate registry (union of per-group sets).

    Immutable after construction; safe to share across concurrent samplers.
    ``n_dropped`` counts input rows removed during loading (missing or
    non-positive time, missing event flag).
    """

    groups: tuple[Group, ...]
    covariate_registry: tuple[str, ...]
    n_dropped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "covariate_registry", tuple(self.covariate_registry))
        registry = set(self.covariate_registry)
        if len(registry) != len(self.covariate_registry):
            raise DatasetError("duplicate covariate ids in registry")
        seen = set()
        for g in self.groups:
            if g.group_id in seen:
                raise DatasetError(f"duplicate group id {g.group_id!r}")
            seen.add(g.group_id)
            unknown = set(g.covariate_ids) - registry
            if unknown:
                raise DatasetError(
                    f"group {g.group_id!r} uses unregistered covariates {sorted(unknown)}"
                )

    @property
    def n_subjects(self) -> int:
        return sum(g.n for g in self.groups)

    @property
    def group_ids(self) -> tuple[str, ...]:
        return tuple(g.group_id for g in self.groups)

    def group(self, group_id: str) -> Group:
        for g in self.groups:
            if g.group_id == group_id:
                return g
        raise KeyError(group_id)


DEFAULT_SCHEMA = {"group": "group", "time": "time", "event": "event", "id": "id"}


def _parse_float(token: str, row_idx: int, col: str) -> float | None:
    token = token.strip()
    if token in MISSING_TOKENS:
        return None
    try:
        return float(token)
    except ValueError:
        raise DatasetError(f"row {row_idx}: cannot parse column {col!r} value {token!r}")


def load_dataset(path, schema: dict | None = None) -> GroupedDataset:
    """Load a one-row-per-subject CSV into a GroupedDataset.

    Required columns (renamable via ``schema``): group label, positive time,
    0/1 event flag. An optional ``id`` column supplies subject identifiers.
    Every remaining column is a covariate; cells left empty or set to "NA"
    are missing. A covariate missing for all subjects of a group is excluded
    from that group's covariate set; missing for only some subjects is an
    error. Rows with missing/unparsable time or event, or time <= 0, are
    dropped and counted. Groups are ordered lexicographically by id.
    """
    colmap = dict(DEFAULT_SCHEMA)
    if schema:
        colmap.update(schema)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file")
        rows = list(reader)

    for key in ("group", "time", "event"):
        if colmap[key] not in header:
            raise DatasetError(f"{path}: required column {colmap[key]!r} not found")
    gcol = header.index(colmap["group"])
    tcol = header.index(colmap["time"])
    ecol = header.index(colmap["event"])
    idcol = header.index(colmap["id"]) if colmap["id"] in header else None
    special = {gcol, tcol, ecol} | ({idcol} if idcol is not None else set())
    cov_cols = [(j, header[j]) for j in range(len(header)) if j not in special]

    by_group: dict[str, list] = {}
    n_dropped = 0
    for i, row in enumerate(rows):
        row_idx = i + 2  # 1-based, after header
        if len(row) != len(header):
            raise DatasetError(f"row {row_idx}: expected {len(header)} fields, got {len(row)}")
        gid = row[gcol].strip()
        time = _parse_float(row[tcol], row_idx, colmap["time"])
        ev_tok = row[ecol].strip()
        event = None if ev_tok in MISSING_TOKENS else _parse_float(ev_tok, row_idx, colmap["event"])
        if time is None or event is None or time <= 0:
            n_dropped += 1
            continue
        if event not in (0.0, 1.0):
            raise DatasetError(f"row {row_idx}: event flag must be 0 or 1, got {ev_tok!r}")
        sid = row[idcol].strip() if idcol is not None else f"row{row_idx}"
        covs = {name: _parse_float(row[j], row_idx, name) for j, name in cov_cols}
        by_group.setdefault(gid, []).append((sid, time, bool(event), covs))

    groups = []
    used_covs: set[str] = set()
    for gid in sorted(by_group):
        records = by_group[gid]
        avail = []
        for _, name in cov_cols:
            values = [r[3][name] for r in records]
            n_missing = sum(v is None for v in values)
            if n_missing == 0:
                avail.append(name)
            elif n_missing != len(values):
                raise DatasetError(
                    f"covariate {name!r} is partially missing within group {gid!r} "
                    f"({n_missing} of {len(values)} rows)"
                )
        design = np.array([[r[3][name] for name in avail] for r in records], dtype=float)
        design = design.reshape(len(records), len(avail))
        groups.append(Group(
            group_id=gid,
            times=np.array([r[1] for r in records]),
            events=np.array([r[2] for r in records]),
            design=design,
            covariate_ids=tuple(avail),
            subject_ids=tuple(r[0] for r in records),
        ))
        used_covs.update(avail)

    registry = tuple(name for _, name in cov_cols if name in used_covs)
    return GroupedDataset(groups=tuple(groups), covariate_registry=registry, n_dropped=n_dropped)


@dataclass(frozen=True)
class StandardizationRecord:
    """Original means/sds per covariate (pooled) or (group, covariate) pair."""

    scope: str  # "pooled" or "per_group"
    stats: dict = field(default_factory=dict)  # key -> (mean, sd)

    def save(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["key", "mean", "sd"])
            for key in sorted(self.stats, key=str):
                mean, sd = self.stats[key]
                name = key if isinstance(key, str) else "/".join(key)
                w.writerow([name, repr(mean), repr(sd)])

    @classmethod
    def load(cls, path, scope: str = "pooled") -> "StandardizationRecord":
        stats = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for name, mean, sd in reader:
                key = tuple(name.split("/")) if scope == "per_group" else name
                stats[key] = (float(mean), float(sd))
        return cls(scope=scope, stats=stats)


def _column_stats(values: np.ndarray, label: str) -> tuple[float, float]:
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    if sd <= 0:
        raise DatasetError(f"zero-variance covariate {label}; cannot standardize")
    return mean, sd


def standardize(ds: GroupedDataset, scope: str = "pooled"):
    """Center and scale every covariate column to mean 0, sd 1 (ddof=1).

    ``scope="pooled"`` computes each covariate's statistics across all groups
    where it is available; ``scope="per_group"`` standardizes within each
    group separately. Returns the transformed dataset and the record needed
    to back-transform.
    """
    if scope not in ("pooled", "per_group"):
        raise ValueError(f"unknown standardization scope {scope!r}")

    stats: dict = {}
    if scope == "pooled":
        for cov in ds.covariate_registry:
            chunks = [
                g.design[:, g.covariate_ids.index(cov)]
                for g in ds.groups if cov in g.covariate_ids
            ]
            if chunks:
                stats[cov] = _column_stats(np.concatenate(chunks), f"{cov!r} (pooled)")
    else:
        for g in ds.groups:
            for k, cov in enumerate(g.covariate_ids):
                stats[(g.group_id, cov)] = _column_stats(
                    g.design[:, k], f"{cov!r} (group {g.group_id!r})"
                )

    new_groups = []
    for g in ds.groups:
        design = g.design.copy()
        for k, cov in enumerate(g.covariate_ids):
            mean, sd = stats[cov] if scope == "pooled" else stats[(g.group_id, cov)]
            design[:, k] = (design[:, k] - mean) / sd
        new_groups.append(Group(
            group_id=g.group_id, times=g.times, events=g.events,
            design=design, covariate_ids=g.covariate_ids, subject_ids=g.subject_ids,
        ))
    out = GroupedDataset(tuple(new_groups), ds.covariate_registry, ds.n_dropped)
    return out, StandardizationRecord(scope=scope, stats=stats)


def destandardize(ds: GroupedDataset, record: StandardizationRecord) -> GroupedDataset:
    """Invert :func:`standardize` using the stored means and sds."""
    new_groups = []
    for g in ds.groups:
        design = g.design.copy()
        for k, cov in enumerate(g.covariate_ids):
            key = cov if record.scope == "pooled" else (g.group_id, cov)
            mean, sd = record.stats[key]
            design[:, k] = design[:, k] * sd + mean
        new_groups.append(Group(
            group_id=g.group_id, times=g.times, events=g.events,
            design=design, covariate_ids=g.covariate_ids, subject_ids=g.subject_ids,
        ))
    return GroupedDataset(tuple(new_groups), ds.covariate_registry, ds.n_dropped)


def write_dataset_csv(ds: GroupedDataset, path):
    """Export a GroupedDataset back to the one-row-per-subject CSV layout.

    Covariates unavailable for a group are written as empty cells.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "group", "time", "event", *ds.covariate_registry])
        for g in ds.groups:
            idx = {cov: k for k, cov in enumerate(g.covariate_ids)}
            for j in range(g.n):
                covs = [
                    repr(float(g.design[j, idx[c]])) if c in idx else ""
                    for c in ds.covariate_registry
                ]
                w.writerow([g.subject_ids[j], g.group_id, repr(float(g.times[j])),
                            int(g.events[j]), *covs])


def subject_warning(count: int, context: str):
    if count:
        warnings.warn(f"{count} subjects in {context} were not matched", stacklevel=3)
