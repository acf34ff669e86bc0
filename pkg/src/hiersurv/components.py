"""Predictor columns derived from pre-factorized low-rank data blocks.

Each low-rank module (features x samples) is decomposed with an SVD; the
product of each singular value with its right singular vector gives one
score column per subject. Components are retained if they are the first of
their module or explain more than a threshold fraction of the total variance
of the original multi-source data, then merged into a grouped dataset as
ordinary covariates named "<module>.<index>".
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from hiersurv.data_model import Group, GroupedDataset


class ComponentError(ValueError):
    pass


@dataclass(frozen=True)
class LowRankModule:
    """A factorized data block and the subjects it covers."""

    module_id: int
    data_block: np.ndarray             # features x samples
    sample_ids: tuple[str, ...]
    group_membership: dict             # subject id -> group id

    def __post_init__(self):
        block = np.asarray(self.data_block, dtype=float)
        object.__setattr__(self, "data_block", block)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if block.ndim != 2 or block.size == 0:
            raise ComponentError(f"module {self.module_id}: data block must be a non-empty matrix")
        if block.shape[1] != len(self.sample_ids):
            raise ComponentError(
                f"module {self.module_id}: {block.shape[1]} columns for "
                f"{len(self.sample_ids)} sample ids"
            )
        if not np.all(np.isfinite(block)):
            raise ComponentError(f"module {self.module_id}: non-finite entries")


@dataclass(frozen=True)
class ComponentScores:
    """One SVD component's per-subject scores (singular value x right vector)."""

    module_id: int
    component_index: int               # 1-based rank within the module
    scores: dict                       # subject id -> score
    singular_value: float
    variance_ratio: float              # squared singular value / total variance

    @property
    def name(self) -> str:
        return f"{self.module_id}.{self.component_index}"

    def score_vector(self, sample_ids) -> np.ndarray:
        return np.array([self.scores[s] for s in sample_ids], dtype=float)


def svd_scores(m: LowRankModule, max_components: int | None = None,
               total_variance: float | None = None) -> list[ComponentScores]:
    """Decompose a module and return its component scores, strongest first.

    The k-th component's score for subject j is sigma_k * v_kj. Signs are
    fixed so the largest-magnitude entry of each right singular vector is
    positive (SVD signs are otherwise arbitrary). ``total_variance`` is the
    denominator for variance ratios; it defaults to the module's own squared
    Frobenius norm but should be the total variance of the original
    multi-source data when that is known.
    """
    block = m.data_block
    if not np.any(block):
        raise ComponentError(f"degenerate module {m.module_id}: all entries are zero")
    kmax = min(block.shape[0], block.shape[1], 20)
    if max_components is not None:
        if max_components > min(block.shape):
            raise ComponentError(
                f"module {m.module_id}: max_components {max_components} exceeds "
                f"min(rows, cols) = {min(block.shape)}"
            )
        kmax = max_components
    if total_variance is None:
        total_variance = float(np.sum(block ** 2))

    _, s, vt = np.linalg.svd(block, full_matrices=False)
    out = []
    for k in range(kmax):
        v = vt[k]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        scores = s[k] * v
        out.append(ComponentScores(
            module_id=m.module_id,
            component_index=k + 1,
            scores=dict(zip(m.sample_ids, scores.tolist())),
            singular_value=float(s[k]),
            variance_ratio=float(s[k] ** 2 / total_variance),
        ))
    return out


def filter_components(candidates, total_variance: float | None = None,
                      threshold: float = 0.01) -> list[ComponentScores]:
    """Retain each module's first component plus any with variance ratio above
    ``threshold``.

    If ``total_variance`` is given, variance ratios are recomputed against it
    from the stored singular values before filtering. Output preserves
    module-then-index ordering.
    """
    ordered = sorted(candidates, key=lambda c: (c.module_id, c.component_index))
    out = []
    for c in ordered:
        ratio = c.variance_ratio
        if total_variance is not None:
            ratio = c.singular_value ** 2 / total_variance
            c = ComponentScores(c.module_id, c.component_index, c.scores,
                                c.singular_value, float(ratio))
        if c.component_index == 1 or ratio > threshold:
            out.append(c)
    return out


def assemble_design(selected, ds: GroupedDataset) -> GroupedDataset:
    """Merge selected component scores into a dataset as covariate columns.

    A component becomes available for a group only when every subject of the
    group appears in its score map. Subjects present in a score map but
    absent from the dataset raise a warning with a count, not an error.
    """
    dataset_subjects = set()
    for g in ds.groups:
        dataset_subjects.update(g.subject_ids)
    unmatched = set()
    for c in selected:
        unmatched.update(set(c.scores) - dataset_subjects)
    if unmatched:
        warnings.warn(f"{len(unmatched)} scored subjects are absent from the dataset")

    new_groups = []
    for g in ds.groups:
        cols, names = [], []
        for c in selected:
            if all(s in c.scores for s in g.subject_ids):
                cols.append(c.score_vector(g.subject_ids))
                names.append(c.name)
        design = np.column_stack([g.design, *cols]) if cols else g.design
        new_groups.append(Group(
            group_id=g.group_id, times=g.times, events=g.events,
            design=design.reshape(g.n, -1),
            covariate_ids=g.covariate_ids + tuple(names),
            subject_ids=g.subject_ids,
        ))

    new_names = [c.name for c in selected
                 if any(c.name in g.covariate_ids for g in new_groups)]
    registry = ds.covariate_registry + tuple(new_names)
    return GroupedDataset(tuple(new_groups), registry, ds.n_dropped)


def load_module_csv(path, module_id: int, group_membership: dict) -> LowRankModule:
    """Read one features x samples CSV (header row = sample ids)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            sample_ids = tuple(s.strip() for s in next(reader))
        except StopIteration:
            raise ComponentError(f"{path}: empty module file")
        rows = [[float(x) for x in row] for row in reader]
    if not rows:
        raise ComponentError(f"{path}: module has no feature rows")
    return LowRankModule(
        module_id=module_id,
        data_block=np.array(rows, dtype=float),
        sample_ids=sample_ids,
        group_membership=dict(group_membership),
    )


def load_manifest(path) -> tuple[list[tuple[int, str]], float | None]:
    """Read a module manifest: JSON with ``modules`` ([{"id", "path"}]) and an
    optional ``total_variance`` scalar."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    modules = [(int(m["id"]), m["path"]) for m in doc.get("modules", [])]
    tv = doc.get("total_variance")
    return modules, (float(tv) if tv is not None else None)


def write_scores_csv(selected, path):
    """Export selected component scores as one subjects x components CSV."""
    subjects = sorted({s for c in selected for s in c.scores})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", *(c.name for c in selected)])
        for s in subjects:
            row = [s]
            for c in selected:
                row.append(repr(float(c.scores[s])) if s in c.scores else "")
            w.writerow(row)
