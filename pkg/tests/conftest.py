"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from hiersurv.data_model import Group, GroupedDataset


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(str(x) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def toy_dataset(seed=0, n_per_group=20, censor=True):
    """Two groups with partially overlapping covariates; deterministic."""
    rng = np.random.default_rng(seed)
    groups = []
    for gid, covs in (("A", ("C1", "C2", "C3")), ("B", ("C1", "C2"))):
        X = rng.standard_normal((n_per_group, len(covs)))
        logt = 0.5 + X[:, 0] + rng.standard_normal(n_per_group)
        events = (rng.uniform(size=n_per_group) > 0.4) if censor \
            else np.ones(n_per_group, dtype=bool)
        groups.append(Group(
            group_id=gid, times=np.exp(logt), events=events,
            design=X, covariate_ids=covs,
        ))
    return GroupedDataset(tuple(groups), ("C1", "C2", "C3"))


@pytest.fixture
def toy_ds():
    return toy_dataset()
