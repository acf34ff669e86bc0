"""SVD component extraction, filtering, and design assembly."""

import json

import numpy as np
import pytest

from hiersurv.components import (
    ComponentError,
    ComponentScores,
    LowRankModule,
    assemble_design,
    filter_components,
    load_manifest,
    load_module_csv,
    svd_scores,
    write_scores_csv,
)
from tests.conftest import toy_dataset


def _module(block, sample_ids=None, module_id=1):
    block = np.asarray(block, dtype=float)
    if sample_ids is None:
        sample_ids = tuple(f"s{j}" for j in range(block.shape[1]))
    return LowRankModule(module_id=module_id, data_block=block,
                         sample_ids=sample_ids, group_membership={})


def test_rank_one_scores_are_sigma_times_v():
    u = np.array([3.0, 4.0]) / 5.0
    v = np.array([0.6, 0.8])
    m = _module(2.0 * np.outer(u, v))
    (c,) = svd_scores(m, max_components=1)
    np.testing.assert_allclose([c.scores["s0"], c.scores["s1"]], [1.2, 1.6])
    assert c.component_index == 1
    assert c.name == "1.1"
    np.testing.assert_allclose(c.singular_value, 2.0)
    np.testing.assert_allclose(c.variance_ratio, 1.0)


def test_reconstruction_matches_block():
    # left vectors recovered from the block and the returned scores must
    # rebuild the rank-3 block essentially exactly
    rng = np.random.default_rng(7)
    block = (rng.standard_normal((8, 3)) @ rng.standard_normal((3, 12)))
    m = _module(block)
    comps = svd_scores(m, max_components=3)
    recon = np.zeros_like(block)
    for c in comps:
        sv = c.score_vector(m.sample_ids)          # sigma_k * v_k
        u = block @ sv / (c.singular_value ** 2)   # A v / sigma
        recon += np.outer(u, sv)
    rel = np.linalg.norm(recon - block) / np.linalg.norm(block)
    assert rel < 1e-8
    # variance accounting: squared singular values sum to the Frobenius norm
    np.testing.assert_allclose(sum(c.singular_value ** 2 for c in comps),
                               np.sum(block ** 2), rtol=1e-10)


def test_sign_convention_is_flip_invariant():
    rng = np.random.default_rng(11)
    block = rng.standard_normal((4, 6))
    a = svd_scores(_module(block))
    b = svd_scores(_module(-block))
    for ca, cb in zip(a, b):
        va = ca.score_vector(tuple(f"s{j}" for j in range(6)))
        vb = cb.score_vector(tuple(f"s{j}" for j in range(6)))
        np.testing.assert_allclose(va, vb, atol=1e-10)
        # largest-magnitude entry is positive
        assert va[np.argmax(np.abs(va))] > 0


def test_all_zero_module_is_degenerate():
    with pytest.raises(ComponentError, match="degenerate module"):
        svd_scores(_module(np.zeros((3, 3))))


def test_max_components_validation():
    m = _module(np.eye(3))
    assert len(svd_scores(m, max_components=2)) == 2
    with pytest.raises(ComponentError, match="max_components"):
        svd_scores(m, max_components=4)


def _fake_component(module_id, index, ratio, sv=1.0):
    return ComponentScores(module_id=module_id, component_index=index,
                           scores={"s0": 0.0}, singular_value=sv,
                           variance_ratio=ratio)


def test_filter_keeps_first_and_above_threshold():
    cands = [_fake_component(1, 1, 0.030), _fake_component(1, 2, 0.012),
             _fake_component(1, 3, 0.004)]
    kept = filter_components(cands)
    assert [(c.module_id, c.component_index) for c in kept] == [(1, 1), (1, 2)]


def test_filter_always_keeps_first_component():
    kept = filter_components([_fake_component(2, 1, 0.002)])
    assert [(c.module_id, c.component_index) for c in kept] == [(2, 1)]


def test_filter_zero_threshold_keeps_everything():
    cands = [_fake_component(1, k, r, sv=1.0)
             for k, r in ((1, 0.03), (2, 0.012), (3, 0.004))]
    assert len(filter_components(cands, threshold=0.0)) == 3


def test_filter_recomputes_ratios_against_total_variance():
    # singular value 2 -> variance 4; total 1000 -> ratio 0.004 < threshold
    c1 = _fake_component(1, 1, 0.5, sv=2.0)
    c2 = _fake_component(1, 2, 0.5, sv=2.0)
    kept = filter_components([c1, c2], total_variance=1000.0)
    assert [(c.module_id, c.component_index) for c in kept] == [(1, 1)]
    np.testing.assert_allclose(kept[0].variance_ratio, 0.004)


def test_filter_superset_under_smaller_threshold():
    rng = np.random.default_rng(3)
    cands = svd_scores(_module(rng.standard_normal((6, 9))))
    loose = {(c.module_id, c.component_index)
             for c in filter_components(cands, threshold=0.001)}
    tight = {(c.module_id, c.component_index)
             for c in filter_components(cands, threshold=0.1)}
    assert tight <= loose


def _scores_for(ds, group_ids, name_parts=(5, 1), value=1.0):
    subjects = {}
    for g in ds.groups:
        if g.group_id in group_ids:
            for j, sid in enumerate(g.subject_ids):
                subjects[sid] = value * (j + 1)
    return ComponentScores(module_id=name_parts[0],
                           component_index=name_parts[1], scores=subjects,
                           singular_value=1.0, variance_ratio=0.5)


def test_assemble_respects_group_coverage(toy_ds):
    comp = _scores_for(toy_ds, {"A"})
    out = assemble_design([comp], toy_ds)
    assert "5.1" in out.group("A").covariate_ids
    assert "5.1" not in out.group("B").covariate_ids
    assert out.covariate_registry == ("C1", "C2", "C3", "5.1")
    np.testing.assert_allclose(
        out.group("A").design[:, -1], np.arange(1, toy_ds.group("A").n + 1))


def test_assemble_registry_grows_by_selected_components(toy_ds):
    comps = [_scores_for(toy_ds, {"A", "B"}, (m, 1)) for m in range(1, 5)]
    out = assemble_design(comps, toy_ds)
    # existing covariates plus one column per selected component
    assert len(out.covariate_registry) == 3 + 4


def test_assemble_empty_selection_is_identity(toy_ds):
    out = assemble_design([], toy_ds)
    assert out.covariate_registry == toy_ds.covariate_registry
    for g0, g1 in zip(toy_ds.groups, out.groups):
        np.testing.assert_array_equal(g0.design, g1.design)


def test_assemble_warns_on_unmatched_subjects(toy_ds):
    comp = _scores_for(toy_ds, {"A", "B"})
    comp.scores["ghost-1"] = 9.0
    comp.scores["ghost-2"] = 9.0
    with pytest.warns(UserWarning, match="2 scored subjects"):
        assemble_design([comp], toy_ds)


def test_module_csv_and_manifest_io(tmp_path):
    block = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    mod_path = tmp_path / "m1.csv"
    mod_path.write_text("s0,s1,s2\n1.0,2.0,3.0\n4.0,5.0,6.0\n")
    m = load_module_csv(mod_path, 1, {})
    np.testing.assert_array_equal(m.data_block, block)
    assert m.sample_ids == ("s0", "s1", "s2")

    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(
        {"modules": [{"id": 1, "path": str(mod_path)}], "total_variance": 91.0}))
    modules, tv = load_manifest(manifest)
    assert modules == [(1, str(mod_path))]
    assert tv == 91.0


def test_write_scores_csv(tmp_path):
    comps = [_fake_component(1, 1, 0.5), _fake_component(2, 1, 0.5)]
    path = tmp_path / "scores.csv"
    write_scores_csv(comps, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "subject,1.1,2.1"
    assert len(lines) == 2
