import json

import numpy as np
import pytest

from mdiplus import pcs
from mdiplus.data import Dataset, SeededRng
from mdiplus.exceptions import ConfigError, ScreeningError
from mdiplus.forest import ForestParams, fit_forest
from mdiplus.glm import GlmSpec
from mdiplus.importance import ImportanceReport, aggregate
from mdiplus.metrics import SimilarityMetric, ranks, rbo
from mdiplus.pcs import (
    CandidateModel, ensemble_rank, load_candidates, mean_pairwise_rbo, prediction_screen, screen,
    selection_summary, stability_select, tree_bootstraps,
)

REDUCTION = CandidateModel("rf-equivalent", augment=False, spec=GlmSpec("ols"),
                           metric=SimilarityMetric("r2-unnormalized"), loo=False)


def _data(seed=0, n=150, p=5, noise=0.5):
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p))
    y = 3 * X[:, 0] + 2 * X[:, 1] + noise * gen.standard_normal(n)
    return Dataset(X, y)


def _forest(d, n_trees=8, seed=0):
    return fit_forest(d, ForestParams(n_trees=n_trees), SeededRng(seed))


def test_rf_equivalent_candidate_passes_screen():
    d = _data()
    test = _data(seed=1)
    f = _forest(d)
    res = screen([REDUCTION], d, test, f)
    assert res.performance["rf-equivalent"] == pytest.approx(res.baseline, abs=1e-9)
    assert res.passed("rf-equivalent")
    # test == train never removes it either
    assert prediction_screen([REDUCTION], d, d, f) == [REDUCTION]


def test_single_passing_candidate_list_of_one():
    d = _data()
    out = prediction_screen([CandidateModel("ridge")], d, _data(seed=2), _forest(d))
    assert [c.id for c in out] == ["ridge"]


def test_over_shrunk_candidate_usually_screened_out():
    heavy = CandidateModel("heavy", spec=GlmSpec("ridge", lambda_grid=[1e8]), loo=False)
    removed = 0
    for s in range(20):
        d = _data(seed=s, n=100)
        res = screen([heavy], d, _data(seed=100 + s, n=100), _forest(d, n_trees=4, seed=s))
        removed += not res.passed("heavy")
    assert removed >= 15


def test_empty_screen_raises_with_result():
    heavy = CandidateModel("heavy", spec=GlmSpec("ridge", lambda_grid=[1e8]), loo=False)
    d = _data()
    with pytest.raises(ScreeningError) as info:
        prediction_screen([heavy], d, _data(seed=3), _forest(d))
    assert info.value.result.screened == []
    assert "heavy" in info.value.result.performance


def test_identical_trees_give_rbo_one_and_first_candidate_wins():
    d = _data()
    f = _forest(d, n_trees=1).subset([0] * 5)
    cands = [CandidateModel("b"), CandidateModel("a", augment=False)]
    res = stability_select(cands, f, d, B=4, rng=SeededRng(0))
    assert all(v == 1.0 for v in res.per_candidate.values())
    assert res.chosen == "b"
    res = stability_select(cands[::-1], f, d, B=4, rng=SeededRng(0))
    assert res.chosen == "a"


def test_b_equals_two_is_a_single_pair():
    d = _data()
    f = _forest(d)
    c = CandidateModel("ridge")
    res = stability_select([c], f, d, B=2, rng=SeededRng(5))
    rep = res.reports["ridge"]
    boots = tree_bootstraps(len(f), 2, SeededRng(5))
    r = [aggregate(rep.per_tree[b], "mdi-plus", d.column_names).ranking for b in boots]
    assert res.per_candidate["ridge"] == pytest.approx(rbo(r[0], r[1], 0.9), abs=1e-15)


def test_stable_candidate_beats_random_rankings(monkeypatch):
    real = pcs.mdi_plus

    def fake(forest, data, config=None, threads=1, return_model=False):
        if config.glm.family != "huber-ridge":
            return real(forest, data, config)
        # per-tree scores unrelated to the data
        noise = np.random.default_rng(forest.seed).random((len(forest), data.p))
        return aggregate(noise, "mdi-plus", data.column_names)

    monkeypatch.setattr(pcs, "mdi_plus", fake)
    for s in range(20):
        d = _data(seed=s, n=80)
        f = _forest(d, n_trees=6, seed=s)
        cands = [CandidateModel("noisy", spec=GlmSpec("huber-ridge"), metric=SimilarityMetric("neg-huber")),
                 CandidateModel("stable")]
        assert stability_select(cands, f, d, B=6, rng=SeededRng(s)).chosen == "stable"


def test_stability_invariant_to_candidate_order():
    d = _data(seed=4)
    f = _forest(d, seed=4)
    cands = [CandidateModel("ridge"), CandidateModel("noraw", augment=False), CandidateModel("inbag", loo=False)]
    a = stability_select(cands, f, d, B=5, rng=SeededRng(1))
    b = stability_select(cands[::-1], f, d, B=5, rng=SeededRng(1))
    assert a.per_candidate == b.per_candidate
    if len(set(a.per_candidate.values())) == len(cands):
        assert a.chosen == b.chosen


def test_mean_pairwise_rbo():
    assert mean_pairwise_rbo([[0, 1], [1, 0]]) == pytest.approx(0.9 / 1.9)
    assert mean_pairwise_rbo([[0, 1, 2]] * 3) == 1.0
    with pytest.raises(ConfigError):
        mean_pairwise_rbo([[0, 1]])


def _report(scores):
    return ImportanceReport("x", np.asarray(scores, dtype=float), tuple(f"x{j}" for j in range(len(scores))))


def test_ensemble_rank_examples():
    one = _report([3.0, 1.0, 2.0])
    np.testing.assert_array_equal(ensemble_rank([one]).ranking, one.ranking)
    np.testing.assert_array_equal(ensemble_rank([one, _report([30.0, 10.0, 20.0])]).ranking, one.ranking)
    # feature 0 ranked 1, 5 and 2 across three reports
    reps = [_report([9, 8, 7, 6, 5]), _report([1, 5, 4, 3, 2]), _report([8, 9, 1, 2, 3])]
    assert [ranks(r.scores)[0] for r in reps] == [1, 5, 2]
    assert ensemble_rank(reps).scores[0] == -2.0


def test_ensemble_rank_invariant_to_report_order():
    gen = np.random.default_rng(0)
    reps = [_report(gen.standard_normal(6)) for _ in range(4)]
    a = ensemble_rank(reps)
    b = ensemble_rank(reps[::-1])
    np.testing.assert_array_equal(a.scores, b.scores)


def test_candidate_parsing(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps([{"id": "a"}, {"id": "b", "glm": "logistic"}]))
    a, b = load_candidates(path)
    assert a.metric.kind == "r2" and b.metric.kind == "neg-log-loss"
    assert CandidateModel.from_dict(a.to_dict()) == a
    path.write_text(json.dumps([{"id": "a"}, {"id": "a"}]))
    with pytest.raises(ConfigError):
        load_candidates(path)
    with pytest.raises(ConfigError):
        CandidateModel.from_dict({"id": "x", "colour": "red"})
    with pytest.raises(ConfigError):
        CandidateModel("x", metric=SimilarityMetric("neg-log-loss"))


def test_selection_summary_fields():
    d = _data()
    f = _forest(d)
    cands = [CandidateModel("ridge"), REDUCTION]
    res = screen(cands, d, _data(seed=9), f)
    stab = stability_select(res.screened, f, d, B=3, rng=SeededRng(0))
    s = selection_summary(res, cands, stab, d.task)
    assert s["kind"] == "selection" and s["schema_version"] == 1
    assert s["chosen"] == stab.chosen
    assert [c["id"] for c in s["candidates"]] == ["ridge", "rf-equivalent"]
    assert sum(c["chosen"] for c in s["candidates"]) == 1
    json.dumps(s, allow_nan=False)
