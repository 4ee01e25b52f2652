import csv
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import accuracy_score, precision_recall_fscore_support

from conftest import arbitration_oracle
from gazemind._constants import FEATURES, LEVELS
from gazemind.eval import (
    ConfusionMatrix,
    accuracy_cdf,
    confusion,
    counterfactual_run,
    direction_consistent,
    format_report,
    metrics,
    names_feature,
    per_user_accuracy,
    perturb_feature,
    write_per_user,
)
from gazemind.eval.ablation import ablation_grid, run_ablations, write_ablation_csv
from gazemind.gaze.table import FeatureTable
from gazemind.inference import mock_predict, parse_response
from gazemind.pipeline import PipelineConfig
from gazemind.rules import GuidanceRule, RuleEntry, render_rule_text


def _brute_force(pairs):
    """Metrics straight from (true, predicted) pairs; predicted -1 is an error record."""
    n = len(pairs)
    acc = sum(1 for t, p in pairs if t == p) / n
    ps, rs, fs = [], [], []
    for c in range(3):
        tp = sum(1 for t, p in pairs if t == c and p == c)
        pred_c = sum(1 for _, p in pairs if p == c)
        true_c = sum(1 for t, _ in pairs if t == c)
        prec = tp / pred_c if pred_c else 0.0
        rec = tp / true_c if true_c else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        ps.append(prec)
        rs.append(rec)
        fs.append(f1)
    return acc, sum(ps) / 3, sum(rs) / 3, sum(fs) / 3


def _pairs(counts, errors):
    pairs = [(t, p) for t in range(3) for p in range(3) for _ in range(int(counts[t, p]))]
    return pairs + [(t, -1) for t in range(3) for _ in range(int(errors[t]))]


def test_confusion_hand_tally():
    truth = ["Low", "Low", "Moderate", "High", "High", "High"]
    pred = ["Low", "Moderate", "Moderate", "High", "Low", "ERROR"]
    cm = confusion(pred, truth)
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 1]]
    assert cm.errors.tolist() == [0, 0, 1]
    r = metrics(cm)
    assert r.accuracy == 3 / 6 and r.n == 6 and r.n_errors == 1
    assert r.per_class["High"]["recall"] == 1 / 3
    assert r.per_class["Low"]["precision"] == 1 / 2


def test_confusion_errors():
    with pytest.raises(ValueError, match="predictions"):
        confusion(["Low"], ["Low", "High"])
    with pytest.raises(ValueError, match="true label"):
        confusion(["Low"], ["Unknown"])
    with pytest.raises(ValueError):
        metrics(ConfusionMatrix(np.zeros((3, 3), dtype=int), np.zeros(3, dtype=int)))


def test_metrics_match_brute_force_exactly():
    rng = np.random.default_rng(0)
    for i in range(100):
        counts = rng.integers(0, 20, (3, 3))
        if i % 10 == 0:
            counts[:, i % 3] = 0  # an empty predicted column exercises 0/0
        errors = rng.integers(0, 3, 3) if i % 2 else np.zeros(3, dtype=int)
        if counts.sum() + errors.sum() == 0:
            counts[0, 0] = 1
        r = metrics(ConfusionMatrix(counts, errors))
        assert (r.accuracy, r.precision, r.recall, r.f1) == _brute_force(_pairs(counts, errors))


def test_metrics_agree_with_sklearn_without_errors():
    rng = np.random.default_rng(1)
    for _ in range(20):
        y = rng.integers(0, 3, 200)
        p = np.where(rng.random(200) < 0.6, y, rng.integers(0, 3, 200))
        r = metrics(confusion(p, y))
        P, R, F, _ = precision_recall_fscore_support(y, p, labels=[0, 1, 2], average="macro", zero_division=0)
        assert r.accuracy == pytest.approx(accuracy_score(y, p), abs=1e-12)
        assert (r.precision, r.recall, r.f1) == pytest.approx((P, R, F), abs=1e-12)


def test_format_report_is_stable():
    cm = confusion(["Low", "High"], ["Low", "Moderate"])
    text = format_report(metrics(cm), cm, title="evaluation")
    assert text == format_report(metrics(cm), cm, title="evaluation")
    assert text.startswith("evaluation\nn = 2 (unparseable: 0)\naccuracy  = 0.5000\n")
    assert "| true \\ pred | Low | Moderate | High | error |" in text


def test_per_user_accuracy_and_cdf(tmp_path):
    preds = {("a", "reading"): ["Low"] * 5, ("b", "reading"): ["High"] * 5}
    labels = {("a", "reading"): ["Low", "Low", "High", "High", "High"],
              ("b", "reading"): ["High", "High", "High", "High", "Low"]}
    acc = per_user_accuracy(preds, labels)
    assert acc == {"a": 0.4, "b": 0.8}
    assert accuracy_cdf(acc) == [(0.4, 0.5), (0.8, 1.0)]
    assert accuracy_cdf({"a": 0.5, "b": 0.5, "c": 1.0}) == [(0.5, 2 / 3), (1.0, 1.0)]
    write_per_user(tmp_path / "u.csv", tmp_path / "cdf.csv", acc)
    assert (tmp_path / "u.csv").read_text() == "user,accuracy\na,0.400000\nb,0.800000\n"
    assert (tmp_path / "cdf.csv").read_text() == "accuracy,cum_fraction\n0.400000,0.500000\n0.800000,1.000000\n"
    with pytest.raises(ValueError, match="predictions for"):
        per_user_accuracy({("a", "reading"): ["Low"]}, labels)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 7), elements=st.floats(-5, 5, allow_nan=False)), st.sampled_from(FEATURES))
def test_perturb_is_an_involution(cells, feature):
    t = FeatureTable(cells, 4)
    once = perturb_feature(t, feature)
    k = FEATURES.index(feature)
    np.testing.assert_array_equal(once.cells[:, k], -cells[:, k])
    np.testing.assert_array_equal(np.delete(once.cells, k, axis=1), np.delete(cells, k, axis=1))
    np.testing.assert_array_equal(perturb_feature(once, feature).cells, cells)
    assert once.end_second == 4


def test_explanation_scoring_words():
    assert names_feature("fix_dur elevated (+1.00)", "fix_dur")
    assert not names_feature("fix_duration rose", "fix_dur")
    assert direction_consistent("avg_pupil_size elevated", "avg_pupil_size", 1.0)
    assert not direction_consistent("avg_pupil_size elevated", "avg_pupil_size", -1.0)
    assert direction_consistent("blink_count lower than usual", "blink_count", -0.3)
    assert not direction_consistent("blink_count lower", "blink_count", 0.0)


def _cf_rule():
    entries = (RuleEntry("avg_pupil_size", 1, "+", (-0.4, 0.4)), RuleEntry("fix_dur", 2, "+", (-0.3, 0.6)),
               RuleEntry("blink_count", 3, "-", (-0.5, 0.2)))
    return GuidanceRule("reading", entries, render_rule_text("reading", entries))


def _cf_samples(n, seed):
    rng = np.random.default_rng(seed)
    samples, refs = [], {}
    for i in range(n):
        t = FeatureTable(rng.normal(0, 1, (5, 7)), i)
        samples.append(t)
        refs[i] = [SimpleNamespace(table=FeatureTable(rng.normal(0, 1, (5, 7)), -1), label=LEVELS[rng.integers(3)])
                   for _ in range(3)]
    return samples, refs


def test_counterfactual_flips_match_oracle():
    rule = _cf_rule()
    samples, refs = _cf_samples(200, 5)

    def predict(table):
        return parse_response(mock_predict(rule, None, refs[table.end_second], table))

    features = ["avg_pupil_size", "fix_dur", "sac_amp"]
    rep = counterfactual_run(samples, features, predict, "reading")
    for feature in features:
        oracle = np.array([arbitration_oracle(rule, refs[t.end_second], t.cells)
                           != arbitration_oracle(rule, refs[t.end_second], perturb_feature(t, feature).cells)
                           for t in samples])
        np.testing.assert_array_equal(rep.flips[feature], oracle)
    by = {r.feature: r for r in rep.rows}
    assert by["sac_amp"].n_flipped == 0 and by["sac_amp"].flip_rate == 0.0
    assert by["avg_pupil_size"].n_flipped > 0
    assert [r.rank for r in rep.rows] == [1, 2, 3]
    # the mock names the deciding features with a direction word
    assert by["avg_pupil_size"].attribution_correct > 0


def test_counterfactual_csv(tmp_path):
    rule = _cf_rule()
    samples, refs = _cf_samples(20, 6)
    rep = counterfactual_run(samples, ["fix_dur"], lambda t: parse_response(mock_predict(rule, None, [], t)), "reading")
    rep.save_csv(tmp_path / "cf.csv")
    rows = list(csv.DictReader(open(tmp_path / "cf.csv")))
    assert rows[0]["feature"] == "fix_dur" and rows[0]["n"] == "20"


def test_ablation_grid_layout():
    assert [c for c, _ in ablation_grid([3, 5, 8, 10])] == ["T=3", "T=5", "T=8", "T=10"]
    cells = ablation_grid([5], modules=True)
    assert [c for c, _ in cells] == ["T=5", "full", "no_rules", "no_profiles", "no_retrieval", "features_only"]
    with pytest.raises(ValueError):
        ablation_grid()


def test_ablation_runs_are_deterministic_and_record_failures(small_dataset, tmp_path):
    cells = ablation_grid([3, 5, 8, 10]) + [("T=999", {"window": 999})]
    base = PipelineConfig()
    a = run_ablations(small_dataset, cells, base)
    b = run_ablations(small_dataset, cells, base)
    assert len(a) == 5
    assert [r.to_dict(timing=False) for r in a] == [r.to_dict(timing=False) for r in b]
    assert all(r.error == "" and r.accuracy is not None for r in a[:4])
    assert a[4].error and a[4].accuracy is None
    write_ablation_csv(tmp_path / "x.csv", a, timing=False)
    write_ablation_csv(tmp_path / "y.csv", b, timing=False)
    assert (tmp_path / "x.csv").read_bytes() == (tmp_path / "y.csv").read_bytes()
