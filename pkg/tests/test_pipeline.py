import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gazemind._constants import EVAL_TASKS, LEVELS
from gazemind.datakit.split import split_users
from gazemind.pipeline import (
    GazeMindPipeline,
    PipelineConfig,
    build_dataset,
    evaluate,
    fit,
    predict,
    run_experiment,
    with_label_noise,
)


def test_config_validation():
    with pytest.raises(ValueError, match="window"):
        PipelineConfig(window=0)
    with pytest.raises(ValueError, match="k"):
        PipelineConfig(k=-1)
    with pytest.raises(ValueError, match="stride"):
        PipelineConfig(db_stride=0)


def test_dataset_shape(small_cohort, small_dataset):
    assert small_dataset.users == sorted(u.user_id for u in small_cohort.users)
    for key, s in small_dataset.series.items():
        assert len(s) == len(small_dataset.labels[key])
        assert set(small_dataset.labels[key]) <= set(LEVELS)
    assert small_dataset.keys(users=["u01"], tasks=("reading",)) == [("u01", "reading")]


def test_build_dataset_needs_labels(small_cohort):
    with pytest.raises(KeyError, match="no labels"):
        build_dataset(small_cohort.recordings[:1], {})


def test_build_dataset_truncates_with_warning(small_cohort):
    rec = small_cohort.recordings[0]
    labels = {(rec.user_id, rec.task_id): small_cohort.labels[(rec.user_id, rec.task_id)][:-3]}
    with pytest.warns(UserWarning, match="truncating"):
        ds = build_dataset([rec], labels)
    assert len(ds.series[(rec.user_id, rec.task_id)]) == len(labels[(rec.user_id, rec.task_id)])


def test_missing_ratio_only_touches_named_users(small_cohort, small_dataset):
    recs = [r for r in small_cohort.recordings if r.user_id in ("u01", "u02")]
    ds = build_dataset(recs, small_cohort.labels, missing_ratio=0.3, missing_users={"u02"})
    for key in ds.keys(users=["u01"]):
        np.testing.assert_array_equal(ds.series[key].values, small_dataset.series[key].values)
    assert any(not np.array_equal(ds.series[k].values, small_dataset.series[k].values)
               for k in ds.keys(users=["u02"]))
    again = build_dataset(recs, small_cohort.labels, missing_ratio=0.3, missing_users={"u02"})
    for key in ds.series:
        np.testing.assert_array_equal(ds.series[key].values, again.series[key].values)


def test_label_noise_flips_exact_counts_and_keeps_features(small_dataset):
    assert with_label_noise(small_dataset, 0.0).labels == small_dataset.labels
    noisy = with_label_noise(small_dataset, 0.1, seed=4)
    for key, labs in small_dataset.labels.items():
        changed = sum(a != b for a, b in zip(labs, noisy.labels[key]))
        assert changed == round(0.1 * len(labs))
        assert noisy.series[key] is small_dataset.series[key]
    more = with_label_noise(small_dataset, 0.2, seed=4)
    for key, labs in small_dataset.labels.items():
        low = {i for i, (a, b) in enumerate(zip(labs, noisy.labels[key])) if a != b}
        high = {i for i, (a, b) in enumerate(zip(labs, more.labels[key])) if a != b}
        assert low <= high


def test_fit_keeps_test_users_out(small_dataset):
    split = split_users(small_dataset.users, 0.7, 3)
    fm = fit(small_dataset, split.train, split=split)
    assert set(fm.db.users) <= set(split.train)
    assert set(fm.train_profiles) == set(split.train)
    assert set(fm.rules) == set(EVAL_TASKS)
    assert fm.db.window == PipelineConfig().window


def test_predict_covers_every_eval_second(small_dataset):
    split = split_users(small_dataset.users, 0.7, 3)
    fm = fit(small_dataset, split.train)
    preds = predict(fm, small_dataset, split.test)
    assert sorted(preds) == small_dataset.keys(users=split.test, tasks=EVAL_TASKS)
    T = fm.config.window
    for key, res in preds.items():
        n = len(small_dataset.series[key])
        assert len(res.labels) == n
        assert res.n_calls == n // T
    cm, rep = evaluate(preds, small_dataset)
    assert rep.n == sum(len(r.labels) for r in preds.values())


def test_run_experiment_is_deterministic(small_dataset):
    a = run_experiment(small_dataset, PipelineConfig(seed=5))
    b = run_experiment(small_dataset, PipelineConfig(seed=5))
    assert a.summary() == b.summary() and a.digest() == b.digest()
    assert a.split == b.split and a.n_calls == b.n_calls
    assert a.report.accuracy >= 0.9


def test_parallel_jobs_match_serial(small_dataset):
    a = run_experiment(small_dataset, PipelineConfig(seed=5))
    b = run_experiment(small_dataset, PipelineConfig(seed=5, jobs=4))
    assert a.summary() == b.summary()


def test_ablated_modules_still_run(small_dataset):
    full = run_experiment(small_dataset)
    bare = run_experiment(small_dataset, PipelineConfig(use_rules=False, use_profiles=False, use_retrieval=False))
    assert bare.report.n == full.report.n
    assert full.report.accuracy >= bare.report.accuracy


def test_estimator_facade(small_dataset):
    split = split_users(small_dataset.users, 0.7, 3)
    est = GazeMindPipeline(window=5, k=3)
    with pytest.raises(NotFittedError):
        est.predict(small_dataset, split.test)
    assert clone(est).get_params() == est.get_params()
    est.fit(small_dataset, split.train)
    labels = est.predict(small_dataset, split.test)
    assert all(set(v) <= set(LEVELS) for v in labels.values())
    direct = predict(fit(small_dataset, split.train, PipelineConfig(window=5, k=3)), small_dataset, split.test)
    assert labels == {k: r.labels for k, r in direct.items()}
    assert est.score(small_dataset, split.test) == evaluate(direct, small_dataset)[1].accuracy
