import warnings

import numpy as np
import pytest
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, silhouette_score

from conftest import make_recording
from gazemind.gaze.features import FeatureSeries, featurize
from gazemind.pipeline import fit_profile_model
from gazemind.profiles import (
    InsufficientDataError,
    TraitVector,
    UserProfile,
    UserProfiler,
    assign_profile,
    compute_user_traits,
    fit_profiles,
    kmeans,
    load_profile_model,
    name_clusters,
    personal_baselines,
    save_profile_model,
    silhouette,
)


def _blobs(seed, centers, n=20, scale=0.1):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(c, scale, (n, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n)
    return X, y


def _trait_recording(seconds=31):
    n = seconds * 90
    i = np.arange(n)
    valid = np.ones(n, dtype=bool)
    for s in range(seconds):
        valid[s * 90 + 40: s * 90 + 50] = False  # one 111 ms blink per second
    yaw = np.where(i % 2 == 0, 3.0, -3.0)
    pitch = np.where(i % 2 == 0, 4.0, -4.0)
    pupil = np.where(i % 2 == 0, 2.0, 4.0)
    return make_recording(yaw, pitch, pupil, valid)


def test_traits_worked_example():
    rec = _trait_recording()
    t = compute_user_traits(featurize(rec), [rec])
    assert t.blink_intensity == pytest.approx(1.0)
    assert t.pupil_baseline == pytest.approx(3.0, abs=1e-12)
    assert t.pupil_sensitivity == pytest.approx(1.0, abs=1e-12)
    assert t.gaze_instability == pytest.approx(5.0, abs=1e-12)


def test_traits_from_series_summary_match_recordings():
    rec = _trait_recording()
    s = featurize(rec)
    assert compute_user_traits(s) == compute_user_traits(s, [rec])


def test_traits_insufficient_data():
    rec = _trait_recording(seconds=29)
    with pytest.raises(InsufficientDataError, match="30 seconds"):
        compute_user_traits(featurize(rec))


def test_trait_vector_array_round_trip():
    t = TraitVector(1.0, 2.0, 3.0, 4.0)
    assert TraitVector.from_array(t.as_array()) == t


def test_kmeans_inertia_non_increasing():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 4))
    for k in (2, 3, 5):
        res = kmeans(X, k, seed=k)
        hist = np.array(res.inertia_history)
        assert np.all(np.diff(hist) <= 1e-9 * hist[0])
        assert res.inertia == pytest.approx(hist[-1])


def test_kmeans_matches_sklearn_partition():
    X, y = _blobs(1, [(0, 0, 0, 0), (5, 0, 0, 0), (0, 5, 0, 0)])
    ours = kmeans(X, 3, seed=3).labels
    ref = KMeans(3, n_init=10, random_state=0).fit_predict(X)
    assert adjusted_rand_score(ours, ref) == 1.0
    assert adjusted_rand_score(ours, y) == 1.0


def test_kmeans_deterministic_and_rejects_bad_k():
    X = np.random.default_rng(2).normal(size=(30, 2))
    a, b = kmeans(X, 4, seed=9), kmeans(X, 4, seed=9)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.centroids, b.centroids)
    with pytest.raises(ValueError):
        kmeans(X, 0)
    with pytest.raises(ValueError):
        kmeans(X, 31)


def test_silhouette_matches_sklearn():
    rng = np.random.default_rng(4)
    for _ in range(10):
        X = rng.normal(size=(40, 3))
        labels = rng.integers(0, 3, 40)
        assert silhouette(X, labels) == pytest.approx(silhouette_score(X, labels), abs=1e-12)


def test_silhouette_singleton_and_single_cluster():
    X = np.array([[0.0], [0.1], [5.0]])
    assert silhouette(X, [0, 0, 1]) == pytest.approx(silhouette_score(X, [0, 0, 1]), abs=1e-12)
    with pytest.raises(ValueError):
        silhouette(X, [0, 0, 0])


def test_fit_profiles_picks_k_from_silhouette():
    X, _ = _blobs(5, [(0, 0, 0, 0), (4, 4, 0, 0)], n=10)
    model = fit_profiles(X, k_range=range(2, 7), seed=1)
    assert model.k == 2
    assert model.silhouettes[2] == max(model.silhouettes.values())
    assert set(model.silhouettes) == {2, 3, 4, 5, 6}


def test_fit_profiles_k_range_singleton():
    X, y = _blobs(6, [(0, 0, 0, 0), (4, 4, 0, 0)], n=10)
    model = fit_profiles(X, k_range={2}, seed=1)
    assert model.k == 2 and model.names == ("Cluster-0", "Cluster-1")
    assert adjusted_rand_score(model.assign_index(X), y) == 1.0


def test_fit_profiles_insufficient_users():
    with pytest.raises(InsufficientDataError):
        fit_profiles(np.zeros((4, 4)) + np.arange(4)[:, None], k_range=range(2, 7))


def test_zero_spread_trait_warns_and_is_ignored():
    X, _ = _blobs(7, [(0, 0, 5, 0), (4, 4, 5, 0)], n=10)
    X[:, 2] = 5.0
    with pytest.warns(UserWarning, match="pupil_baseline"):
        model = fit_profiles(X, k_range={2}, seed=0)
    assert not model.active[2]
    assert np.all(model.centroids[:, 2] == 0.0)


def test_name_clusters_heuristic():
    centroids = np.array([[0.5, 1, 400, 1], [2.0, 1, 200, 1], [0.5, 1, 300, 1]])
    assert name_clusters(centroids) == ["High-Reactor", "Restless", "Low-Reactor"]


def test_assignment_nearest_centroid_and_tie_lowest_index():
    model = fit_profiles(_blobs(8, [(0, 0, 0, 0), (4, 4, 0, 0)], n=10)[0], k_range={2}, seed=0)
    tie = model.destandardize(model.centroids.mean(axis=0))
    assert model.assign_index(tie)[0] == 0
    near = model.destandardize(model.centroids[1])
    assert assign_profile(model, near) == model.names[1]


def test_restless_user_assignment():
    centers = [(1.0, 100.0, 380.0, 8.0), (0.85, 55.0, 300.0, 7.0), (2.0, 70.0, 200.0, 11.5)]
    rng = np.random.default_rng(9)
    X = np.concatenate([rng.normal(c, np.abs(c) * 0.02, (8, 4)) for c in centers])
    model = fit_profiles(X, k_range={3}, seed=0)
    assert assign_profile(model, TraitVector(2.2, 70.0, 200.0, 12.0)) == "Restless"
    assert assign_profile(model, TraitVector(1.0, 100.0, 390.0, 8.0)) == "High-Reactor"


def test_cohort_profiles_recover_archetypes(small_cohort, small_dataset):
    model, profiles = fit_profile_model(small_dataset, small_dataset.users, k_range=(2, 3, 4, 5, 6), seed=0)
    truth = small_cohort.archetypes
    users = sorted(truth)
    assert model.k == 3
    assert adjusted_rand_score([truth[u] for u in users], [profiles[u].name for u in users]) == 1.0
    assert all(profiles[u].name == truth[u] for u in users)


def test_personal_baselines_examples():
    X = np.zeros((4, 7))
    X[:, 5] = [0, 1, 2, 1]
    X[:, 6] = [300, 310, 320, 330]
    assert personal_baselines(X) == {"pupil_mean": 315.0, "blink_mean": 1.0}
    with pytest.warns(UserWarning, match="single load level"):
        personal_baselines(X, labels=["Low"] * 4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        personal_baselines(X, labels=["Low", "High", "Low", "High"])


def test_personal_baselines_errors():
    with pytest.raises(InsufficientDataError):
        personal_baselines(np.zeros((0, 7)))
    s = FeatureSeries("u1", "gaming", np.zeros((5, 7)), np.zeros(5))
    with pytest.raises(ValueError, match="calibration"):
        personal_baselines([s])
    assert personal_baselines([s], require_task=None)["pupil_mean"] == 0.0


def test_profile_model_save_load(tmp_path):
    X, _ = _blobs(10, [(0, 0, 0, 0), (4, 4, 0, 0), (0, 4, 4, 0)], n=8)
    model = fit_profiles(X, k_range=(2, 3), seed=2)
    save_profile_model(tmp_path / "p.jsonl", model, {"u2": model.names[0], "u1": model.names[1]})
    back, users = load_profile_model(tmp_path / "p.jsonl")
    assert users == {"u1": model.names[1], "u2": model.names[0]}
    assert back.k == model.k and back.names == model.names
    assert np.array_equal(back.centroids, model.centroids)
    assert np.array_equal(back.assign_index(X), model.assign_index(X))
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(ValueError):
        load_profile_model(tmp_path / "empty.jsonl")


def test_user_profile_round_trip():
    p = UserProfile("u1", "Restless", TraitVector(2.0, 70.0, 200.0, 11.0), {"pupil_mean": 200.0, "blink_mean": 2.0})
    assert UserProfile.from_dict(p.to_dict()) == p


def test_user_profiler_estimator():
    X, y = _blobs(11, [(0, 0, 0, 0), (4, 4, 0, 0)], n=10)
    est = UserProfiler(k_range=(2, 3), seed=0).fit(X)
    assert est.n_clusters_ == 2
    assert adjusted_rand_score(est.labels_, y) == 1.0
    assert est.predict(X[:1])[0] == est.model_.names[est.labels_[0]]
