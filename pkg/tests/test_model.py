import numpy as np
import pytest

from blindspot.aggregation import AggregatedDataset
from blindspot.envs import make_env_pair
from blindspot.evaluation import weighted_f1
from blindspot.forest import ForestClassifier
from blindspot.model import (DegenerateDataWarning, SchemaError, SearchSpace, TrainingSet,
                             calibrate_threshold, f1_score, hyperparameter_search,
                             load_model, oversample, predict, save_model, stratified_folds,
                             train_model)
from blindspot.oracle import ground_truth_blind_spots, make_oracle
from blindspot.tabular import greedy_policy, value_iteration


class FixedProba:
    def __init__(self, p):
        self.p = np.asarray(p, float)

    def predict_proba(self, X):
        return self.p


def ts(n0, n1, d=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n0 + n1, d))
    y = np.r_[np.zeros(n0), np.ones(n1)]
    return TrainingSet(X, y, rng.uniform(0.5, 1, n0 + n1))


def test_oversample_balances_from_minority_only():
    t = ts(90, 10)
    o = oversample(t, seed=1)
    assert (o.y == 0).sum() == 90 and (o.y == 1).sum() == 90
    extra = o.origin[len(t):]
    assert np.all(t.y[extra] == 1)
    assert np.array_equal(o.w, t.w[o.origin]) and np.array_equal(o.X, t.X[o.origin])


def test_oversample_balanced_unchanged_and_degenerate_warns():
    t = ts(50, 50)
    assert len(oversample(t)) == 100
    with pytest.warns(DegenerateDataWarning):
        assert len(oversample(ts(10, 0))) == 10


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        TrainingSet(np.zeros((2, 1)), [0, 1], [1.0, 0.0])


def test_calibrate_examples():
    calib = TrainingSet(np.zeros((4, 1)), [0, 0, 0, 1], np.ones(4))
    f = FixedProba([0.9, 0.8, 0.1, 0.05])
    t = calibrate_threshold(f, calib, 0.5)
    assert 0.1 < t <= 0.8
    assert np.mean(f.p >= t) == 0.5
    t0 = calibrate_threshold(f, calib, 0.0)
    assert np.mean(f.p >= t0) == 0.0
    # every candidate up to the lowest probability flags everything; the
    # larger-t tie rule lands on that lowest probability
    t1 = calibrate_threshold(f, calib, 1.0)
    assert np.mean(f.p >= t1) == 1.0 and t1 == 0.05


def test_calibrate_prefers_larger_threshold_on_ties():
    calib = TrainingSet(np.zeros((4, 1)), [0, 0, 0, 1], np.ones(4))
    f = FixedProba([0.9, 0.7, 0.5, 0.3])
    # fractions 0.25 and 0.5 are equally far from 0.375; the larger t wins
    assert calibrate_threshold(f, calib, 0.375) == 0.9


def test_f1_conventions():
    assert f1_score([0, 0], [0, 0]) == 0.0
    assert f1_score([1, 0], [1, 1], [2, 1]) == pytest.approx(0.8)


def test_stratified_folds_partition():
    y = np.r_[np.zeros(20), np.ones(7)]
    folds = stratified_folds(y, 3, np.random.default_rng(0))
    va = np.concatenate([v for _, v in folds])
    assert sorted(va.tolist()) == list(range(27))
    for tr, v in folds:
        assert not set(tr) & set(v)
        assert 2 <= y[v].sum() <= 3


def test_search_single_trial_and_determinism():
    t = ts(60, 30, seed=3)
    space = SearchSpace()
    best, trials = hyperparameter_search(t, space, n_trials=1, seed=4)
    assert len(trials) == 1 and trials[0][0] == best
    again, _ = hyperparameter_search(t, space, n_trials=1, seed=4)
    assert again == best
    with pytest.raises(ValueError):
        hyperparameter_search(t, space, n_trials=0)


def test_search_picks_depth_for_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 12, dtype=float)
    y = np.array([0, 1, 1, 0] * 12)
    t = TrainingSet(X, y, np.ones(len(y)))
    space = SearchSpace(n_trees=(25,), max_depth=(1, 2), min_samples_leaf=(1,), max_features=(2,))
    best, trials = hyperparameter_search(t, space, n_trials=6, seed=0)
    assert {hp["max_depth"] for hp, _ in trials} == {1, 2}
    assert best["max_depth"] == 2


def test_train_model_calibration_and_leakage_guard():
    t = ts(140, 60, seed=5)
    t.X[:, 0] += 2 * t.y
    m = train_model(t, seed=1, n_trials=3)
    r = m.report
    calib = r["calib_origin"]
    assert len(calib) == len(set(calib)) == r["n_calib"] == 60
    assert int(t.y[calib].sum()) == 18
    assert abs(r["calib_predicted_fraction"] - r["train_prior"]) * r["n_calib"] <= 1.0
    assert r["train_prior"] == pytest.approx(42 / 140)


def test_degenerate_input_gives_constant_model():
    t = ts(20, 0)
    with pytest.warns(DegenerateDataWarning):
        m = train_model(t)
    assert m.degenerate and m.threshold == 0.5
    assert np.all(m.classify(t.X) == 0)


def test_predict_threshold_monotone_and_schema(tmp_path):
    t = ts(80, 40, d=3, seed=7)
    t.feature_names = ("a", "b", "c")
    m = train_model(t, seed=2, n_trials=2)
    p, l = predict(m, t.X[0])
    assert 0.0 <= p <= 1.0 and l == int(p >= m.threshold)
    counts = []
    for thr in np.linspace(0, 1, 11):
        m.threshold = thr
        counts.append(int(m.classify(t.X).sum()))
    assert counts == sorted(counts, reverse=True)
    with pytest.raises(SchemaError):
        m.proba(np.zeros((1, 2)))


def test_model_files_byte_identical(tmp_path):
    t = ts(80, 40, seed=8)
    paths = []
    for i in range(2):
        p = tmp_path / f"m{i}.json"
        save_model(train_model(t, seed=9, n_trials=3), p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    m = load_model(paths[0])
    assert np.array_equal(m.proba(t.X), train_model(t, seed=9, n_trials=3).proba(t.X))


def test_load_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other", "version": 1}')
    with pytest.raises(SchemaError):
        load_model(p)


def test_separable_toy_labels_at_half():
    X = np.array([[i, j] for i in range(8) for j in range(8)], dtype=float)
    y = (X[:, 0] >= 4).astype(int)
    f = ForestClassifier(n_trees=25, seed=0).fit(X, y)
    assert np.array_equal(f.predict(X, 0.5), y)


def test_noise_free_catcher_seen_f1():
    pair = make_env_pair("catcher")
    pi = greedy_policy(value_iteration(pair.source, "sim"))
    orc = make_oracle(value_iteration(pair.target, "real"))
    truth = ground_truth_blind_spots(pair, pi, orc.acceptable)
    sims = truth.sim_states
    agg = AggregatedDataset(sims, truth.labels(), np.ones(len(sims)), "truth")
    m = train_model(TrainingSet.from_aggregated(agg, pair.target.sim_fields), seed=0)
    w = {s: 1.0 for s in sims}
    assert weighted_f1(m, sims, truth, w) >= 0.95
