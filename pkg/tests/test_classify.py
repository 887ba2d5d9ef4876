import itertools

import numpy as np
import pytest

from gmwscat import ConfigError, DataError
from gmwscat.classify import (
    AccuracyReport,
    cross_validate,
    glmnet_train,
    lasso_cd_quadratic,
    majority_vote,
    make_folds,
    soft_threshold,
    svm_train,
)


def two_blobs(rng, n_per=40, margin=2.0):
    a = rng.standard_normal((n_per, 2)) * 0.3 + [margin, 0.0]
    b = rng.standard_normal((n_per, 2)) * 0.3 + [-margin, 0.0]
    X = np.vstack([a, b])
    y = np.array(["pos"] * n_per + ["neg"] * n_per)
    return X, y


class TestSvm:
    def test_separable_blobs_perfect_training_accuracy(self):
        rng = np.random.default_rng(0)
        X, y = two_blobs(rng)
        model = svm_train(X, y, C=1.0, seed=0)
        assert np.mean(model.predict(X) == y) == 1.0

    def test_xor_bounded_by_brute_force_optimum(self):
        # oracle: enumerate sign patterns of linear separators on the 4 XOR
        # points; the best any linear rule achieves is 3/4
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array(["a", "b", "b", "a"])
        best = 0.0
        for w1, w2, b in itertools.product((-1, 0, 1), repeat=3):
            for lab in ("a", "b"):
                dec = X @ [w1, w2] + b
                pred = np.where(dec > 0, lab, "b" if lab == "a" else "a")
                best = max(best, np.mean(pred == y))
        assert best == 0.75
        model = svm_train(np.tile(X, (5, 1)), np.tile(y, 5), C=10.0, seed=1)
        acc = np.mean(model.predict(X) == y)
        assert 0.5 <= acc <= best

    def test_duplicating_points_keeps_decision_function(self):
        rng = np.random.default_rng(2)
        X, y = two_blobs(rng, n_per=25)
        m1 = svm_train(X, y, C=1.0, tol=1e-8, seed=3)
        m2 = svm_train(np.vstack([X, X]), np.concatenate([y, y]), C=1.0,
                       tol=1e-8, seed=3)
        grid = rng.standard_normal((50, 2)) * 3
        d1 = m1.decision_scores(grid)
        d2 = m2.decision_scores(grid)
        np.testing.assert_allclose(d1, d2, atol=1e-4 * np.max(np.abs(d1)))
        assert np.array_equal(m1.predict(grid), m2.predict(grid))

    def test_feature_and_c_rescaling_invariance(self):
        rng = np.random.default_rng(4)
        X, y = two_blobs(rng, n_per=30, margin=1.0)
        X += rng.standard_normal(X.shape) * 0.5
        scale = 7.5
        m1 = svm_train(X, y, C=2.0, tol=1e-8, seed=5)
        m2 = svm_train(X * scale, y, C=2.0 / scale ** 2, tol=1e-8, seed=5)
        grid = rng.standard_normal((80, 2))
        assert np.array_equal(m1.predict(grid), m2.predict(grid * scale))

    def test_multiclass_one_vs_one(self):
        rng = np.random.default_rng(6)
        centers = np.array([[3, 0], [-3, 0], [0, 3]])
        X = np.vstack([rng.standard_normal((30, 2)) * 0.4 + c for c in centers])
        y = np.repeat(["a", "b", "c"], 30)
        model = svm_train(X, y, seed=7)
        assert len(model.pairs) == 3
        assert np.mean(model.predict(X) == y) == 1.0
        scores = model.decision_scores(X)
        assert scores.shape == (90, 3)

    def test_single_class_rejected(self):
        with pytest.raises(ConfigError):
            svm_train(np.zeros((4, 2)), np.array(["a"] * 4))

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        X, y = two_blobs(rng)
        w1 = svm_train(X, y, seed=9).weights
        w2 = svm_train(X, y, seed=9).weights
        np.testing.assert_array_equal(w1, w2)


class TestSoftThreshold:
    def test_values(self):
        assert soft_threshold(3.0, 1.0) == 2.0
        assert soft_threshold(-3.0, 1.0) == -2.0
        assert soft_threshold(0.5, 1.0) == 0.0


class TestLassoCd:
    def test_orthonormal_design_matches_closed_form(self):
        # oracle: with orthonormal columns the lasso solution decouples into
        # per-coordinate soft-thresholding of x_j.z under the same objective
        # (1/(2n))||z - X theta||^2 + lam*|theta|_1
        rng = np.random.default_rng(10)
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        z = rng.standard_normal(5) * 2
        n = 5
        for lam in (0.01, 0.1, 0.5):
            theta = lasso_cd_quadratic(Q, z, lam)
            expected = np.array([soft_threshold(Q[:, j] @ z, n * lam)
                                 for j in range(5)])
            np.testing.assert_allclose(theta, expected, atol=1e-8)

    def test_zero_at_huge_lambda(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((20, 6))
        theta = lasso_cd_quadratic(X, rng.standard_normal(20), 1e6)
        assert np.all(theta == 0)


class TestGlmnet:
    def test_all_coefficients_zero_at_lambda_max(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((60, 8))
        y = np.array(["a", "b"] * 30)
        model = glmnet_train(X, y, lambda_path=np.array([10.0, 5.0]), seed=0)
        # path stops far above any informative lambda: nothing enters
        assert np.all(model.coef == 0)

    def test_separable_two_class_perfect_at_small_lambda(self):
        rng = np.random.default_rng(13)
        X, y = two_blobs(rng, n_per=30)
        model = glmnet_train(X, y, n_lambda=40, seed=1)
        assert np.mean(model.predict(X) == y) == 1.0

    def test_kkt_residual_within_tolerance(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((80, 10))
        w = np.zeros(10)
        w[:3] = [1.5, -2.0, 1.0]
        logits = X @ w
        y = np.where(logits + 0.3 * rng.standard_normal(80) > 0, "hi", "lo")
        model = glmnet_train(X, y, n_lambda=30, seed=2, tol=1e-5)
        assert model.kkt_residual(X, y) <= 1e-5 * (1 + 1e-6)

    def test_loss_path_and_selection(self):
        rng = np.random.default_rng(15)
        X, y = two_blobs(rng, n_per=25)
        model = glmnet_train(X, y, n_lambda=25, seed=3)
        assert model.loss_path.shape == (25,)
        assert model.lambda_ in model.lambda_path
        idx = int(np.flatnonzero(model.lambda_path == model.lambda_)[0])
        assert model.loss_path[idx] == np.nanmin(model.loss_path)

    def test_theta_matrix_shape(self):
        rng = np.random.default_rng(16)
        X = rng.standard_normal((45, 7))
        y = np.array(["a", "b", "c"] * 15)
        model = glmnet_train(X, y, n_lambda=15, seed=4)
        assert model.theta.shape == (3, 8)
        np.testing.assert_array_equal(model.theta[:, 0], model.intercept)

    def test_nonfinite_rejected(self):
        X = np.zeros((10, 2))
        X[0, 0] = np.nan
        with pytest.raises(Exception):
            glmnet_train(X, np.array(["a", "b"] * 5))


class TestMajorityVote:
    def test_strict_majority(self):
        labels = ["jazz"] * 8 + ["pop"] * 7
        assert majority_vote(labels) == "jazz"

    def test_unanimous(self):
        assert majority_vote(["metal"] * 15) == "metal"

    def test_near_tie_uses_summed_scores(self):
        labels = ["a"] * 7 + ["b"] * 7 + ["c"]
        classes = ["a", "b", "c"]
        scores = np.zeros((15, 3))
        scores[:, 0] = 0.1
        scores[:, 1] = 0.3  # b has the larger summed margin
        assert majority_vote(labels, scores, classes) == "b"
        scores[:, 0] = 0.9
        assert majority_vote(labels, scores, classes) == "a"

    def test_tie_without_scores_is_lexicographic(self):
        labels = ["b"] * 7 + ["a"] * 7 + ["c"]
        assert majority_vote(labels) == "a"

    def test_wrong_count_rejected(self):
        with pytest.raises(DataError):
            majority_vote(["a"] * 14)


class TestMakeFolds:
    def test_thousand_track_sizes(self):
        labels = np.repeat([f"g{i}" for i in range(10)], 100)
        rng = np.random.default_rng(17)
        folds = make_folds(labels, rng)
        assert sorted(len(f) for f in folds) == [330, 330, 340]
        assert len(folds[0]) == 340
        union = np.sort(np.concatenate(folds))
        np.testing.assert_array_equal(union, np.arange(1000))
        for f in folds:
            counts = np.unique(labels[f], return_counts=True)[1]
            assert set(counts) <= {33, 34}

    def test_per_genre_counts_34_33_33(self):
        labels = np.repeat([f"g{i}" for i in range(10)], 100)
        folds = make_folds(labels, np.random.default_rng(18))
        for g in np.unique(labels):
            per_fold = sorted(int(np.sum(labels[f] == g)) for f in folds)
            assert per_fold == [33, 33, 34]

    def test_too_few_tracks_rejected(self):
        with pytest.raises(DataError):
            make_folds(np.array(["a", "a", "b", "b", "b"]), np.random.default_rng(0))

    def test_seeded_reproducibility(self):
        labels = np.repeat(["x", "y", "z"], 9)
        f1 = make_folds(labels, np.random.default_rng(19))
        f2 = make_folds(labels, np.random.default_rng(19))
        for a, b in zip(f1, f2):
            np.testing.assert_array_equal(a, b)


class _OracleClassifier:
    """Reads the label encoded in feature 0: a stand-in for a perfect model."""

    def __init__(self, seed=0):
        self.classes = None

    def fit(self, X, y):
        self.classes = np.unique(y)
        return self

    def predict(self, X):
        return self.classes[np.asarray(X[:, 0], dtype=int)]

    def decision_scores(self, X):
        scores = np.zeros((X.shape[0], self.classes.size))
        scores[np.arange(X.shape[0]), np.asarray(X[:, 0], dtype=int)] = 1.0
        return scores


class _RandomClassifier:
    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)
        self.classes = None

    def fit(self, X, y):
        self.classes = np.unique(y)
        return self

    def predict(self, X):
        return self.rng.choice(self.classes, size=X.shape[0])

    def decision_scores(self, X):
        return self.rng.random((X.shape[0], self.classes.size))


def synthetic_feature_table(num_genres=10, tracks_per_genre=100, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    n_tracks = num_genres * tracks_per_genre
    track_labels = np.repeat([f"g{i}" for i in range(num_genres)], tracks_per_genre)
    segment_tracks = np.repeat(np.arange(n_tracks), 15)
    X = rng.standard_normal((n_tracks * 15, dim))
    label_codes = np.array([int(l[1:]) for l in track_labels])
    X[:, 0] = label_codes[segment_tracks]
    return X, segment_tracks, track_labels


class TestCrossValidate:
    def test_oracle_classifier_scores_100(self):
        X, seg, labels = synthetic_feature_table(num_genres=4, tracks_per_genre=12)
        report = cross_validate(X, seg, labels, _OracleClassifier, repeats=2,
                                seed=0, pca_k=None)
        assert report.mean_accuracy == 1.0
        assert report.fold_accuracies.shape == (2, 3)

    def test_random_classifier_near_chance(self):
        X, seg, labels = synthetic_feature_table(num_genres=10, tracks_per_genre=30,
                                                 seed=1)
        report = cross_validate(X, seg, labels, _RandomClassifier, repeats=10,
                                seed=1, pca_k=None)
        assert abs(report.mean_accuracy - 0.10) <= 0.03

    def test_reproducible_given_seed(self):
        X, seg, labels = synthetic_feature_table(num_genres=3, tracks_per_genre=9,
                                                 seed=2)
        r1 = cross_validate(X, seg, labels, _RandomClassifier, repeats=3, seed=5,
                            pca_k=None)
        r2 = cross_validate(X, seg, labels, _RandomClassifier, repeats=3, seed=5,
                            pca_k=None)
        np.testing.assert_array_equal(r1.fold_accuracies, r2.fold_accuracies)
        np.testing.assert_array_equal(r1.confusion, r2.confusion)

    def test_confusion_and_per_genre(self):
        X, seg, labels = synthetic_feature_table(num_genres=3, tracks_per_genre=9)
        report = cross_validate(X, seg, labels, _OracleClassifier, repeats=1,
                                seed=0, pca_k=None)
        assert np.trace(report.confusion) == 27
        assert report.confusion.sum() == 27
        assert all(v == 1.0 for v in report.per_genre_accuracy.values())

    def test_with_pca_pipeline(self):
        X, seg, labels = synthetic_feature_table(num_genres=2, tracks_per_genre=6,
                                                 dim=8, seed=3)
        X[:, 0] *= 10.0  # dominant variance, so PCA keeps the label direction
        from gmwscat.classify import svm_factory

        report = cross_validate(X, seg, labels, svm_factory(C=1.0), repeats=1,
                                seed=0, pca_k=4)
        assert report.mean_accuracy == 1.0  # feature 0 encodes the label

    def test_missing_segment_detected(self):
        X, seg, labels = synthetic_feature_table(num_genres=2, tracks_per_genre=6)
        with pytest.raises(DataError):
            cross_validate(X[:-1], seg[:-1], labels, _OracleClassifier,
                           repeats=1, seed=0, pca_k=None)

    def test_single_genre_rejected(self):
        X, seg, labels = synthetic_feature_table(num_genres=1, tracks_per_genre=6)
        with pytest.raises(DataError):
            cross_validate(X, seg, labels, _OracleClassifier, repeats=1, seed=0,
                           pca_k=None)


class TestAccuracyReportCsv:
    def test_csv_outputs(self, tmp_path):
        report = AccuracyReport(classes=["a", "b"],
                                fold_accuracies=np.array([[0.5, 0.6, 0.7]]),
                                confusion=np.array([[8, 2], [1, 9]]), seed=0)
        report.to_csv(tmp_path / "acc.csv")
        report.confusion_to_csv(tmp_path / "conf.csv")
        report.per_genre_to_csv(tmp_path / "genre.csv")
        acc = (tmp_path / "acc.csv").read_text().strip().splitlines()
        assert acc[0] == "repeat,fold,accuracy"
        assert acc[-1].startswith("mean,,0.6")
        conf = (tmp_path / "conf.csv").read_text().strip().splitlines()
        assert conf[1] == "a,8,2"
        genre = (tmp_path / "genre.csv").read_text().strip().splitlines()
        assert genre[1] == f"a,{8 / 10:.6f}"
