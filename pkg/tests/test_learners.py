import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpens.learners import (
    KINDS,
    PROB_FLOOR,
    LearnerError,
    LearnerSpec,
    bag,
    check_prob_matrix,
    fit,
    nearest_indices,
)


def _blobs(n=60, seed=0, C=2, D=2):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % C
    X = rng.normal(size=(n, D)) + 3.0 * y[:, None]
    return X, y


class TestFit:
    def test_tree_memorizes_separable(self):
        X, y = _blobs()
        m = fit(LearnerSpec.make("decision_tree"), X, y)
        assert np.mean(m.predict(X) == y) == 1.0

    def test_nb_closed_form(self):
        m = fit(LearnerSpec.make("gaussian_nb"), [[0], [0], [10], [10]], [0, 0, 1, 1])
        assert m.predict_proba([[1.0]])[0, 0] > 0.99

    def test_knn_clamps_k(self):
        m = fit(LearnerSpec.make("knn", n_neighbors=5), np.arange(4.0)[:, None], [0, 1, 0, 1])
        assert m.k_ == 4
        np.testing.assert_allclose(m.predict_proba([[0.0]]), [[0.5, 0.5]])

    @pytest.mark.parametrize("kind", KINDS)
    def test_degenerate(self, kind):
        with pytest.raises(LearnerError, match="degenerate"):
            fit(LearnerSpec.make(kind), [[0.0], [1.0]], [1, 1])
        with pytest.raises(LearnerError, match="degenerate"):
            fit(LearnerSpec.make(kind), [[0.0]], [0])

    def test_unknown_kind_and_param(self):
        with pytest.raises(LearnerError):
            LearnerSpec.make("svm")
        with pytest.raises(LearnerError):
            LearnerSpec.make("knn", depth=3)

    def test_lr_separable_accuracy(self):
        X, y = _blobs(200, seed=1)
        m = fit(LearnerSpec.make("logistic_regression"), X, y)
        assert np.mean(m.predict(X) == y) > 0.97


class TestPredictProba:
    def test_knn_one_hot_clamped(self):
        X = np.array([[0.0], [0.1], [0.2], [5.0], [9.0]])
        m = fit(LearnerSpec.make("knn", n_neighbors=3), X, [2, 2, 2, 0, 1])
        p = m.predict_proba([[0.05]])[0]
        assert p[2] == pytest.approx(1.0, abs=1e-14)
        assert p[0] == pytest.approx(PROB_FLOOR, rel=1e-6)

    def test_tree_leaf_frequency(self):
        X = np.array([[0.0], [0.0], [0.0], [0.0]])
        m = fit(LearnerSpec.make("decision_tree"), X, [0, 0, 0, 1])
        np.testing.assert_allclose(m.predict_proba([[0.0]]), [[0.75, 0.25]])

    def test_lr_symmetric_boundary(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        m = fit(LearnerSpec.make("logistic_regression"), X, [0, 0, 1, 1])
        np.testing.assert_allclose(m.predict_proba([[0.0]]), [[0.5, 0.5]], atol=1e-3)

    def test_dimension_mismatch(self):
        X, y = _blobs()
        m = fit(LearnerSpec.make("gaussian_nb"), X, y)
        with pytest.raises(LearnerError, match="dimension"):
            m.predict_proba(np.zeros((2, 3)))

    @pytest.mark.parametrize("kind", KINDS)
    @given(seed=st.integers(0, 10**6), C=st.integers(2, 4))
    @settings(max_examples=15, deadline=None)
    def test_prob_matrix_invariants(self, kind, seed, C):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 3))
        y = np.arange(30) % C
        m = fit(LearnerSpec.make(kind), X, y, n_classes=C)
        P = m.predict_proba(rng.normal(scale=5, size=(20, 3)))
        check_prob_matrix(P)
        assert P.shape == (20, C)

    @pytest.mark.parametrize("kind", KINDS)
    def test_deterministic(self, kind):
        X, y = _blobs(50, seed=4, C=3)
        a = fit(LearnerSpec.make(kind), X, y).predict_proba(X + 0.3)
        b = fit(LearnerSpec.make(kind), X, y).predict_proba(X + 0.3)
        assert a.tobytes() == b.tobytes()

    def test_absent_class_column(self):
        m = fit(LearnerSpec.make("gaussian_nb"), [[0.0], [1.0], [2.0]], [0, 2, 0], n_classes=3)
        p = m.predict_proba([[1.0]])[0]
        assert p[1] == pytest.approx(PROB_FLOOR, rel=1e-6)


class TestTree:
    def test_split_tie_lowest_feature(self):
        # both features separate perfectly; the root must use feature 0
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        m = fit(LearnerSpec.make("decision_tree"), X, [0, 1])
        assert m.feature_[0] == 0

    def test_max_depth(self):
        X, y = _blobs(80, seed=2, C=3)
        m = fit(LearnerSpec.make("decision_tree", max_depth=1), X, y)
        assert len(np.unique(m.apply(X))) <= 2


class TestNearest:
    def test_tie_lower_index(self):
        idx, dist = nearest_indices(np.array([[1.0], [-1.0], [1.0]]), np.array([[0.0]]), 3)
        np.testing.assert_array_equal(idx[0], [0, 1, 2])
        np.testing.assert_allclose(dist[0], [1, 1, 1])


class TestBag:
    def test_single_member(self):
        X, y = _blobs()
        pool = bag(LearnerSpec.make("decision_tree"), X, y, 1, 0)
        assert len(pool) == 1 and pool.ids == ("bag-000",)

    def test_forty_compatible(self):
        X, y = _blobs(80, C=3)
        pool = bag(LearnerSpec.make("decision_tree"), X, y, 40, 0)
        assert len(pool) == 40
        assert pool.ids[-1] == "bag-039"
        assert pool.predict_all(X).shape == (40, 80, 3)

    def test_same_seed_identical(self):
        X, y = _blobs(80, seed=3)
        a = bag(LearnerSpec.make("decision_tree"), X, y, 5, 9).predict_all(X + 0.1)
        b = bag(LearnerSpec.make("decision_tree"), X, y, 5, 9).predict_all(X + 0.1)
        assert a.tobytes() == b.tobytes()

    def test_members_differ(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(100, 2))
        y = (X[:, 0] + 0.5 * rng.normal(size=100) > 0).astype(int)
        preds = bag(LearnerSpec.make("decision_tree"), X, y, 5, 1).predict_all(rng.normal(size=(50, 2))).argmax(2)
        assert any((preds[0] != preds[k]).any() for k in range(1, 5))
