import math

import numpy as np
import pytest

from bpens import baselines as bl
from oracles import mismatch_counts


def _ref(correct, y=None, C=2, X=None):
    """Reference set whose models are right exactly where ``correct`` says."""
    correct = np.asarray(correct, dtype=bool)
    K, N = correct.shape
    y = np.zeros(N, dtype=int) if y is None else np.asarray(y)
    pred = np.where(correct, y[None, :], (y[None, :] + 1) % C)
    out = np.full((K, N, C), 0.1 / (C - 1))
    np.put_along_axis(out, pred[:, :, None], 0.9, axis=2)
    X = np.arange(N, dtype=float)[:, None] if X is None else X
    return bl.ReferenceSet(X, y, out)


def _roc(idx, dist=None):
    idx = np.asarray(idx)
    return bl.RoC(idx, np.ones(idx.size) if dist is None else np.asarray(dist, float))


class TestKnn:
    def test_exact_match_first(self):
        X = np.array([[0.0, 1.0], [2.0, 2.0], [5.0, 5.0]])
        roc = bl.knn_query(X, [2.0, 2.0], 1)
        assert roc.idx.tolist() == [1] and roc.dist.tolist() == [0.0]

    def test_all(self):
        X = np.random.default_rng(0).normal(size=(6, 2))
        assert sorted(bl.knn_query(X, [0.0, 0.0], 6).idx.tolist()) == list(range(6))

    def test_derived(self):
        roc = bl.knn_query(np.array([[0.0], [1.0], [3.0]]), [0.9], 2)
        assert roc.idx.tolist() == [1, 0]
        np.testing.assert_allclose(roc.dist, [0.1, 0.9], atol=1e-12)

    def test_k_too_large(self):
        with pytest.raises(bl.BaselineError):
            bl.knn_query(np.zeros((3, 1)), [0.0], 4)


class TestStatic:
    def test_single_best(self):
        assert bl.single_best([0.8, 0.9, 0.7]) == 1
        assert bl.single_best([0.9, 0.9]) == 0
        assert bl.single_best([0.3]) == 0

    def test_simple_average(self):
        P = np.array([[[0.9, 0.1]], [[0.2, 0.8]], [[0.4, 0.6]]])
        np.testing.assert_allclose(bl.simple_average(P), [[0.5, 0.5]], atol=1e-12)
        np.testing.assert_allclose(bl.simple_average(np.array([[[1.0, 0.0]], [[0.0, 1.0]]])), [[0.5, 0.5]])
        Q = np.array([[[0.3, 0.7]]] * 3)
        np.testing.assert_allclose(bl.simple_average(Q), Q[0], atol=1e-15)

    def test_median(self):
        P = np.array([[[0.8, 0.2]], [[0.6, 0.4]], [[0.1, 0.9]]])
        np.testing.assert_allclose(bl.median_average(P), [[0.6, 0.4]], atol=1e-12)
        np.testing.assert_array_equal(bl.median_average(P[:1]), P[0])

    def test_median_even_renormalized(self):
        P = np.array([[[0.9, 0.1]], [[0.7, 0.3]], [[0.2, 0.8]], [[0.1, 0.9]]])
        # medians 0.45, 0.55 already sum to 1
        np.testing.assert_allclose(bl.median_average(P), [[0.45, 0.55]], atol=1e-12)
        P3 = np.array([[[0.1, 0.5, 0.4]], [[0.5, 0.1, 0.4]], [[0.9, 0.05, 0.05]]])
        H = bl.median_average(P3)
        np.testing.assert_allclose(H, [[0.5, 0.1, 0.4]], atol=1e-12)

    def test_weighted(self):
        P = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        np.testing.assert_allclose(bl.weighted_average(P, [0.6, 0.4]), [[0.6, 0.4]], atol=1e-12)
        np.testing.assert_array_equal(bl.weighted_average(P, [1.0, 0.0]), P[0])
        np.testing.assert_array_equal(bl.weighted_average(P, [0.7, 0.7]), bl.simple_average(P))
        np.testing.assert_array_equal(bl.weighted_average(P, [0.0, 0.0]), bl.simple_average(P))


class TestLCA:
    def test_derived_two_thirds(self):
        # model predicts class 0 at x; assigns neighbors 0,1,2 to class 0, of which 0,1 are truly 0
        y = np.array([0, 0, 1, 1, 1])
        out = np.zeros((1, 5, 2))
        out[0, [0, 1, 2], 0] = 1.0
        out[0, [3, 4], 1] = 1.0
        ref = bl.ReferenceSet(np.arange(5.0)[:, None], y, out)
        comp = bl.lca_competence(ref, np.arange(5)[None], np.array([[[0.8, 0.2]]]))
        assert comp[0, 0] == pytest.approx(2 / 3)

    def test_none_assigned_is_zero(self):
        ref = bl.ReferenceSet(np.zeros((2, 1)), [0, 0], np.array([[[0.9, 0.1], [0.9, 0.1]]]))
        comp = bl.lca_competence(ref, [[0, 1]], np.array([[[0.1, 0.9]]]))
        assert comp[0, 0] == 0.0

    def test_selects_best_and_averages_ties(self):
        ref = _ref([[1, 1, 1], [1, 1, 1], [0, 0, 0]])
        rows = np.array([[0.9, 0.1], [0.7, 0.3], [0.2, 0.8]])
        np.testing.assert_allclose(bl.lca_select(ref, _roc([0, 1, 2]), rows), [0.8, 0.2])


class TestKnora:
    def test_union_derived(self):
        ref = _ref([[1, 1, 0], [0, 0, 1]])
        rows = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(bl.knora_union(ref, _roc([0, 1, 2]), rows), [2 / 3, 1 / 3])

    def test_union_one_perfect(self):
        ref = _ref([[1, 1], [0, 0], [0, 0]])
        rows = np.array([[0.7, 0.3], [0.1, 0.9], [0.4, 0.6]])
        np.testing.assert_allclose(bl.knora_union(ref, _roc([0, 1]), rows), rows[0])

    def test_union_all_correct_is_average(self):
        ref = _ref(np.ones((3, 4)))
        rows = np.array([[0.7, 0.3], [0.1, 0.9], [0.4, 0.6]])
        np.testing.assert_allclose(bl.knora_union(ref, _roc([0, 1, 2, 3]), rows), rows.mean(0))

    def test_union_no_votes_fallback(self):
        ref = _ref(np.zeros((2, 2)))
        rows = np.array([[0.7, 0.3], [0.1, 0.9]])
        np.testing.assert_allclose(bl.knora_union(ref, _roc([0, 1]), rows), rows.mean(0))

    def test_eliminate_decrement(self):
        # A right on {1,2}, B right on {1} only, nobody on all 3 -> k = 2 picks A
        ref = _ref([[1, 1, 0], [1, 0, 1]])
        rows = np.array([[0.9, 0.1], [0.2, 0.8]])
        np.testing.assert_allclose(bl.knora_eliminate(ref, _roc([0, 1, 2]), rows), rows[0])

    def test_eliminate_no_decrement(self):
        ref = _ref([[1, 1, 1], [1, 1, 1], [0, 1, 1]])
        rows = np.array([[0.9, 0.1], [0.5, 0.5], [0.0, 1.0]])
        np.testing.assert_allclose(bl.knora_eliminate(ref, _roc([0, 1, 2]), rows), [0.7, 0.3])

    def test_eliminate_fallback(self):
        ref = _ref([[0, 1], [0, 1]])
        rows = np.array([[0.9, 0.1], [0.3, 0.7]])
        np.testing.assert_allclose(bl.knora_eliminate(ref, _roc([0, 1]), rows), [0.6, 0.4])

    def test_eliminate_k1_matches_union_on_nearest(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            corr = rng.random((3, 4)) < 0.5
            ref = _ref(corr)
            rows = rng.dirichlet(np.ones(2), 3)
            if corr[:, 0].any():
                np.testing.assert_allclose(bl.knora_eliminate(ref, _roc([0]), rows),
                                           bl.knora_union(ref, _roc([0]), rows), atol=1e-12)


class TestMCB:
    def _setup(self, theta):
        # three models; neighbor 0 shares x's profile, neighbor 1 agrees on 2 of 3
        y = np.array([0, 1])
        out = np.zeros((3, 2, 2))
        out[:, 0, 0] = 1.0  # all predict 0 on neighbor 0 (all right)
        out[0, 1, 0] = 1.0
        out[1, 1, 0] = 1.0
        out[2, 1, 1] = 1.0  # on neighbor 1 only model 2 predicts 1 (and is right)
        ref = bl.ReferenceSet(np.zeros((2, 1)), y, out)
        rows = np.array([[0.9, 0.1], [0.8, 0.2], [0.6, 0.4]])  # profile (0, 0, 0)
        return ref, rows

    def test_two_of_three_excluded(self):
        ref, rows = self._setup(0.7)
        keep = bl.mcb_filter(ref, [[0, 1]], rows[:, None], 0.7)
        assert keep.tolist() == [[True, False]]
        # only neighbor 0 left: all three models tie -> average
        np.testing.assert_allclose(bl.mcb_select(ref, _roc([0, 1]), rows, 0.7), rows.mean(0))

    def test_theta_zero_noop(self):
        ref, rows = self._setup(0.0)
        assert bl.mcb_filter(ref, [[0, 1]], rows[:, None], 0.0).all()
        np.testing.assert_allclose(bl.mcb_select(ref, _roc([0, 1]), rows, 0.0), rows[2])

    def test_empty_filter_falls_back(self):
        ref, _ = self._setup(0.7)
        rows = np.array([[0.1, 0.9], [0.2, 0.8], [0.4, 0.6]])  # profile (1,1,1) matches nobody well
        keep = bl.mcb_filter(ref, [[0]], rows[:, None], 0.7)
        assert keep.all()


class TestRRC:
    def test_derived(self):
        ref = _ref([[1, 1], [0, 0]])
        comp = bl.rrc_competence(ref, [[0, 1]], [[1.0, 1.0]])
        assert comp[0, 0] == pytest.approx(2 * math.exp(-0.5), abs=1e-12)
        assert comp[0, 1] == 0.0
        np.testing.assert_allclose(bl.rrc_weights(ref, _roc([0, 1], [1.0, 1.0])), [1.0, 0.0])

    def test_zero_distance(self):
        ref = _ref([[1, 0]])
        assert bl.rrc_competence(ref, [[0, 1]], [[0.0, 0.0]])[0, 0] == 1.0

    def test_all_zero_uniform(self):
        ref = _ref(np.zeros((2, 2)))
        np.testing.assert_allclose(bl.rrc_weights(ref, _roc([0, 1], [0.5, 1.0])), [0.5, 0.5])


class TestDiversity:
    def test_identical_df(self):
        c = np.array([True, False, False, True])
        assert bl.pair_measure(c, c, bl.DF) == 0.5

    def test_never_both_wrong(self):
        a = np.array([True, False, True])
        b = np.array([False, True, True])
        assert bl.pair_measure(a, b, bl.DF) == 0.0
        assert bl.pair_measure(a, b, bl.RE) == 0.0

    def test_degenerate_least_diverse(self):
        a = np.ones(3, bool)
        assert bl.pair_measure(a, a, bl.Q) == 1.0
        assert bl.pair_measure(a, a, bl.RE) == 1.0

    def test_q_known(self):
        a = np.array([1, 1, 0, 0, 1], bool)
        b = np.array([1, 0, 1, 0, 1], bool)
        # n11=2, n00=1, n10=1, n01=1 -> (2-1)/(2+1)
        assert bl.pair_measure(a, b, bl.Q) == pytest.approx(1 / 3)

    def test_unknown(self):
        with pytest.raises(bl.BaselineError):
            bl.pair_measure(np.ones(2, bool), np.ones(2, bool), "kappa")


class TestDesKnn:
    def test_top_count(self):
        assert bl.top_count(0.33, 3) == 1
        assert bl.top_count(0.34, 3) == 2
        assert bl.top_count(0.3, 10) == 3
        assert bl.top_count(0.01, 5) == 1
        assert bl.top_count(1.0, 4) == 4
        with pytest.raises(bl.BaselineError):
            bl.top_count(0.0, 3)

    def test_three_models_one_each(self):
        # accuracy: 0 best; diversity: model 2 most diverse (never wrong with the others)
        ref = _ref([[1, 1, 1, 0], [1, 0, 0, 0], [0, 1, 1, 1]])
        mask = bl.des_knn_members(ref, [[0, 1, 2, 3]], bl.DF, 0.33, 0.33)[0]
        assert mask.tolist() == [True, False, True]

    def test_same_model_counted_once(self):
        ref = _ref([[1, 1, 1], [0, 1, 0], [0, 0, 1]])
        # model 0 is both most accurate and (DF) most diverse
        mask = bl.des_knn_members(ref, [[0, 1, 2]], bl.DF, 0.33, 0.33)[0]
        assert mask.tolist() == [True, False, False]

    def test_row_valid(self):
        ref = _ref([[1, 0, 1], [0, 1, 1]])
        row = bl.des_knn(ref, _roc([0, 1, 2]), np.array([[0.6, 0.4], [0.3, 0.7]]))
        assert row.sum() == pytest.approx(1.0) and (row >= 0).all()


class TestOracle:
    def test_brute_force_equivalence(self):
        bad = mismatch_counts(500, seed=7)
        assert bad == dict.fromkeys(bad, 0)

    def test_repeat_calls_equal(self):
        rng = np.random.default_rng(3)
        ref = _ref(rng.random((3, 10)) < 0.6, X=rng.normal(size=(10, 2)))
        idx, dist = bl.knn_batch(ref.X, rng.normal(size=(20, 2)), 5)
        P = rng.dirichlet(np.ones(2), size=(3, 20))
        for fn in (bl.lca_batch, bl.knora_u_batch, bl.knora_e_batch, bl.mcb_batch, bl.des_knn_batch):
            assert fn(ref, idx, P).tobytes() == fn(ref, idx, P).tobytes()
        out = bl.rrc_batch(ref, idx, dist, P)
        np.testing.assert_allclose(out.sum(1), 1.0, atol=1e-12)

    def test_shape_errors(self):
        ref = _ref([[1, 0]])
        with pytest.raises(bl.BaselineError):
            bl.knora_u_batch(ref, [[0, 1], [1, 0]], np.ones((1, 1, 2)) / 2)
        with pytest.raises(bl.BaselineError):
            bl.ReferenceSet(np.zeros((2, 1)), [0], np.ones((1, 2, 2)) / 2)
