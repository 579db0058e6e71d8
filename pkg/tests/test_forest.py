"""Regression forest: split search vs brute force, bootstrap, determinism."""
import json
import math

import numpy as np
import pytest

from surplusminer.errors import DataInsufficientError, ValidationError
from surplusminer.forest import (
    ForestParams,
    best_split,
    bootstrap_sample,
    fit_forest,
    grow_tree,
    load_forest,
    predict_forest,
    predict_matrix,
    predict_tree,
    save_forest,
    tree_rng,
)
from surplusminer.indicators import build_features

from conftest import make_series
from oracles import naive_best_split, naive_grow, naive_predict


def random_matrix(n_days=80, seed=0):
    rng = np.random.default_rng(seed)
    prices = list(np.exp(rng.normal(np.log(30000.0), 0.25, size=n_days)))
    return build_features(make_series(prices))


def trees_equal(node, naive, rel=1e-12):
    """Same topology and split features, thresholds bitwise, leaves to rel."""
    if node.is_leaf != (naive.value is not None):
        return False
    if node.is_leaf:
        return naive.value == pytest.approx(node.value, rel=rel, abs=1e-15)
    if node.feature != naive.feature or node.threshold != naive.threshold:
        return False
    return trees_equal(node.left, naive.left, rel) and trees_equal(node.right, naive.right, rel)


class TestBestSplit:
    def test_clean_separation(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([1.0, 1.0, 5.0, 5.0])
        feature, threshold, children_sse = best_split(X, y, [0])
        assert feature == 0
        assert threshold == 2.5
        assert children_sse == 0.0

    def test_no_distinct_values(self):
        X = np.ones((4, 2))
        y = np.array([1.0, 2.0, 3.0, 4.0])
        assert best_split(X, y, [0, 1]) is None

    def test_no_gain_rejected(self):
        # constant target: any split leaves SSE at 0 = parent, no gain
        X = np.array([[1.0], [2.0], [3.0]])
        y = np.array([7.0, 7.0, 7.0])
        assert best_split(X, y, [0]) is None

    def test_single_row(self):
        assert best_split(np.array([[1.0]]), np.array([2.0]), [0]) is None

    def test_tie_prefers_lower_feature_then_threshold(self):
        # two identical columns: identical best SSE, feature 0 must win
        col = np.array([1.0, 2.0, 3.0, 4.0])
        X = np.column_stack([col, col])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        feature, threshold, _ = best_split(X, y, [0, 1])
        assert feature == 0
        assert threshold == 2.5

    def test_adjacent_float_values_still_split_two_ways(self):
        lo = 1.0
        hi = math.nextafter(lo, 2.0)
        X = np.array([[lo], [lo], [hi], [hi]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        feature, threshold, _ = best_split(X, y, [0])
        assert feature == 0
        mask = X[:, 0] <= threshold
        assert mask.sum() == 2

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(99)
        for trial in range(300):
            n = int(rng.integers(2, 14))
            p = int(rng.integers(1, 4))
            X = rng.normal(0.0, 1.0, size=(n, p))
            if rng.random() < 0.3:
                X = np.round(X)  # force duplicate values
            y = rng.normal(0.0, 5.0, size=n)
            got = best_split(X, y, list(range(p)))
            want = naive_best_split([list(row) for row in X], list(y))
            if want is None:
                assert got is None, f"trial {trial}"
            else:
                assert got is not None, f"trial {trial}"
                assert got[0] == want[0], f"trial {trial}"
                assert got[1] == want[1], f"trial {trial}"
                assert got[2] == pytest.approx(want[2], rel=1e-9, abs=1e-12)


class TestGrowTree:
    def test_structure_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(1234)
        params = ForestParams(n_trees=1, m_try=3, max_depth=2, seed=0)
        for trial in range(60):
            n = int(rng.integers(2, 13))
            X = rng.normal(0.0, 1.0, size=(n, 3))
            y = rng.normal(0.0, 5.0, size=n)
            node = grow_tree(X, y, params, tree_rng(0, trial))
            naive = naive_grow([list(r) for r in X], list(y), max_depth=2)
            assert trees_equal(node, naive), f"trial {trial}"

    def test_training_sse_matches_oracle(self):
        rng = np.random.default_rng(4321)
        params = ForestParams(n_trees=1, m_try=2, max_depth=2, seed=0)
        for trial in range(40):
            n = int(rng.integers(4, 13))
            X = rng.normal(0.0, 1.0, size=(n, 2))
            y = rng.normal(0.0, 5.0, size=n)
            node = grow_tree(X, y, params, tree_rng(0, trial))
            naive = naive_grow([list(r) for r in X], list(y), max_depth=2)
            sse = sum((predict_tree(node, row) - t) ** 2 for row, t in zip(X, y))
            naive_sse = sum((naive_predict(naive, row) - t) ** 2 for row, t in zip(X, y))
            assert sse == pytest.approx(naive_sse, rel=1e-9, abs=1e-12)

    def test_max_depth_zero_is_a_stump(self):
        params = ForestParams(n_trees=1, m_try=1, max_depth=0)
        X = np.array([[1.0], [2.0]])
        y = np.array([1.0, 2.0])
        node = grow_tree(X, y, params, tree_rng(0, 0))
        assert node.is_leaf
        assert node.value == 1.5

    def test_min_samples_leaf_gates_splitting(self):
        """Nodes smaller than 2 * min_samples_leaf must never split."""
        params = ForestParams(n_trees=1, m_try=1, min_samples_leaf=3)
        rng = np.random.default_rng(5)
        X = rng.normal(size=(10, 1))
        y = rng.normal(size=10)
        node = grow_tree(X, y, params, tree_rng(0, 0))

        def check(nd, rows):
            if nd.is_leaf:
                return
            assert len(rows) >= 2 * 3
            mask = rows[:, 0] <= nd.threshold
            check(nd.left, rows[mask])
            check(nd.right, rows[~mask])

        check(node, X)

    def test_memorizes_distinct_rows_without_bootstrap(self):
        matrix = random_matrix(n_days=50, seed=8)
        params = ForestParams(n_trees=3, m_try=2, seed=1)
        identity = lambda n, rng: np.arange(n)
        model = fit_forest(matrix, params, sampler=identity)
        preds = predict_matrix(model, matrix)
        assert preds == pytest.approx(matrix.target_array(), rel=1e-12)


class TestBootstrap:
    def test_sample_shape_and_range(self):
        rng = tree_rng(0, 0)
        idx = bootstrap_sample(100, rng)
        assert idx.shape == (100,)
        assert idx.min() >= 0
        assert idx.max() < 100

    def test_distinct_fraction_near_632(self):
        n = 2000
        fractions = []
        for b in range(200):
            idx = bootstrap_sample(n, tree_rng(7, b))
            fractions.append(len(np.unique(idx)) / n)
        assert np.mean(fractions) == pytest.approx(1.0 - 1.0 / math.e, abs=0.02)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            bootstrap_sample(0, tree_rng(0, 0))


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        matrix = random_matrix(seed=2)
        params = ForestParams(n_trees=8, seed=11)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_forest(fit_forest(matrix, params), a)
        save_forest(fit_forest(matrix, params), b)
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_differs(self):
        matrix = random_matrix(seed=2)
        m1 = fit_forest(matrix, ForestParams(n_trees=4, seed=1))
        m2 = fit_forest(matrix, ForestParams(n_trees=4, seed=2))
        assert predict_matrix(m1, matrix) != pytest.approx(predict_matrix(m2, matrix))

    def test_tree_streams_independent_of_count(self):
        """Tree b is the same whether 4 or 8 trees are grown."""
        matrix = random_matrix(seed=3)
        small = fit_forest(matrix, ForestParams(n_trees=4, seed=5))
        large = fit_forest(matrix, ForestParams(n_trees=8, seed=5))
        x = matrix.feature_array()[0]
        for b in range(4):
            assert predict_tree(small.trees[b], x) == predict_tree(large.trees[b], x)

    def test_monotone_feature_transform_keeps_predictions(self):
        """Splits depend only on feature order, so a strictly increasing
        transform of a column must not change any prediction."""
        rng = np.random.default_rng(21)
        n = 40
        X = rng.normal(0.0, 1.0, size=(n, 2))
        y = rng.normal(0.0, 5.0, size=n)
        params = ForestParams(n_trees=1, m_try=2, seed=9)
        node = grow_tree(X, y, params, tree_rng(9, 0))

        X2 = X.copy()
        X2[:, 0] = np.exp(X2[:, 0])
        node2 = grow_tree(X2, y, params, tree_rng(9, 0))
        for row, row2 in zip(X, X2):
            assert predict_tree(node, row) == predict_tree(node2, row2)


class TestSerialization:
    def test_round_trip_predictions_bitwise(self, tmp_path):
        matrix = random_matrix(seed=13)
        model = fit_forest(matrix, ForestParams(n_trees=5, seed=3))
        path = tmp_path / "m.json"
        save_forest(model, path)
        loaded = load_forest(path)
        assert np.array_equal(predict_matrix(loaded, matrix), predict_matrix(model, matrix))
        assert loaded.feature_count == model.feature_count
        assert loaded.params == model.params

    def test_schema_guard(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"schema": "something-else/9", "trees": []}))
        with pytest.raises(ValidationError):
            load_forest(path)

    def test_deep_chain_tree_round_trip(self, tmp_path):
        """The flat node encoding must survive depth far beyond the Python
        recursion limit; the chain is built by hand to force it."""
        import sys

        from surplusminer.forest import ForestModel, TreeNode

        depth = sys.getrecursionlimit() + 500
        node = TreeNode(value=float(depth))
        for level in range(depth - 1, -1, -1):
            node = TreeNode(
                feature=0,
                threshold=level + 0.5,
                left=TreeNode(value=float(level)),
                right=node,
            )

        params = ForestParams(n_trees=1, m_try=1, seed=0)
        model = ForestModel(trees=[node], params=params, feature_count=1)
        path = tmp_path / "deep.json"
        save_forest(model, path)
        loaded = load_forest(path)
        # x = k + 0.2 descends k levels right, then one left, to leaf value k
        for x in (0.0, 7.2, float(depth - 1) + 0.2, float(depth) + 5.0):
            assert predict_tree(loaded.trees[0], [x]) == predict_tree(node, [x])
        assert predict_tree(loaded.trees[0], [7.2]) == 7.0


class TestParams:
    def test_m_try_default_is_third(self):
        assert ForestParams().resolved_m_try(6) == 2
        assert ForestParams().resolved_m_try(2) == 1

    def test_m_try_too_large_rejected(self):
        with pytest.raises(ValidationError):
            ForestParams(m_try=7).resolved_m_try(6)

    @pytest.mark.parametrize("kw", [{"n_trees": 0}, {"min_samples_leaf": 0}, {"max_depth": -1}])
    def test_bad_params(self, kw):
        with pytest.raises(ValidationError):
            ForestParams(**kw)

    def test_prediction_dimension_checked(self):
        matrix = random_matrix(seed=1)
        model = fit_forest(matrix, ForestParams(n_trees=2))
        with pytest.raises(ValidationError):
            predict_forest(model, [1.0, 2.0])
