"""Exact engine against independent brute-force oracles.

The influence closed form (2p(1-p) times the completion-disagreement
probability) is checked against a from-scratch enumeration of the defining
probability Pr[f(x) != f(x')] over every point and every redrawn bit.
"""

import itertools

import numpy as np
import pytest

from greedytree.core import (
    BareLeaf,
    BareTree,
    DecisionTree,
    Internal,
    Leaf,
    ProductDistribution,
    Restriction,
    TreeOracle,
    TruthTableOracle,
    route,
)
from greedytree.exact import (
    EnumerationLimitError,
    SubfunctionView,
    cost,
    f_completion,
    flip_influence,
    influence,
    influences,
    leaf_error,
    positive_mass,
    score,
    total_influence,
    tree_error,
    variance,
)
from greedytree.targets import generate_random_tree, generate_truth_table

UNIFORM2 = ProductDistribution([0.5, 0.5])
DICTATOR = DecisionTree(Internal(0, Leaf(-1), Leaf(1)))
AND2 = DecisionTree(Internal(0, Leaf(-1), Internal(1, Leaf(-1), Leaf(1))))
PARITY2 = DecisionTree(Internal(0, Internal(1, Leaf(-1), Leaf(1)), Internal(1, Leaf(1), Leaf(-1))))
CONST2 = DecisionTree(Leaf(1))


def oracle_of(tree: DecisionTree, n: int) -> TreeOracle:
    return TreeOracle(tree, n)


def definitional_influence(label, n, biases, i, fixed=None):
    """Pr[f(x) != f(x with coordinate i redrawn)] by exhaustive enumeration
    over (x, redrawn bit) pairs, conditioned on ``fixed``; written without
    the closed form on purpose."""
    fixed = dict(fixed or {})
    total = 0.0
    mass = 0.0
    for x in itertools.product((0, 1), repeat=n):
        if any(x[k] != v for k, v in fixed.items()):
            continue
        px = 1.0
        for k in range(n):
            if k in fixed:
                continue
            px *= biases[k] if x[k] else 1.0 - biases[k]
        mass += px
        for b in (0, 1):
            pb = biases[i] if b else 1.0 - biases[i]
            y = list(x)
            y[i] = b
            if label(x) != label(tuple(y)):
                total += px * pb
    assert abs(mass - 1.0) < 1e-12
    return total


class TestInfluence:
    def test_constant_function(self):
        view = SubfunctionView(oracle_of(CONST2, 2))
        assert influence(view, UNIFORM2, 0) == 0.0
        assert influence(view, UNIFORM2, 1) == 0.0

    def test_dictator_uniform(self):
        view = SubfunctionView(oracle_of(DICTATOR, 2))
        assert influence(view, UNIFORM2, 0) == pytest.approx(0.5, abs=1e-15)

    def test_and_uniform(self):
        # disagreement between the two settings of x_0 only when x_1 = 1
        view = SubfunctionView(oracle_of(AND2, 2))
        assert influence(view, UNIFORM2, 0) == pytest.approx(0.25, abs=1e-15)

    def test_restricted_coordinate_is_exactly_zero(self):
        view = SubfunctionView(oracle_of(AND2, 2), Restriction({0: 1}))
        assert influence(view, UNIFORM2, 0) == 0.0

    def test_range(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(1, 6))
            oracle = generate_truth_table(n, rng)
            dist = ProductDistribution(rng.uniform(0.1, 0.9, n))
            vals = influences(SubfunctionView(oracle), dist)
            assert np.all(vals >= 0.0) and np.all(vals <= 0.5 + 1e-15)

    def test_closed_form_equals_definitional_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            n = int(rng.integers(1, 6))
            oracle = generate_truth_table(n, rng)
            dist = ProductDistribution(rng.uniform(0.1, 0.9, n))

            def label(x):
                return oracle.label(list(x))

            view = SubfunctionView(oracle)
            for i in range(n):
                expected = definitional_influence(label, n, dist.biases, i)
                assert influence(view, dist, i) == pytest.approx(expected, abs=1e-12)

    def test_closed_form_equals_definitional_under_restriction(self):
        rng = np.random.default_rng(23)
        for _ in range(15):
            n = int(rng.integers(2, 6))
            oracle = generate_truth_table(n, rng)
            dist = ProductDistribution(rng.uniform(0.1, 0.9, n))
            fixed = {0: int(rng.integers(2))}
            view = SubfunctionView(oracle, Restriction(fixed))

            def label(x):
                return oracle.label(list(x))

            for i in range(1, n):
                expected = definitional_influence(label, n, dist.biases, i, fixed)
                assert influence(view, dist, i) == pytest.approx(expected, abs=1e-12)

    def test_flip_influence_drops_the_rerandomization_factor(self):
        view = SubfunctionView(oracle_of(DICTATOR, 2))
        dist = ProductDistribution([0.3, 0.5])
        assert flip_influence(view, dist, 0) == pytest.approx(1.0, abs=1e-15)
        assert influence(view, dist, 0) == pytest.approx(2 * 0.3 * 0.7, abs=1e-15)


class TestTotalInfluence:
    def test_constant(self):
        assert total_influence(SubfunctionView(oracle_of(CONST2, 2)), UNIFORM2) == 0.0

    def test_dictator(self):
        assert total_influence(SubfunctionView(oracle_of(DICTATOR, 2)), UNIFORM2) == pytest.approx(0.5)

    def test_parity(self):
        assert total_influence(SubfunctionView(oracle_of(PARITY2, 2)), UNIFORM2) == pytest.approx(1.0)


class TestVarianceAndError:
    def test_constant(self):
        view = SubfunctionView(oracle_of(CONST2, 2))
        assert variance(view, UNIFORM2) == 0.0
        assert leaf_error(view, UNIFORM2) == 0.0

    def test_balanced_dictator(self):
        view = SubfunctionView(oracle_of(DICTATOR, 2))
        assert variance(view, UNIFORM2) == pytest.approx(1.0, abs=1e-15)
        assert leaf_error(view, UNIFORM2) == pytest.approx(0.5, abs=1e-15)

    def test_biased_dictator(self):
        dist = ProductDistribution([0.3, 0.5])
        view = SubfunctionView(oracle_of(DICTATOR, 2))
        assert variance(view, dist) == pytest.approx(0.84, abs=1e-15)
        assert leaf_error(view, dist) == pytest.approx(0.3, abs=1e-15)

    def test_variance_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            oracle = generate_truth_table(n, rng)
            dist = ProductDistribution(rng.uniform(0.1, 0.9, n))
            view = SubfunctionView(oracle)
            mu = positive_mass(view, dist)
            assert variance(view, dist) == pytest.approx(1 - (2 * mu - 1) ** 2, abs=1e-12)


class TestScore:
    def test_dictator_root(self):
        bare = BareTree(BareLeaf(0))
        value, coord = score(bare, 0, oracle_of(DICTATOR, 2), UNIFORM2)
        assert value == pytest.approx(0.5, abs=1e-15)
        assert coord == 0

    def test_constant_subfunction_reports_lowest_free_coordinate(self):
        bare = BareTree(BareLeaf(0))
        value, coord = score(bare, 0, oracle_of(CONST2, 2), UNIFORM2)
        assert value == 0.0
        assert coord == 0

    def test_parity_tie_breaks_to_lowest_coordinate(self):
        bare = BareTree(BareLeaf(0))
        value, coord = score(bare, 0, oracle_of(PARITY2, 2), UNIFORM2)
        assert value == pytest.approx(0.5, abs=1e-15)
        assert coord == 0

    def test_unknown_leaf(self):
        with pytest.raises(KeyError):
            score(BareTree(BareLeaf(0)), 3, oracle_of(CONST2, 2), UNIFORM2)


class TestCost:
    def test_constant(self):
        bare = BareTree(Internal(0, BareLeaf(0), BareLeaf(1)))
        assert cost(bare, oracle_of(CONST2, 2), UNIFORM2) == 0.0

    def test_dictator_root_only(self):
        assert cost(BareTree(BareLeaf(0)), oracle_of(DICTATOR, 2), UNIFORM2) == pytest.approx(0.5)

    def test_dictator_after_split_is_zero(self):
        bare = BareTree(Internal(0, BareLeaf(1), BareLeaf(2)))
        assert cost(bare, oracle_of(DICTATOR, 2), UNIFORM2) == 0.0

    def test_invariant_under_leaf_relabeling(self):
        rng = np.random.default_rng(9)
        oracle = generate_truth_table(3, rng)
        dist = ProductDistribution([0.2, 0.5, 0.7])
        a = BareTree(Internal(1, BareLeaf(0), Internal(2, BareLeaf(1), BareLeaf(2))))
        b = BareTree(Internal(1, BareLeaf(40), Internal(2, BareLeaf(17), BareLeaf(99))))
        assert cost(a, oracle, dist) == cost(b, oracle, dist)
        assert score(a, 1, oracle, dist)[0] == score(b, 17, oracle, dist)[0]


class TestCompletion:
    def test_constant_plus_one(self):
        tree = f_completion(BareTree(BareLeaf(0)), oracle_of(CONST2, 2), UNIFORM2)
        assert tree == DecisionTree(Leaf(1))

    def test_biased_dictator_majority(self):
        dist = ProductDistribution([0.3, 0.5])
        tree = f_completion(BareTree(BareLeaf(0)), oracle_of(DICTATOR, 2), dist)
        # the 0-branch (mass 0.7) is labeled -1 by the target
        assert tree == DecisionTree(Leaf(-1))
        assert tree_error(tree, oracle_of(DICTATOR, 2), dist) == pytest.approx(0.3, abs=1e-15)

    def test_split_dictator_completes_exactly(self):
        bare = BareTree(Internal(0, BareLeaf(1), BareLeaf(2)))
        tree = f_completion(bare, oracle_of(DICTATOR, 2), UNIFORM2)
        assert tree == DICTATOR
        assert tree_error(tree, oracle_of(DICTATOR, 2), UNIFORM2) == 0.0

    def test_completion_is_error_optimal(self):
        # every other labeling of the same bare tree does at least as badly
        rng = np.random.default_rng(13)
        for _ in range(10):
            n = 4
            oracle = generate_truth_table(n, rng)
            dist = ProductDistribution(rng.uniform(0.1, 0.9, n))
            bare = BareTree(Internal(1, BareLeaf(0), Internal(3, BareLeaf(1), BareLeaf(2))))
            best = tree_error(f_completion(bare, oracle, dist), oracle, dist)
            for labels in itertools.product((-1, 1), repeat=3):
                tree = DecisionTree(
                    Internal(1, Leaf(labels[0]), Internal(3, Leaf(labels[1]), Leaf(labels[2])))
                )
                assert tree_error(tree, oracle, dist) >= best - 1e-12

    def test_exact_tie_goes_to_plus_one(self):
        tree = f_completion(BareTree(BareLeaf(0)), oracle_of(DICTATOR, 2), UNIFORM2)
        assert tree == DecisionTree(Leaf(1))


class TestTreeError:
    def test_exact_copy(self):
        assert tree_error(AND2, oracle_of(AND2, 2), UNIFORM2) == 0.0

    def test_single_leaf_vs_dictator_uniform(self):
        assert tree_error(CONST2, oracle_of(DICTATOR, 2), UNIFORM2) == pytest.approx(0.5)

    def test_single_leaf_vs_biased_dictator(self):
        # -1 sits on the x_0 = 1 branch, which carries mass 0.3
        dist = ProductDistribution([0.3, 0.5])
        flipped = DecisionTree(Internal(0, Leaf(1), Leaf(-1)))
        assert tree_error(CONST2, oracle_of(flipped, 2), dist) == pytest.approx(0.3, abs=1e-15)


class TestEnumerationBudget:
    def test_cap_enforced(self):
        oracle = generate_truth_table(5, np.random.default_rng(0))
        dist = ProductDistribution([0.5] * 5)
        with pytest.raises(EnumerationLimitError):
            influences(SubfunctionView(oracle), dist, max_free=4)

    def test_cap_counts_free_coordinates_only(self):
        oracle = generate_truth_table(5, np.random.default_rng(0))
        dist = ProductDistribution([0.5] * 5)
        view = SubfunctionView(oracle, Restriction({0: 1}))
        influences(view, dist, max_free=4)  # 4 free coordinates: fits
