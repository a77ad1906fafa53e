"""Ground-truth target generators for experiments and property suites."""

from __future__ import annotations

import numpy as np

from .core import DecisionTree, Internal, Leaf, Node, TruthTableOracle

__all__ = [
    "generate_balanced_target",
    "generate_path_target",
    "generate_random_tree",
    "generate_truth_table",
]


def generate_balanced_target(depth: int, n: int, rng: np.random.Generator) -> DecisionTree:
    """Complete binary tree of the given depth over distinct random
    variables per path.  Sibling leaves always get opposite labels, so no
    split is vacuous and the tree's size is its effective size.
    """
    if depth > n:
        raise ValueError(f"depth {depth} exceeds dimension {n}")
    if depth < 0:
        raise ValueError("depth must be nonnegative")

    def grow(d: int, available: list[int]) -> Node:
        if d == depth:
            return Leaf(int(rng.choice([-1, 1])))
        if d == depth - 1:
            sign = int(rng.choice([-1, 1]))
            var = int(rng.choice(available))
            return Internal(var, Leaf(sign), Leaf(-sign))
        var = int(rng.choice(available))
        remaining = [i for i in available if i != var]
        return Internal(var, grow(d + 1, remaining), grow(d + 1, remaining))

    return DecisionTree(grow(0, list(range(n))))


def generate_path_target(n: int, rng: np.random.Generator) -> DecisionTree:
    """Chain of n internal nodes querying x_0, x_1, ... in order.

    Each node hangs a leaf on a random side and continues on the other;
    the deepest node has two leaves.  Leaf labels alternate with depth, so
    every split separates the classes.  Produces n+1 leaves with maximum
    depth n; under the uniform distribution the average depth stays below 2
    however large n is.
    """
    if n < 1:
        raise ValueError("need at least one variable")

    def label(depth: int) -> Leaf:
        return Leaf(1 if depth % 2 == 1 else -1)

    def grow(k: int) -> Node:
        depth = k + 1
        if k == n - 1:
            lo, hi = label(depth), Leaf(-label(depth).label)
        else:
            lo, hi = label(depth), grow(k + 1)
        if rng.random() < 0.5:
            lo, hi = hi, lo
        return Internal(k, lo, hi)

    return DecisionTree(grow(0))


def generate_random_tree(n: int, max_depth: int, rng: np.random.Generator) -> DecisionTree:
    """Random query tree: each node splits on a fresh variable and stops
    early at random; leaf labels are independent coin flips."""
    if not 1 <= max_depth <= n:
        raise ValueError(f"max_depth must lie in [1, {n}], got {max_depth}")

    def grow(depth: int, available: list[int]) -> Node:
        stop = depth >= max_depth or not available or (depth > 0 and rng.random() < 0.3)
        if stop:
            return Leaf(int(rng.choice([-1, 1])))
        var = int(rng.choice(available))
        remaining = [i for i in available if i != var]
        return Internal(var, grow(depth + 1, remaining), grow(depth + 1, remaining))

    return DecisionTree(grow(0, list(range(n))))


def generate_truth_table(n: int, rng: np.random.Generator) -> TruthTableOracle:
    """Uniformly random +/-1 labels over all 2^n points."""
    if not 1 <= n <= 20:
        raise ValueError(f"dense tables support n in [1, 20], got {n}")
    return TruthTableOracle(rng.choice(np.array([-1, 1], dtype=np.int8), size=1 << n))
