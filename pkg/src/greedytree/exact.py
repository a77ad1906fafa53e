"""Exact measure-theoretic quantities, computed by enumeration.

Everything here conditions on a :class:`Restriction` (the queries fixed on
a root-to-leaf path) and enumerates the remaining free coordinates, weighted
by the product measure.  The central notion is coordinate influence under
re-randomization,

    influence_i(f) = Pr[f(x) != f(x')],   x' = x with x_i redrawn,

which has the closed form 2 p_i (1 - p_i) * Pr[f(..,x_i=0) != f(..,x_i=1)]:
the redrawn bit must actually change (probability 2 p_i (1 - p_i)) and the
change must matter.  The test suite checks this closed form against a direct
enumeration of the defining probability.  The flip-based variant, which
drops the 2 p q factor, is also exposed; the two differ materially away
from the uniform distribution and the verification suite records which
inequalities hold for which variant.

Enumeration refuses instances with more than ``DEFAULT_MAX_FREE_COORDS``
free coordinates (2^24 evaluations keeps a call under a second); callers
may raise the cap explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    BareLeaf,
    BareTree,
    DecisionTree,
    Internal,
    Leaf,
    Node,
    ProductDistribution,
    Restriction,
    TargetOracle,
    leaf_paths,
    route_codes,
)

__all__ = [
    "DEFAULT_MAX_FREE_COORDS",
    "EnumerationLimitError",
    "SubfunctionView",
    "SubfunctionSummary",
    "cost",
    "f_completion",
    "completion_labels",
    "flip_influence",
    "influence",
    "influences",
    "leaf_error",
    "positive_mass",
    "score",
    "subfunction_summary",
    "total_influence",
    "tree_error",
    "variance",
]

DEFAULT_MAX_FREE_COORDS = 24


class EnumerationLimitError(RuntimeError):
    """Exact evaluation would enumerate more free coordinates than allowed."""


@dataclass(frozen=True)
class SubfunctionView:
    """The target restricted to the region of a restriction.

    Probabilities are conditional on the restriction; the free coordinates
    are everything the restriction leaves open.
    """

    oracle: TargetOracle
    restriction: Restriction = Restriction()

    def __post_init__(self):
        for i, _ in self.restriction.items():
            if i >= self.oracle.n:
                raise ValueError(f"restricted coordinate {i} out of range for n={self.oracle.n}")

    @property
    def n(self) -> int:
        return self.oracle.n

    def free_coords(self) -> list[int]:
        fixed = self.restriction.coordinates()
        return [i for i in range(self.n) if i not in fixed]


def _check_budget(m: int, max_free: int) -> None:
    if m > max_free:
        raise EnumerationLimitError(
            f"{m} free coordinates exceeds the enumeration cap of {max_free}"
        )


def _enumerate(view: SubfunctionView, dist: ProductDistribution, max_free: int):
    """Codes and conditional weights for every assignment of the free coords.

    Bit t of the enumeration index corresponds to free coordinate ``free[t]``.
    """
    if dist.n != view.n:
        raise ValueError(f"distribution has n={dist.n}, oracle has n={view.n}")
    free = view.free_coords()
    _check_budget(len(free), max_free)
    k = np.arange(1 << len(free), dtype=np.uint64)
    codes = np.full(len(k), view.restriction.base_code(), dtype=np.uint64)
    weights = np.ones(1)
    for t, i in enumerate(free):
        codes |= ((k >> np.uint64(t)) & np.uint64(1)) << np.uint64(i)
        p = dist.biases[i]
        weights = np.concatenate([weights * (1.0 - p), weights * p])
    return free, codes, weights


@dataclass(frozen=True)
class SubfunctionSummary:
    """Everything the greedy builder needs about one leaf's subfunction."""

    positive_mass: float
    influences: np.ndarray
    flip_influences: np.ndarray

    @property
    def variance(self) -> float:
        return 4.0 * self.positive_mass * (1.0 - self.positive_mass)

    @property
    def error(self) -> float:
        return min(self.positive_mass, 1.0 - self.positive_mass)

    @property
    def total_influence(self) -> float:
        return float(np.sum(self.influences))


def subfunction_summary(
    view: SubfunctionView,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> SubfunctionSummary:
    """Positive mass plus all coordinate influences from one enumeration.

    Restricted coordinates are fixed, so their influence is exactly 0 and no
    work is spent on them.
    """
    free, codes, weights = _enumerate(view, dist, max_free)
    labels = view.oracle.label_codes(codes)
    mu_plus = float(np.sum(weights[labels > 0]))
    infl = np.zeros(view.n)
    flip = np.zeros(view.n)
    for t, i in enumerate(free):
        lab = labels.reshape(-1, 2, 1 << t)
        wgt = weights.reshape(-1, 2, 1 << t)
        disagree = lab[:, 0, :] != lab[:, 1, :]
        p = dist.biases[i]
        # weight of the other coordinates = bit-0 slice with its (1-p) factor removed
        d = float(np.sum(wgt[:, 0, :][disagree])) / (1.0 - p)
        flip[i] = d
        infl[i] = 2.0 * p * (1.0 - p) * d
    return SubfunctionSummary(mu_plus, infl, flip)


# ---------------------------------------------------------------------------
# Pointwise operations (thin wrappers over the summary)
# ---------------------------------------------------------------------------


def influence(
    view: SubfunctionView,
    dist: ProductDistribution,
    i: int,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    """Re-randomization influence of coordinate i on the subfunction.

    Lies in [0, 1/2] since 2p(1-p) <= 1/2; exactly 0 for a restricted
    coordinate.
    """
    if not 0 <= i < view.n:
        raise ValueError(f"coordinate {i} out of range for n={view.n}")
    if i in view.restriction:
        return 0.0
    return float(subfunction_summary(view, dist, max_free).influences[i])


def flip_influence(
    view: SubfunctionView,
    dist: ProductDistribution,
    i: int,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    """Probability that forcing coordinate i to its two values disagrees.

    This is the bit-flip notion of influence (no 2p(1-p) factor); kept for
    the verification suite's normalization probes.
    """
    if not 0 <= i < view.n:
        raise ValueError(f"coordinate {i} out of range for n={view.n}")
    if i in view.restriction:
        return 0.0
    return float(subfunction_summary(view, dist, max_free).flip_influences[i])


def influences(
    view: SubfunctionView,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> np.ndarray:
    return subfunction_summary(view, dist, max_free).influences


def total_influence(
    view: SubfunctionView,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    return subfunction_summary(view, dist, max_free).total_influence


def positive_mass(
    view: SubfunctionView,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    """Conditional probability that the subfunction equals +1."""
    free, codes, weights = _enumerate(view, dist, max_free)
    labels = view.oracle.label_codes(codes)
    return float(np.sum(weights[labels > 0]))


def variance(
    view: SubfunctionView,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    """Variance of the +/-1 subfunction: 4 mu (1 - mu), mu = Pr[f = +1]."""
    mu = positive_mass(view, dist, max_free)
    return 4.0 * mu * (1.0 - mu)


def leaf_error(
    view: SubfunctionView,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    """Minority class mass: the best any constant label can do here."""
    mu = positive_mass(view, dist, max_free)
    return min(mu, 1.0 - mu)


# ---------------------------------------------------------------------------
# Bare-tree quantities
# ---------------------------------------------------------------------------


def _leaf_views(bare: BareTree, oracle: TargetOracle) -> list[tuple[int, Restriction, SubfunctionView]]:
    out = []
    for restriction, leaf in leaf_paths(bare):
        assert isinstance(leaf, BareLeaf)
        out.append((leaf.id, restriction, SubfunctionView(oracle, restriction)))
    return out


def score(
    bare: BareTree,
    leaf_id: int,
    oracle: TargetOracle,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> tuple[float, int]:
    """Reach probability times the leaf's largest coordinate influence.

    Returns ``(value, coordinate)`` with ties broken toward the lowest
    coordinate index.  A leaf with no free coordinates scores 0 and reports
    coordinate -1.
    """
    for lid, restriction, view in _leaf_views(bare, oracle):
        if lid != leaf_id:
            continue
        free = view.free_coords()
        p_v = dist.reach_probability(restriction)
        if not free:
            return 0.0, -1
        infl = subfunction_summary(view, dist, max_free).influences
        best = max(free, key=lambda i: (infl[i], -i))
        return p_v * float(infl[best]), best
    raise KeyError(f"no leaf with identifier {leaf_id}")


def cost(
    bare: BareTree,
    oracle: TargetOracle,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    """Sum over leaves of reach probability times total influence.

    This potential decreases by exactly the split leaf's score at every
    greedy step, and upper-bounds the completion's error.
    """
    total = 0.0
    for _, restriction, view in _leaf_views(bare, oracle):
        summary = subfunction_summary(view, dist, max_free)
        total += dist.reach_probability(restriction) * summary.total_influence
    return total


def completion_labels(
    bare: BareTree,
    oracle: TargetOracle,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> dict[int, int]:
    """Conditional majority label per leaf; exact ties resolve to +1."""
    labels: dict[int, int] = {}
    for lid, _, view in _leaf_views(bare, oracle):
        mu = positive_mass(view, dist, max_free)
        labels[lid] = 1 if mu >= 0.5 else -1
    return labels


def f_completion(
    bare: BareTree,
    oracle: TargetOracle,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> DecisionTree:
    """Label every leaf with the target's conditional majority.

    Among all labelings of this bare tree, the result minimizes the exact
    disagreement probability with the target.
    """
    labels = completion_labels(bare, oracle, dist, max_free)

    def walk(node: Node) -> Node:
        if isinstance(node, Internal):
            return Internal(node.var, walk(node.lo), walk(node.hi))
        assert isinstance(node, BareLeaf)
        return Leaf(labels[node.id])

    return DecisionTree(walk(bare.root))


def tree_error(
    tree: DecisionTree,
    oracle: TargetOracle,
    dist: ProductDistribution,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> float:
    """Exact disagreement probability Pr[tree(x) != f(x)] by enumeration."""
    view = SubfunctionView(oracle)
    _, codes, weights = _enumerate(view, dist, max_free)
    predicted = route_codes(tree, codes)
    actual = oracle.label_codes(codes)
    return float(np.sum(weights[predicted != actual]))
