"""Top-down greedy induction with exact influences.

Grows a bare tree from a single leaf.  Each iteration scores every leaf
(reach probability times its most influential coordinate), splits the
highest-scoring leaf on that coordinate, and stops as soon as the
majority-labeled completion of the current bare tree disagrees with the
target with probability at most epsilon.  Ties in score break toward the
lowest leaf identifier, then the lowest coordinate index, so runs are
reproducible.

The returned trace carries, per step, the chosen leaf and coordinate, the
score, the potential ("cost") before and after the split, and the exact
completion error before the split; the verification suite replays these
against independently recomputed values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    BareLeaf,
    BareTree,
    DecisionTree,
    ProductDistribution,
    Restriction,
    TargetOracle,
    TreeOracle,
    average_depth,
    max_depth,
    split_leaf,
)
from .exact import (
    DEFAULT_MAX_FREE_COORDS,
    SubfunctionView,
    f_completion,
    subfunction_summary,
)

__all__ = [
    "GreedyStep",
    "GreedyResult",
    "build_topdown_exact",
    "size_bound_log",
]


@dataclass(frozen=True)
class GreedyStep:
    """One split: the tree had ``leaf_count`` leaves when it was chosen."""

    step: int
    leaf_count: int
    leaf_id: int
    coord: int
    score: float
    cost_before: float
    cost_after: float
    completion_error: float


@dataclass(frozen=True)
class GreedyResult:
    tree: DecisionTree
    bare: BareTree
    steps: tuple[GreedyStep, ...]
    terminated: bool
    final_error: float
    epsilon: float

    @property
    def splits(self) -> int:
        return len(self.steps)


def size_bound_log(epsilon: float, depth: int, avg_depth: float) -> float:
    """Natural log of the guaranteed size bound for the exact greedy builder.

    The bound is max((e * avg/(eps * depth))^(avg*depth), e^(avg*depth));
    it is astronomically loose at small scale, so comparisons are done in
    log space.  A constant target (depth 0) is returned as log(1).
    """
    if depth == 0:
        return 0.0
    dd = avg_depth * depth
    return max(dd * (1.0 + math.log(avg_depth) - math.log(epsilon) - math.log(depth)), dd)


@dataclass
class _LeafInfo:
    restriction: Restriction
    reach: float
    mu_plus: float
    leaf_cost: float  # reach * total influence
    score: float
    coord: int

    @property
    def error_mass(self) -> float:
        return self.reach * min(self.mu_plus, 1.0 - self.mu_plus)


def _leaf_info(
    oracle: TargetOracle,
    dist: ProductDistribution,
    restriction: Restriction,
    max_free: int,
) -> _LeafInfo:
    view = SubfunctionView(oracle, restriction)
    summary = subfunction_summary(view, dist, max_free)
    reach = dist.reach_probability(restriction)
    free = view.free_coords()
    if free:
        best = max(free, key=lambda i: (summary.influences[i], -i))
        score = reach * float(summary.influences[best])
    else:
        best, score = -1, 0.0
    return _LeafInfo(
        restriction=restriction,
        reach=reach,
        mu_plus=summary.positive_mass,
        leaf_cost=reach * summary.total_influence,
        score=score,
        coord=best,
    )


def build_topdown_exact(
    target: DecisionTree | TargetOracle,
    dist: ProductDistribution,
    epsilon: float,
    max_splits: int | None = None,
    max_free: int = DEFAULT_MAX_FREE_COORDS,
) -> GreedyResult:
    """Run the greedy heuristic with exact influences until the completion
    is an epsilon-approximation (or ``max_splits`` is exhausted, in which
    case the partial result is flagged ``terminated=False``).

    ``max_splits`` defaults to the guaranteed size bound when the target is
    given as a tree (whose depths are then known), capped by 2^n, the
    structural maximum.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    if isinstance(target, DecisionTree):
        oracle: TargetOracle = TreeOracle(target, dist.n)
    else:
        oracle = target
    n = dist.n

    structural = (1 << n) if n < 62 else (1 << 62)
    if max_splits is None:
        if isinstance(target, DecisionTree):
            log_bound = size_bound_log(epsilon, max_depth(target), average_depth(target, dist))
            max_splits = structural if log_bound > 62 * math.log(2) else min(
                structural, math.ceil(math.exp(log_bound))
            )
        else:
            max_splits = structural

    leaves: dict[int, _LeafInfo] = {0: _leaf_info(oracle, dist, Restriction(), max_free)}
    bare = BareTree(BareLeaf(0))
    next_id = 1
    steps: list[GreedyStep] = []

    while True:
        completion_error = sum(info.error_mass for info in leaves.values())
        if completion_error <= epsilon:
            terminated = True
            break
        if len(steps) >= max_splits:
            terminated = False
            break

        best_id = min(leaves, key=lambda lid: (-leaves[lid].score, lid))
        best = leaves[best_id]
        # error <= cost and all-zero scores force cost = 0, so the guard
        # above must already have fired; a split with score 0 is a bug.
        if best.score <= 0.0:
            raise AssertionError(
                f"no positive-score leaf but completion error {completion_error} > {epsilon}"
            )

        cost_before = sum(info.leaf_cost for info in leaves.values())
        lo_id, hi_id = next_id, next_id + 1
        next_id += 2
        bare = split_leaf(bare, best_id, best.coord, lo_id, hi_id)
        del leaves[best_id]
        leaves[lo_id] = _leaf_info(oracle, dist, best.restriction.extend(best.coord, 0), max_free)
        leaves[hi_id] = _leaf_info(oracle, dist, best.restriction.extend(best.coord, 1), max_free)
        cost_after = sum(info.leaf_cost for info in leaves.values())

        steps.append(
            GreedyStep(
                step=len(steps) + 1,
                leaf_count=len(leaves) - 1,
                leaf_id=best_id,
                coord=best.coord,
                score=best.score,
                cost_before=cost_before,
                cost_after=cost_after,
                completion_error=completion_error,
            )
        )

    tree = f_completion(bare, oracle, dist, max_free)
    return GreedyResult(
        tree=tree,
        bare=bare,
        steps=tuple(steps),
        terminated=terminated,
        final_error=completion_error,
        epsilon=epsilon,
    )
