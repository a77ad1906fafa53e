"""Sample-driven top-down induction: schedules, estimators, and the builder.

The practical builder never computes an exact probability.  It maintains
three kinds of sample pools, each with a per-step floor that grows with the
step counter j so that a union bound over all steps stays below the failure
budget delta:

* per-variable pools of labeled pairs (x, x') with x' equal to x except
  that one coordinate is redrawn -- these feed the split-score estimates;
* a pool of labeled points for majority leaf labeling;
* an independent pool of labeled points for the stopping test.

Pools are stored partitioned across the current leaves (each sample lives
at the leaf its first element reaches).  When a leaf splits, its samples
are re-routed to the children; fresh draws are routed from the root, so
per-leaf counts follow the correct conditional law while the pool totals
meet the floors exactly.

A pair contributes to a leaf's score estimate only when both endpoints
reach the leaf and the labels disagree.  If the redrawn coordinate is not
queried on the leaf's path, both endpoints reach it together; if it is
queried, the endpoints either coincide (labels equal) or separate, so the
contribution is zero either way and such pairs are skipped.  The estimate
divides by the full per-variable pool size, which makes it an unbiased
estimator of the true score -- a property the test suite checks by Monte
Carlo against the exact engine.

Termination: label every leaf by majority, count stopping-pool points that
disagree with their leaf's label, and stop once the total mismatch fraction
is at most 3/4 of the working accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    BareLeaf,
    BareTree,
    DecisionTree,
    Internal,
    Leaf,
    Node,
    ProductDistribution,
    TargetOracle,
    route_codes,
    split_leaf,
    unpack_bits,
)

__all__ = [
    "PairBatch",
    "PracticalResult",
    "PracticalStep",
    "UsageRow",
    "build_topdown_practical",
    "draw_pair",
    "draw_pair_batch",
    "empirical_error",
    "error_schedule",
    "labeling_schedule",
    "majority_label",
    "pair_schedule",
    "score_estimate",
]


# ---------------------------------------------------------------------------
# Sample-count schedules
# ---------------------------------------------------------------------------


def _check_step_params(j: int, epsilon: float, delta: float) -> None:
    if j < 1:
        raise ValueError(f"step counter must be >= 1, got {j}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0,1), got {delta}")


def pair_schedule(j: int, delta: float, epsilon: float, n: int) -> int:
    """Per-variable floor on the score-estimation pair pool at step j.

    ceil( 12(j+1)n/eps * ln(4 j^2 (j+1) n / delta) ); nondecreasing in j.
    """
    _check_step_params(j, epsilon, delta)
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return math.ceil(12.0 * (j + 1) * n / epsilon * math.log(4.0 * j * j * (j + 1) * n / delta))


def labeling_schedule(j: int, epsilon: float, delta: float) -> int:
    """Floor on the leaf-labeling pool at step j.

    ceil( 128((j+1) ln 2 + ln(16 j^2 / delta)) / eps^2 ).  Sized so that the
    majority labeling's excess error over the best labeling is at most
    eps/8 with probability 1 - delta/(8 j^2).
    """
    _check_step_params(j, epsilon, delta)
    return math.ceil(
        128.0 * ((j + 1) * math.log(2.0) + math.log(16.0 * j * j / delta)) / (epsilon * epsilon)
    )


def error_schedule(j: int, epsilon: float, delta: float) -> int:
    """Floor on the stopping-test pool at step j: ceil( 32/eps^2 * ln(16 j^2/delta) )."""
    _check_step_params(j, epsilon, delta)
    return math.ceil(32.0 / (epsilon * epsilon) * math.log(16.0 * j * j / delta))


# ---------------------------------------------------------------------------
# Pair sampling and pure estimators
# ---------------------------------------------------------------------------


def draw_pair_batch(
    oracle: TargetOracle,
    dist: ProductDistribution,
    i: int,
    rng: np.random.Generator,
    count: int,
) -> "PairBatch":
    """Draw ``count`` labeled pairs for coordinate i.

    Each pair is an independent x ~ mu together with x' equal to x except
    that coordinate i is redrawn from its marginal.
    """
    if not 0 <= i < dist.n:
        raise ValueError(f"coordinate {i} out of range for n={dist.n}")
    x = dist.draw_codes(rng, count)
    redrawn = (rng.random(count) < dist.biases[i]).astype(np.uint64)
    alt = (x & ~np.uint64(1 << i)) | (redrawn << np.uint64(i))
    return PairBatch(x, oracle.label_codes(x), alt, oracle.label_codes(alt))


def draw_pair(
    oracle: TargetOracle,
    dist: ProductDistribution,
    i: int,
    rng: np.random.Generator,
) -> tuple[tuple[np.ndarray, int], tuple[np.ndarray, int]]:
    """Single labeled pair ((x, f(x)), (x', f(x'))) as 0/1 vectors."""
    batch = draw_pair_batch(oracle, dist, i, rng, 1)
    x = unpack_bits(batch.x_codes, dist.n)[0]
    alt = unpack_bits(batch.alt_codes, dist.n)[0]
    return (x, int(batch.x_labels[0])), (alt, int(batch.alt_labels[0]))


@dataclass(frozen=True)
class PairBatch:
    """Labeled sample pairs, packed; both sides kept for the pure estimator."""

    x_codes: np.ndarray
    x_labels: np.ndarray
    alt_codes: np.ndarray
    alt_labels: np.ndarray

    def __len__(self) -> int:
        return len(self.x_codes)


def score_estimate(pairs: PairBatch, leaf_id: int, tree: BareTree) -> float:
    """Fraction of pairs whose endpoints both reach ``leaf_id`` with
    disagreeing labels; an unbiased estimate of that leaf's score for the
    pair coordinate.
    """
    if len(pairs) == 0:
        raise ValueError("empty pair multiset")
    at_leaf = (route_codes(tree, pairs.x_codes) == leaf_id) & (
        route_codes(tree, pairs.alt_codes) == leaf_id
    )
    hits = at_leaf & (pairs.x_labels != pairs.alt_labels)
    return float(np.count_nonzero(hits)) / len(pairs)


def majority_label(labels: Sequence[int] | np.ndarray) -> int:
    """Majority of +/-1 labels; ties and the empty set give +1."""
    total = int(np.sum(np.asarray(labels, dtype=np.int64))) if len(labels) else 0
    return 1 if total >= 0 else -1


def empirical_error(
    leaf_labels: Mapping[int, int],
    samples_by_leaf: Mapping[int, np.ndarray | Sequence[int]],
) -> tuple[int, int]:
    """Total mismatches and total count of stopping-pool labels per leaf."""
    mismatches = 0
    total = 0
    for leaf_id, labels in samples_by_leaf.items():
        arr = np.asarray(labels, dtype=np.int64)
        mismatches += int(np.count_nonzero(arr != leaf_labels[leaf_id]))
        total += len(arr)
    return mismatches, total


# ---------------------------------------------------------------------------
# Builder state
# ---------------------------------------------------------------------------


class _PairBucket:
    """Pairs owned by one leaf for one coordinate: codes of x plus a
    disagreement flag.  The redrawn endpoint is never needed again: when
    the coordinate is off the path it routes with x, and when it is on the
    path the pair cannot contribute."""

    __slots__ = ("codes", "disagree", "hits")

    def __init__(self, codes: np.ndarray, disagree: np.ndarray):
        self.codes = codes
        self.disagree = disagree
        self.hits = int(np.count_nonzero(disagree))

    def append(self, codes: np.ndarray, disagree: np.ndarray) -> None:
        self.codes = np.concatenate([self.codes, codes])
        self.disagree = np.concatenate([self.disagree, disagree])
        self.hits += int(np.count_nonzero(disagree))


class _LeafState:
    __slots__ = ("path", "ll_codes", "ll_labels", "ll_pos", "ee_codes", "ee_labels", "ee_pos", "pairs")

    def __init__(self, path: frozenset[int], n: int):
        self.path = path
        self.ll_codes = np.empty(0, dtype=np.uint64)
        self.ll_labels = np.empty(0, dtype=np.int8)
        self.ll_pos = 0
        self.ee_codes = np.empty(0, dtype=np.uint64)
        self.ee_labels = np.empty(0, dtype=np.int8)
        self.ee_pos = 0
        self.pairs = {i: _PairBucket(np.empty(0, dtype=np.uint64), np.empty(0, dtype=bool)) for i in range(n)}

    @property
    def label(self) -> int:
        return 1 if 2 * self.ll_pos >= len(self.ll_labels) else -1

    @property
    def mismatches(self) -> int:
        return len(self.ee_labels) - self.ee_pos if self.label == 1 else self.ee_pos


@dataclass(frozen=True)
class PracticalStep:
    """Decision record for one loop iteration."""

    step: int
    leaf_count: int
    mismatches: int
    error_samples: int
    terminated: bool
    split_leaf: int | None
    split_coord: int | None
    best_estimate: float | None


@dataclass(frozen=True)
class UsageRow:
    """Cumulative sampling effort after the pools were topped up for step j."""

    step: int
    leaves: int
    pair_floor: int
    labeling_floor: int
    error_floor: int
    label_queries: int
    random_draws: int


@dataclass(frozen=True)
class PracticalResult:
    tree: DecisionTree
    bare: BareTree
    steps: tuple[PracticalStep, ...]
    usage: tuple[UsageRow, ...]
    terminated: bool
    stop_reason: str
    label_queries: int
    random_draws: int
    epsilon: float
    delta: float
    seed: int

    @property
    def splits(self) -> int:
        return sum(1 for s in self.steps if s.split_leaf is not None)


_LL_STREAM, _EE_STREAM, _PAIR_STREAM = 1, 2, 3


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _group_by_leaf(leaf_ids: np.ndarray) -> dict[int, np.ndarray]:
    order = np.argsort(leaf_ids, kind="stable")
    ids, starts = np.unique(leaf_ids[order], return_index=True)
    bounds = list(starts) + [len(order)]
    return {int(ids[k]): order[bounds[k] : bounds[k + 1]] for k in range(len(ids))}


def build_topdown_practical(
    oracle: TargetOracle,
    dist: ProductDistribution,
    epsilon: float,
    delta: float,
    seed: int,
    max_splits: int | None = None,
) -> PracticalResult:
    """Parameter-free sample-driven greedy induction.

    Derived random streams are keyed by (purpose, step, coordinate), so a
    fixed ``seed`` reproduces the run bit for bit.  Returns the majority
    labeling of the grown bare tree; ``terminated`` is False when
    ``max_splits`` ran out (or no splittable leaf remained) before the
    stopping test passed.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0,1), got {delta}")
    if seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    n = dist.n
    if oracle.n != n:
        raise ValueError(f"oracle has n={oracle.n}, distribution has n={n}")
    if max_splits is None:
        max_splits = 1 << min(n, 62)

    bare = BareTree(BareLeaf(0))
    states: dict[int, _LeafState] = {0: _LeafState(frozenset(), n)}
    next_id = 1
    pool_totals = {i: 0 for i in range(n)}
    label_queries = 0
    random_draws = 0
    steps: list[PracticalStep] = []
    usage: list[UsageRow] = []

    def replenish(j_prev: int, j: int) -> None:
        nonlocal label_queries, random_draws
        prev_ll = labeling_schedule(j_prev, epsilon, delta) if j_prev >= 1 else 0
        prev_ee = error_schedule(j_prev, epsilon, delta) if j_prev >= 1 else 0
        prev_pairs = pair_schedule(j_prev, delta, epsilon, n) if j_prev >= 1 else 0
        d_ll = labeling_schedule(j, epsilon, delta) - prev_ll
        d_ee = error_schedule(j, epsilon, delta) - prev_ee
        d_pairs = pair_schedule(j, delta, epsilon, n) - prev_pairs

        if d_ll > 0:
            rng = _stream(seed, _LL_STREAM, j)
            codes = dist.draw_codes(rng, d_ll)
            labels = oracle.label_codes(codes)
            label_queries += d_ll
            random_draws += d_ll
            for leaf_id, idx in _group_by_leaf(route_codes(bare, codes)).items():
                st = states[leaf_id]
                st.ll_codes = np.concatenate([st.ll_codes, codes[idx]])
                st.ll_labels = np.concatenate([st.ll_labels, labels[idx]])
                st.ll_pos += int(np.count_nonzero(labels[idx] > 0))
        if d_ee > 0:
            rng = _stream(seed, _EE_STREAM, j)
            codes = dist.draw_codes(rng, d_ee)
            labels = oracle.label_codes(codes)
            label_queries += d_ee
            random_draws += d_ee
            for leaf_id, idx in _group_by_leaf(route_codes(bare, codes)).items():
                st = states[leaf_id]
                st.ee_codes = np.concatenate([st.ee_codes, codes[idx]])
                st.ee_labels = np.concatenate([st.ee_labels, labels[idx]])
                st.ee_pos += int(np.count_nonzero(labels[idx] > 0))
        if d_pairs > 0:
            for i in range(n):
                batch = draw_pair_batch(oracle, dist, i, _stream(seed, _PAIR_STREAM, j, i), d_pairs)
                label_queries += 2 * d_pairs
                random_draws += 2 * d_pairs
                disagree = batch.x_labels != batch.alt_labels
                for leaf_id, idx in _group_by_leaf(route_codes(bare, batch.x_codes)).items():
                    states[leaf_id].pairs[i].append(batch.x_codes[idx], disagree[idx])
                pool_totals[i] += d_pairs

    j = 1
    replenish(0, 1)
    usage.append(
        UsageRow(
            step=1,
            leaves=1,
            pair_floor=pair_schedule(1, delta, epsilon, n),
            labeling_floor=labeling_schedule(1, epsilon, delta),
            error_floor=error_schedule(1, epsilon, delta),
            label_queries=label_queries,
            random_draws=random_draws,
        )
    )

    terminated = False
    stop_reason = "stopping_test"
    while True:
        mismatches = sum(st.mismatches for st in states.values())
        error_samples = sum(len(st.ee_labels) for st in states.values())
        if mismatches <= 0.75 * epsilon * error_samples:
            steps.append(
                PracticalStep(j, len(states), mismatches, error_samples, True, None, None, None)
            )
            terminated = True
            break
        if len(states) - 1 >= max_splits:
            steps.append(
                PracticalStep(j, len(states), mismatches, error_samples, False, None, None, None)
            )
            stop_reason = "max_splits"
            break

        best: tuple[float, int, int] | None = None  # (estimate, leaf, coord)
        for leaf_id in sorted(states):
            st = states[leaf_id]
            for i in range(n):
                if i in st.path:
                    continue
                est = st.pairs[i].hits / pool_totals[i]
                if best is None or est > best[0]:
                    best = (est, leaf_id, i)
        if best is None:
            steps.append(
                PracticalStep(j, len(states), mismatches, error_samples, False, None, None, None)
            )
            stop_reason = "no_splittable_leaf"
            break

        est, split_id, coord = best
        steps.append(
            PracticalStep(j, len(states), mismatches, error_samples, False, split_id, coord, est)
        )

        lo_id, hi_id = next_id, next_id + 1
        next_id += 2
        bare = split_leaf(bare, split_id, coord, lo_id, hi_id)
        parent = states.pop(split_id)
        lo = _LeafState(parent.path | {coord}, n)
        hi = _LeafState(parent.path | {coord}, n)
        side = ((parent.ll_codes >> np.uint64(coord)) & np.uint64(1)).astype(bool)
        for st, mask in ((lo, ~side), (hi, side)):
            st.ll_codes = parent.ll_codes[mask]
            st.ll_labels = parent.ll_labels[mask]
            st.ll_pos = int(np.count_nonzero(st.ll_labels > 0))
        side = ((parent.ee_codes >> np.uint64(coord)) & np.uint64(1)).astype(bool)
        for st, mask in ((lo, ~side), (hi, side)):
            st.ee_codes = parent.ee_codes[mask]
            st.ee_labels = parent.ee_labels[mask]
            st.ee_pos = int(np.count_nonzero(st.ee_labels > 0))
        for i, bucket in parent.pairs.items():
            side = ((bucket.codes >> np.uint64(coord)) & np.uint64(1)).astype(bool)
            lo.pairs[i] = _PairBucket(bucket.codes[~side], bucket.disagree[~side])
            hi.pairs[i] = _PairBucket(bucket.codes[side], bucket.disagree[side])
        states[lo_id] = lo
        states[hi_id] = hi

        j += 1
        replenish(j - 1, j)
        usage.append(
            UsageRow(
                step=j,
                leaves=len(states),
                pair_floor=pair_schedule(j, delta, epsilon, n),
                labeling_floor=labeling_schedule(j, epsilon, delta),
                error_floor=error_schedule(j, epsilon, delta),
                label_queries=label_queries,
                random_draws=random_draws,
            )
        )

    labels = {leaf_id: st.label for leaf_id, st in states.items()}

    def relabel(node: Node) -> Node:
        if isinstance(node, Internal):
            return Internal(node.var, relabel(node.lo), relabel(node.hi))
        assert isinstance(node, BareLeaf)
        return Leaf(labels[node.id])

    return PracticalResult(
        tree=DecisionTree(relabel(bare.root)),
        bare=bare,
        steps=tuple(steps),
        usage=tuple(usage),
        terminated=terminated,
        stop_reason=stop_reason if not terminated else "stopping_test",
        label_queries=label_queries,
        random_draws=random_draws,
        epsilon=epsilon,
        delta=delta,
        seed=seed,
    )
