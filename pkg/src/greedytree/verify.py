"""Brute-force checkers for the inequalities the greedy analysis rests on.

Each checker validates one statement on a concrete instance by independent
enumeration (never by trusting the builders' cached values) and returns a
:class:`CheckReport`.  Violations carry the instance serialized in the tree
and distribution file formats so they replay as regression tests.

Influence normalization.  Two notions of coordinate influence circulate:
the re-randomization form used by the builders (redraw the coordinate;
carries a 2p(1-p) factor) and the flip form (force the coordinate both
ways).  They coincide up to a factor 2 on the uniform distribution but
diverge on biased ones, and no single normalization satisfies every
inequality below:

* the chain influence <= 2 * error <= variance and the bound
  total influence <= depth * variance hold for the re-randomization form
  and fail for the flip form on biased near-dictators;
* the imported bound max-influence >= variance / average-depth holds for
  the flip form, fails for the re-randomization form already on the
  uniform dictator (1/2 < 1), and holds for the re-randomization form
  with an extra factor 2 in the denominator (tight: biased dictators and
  AND-chains achieve equality).

:func:`check_max_influence_bound` therefore verifies the flip form as
stated plus the factor-2 re-randomization variant, and records which forms
held; :func:`dictator_normalization_probe` exercises the designated
boundary instance.  The per-step score lower bound inherits the same
factor: the safe form is eps/(j * avg_depth), half the nominal one, and
:func:`check_score_lower_bounds` tracks both.
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
    TargetOracle,
    TreeOracle,
    average_depth,
    leaf_paths,
    max_depth,
    route_codes,
    serialize_distribution,
    serialize_tree,
    size,
    split_leaf,
)
from .exact import (
    SubfunctionView,
    cost,
    f_completion,
    subfunction_summary,
    tree_error,
)
from .greedy import GreedyResult, build_topdown_exact, size_bound_log
from .sampling import draw_pair_batch
from .targets import (
    generate_balanced_target,
    generate_path_target,
    generate_random_tree,
    generate_truth_table,
)

__all__ = [
    "CheckReport",
    "Instance",
    "IDENTITY_TOL",
    "check_cost_telescoping",
    "check_error_cost_bound",
    "check_estimator_unbiasedness",
    "check_influence_error_variance_chain",
    "check_max_influence_bound",
    "check_score_lower_bounds",
    "check_size_bound",
    "check_total_influence_bounds",
    "dictator_normalization_probe",
    "generate_instance",
    "run_property_suite",
]

IDENTITY_TOL = 1e-10
ARITHMETIC_TOL = 1e-12

_INSTANCE_SALT = 901

TARGET_KINDS = ("tree", "balanced", "path", "table")
BIAS_KINDS = ("uniform", "fixed", "random")


@dataclass(frozen=True)
class Instance:
    seed: int
    kind: str
    dist: ProductDistribution
    oracle: TargetOracle
    target_tree: DecisionTree | None


@dataclass(frozen=True)
class CheckReport:
    check: str
    seed: int
    passed: bool
    detail: str
    witness: dict[str, str] | None = None


def _table_as_tree(oracle: TargetOracle) -> DecisionTree:
    """Materialize any oracle as a complete tree (for witness replay)."""
    n = oracle.n
    labels = oracle.label_codes(np.arange(1 << n, dtype=np.uint64))

    def grow(var: int, code: int) -> Node:
        if var == n:
            return Leaf(int(labels[code]))
        return Internal(var, grow(var + 1, code), grow(var + 1, code | (1 << var)))

    return DecisionTree(grow(0, 0))


def _witness(instance: Instance) -> dict[str, str]:
    tree = instance.target_tree or _table_as_tree(instance.oracle)
    return {
        "target.json": serialize_tree(tree),
        "dist.json": serialize_distribution(instance.dist),
    }


def generate_instance(
    seed: int,
    max_n: int = 6,
    kinds: tuple[str, ...] = TARGET_KINDS,
    bias_kinds: tuple[str, ...] = BIAS_KINDS,
) -> Instance:
    """Reproducible random instance: a target plus a product distribution."""
    rng = np.random.default_rng(np.random.SeedSequence([_INSTANCE_SALT, seed]))
    n = int(rng.integers(1, max_n + 1))
    bias_kind = bias_kinds[int(rng.integers(len(bias_kinds)))]
    if bias_kind == "uniform":
        dist = ProductDistribution([0.5] * n)
    elif bias_kind == "fixed":
        dist = ProductDistribution([float(rng.uniform(0.1, 0.9))] * n)
    else:
        dist = ProductDistribution(rng.uniform(0.1, 0.9, size=n))
    kind = kinds[int(rng.integers(len(kinds)))]
    tree: DecisionTree | None
    if kind == "tree":
        tree = generate_random_tree(n, int(rng.integers(1, min(n, 4) + 1)), rng)
    elif kind == "balanced":
        tree = generate_balanced_target(int(rng.integers(0, min(n, 3) + 1)), n, rng)
    elif kind == "path":
        tree = generate_path_target(n, rng)
    elif kind == "table":
        tree = None
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    if tree is None:
        oracle: TargetOracle = generate_truth_table(n, rng)
    else:
        oracle = TreeOracle(tree, n)
    return Instance(seed=seed, kind=kind, dist=dist, oracle=oracle, target_tree=tree)


# ---------------------------------------------------------------------------
# Whole-function inequalities
# ---------------------------------------------------------------------------


def _function_stats(instance: Instance):
    summary = subfunction_summary(SubfunctionView(instance.oracle), instance.dist)
    return summary


def check_total_influence_bounds(instance: Instance) -> CheckReport:
    """Total influence is at most depth * variance and at most the average
    depth of the target's tree."""
    assert instance.target_tree is not None, "needs the target as a tree"
    s = _function_stats(instance)
    d = max_depth(instance.target_tree)
    avg = average_depth(instance.target_tree, instance.dist)
    total = s.total_influence
    ok_var = total <= d * s.variance + IDENTITY_TOL
    ok_depth = total <= avg + IDENTITY_TOL
    passed = ok_var and ok_depth
    detail = f"influence={total:.12g} depth*var={d * s.variance:.12g} avg_depth={avg:.12g}"
    return CheckReport(
        "total_influence_bounds", instance.seed, passed, detail,
        None if passed else _witness(instance),
    )


def check_influence_error_variance_chain(instance: Instance) -> CheckReport:
    """Every coordinate influence is at most twice the best constant-label
    error, which is at most half the variance."""
    s = _function_stats(instance)
    worst = float(np.max(s.influences)) if len(s.influences) else 0.0
    ok_first = worst <= 2.0 * s.error + IDENTITY_TOL
    ok_second = 2.0 * s.error <= s.variance + IDENTITY_TOL
    passed = ok_first and ok_second
    detail = f"max_influence={worst:.12g} 2*error={2 * s.error:.12g} variance={s.variance:.12g}"
    return CheckReport(
        "influence_error_variance_chain", instance.seed, passed, detail,
        None if passed else _witness(instance),
    )


def check_max_influence_bound(instance: Instance) -> CheckReport:
    """Largest influence versus variance / average depth, both normalizations.

    Required: the flip form satisfies the bound as imported, and the
    re-randomization form satisfies it with denominator 2 * average depth.
    Whether the re-randomization form happens to satisfy the nominal bound
    is recorded, not required; the uniform dictator refutes it.
    """
    assert instance.target_tree is not None, "needs the target as a tree"
    s = _function_stats(instance)
    avg = average_depth(instance.target_tree, instance.dist)
    max_flip = float(np.max(s.flip_influences)) if len(s.flip_influences) else 0.0
    max_rr = float(np.max(s.influences)) if len(s.influences) else 0.0
    if avg == 0.0 or s.variance == 0.0:
        flip_ok = rr_half_ok = True
        rr_nominal_ok = True
    else:
        flip_ok = max_flip >= s.variance / avg - IDENTITY_TOL
        rr_half_ok = max_rr >= s.variance / (2.0 * avg) - IDENTITY_TOL
        rr_nominal_ok = max_rr >= s.variance / avg - IDENTITY_TOL
    passed = flip_ok and rr_half_ok
    detail = (
        f"flip={'ok' if flip_ok else 'VIOLATED'}"
        f" rerandomization_halved={'ok' if rr_half_ok else 'VIOLATED'}"
        f" rerandomization_nominal={'ok' if rr_nominal_ok else 'violated'}"
        f" max_flip={max_flip:.12g} max_rr={max_rr:.12g} var/avg={s.variance / avg if avg else 0.0:.12g}"
    )
    return CheckReport(
        "max_influence_bound", instance.seed, passed, detail,
        None if passed else _witness(instance),
    )


def dictator_normalization_probe() -> dict[str, float | bool]:
    """The single-variable boundary instance for the normalization question.

    Under the uniform distribution the dictator has variance 1 and a
    one-query tree of average depth 1, so the imported bound demands a
    maximal influence of at least 1: the flip form gives exactly 1, the
    re-randomization form only 1/2.
    """
    dist = ProductDistribution([0.5])
    tree = DecisionTree(Internal(0, Leaf(-1), Leaf(1)))
    s = subfunction_summary(SubfunctionView(TreeOracle(tree, 1)), dist)
    avg = average_depth(tree, dist)
    return {
        "variance": s.variance,
        "average_depth": avg,
        "max_flip_influence": float(np.max(s.flip_influences)),
        "max_rerandomization_influence": float(np.max(s.influences)),
        "flip_satisfies_bound": float(np.max(s.flip_influences)) >= s.variance / avg - IDENTITY_TOL,
        "rerandomization_satisfies_bound": float(np.max(s.influences)) >= s.variance / avg - IDENTITY_TOL,
        "rerandomization_satisfies_halved_bound": float(np.max(s.influences))
        >= s.variance / (2 * avg) - IDENTITY_TOL,
    }


# ---------------------------------------------------------------------------
# Trace-based checks
# ---------------------------------------------------------------------------


def _replay_prefixes(result: GreedyResult):
    """Bare trees before each recorded split, ending with the final tree."""
    bare = BareTree(BareLeaf(0))
    next_id = 1
    yield bare
    for step in result.steps:
        bare = split_leaf(bare, step.leaf_id, step.coord, next_id, next_id + 1)
        next_id += 2
        yield bare


def check_error_cost_bound(instance: Instance, result: GreedyResult) -> CheckReport:
    """Completion error never exceeds the potential, at every trace prefix.

    Both sides are recomputed from scratch through the enumeration engine.
    """
    worst = -np.inf
    for bare in _replay_prefixes(result):
        completion = f_completion(bare, instance.oracle, instance.dist)
        err = tree_error(completion, instance.oracle, instance.dist)
        c = cost(bare, instance.oracle, instance.dist)
        worst = max(worst, err - c)
        if err > c + IDENTITY_TOL:
            return CheckReport(
                "error_cost_bound", instance.seed, False,
                f"error {err:.12g} exceeds cost {c:.12g} at size {size(bare)}",
                _witness(instance),
            )
    return CheckReport(
        "error_cost_bound", instance.seed, True, f"max(error-cost)={worst:.3g}", None
    )


def check_cost_telescoping(instance: Instance, result: GreedyResult) -> CheckReport:
    """Each split lowers the potential by exactly the chosen score, and the
    recorded potentials match independent recomputation."""
    prefixes = list(_replay_prefixes(result))
    for step, bare in zip(result.steps, prefixes[:-1]):
        recomputed = cost(bare, instance.oracle, instance.dist)
        if abs(recomputed - step.cost_before) > IDENTITY_TOL:
            return CheckReport(
                "cost_telescoping", instance.seed, False,
                f"recorded cost {step.cost_before:.12g} != recomputed {recomputed:.12g}"
                f" at step {step.step}", _witness(instance),
            )
        if abs(step.cost_after - (step.cost_before - step.score)) > IDENTITY_TOL:
            return CheckReport(
                "cost_telescoping", instance.seed, False,
                f"step {step.step}: cost_after {step.cost_after:.12g} != "
                f"cost_before - score {step.cost_before - step.score:.12g}", _witness(instance),
            )
    if result.steps:
        total_drop = result.steps[0].cost_before - result.steps[-1].cost_after
        score_sum = sum(s.score for s in result.steps)
        if abs(total_drop - score_sum) > IDENTITY_TOL:
            return CheckReport(
                "cost_telescoping", instance.seed, False,
                f"summed scores {score_sum:.12g} != total cost drop {total_drop:.12g}",
                _witness(instance),
            )
    return CheckReport("cost_telescoping", instance.seed, True, f"{len(result.steps)} steps", None)


def check_score_lower_bounds(
    instance: Instance, result: GreedyResult, ground_truth: DecisionTree
) -> CheckReport:
    """Per-step floors on the chosen score.

    While the completion error exceeds epsilon the chosen score must be at
    least eps/(j * avg_depth) (the normalization-consistent constant; the
    nominal floor carries a further factor 2 and is tracked separately).
    Unconditionally the score is at least cost/(j * depth * avg_depth).
    """
    d_opt = max_depth(ground_truth)
    avg_opt = average_depth(ground_truth, instance.dist)
    eps = result.epsilon
    nominal_violations = 0
    for step in result.steps:
        j = step.leaf_count
        if step.completion_error > eps:
            if avg_opt > 0 and step.score < eps / (j * avg_opt) - IDENTITY_TOL:
                return CheckReport(
                    "score_lower_bounds", instance.seed, False,
                    f"step {step.step}: score {step.score:.12g} below halved error floor "
                    f"{eps / (j * avg_opt):.12g}", _witness(instance),
                )
            if avg_opt > 0 and step.score < 2.0 * eps / (j * avg_opt) - IDENTITY_TOL:
                nominal_violations += 1
        floor = step.cost_before / (j * d_opt * avg_opt) if d_opt and avg_opt else 0.0
        if step.score < floor - IDENTITY_TOL:
            return CheckReport(
                "score_lower_bounds", instance.seed, False,
                f"step {step.step}: score {step.score:.12g} below cost floor {floor:.12g}",
                _witness(instance),
            )
    passed = nominal_violations == 0
    detail = f"{len(result.steps)} steps, nominal_error_floor_violations={nominal_violations}"
    return CheckReport(
        "score_lower_bounds", instance.seed, passed, detail,
        None if passed else _witness(instance),
    )


def check_size_bound(
    instance: Instance, result: GreedyResult, ground_truth: DecisionTree
) -> CheckReport:
    """Final size obeys the guaranteed bound (compared in log space)."""
    if not result.terminated:
        return CheckReport("size_bound", instance.seed, True, "not terminated; exempt", None)
    log_bound = size_bound_log(result.epsilon, max_depth(ground_truth),
                               average_depth(ground_truth, instance.dist))
    log_size = float(np.log(size(result.tree)))
    passed = log_size <= log_bound + 1e-9
    return CheckReport(
        "size_bound", instance.seed, passed,
        f"ln(size)={log_size:.6g} ln(bound)={log_bound:.6g}",
        None if passed else _witness(instance),
    )


# ---------------------------------------------------------------------------
# Estimator unbiasedness
# ---------------------------------------------------------------------------


def _random_bare_tree(instance: Instance, rng: np.random.Generator, max_splits: int = 3) -> BareTree:
    bare = BareTree(BareLeaf(0))
    next_id = 1
    for _ in range(int(rng.integers(0, max_splits + 1))):
        candidates = []
        for restriction, leaf in leaf_paths(bare):
            assert isinstance(leaf, BareLeaf)
            free = [i for i in range(instance.dist.n) if i not in restriction]
            if free:
                candidates.append((leaf.id, free))
        if not candidates:
            break
        leaf_id, free = candidates[int(rng.integers(len(candidates)))]
        bare = split_leaf(bare, leaf_id, int(rng.choice(free)), next_id, next_id + 1)
        next_id += 2
    return bare


def _unbiasedness_probes(
    instance: Instance, bare: BareTree, resamples: int, pair_count: int, seed: int
) -> tuple[int, int, float]:
    """(probes within 3 standard errors, total probes, worst z-score)."""
    dist, oracle = instance.dist, instance.oracle
    leaf_info = []
    for restriction, leaf in leaf_paths(bare):
        assert isinstance(leaf, BareLeaf)
        summary = subfunction_summary(SubfunctionView(oracle, restriction), dist)
        leaf_info.append((leaf.id, dist.reach_probability(restriction), summary.influences))
    ids = [lid for lid, _, _ in leaf_info]
    id_index = {lid: k for k, lid in enumerate(ids)}

    ok = 0
    total = 0
    worst = 0.0
    for i in range(dist.n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7001, i]))
        batch = draw_pair_batch(oracle, dist, i, rng, resamples * pair_count)
        x_leaf = route_codes(bare, batch.x_codes)
        alt_leaf = route_codes(bare, batch.alt_codes)
        hit = (x_leaf == alt_leaf) & (batch.x_labels != batch.alt_labels)
        leaf_idx = np.array([id_index[l] for l in x_leaf])
        counts = np.zeros((resamples, len(ids)))
        sample_of_pair = np.repeat(np.arange(resamples), pair_count)
        np.add.at(counts, (sample_of_pair, leaf_idx), hit.astype(float))
        estimates = counts / pair_count
        for lid, reach, infl in leaf_info:
            exact = reach * float(infl[i])
            col = estimates[:, id_index[lid]]
            mean = float(np.mean(col))
            stderr = float(np.std(col, ddof=1)) / np.sqrt(resamples)
            total += 1
            if stderr == 0.0:
                within = abs(mean - exact) <= ARITHMETIC_TOL
            else:
                within = abs(mean - exact) <= 3.0 * stderr
                worst = max(worst, abs(mean - exact) / stderr)
            ok += int(within)
    return ok, total, worst


def check_estimator_unbiasedness(
    instance: Instance,
    resamples: int = 200,
    pair_count: int = 1000,
    seed: int = 0,
) -> CheckReport:
    """Monte Carlo means of the split-score estimator match exact scores.

    A 3-standard-error band is a statistical test, so a clean failure is
    retried once with a fresh stream before being reported.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7000, instance.seed]))
    bare = _random_bare_tree(instance, rng)
    ok, total, worst = _unbiasedness_probes(instance, bare, resamples, pair_count, seed)
    if ok == total:
        return CheckReport(
            "estimator_unbiasedness", instance.seed, True,
            f"{ok}/{total} probes within 3 standard errors (worst z={worst:.2f})", None,
        )
    ok2, total2, worst2 = _unbiasedness_probes(instance, bare, resamples, pair_count, seed + 1)
    passed = ok2 == total2
    return CheckReport(
        "estimator_unbiasedness", instance.seed, passed,
        f"retry after {total - ok} flags: {ok2}/{total2} within band (worst z={worst2:.2f})",
        None if passed else _witness(instance),
    )


# ---------------------------------------------------------------------------
# Suite driver
# ---------------------------------------------------------------------------


def run_property_suite(
    seed: int,
    count: int,
    epsilon: float = 0.1,
    unbiasedness_every: int = 25,
) -> list[CheckReport]:
    """Run every checker over ``count`` generated instances.

    Tree-shaped targets get the full set (the depth-based inequalities need
    the target's tree); truth-table targets get the trace checks.  The
    expensive Monte Carlo unbiasedness check runs on every
    ``unbiasedness_every``-th instance at a reduced size.
    """
    reports: list[CheckReport] = []
    for k in range(count):
        instance = generate_instance(seed * 1_000_003 + k)
        if instance.target_tree is not None:
            reports.append(check_total_influence_bounds(instance))
            reports.append(check_max_influence_bound(instance))
        reports.append(check_influence_error_variance_chain(instance))
        result = build_topdown_exact(
            instance.target_tree if instance.target_tree is not None else instance.oracle,
            instance.dist,
            epsilon,
        )
        reports.append(check_error_cost_bound(instance, result))
        reports.append(check_cost_telescoping(instance, result))
        if instance.target_tree is not None:
            reports.append(check_score_lower_bounds(instance, result, instance.target_tree))
            reports.append(check_size_bound(instance, result, instance.target_tree))
        if k % unbiasedness_every == 0:
            reports.append(
                check_estimator_unbiasedness(instance, resamples=50, pair_count=400, seed=seed)
            )
    return reports
