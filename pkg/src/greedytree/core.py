"""Core data model: product distributions, binary query trees, and routing.

Inputs live on the Boolean cube {0,1}^n equipped with a product measure in
which coordinate i is 1 with probability ``biases[i]``.  Trees come in two
flavours: labeled trees whose leaves carry a class in {-1, +1}, and bare
trees whose leaves carry only a stable integer identifier (labels are
assigned later, e.g. by conditional majority).  ``lo`` is always the branch
taken when the queried bit is 0, ``hi`` the branch for bit 1; the JSON file
format below uses the same convention.

Points are handled in two equivalent forms: explicit 0/1 vectors for the
public API, and packed integer codes (bit i of the code is coordinate i)
for vectorized bulk work.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "BareLeaf",
    "BareTree",
    "CountingOracle",
    "DecisionTree",
    "Internal",
    "Leaf",
    "ProductDistribution",
    "Restriction",
    "TargetOracle",
    "TreeFormatError",
    "TreeOracle",
    "TruthTableOracle",
    "average_depth",
    "leaf_paths",
    "max_depth",
    "pack_bits",
    "parse_distribution",
    "parse_tree",
    "route",
    "route_codes",
    "serialize_distribution",
    "serialize_tree",
    "size",
    "split_leaf",
    "tree_variables",
    "unpack_bits",
]


class TreeFormatError(ValueError):
    """Malformed tree or distribution document, or an invalid tree shape."""


# ---------------------------------------------------------------------------
# Distributions and restrictions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductDistribution:
    """Product measure on {0,1}^n; ``biases[i]`` is Pr[x_i = 1].

    Biases of exactly 0 or 1 are rejected: coordinate re-randomization (the
    basis of the influence notion used throughout) degenerates there, and
    every leaf of every tree keeps strictly positive reach probability.
    """

    biases: tuple[float, ...]

    def __init__(self, biases: Sequence[float]):
        biases = tuple(float(p) for p in biases)
        if len(biases) < 1:
            raise ValueError("need at least one coordinate")
        for i, p in enumerate(biases):
            if not 0.0 < p < 1.0:
                raise ValueError(f"bias {p!r} at coordinate {i} not strictly inside (0,1)")
        object.__setattr__(self, "biases", biases)

    @property
    def n(self) -> int:
        return len(self.biases)

    def reach_probability(self, restriction: "Restriction") -> float:
        """Probability that a random point agrees with ``restriction``.

        The empty restriction has probability 1.
        """
        prob = 1.0
        for i, b in restriction.items():
            if not 0 <= i < self.n:
                raise ValueError(f"coordinate {i} out of range for n={self.n}")
            prob *= self.biases[i] if b else 1.0 - self.biases[i]
        return prob

    def draw_codes(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` independent points, packed as uint64 codes.

        Coordinates are generated in ascending index order so a fixed seed
        yields a fixed sample regardless of caller context.
        """
        codes = np.zeros(count, dtype=np.uint64)
        for i, p in enumerate(self.biases):
            bit = (rng.random(count) < p).astype(np.uint64)
            codes |= bit << np.uint64(i)
        return codes


@dataclass(frozen=True)
class Restriction:
    """Partial assignment of coordinates, e.g. the queries along a path."""

    fixed: tuple[tuple[int, int], ...] = ()

    def __init__(self, fixed: Mapping[int, int] | Sequence[tuple[int, int]] = ()):
        raw = list(fixed.items()) if isinstance(fixed, Mapping) else [tuple(p) for p in fixed]
        if len({i for i, _ in raw}) != len(raw):
            raise ValueError("coordinate fixed twice")
        for i, b in raw:
            if i < 0:
                raise ValueError(f"negative coordinate {i}")
            if b not in (0, 1):
                raise ValueError(f"bit for coordinate {i} must be 0 or 1, got {b!r}")
        object.__setattr__(self, "fixed", tuple(sorted(raw)))

    def items(self) -> Iterator[tuple[int, int]]:
        return iter(self.fixed)

    def coordinates(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.fixed)

    def __contains__(self, coordinate: int) -> bool:
        return any(i == coordinate for i, _ in self.fixed)

    def __len__(self) -> int:
        return len(self.fixed)

    def extend(self, coordinate: int, bit: int) -> "Restriction":
        if coordinate in self:
            raise ValueError(f"coordinate {coordinate} already fixed")
        return Restriction(dict(self.fixed) | {coordinate: bit})

    def base_code(self) -> int:
        """Packed code with the fixed bits set and every free bit 0."""
        code = 0
        for i, b in self.fixed:
            code |= b << i
        return code


# ---------------------------------------------------------------------------
# Tree nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    label: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise TreeFormatError(f"leaf label must be -1 or +1, got {self.label!r}")


@dataclass(frozen=True)
class BareLeaf:
    id: int


@dataclass(frozen=True)
class Internal:
    var: int
    lo: "Node"
    hi: "Node"

    def __post_init__(self):
        if self.var < 0:
            raise TreeFormatError(f"variable index must be nonnegative, got {self.var}")


Node = Union[Leaf, BareLeaf, Internal]


def _validate(root: Node, want_bare: bool) -> None:
    ids: set[int] = set()

    def walk(node: Node, path: frozenset[int]) -> None:
        if isinstance(node, Internal):
            if node.var in path:
                raise TreeFormatError(f"variable {node.var} repeated on a path")
            walk(node.lo, path | {node.var})
            walk(node.hi, path | {node.var})
        elif isinstance(node, BareLeaf):
            if not want_bare:
                raise TreeFormatError("unlabeled leaf in a labeled tree")
            if node.id in ids:
                raise TreeFormatError(f"duplicate leaf identifier {node.id}")
            ids.add(node.id)
        elif isinstance(node, Leaf):
            if want_bare:
                raise TreeFormatError("labeled leaf in a bare tree")
        else:
            raise TreeFormatError(f"not a tree node: {node!r}")

    walk(root, frozenset())


@dataclass(frozen=True)
class DecisionTree:
    """Labeled binary query tree; no variable repeats on any path."""

    root: Node

    def __post_init__(self):
        _validate(self.root, want_bare=False)


@dataclass(frozen=True)
class BareTree:
    """Query tree with unlabeled leaves carrying unique stable identifiers."""

    root: Node

    def __post_init__(self):
        _validate(self.root, want_bare=True)

    def leaf_ids(self) -> list[int]:
        return [leaf.id for _, leaf in leaf_paths(self)]


Tree = Union[DecisionTree, BareTree]


# ---------------------------------------------------------------------------
# Structural queries
# ---------------------------------------------------------------------------


def leaf_paths(tree: Tree) -> list[tuple[Restriction, Node]]:
    """All (path restriction, leaf) pairs in left-to-right order."""
    out: list[tuple[Restriction, Node]] = []

    def walk(node: Node, fixed: dict[int, int]) -> None:
        if isinstance(node, Internal):
            walk(node.lo, fixed | {node.var: 0})
            walk(node.hi, fixed | {node.var: 1})
        else:
            out.append((Restriction(fixed), node))

    walk(tree.root, {})
    return out


def size(tree: Tree) -> int:
    """Number of leaves (= number of internal nodes + 1)."""

    def count(node: Node) -> int:
        if isinstance(node, Internal):
            return count(node.lo) + count(node.hi)
        return 1

    return count(tree.root)


def max_depth(tree: Tree) -> int:
    """Longest root-to-leaf path, in edges."""

    def depth(node: Node) -> int:
        if isinstance(node, Internal):
            return 1 + max(depth(node.lo), depth(node.hi))
        return 0

    return depth(tree.root)


def average_depth(tree: Tree, dist: ProductDistribution) -> float:
    """Reach-probability-weighted mean leaf depth.

    Computed in the leaf-weighted form sum_v p_v * depth(v); this equals the
    sum of reach probabilities over all non-root nodes, an identity the test
    suite checks independently.
    """
    total = 0.0
    for restriction, _ in leaf_paths(tree):
        total += dist.reach_probability(restriction) * len(restriction)
    return total


def tree_variables(tree: Tree) -> frozenset[int]:
    out: set[int] = set()

    def walk(node: Node) -> None:
        if isinstance(node, Internal):
            out.add(node.var)
            walk(node.lo)
            walk(node.hi)

    walk(tree.root)
    return frozenset(out)


def split_leaf(bare: BareTree, leaf_id: int, var: int, lo_id: int, hi_id: int) -> BareTree:
    """Replace leaf ``leaf_id`` with a query on ``var`` and two fresh leaves.

    All other leaves keep their identifiers.  Raises if the leaf does not
    exist or the split would repeat a path variable or reuse an identifier.
    """
    found = False

    def walk(node: Node) -> Node:
        nonlocal found
        if isinstance(node, Internal):
            return Internal(node.var, walk(node.lo), walk(node.hi))
        if isinstance(node, BareLeaf) and node.id == leaf_id:
            found = True
            return Internal(var, BareLeaf(lo_id), BareLeaf(hi_id))
        return node

    new_root = walk(bare.root)
    if not found:
        raise KeyError(f"no leaf with identifier {leaf_id}")
    return BareTree(new_root)


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------


def route(tree: Tree, x: Sequence[int]) -> int:
    """Follow ``x`` from the root; returns the leaf label (labeled tree) or
    the leaf identifier (bare tree).

    Each internal node reads one coordinate; no coordinate is consulted
    twice because path variables never repeat.
    """
    node = tree.root
    while isinstance(node, Internal):
        if node.var >= len(x):
            raise ValueError(f"point has {len(x)} coordinates, tree queries x_{node.var}")
        node = node.hi if x[node.var] else node.lo
    return node.label if isinstance(node, Leaf) else node.id


def route_codes(tree: Tree | Node, codes: np.ndarray) -> np.ndarray:
    """Vectorized :func:`route` over packed codes; returns int64 labels/ids."""
    root = tree.root if isinstance(tree, (DecisionTree, BareTree)) else tree
    out = np.empty(len(codes), dtype=np.int64)

    def walk(node: Node, idx: np.ndarray) -> None:
        if isinstance(node, Internal):
            bit = (codes[idx] >> np.uint64(node.var)) & np.uint64(1)
            hi = bit.astype(bool)
            walk(node.lo, idx[~hi])
            walk(node.hi, idx[hi])
        else:
            out[idx] = node.label if isinstance(node, Leaf) else node.id

    walk(root, np.arange(len(codes)))
    return out


def pack_bits(bits: np.ndarray | Sequence[Sequence[int]]) -> np.ndarray:
    """Pack an (N, n) 0/1 array into uint64 codes (bit i = coordinate i)."""
    arr = np.asarray(bits, dtype=np.uint64)
    if arr.ndim == 1:
        arr = arr[None, :]
    n = arr.shape[1]
    if n > 64:
        raise ValueError("packed codes support at most 64 coordinates")
    codes = np.zeros(arr.shape[0], dtype=np.uint64)
    for i in range(n):
        codes |= arr[:, i] << np.uint64(i)
    return codes


def unpack_bits(codes: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns an (N, n) uint8 array."""
    codes = np.asarray(codes, dtype=np.uint64)
    out = np.empty((len(codes), n), dtype=np.uint8)
    for i in range(n):
        out[:, i] = (codes >> np.uint64(i)) & np.uint64(1)
    return out


# ---------------------------------------------------------------------------
# Target oracles
# ---------------------------------------------------------------------------


class TargetOracle:
    """Query access to a hidden Boolean target f: {0,1}^n -> {-1,+1}.

    ``label_codes`` must be a deterministic function of its input.  Random
    samples are drawn from a :class:`ProductDistribution` and labeled here.
    """

    n: int

    def label_codes(self, codes: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def label(self, x: Sequence[int]) -> int:
        return int(self.label_codes(pack_bits(np.asarray(x)))[0])


class TreeOracle(TargetOracle):
    """Target given explicitly as a labeled decision tree."""

    def __init__(self, tree: DecisionTree, n: int):
        vs = tree_variables(tree)
        if vs and max(vs) >= n:
            raise ValueError(f"tree queries x_{max(vs)} but n={n}")
        self.tree = tree
        self.n = n

    def label_codes(self, codes: np.ndarray) -> np.ndarray:
        return route_codes(self.tree, codes).astype(np.int8)


class TruthTableOracle(TargetOracle):
    """Target given as a dense +/-1 table indexed by packed code."""

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=np.int8)
        if table.ndim != 1 or len(table) & (len(table) - 1) or len(table) < 2:
            raise ValueError("table length must be a power of two, at least 2")
        if not np.all(np.abs(table) == 1):
            raise ValueError("table values must be -1 or +1")
        self.table = table
        self.n = int(len(table).bit_length() - 1)

    def label_codes(self, codes: np.ndarray) -> np.ndarray:
        return self.table[np.asarray(codes, dtype=np.uint64)]


class CountingOracle(TargetOracle):
    """Wrapper that counts label queries made against an inner oracle."""

    def __init__(self, inner: TargetOracle):
        self.inner = inner
        self.n = inner.n
        self.queries = 0

    def label_codes(self, codes: np.ndarray) -> np.ndarray:
        self.queries += len(codes)
        return self.inner.label_codes(codes)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------
#
# Tree documents (UTF-8 JSON):
#   labeled leaf   {"leaf": 1} or {"leaf": -1}
#   bare leaf      {"leaf": null, "id": <int>}
#   internal node  {"var": <0-based int>, "lo": <node for bit 0>, "hi": <node for bit 1>}
# Distribution documents: {"biases": [p_0, ..., p_{n-1}]}


def _node_to_obj(node: Node) -> dict:
    if isinstance(node, Internal):
        return {"var": node.var, "lo": _node_to_obj(node.lo), "hi": _node_to_obj(node.hi)}
    if isinstance(node, Leaf):
        return {"leaf": node.label}
    return {"leaf": None, "id": node.id}


def _node_from_obj(obj: object) -> Node:
    if not isinstance(obj, dict):
        raise TreeFormatError(f"tree node must be an object, got {type(obj).__name__}")
    if "var" in obj:
        extra = set(obj) - {"var", "lo", "hi"}
        if extra or "lo" not in obj or "hi" not in obj:
            raise TreeFormatError(f"internal node must have exactly var/lo/hi, got {sorted(obj)}")
        var = obj["var"]
        if not isinstance(var, int) or isinstance(var, bool):
            raise TreeFormatError(f"variable index must be an integer, got {var!r}")
        return Internal(var, _node_from_obj(obj["lo"]), _node_from_obj(obj["hi"]))
    if "leaf" in obj:
        if obj["leaf"] is None:
            if set(obj) != {"leaf", "id"} or not isinstance(obj["id"], int):
                raise TreeFormatError("bare leaf must be {'leaf': null, 'id': <int>}")
            return BareLeaf(obj["id"])
        if set(obj) != {"leaf"} or obj["leaf"] not in (-1, 1):
            raise TreeFormatError("labeled leaf must be {'leaf': 1} or {'leaf': -1}")
        return Leaf(obj["leaf"])
    raise TreeFormatError(f"node object needs 'var' or 'leaf', got keys {sorted(obj)}")


def serialize_tree(tree: Tree) -> str:
    return json.dumps(_node_to_obj(tree.root), separators=(",", ":"))


def parse_tree(text: str, n: int | None = None) -> Tree:
    """Parse a tree document; the result is labeled or bare depending on the
    leaves found.  When ``n`` is given, variable indices are checked against
    it; otherwise the ambient dimension is whatever the caller later uses.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"invalid JSON: {exc}") from exc
    root = _node_from_obj(obj)

    def kinds(node: Node) -> set[str]:
        if isinstance(node, Internal):
            return kinds(node.lo) | kinds(node.hi)
        return {"bare" if isinstance(node, BareLeaf) else "labeled"}

    found = kinds(root)
    if found == {"bare"}:
        tree: Tree = BareTree(root)
    elif found == {"labeled"}:
        tree = DecisionTree(root)
    else:
        raise TreeFormatError("tree mixes labeled and bare leaves")
    vs = tree_variables(tree)
    if n is not None and vs and max(vs) >= n:
        raise TreeFormatError(f"variable index {max(vs)} out of range for n={n}")
    return tree


def serialize_distribution(dist: ProductDistribution) -> str:
    return json.dumps({"biases": list(dist.biases)}, separators=(",", ":"))


def parse_distribution(text: str) -> ProductDistribution:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != {"biases"} or not isinstance(obj["biases"], list):
        raise TreeFormatError("distribution document must be {'biases': [...]}")
    try:
        return ProductDistribution(obj["biases"])
    except ValueError as exc:
        raise TreeFormatError(str(exc)) from exc
