"""Contraction trees: cost metrics, stem detection, linear schedules.

A contraction tree is a binary pairwise-contraction plan over the network
tensors.  Trees are imported/exported as SSA pair lists ``{"ssa_path":
[[i, j], ...]}`` with leaf numbering equal to the network tensor order, so
externally optimized paths can be dropped in.  ``greedy_path`` provides a
self-contained baseline finder (min result size, seeded tie-breaking).

A *stem* is a chain in the tree along which one large tensor absorbs small
tensors: each chain node has one chain child and its off-chain operand has
rank at most result_rank - 1.  Additional disjoint chains carrying at least
``STEM_COST_FRACTION`` of the total cost are reported as extra stems
(multi-stem).  Linearization keeps every stem's steps contiguous.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Sequence

from .errors import TncError
from .network import TensorNetwork
from .tensor import Index

#: A chain must carry at least this fraction of total cost to count as an
#: extra stem, and >= 2 such stems set the multi-stem flag.  Calibration of
#: an informal structural description, not a measured constant.
STEM_COST_FRACTION = 0.25


def _symdiff(a: Sequence[Index], b: Sequence[Index]) -> tuple[Index, ...]:
    b_labels = {ix.label for ix in b}
    a_labels = {ix.label for ix in a}
    keep_a = tuple(ix for ix in a if ix.label not in b_labels)
    keep_b = tuple(ix for ix in b if ix.label not in a_labels)
    return keep_a + keep_b


def _union_cost(a: Sequence[Index], b: Sequence[Index], dims=None) -> int:
    seen: dict[str, int] = {}
    for ix in a:
        seen[ix.label] = ix.dim
    for ix in b:
        seen[ix.label] = ix.dim
    cost = 1
    for label, dim in seen.items():
        cost *= dims.get(label, dim) if dims else dim
    return cost


@dataclass
class TreeNode:
    nid: int
    left: "TreeNode | None"
    right: "TreeNode | None"
    indices: tuple[Index, ...]

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def rank(self) -> int:
        return len(self.indices)


class ContractionTree:
    """Binary tree whose leaves are the network tensor positions 0..n-1."""

    def __init__(self, leaf_indices: Sequence[tuple[Index, ...]], root: TreeNode):
        self.leaf_indices = [tuple(ixs) for ixs in leaf_indices]
        self.n_leaves = len(self.leaf_indices)
        self.root = root

    @classmethod
    def from_ssa_path(
        cls,
        leaf_indices: Sequence[tuple[Index, ...]],
        ssa_path: Sequence[Sequence[int]],
    ) -> "ContractionTree":
        n = len(leaf_indices)
        nodes: list[TreeNode] = [
            TreeNode(i, None, None, tuple(ixs)) for i, ixs in enumerate(leaf_indices)
        ]
        consumed = [False] * (n + len(ssa_path))
        for i, j in ssa_path:
            for ref in (i, j):
                if not 0 <= ref < len(nodes):
                    raise TncError(f"ssa_path references unknown id {ref}")
                if consumed[ref]:
                    raise TncError(f"ssa_path consumes id {ref} twice")
                consumed[ref] = True
            node = TreeNode(
                len(nodes), nodes[i], nodes[j], _symdiff(nodes[i].indices, nodes[j].indices)
            )
            nodes.append(node)
        if n == 0:
            raise TncError("empty network has no contraction tree")
        if len(ssa_path) != n - 1:
            raise TncError(f"ssa_path has {len(ssa_path)} steps, expected {n - 1}")
        return cls(leaf_indices, nodes[-1])

    def to_ssa_path(self) -> list[list[int]]:
        path: list[list[int]] = []
        for node in self.internal_postorder():
            path.append([node.left.nid, node.right.nid])
        return path

    def internal_postorder(self) -> list[TreeNode]:
        """Internal nodes, children before parents, in SSA id order."""
        out: list[TreeNode] = []
        stack = [self.root]
        seen = []
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            seen.append(node)
            stack.extend([node.left, node.right])
        seen.sort(key=lambda v: v.nid)
        return seen

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump({"ssa_path": self.to_ssa_path()}, fh)

    @classmethod
    def load(cls, path: str, net: TensorNetwork) -> "ContractionTree":
        with open(path) as fh:
            obj = json.load(fh)
        return cls.from_ssa_path(net.leaf_indices(), obj["ssa_path"])


@dataclass
class TreeMetrics:
    total_cost: int
    max_rank: int
    peak_memory_elements: int
    per_step: list[tuple[int, int]]  # (cost, result_rank) in SSA order


def tree_metrics(t: ContractionTree, dims: dict[str, int] | None = None) -> TreeMetrics:
    """Exact integer cost/rank metrics; ``dims`` overrides index dimensions.

    Cost convention: one scalar multiply per element of the union index
    space per step (a complex FMA counts as 1); multiply by 8 for hardware
    FLOPs.  Peak memory is 3 * 2**max_rank when every dim is 2, otherwise
    3 * the largest intermediate element count.
    """
    total = 0
    per_step: list[tuple[int, int]] = []
    max_rank = 0
    max_size = 0
    all_two = all(
        (dims.get(ix.label, ix.dim) if dims else ix.dim) == 2
        for ixs in t.leaf_indices
        for ix in ixs
    )
    for ixs in t.leaf_indices:
        max_rank = max(max_rank, len(ixs))
        max_size = max(max_size, _union_cost(ixs, (), dims))
    for node in t.internal_postorder():
        cost = _union_cost(node.left.indices, node.right.indices, dims)
        total += cost
        rank = node.rank
        size = _union_cost(node.indices, (), dims)
        max_rank = max(max_rank, rank)
        max_size = max(max_size, size)
        per_step.append((cost, rank))
    peak = 3 * 2**max_rank if all_two else 3 * max_size
    return TreeMetrics(total, max_rank, peak, per_step)


def greedy_path(net: TensorNetwork, seed: int = 0) -> ContractionTree:
    """Pairwise min-result-size greedy with seeded random tie-breaking.

    Deterministic for a fixed seed.  Disconnected networks are contracted
    component by component and the remaining pieces combined by outer
    products; never an error.
    """
    if len(net) == 0:
        raise TncError("cannot build a path for an empty network")
    rng = random.Random(seed)
    frontier: dict[int, tuple[Index, ...]] = {
        i: ixs for i, ixs in enumerate(net.leaf_indices())
    }
    next_id = len(net)
    path: list[list[int]] = []
    while len(frontier) > 1:
        by_label: dict[str, list[int]] = {}
        for fid, ixs in frontier.items():
            for ix in ixs:
                by_label.setdefault(ix.label, []).append(fid)
        pairs = {
            (min(ids), max(ids)) for ids in by_label.values() if len(ids) == 2
        }
        if not pairs:
            ids = sorted(frontier)
            pairs = {(ids[k], ids[k + 1]) for k in range(0, len(ids) - 1, 2)}
        best_size = None
        best: list[tuple[int, int]] = []
        for i, j in sorted(pairs):
            size = _union_cost(_symdiff(frontier[i], frontier[j]), ())
            if best_size is None or size < best_size:
                best_size, best = size, [(i, j)]
            elif size == best_size:
                best.append((i, j))
        i, j = best[rng.randrange(len(best))]
        frontier[next_id] = _symdiff(frontier[i], frontier[j])
        del frontier[i], frontier[j]
        path.append([i, j])
        next_id += 1
    return ContractionTree.from_ssa_path(net.leaf_indices(), path)


# -- linear schedules ------------------------------------------------------


@dataclass(frozen=True)
class Step:
    """One pairwise contraction.  ``lhs``/``rhs`` are SSA refs (< n_leaves
    for network tensors) and ``result`` the SSA id this step defines."""

    lhs: int
    rhs: int
    result: int
    indices: tuple[Index, ...]
    cost: int


@dataclass
class Stem:
    positions: list[int]  # 0-based step positions, execution order
    cost: int


@dataclass
class LinearSchedule:
    n_leaves: int
    leaf_indices: list[tuple[Index, ...]]
    steps: list[Step]
    stems: list[Stem] = field(default_factory=list)
    multi_stem: bool = False

    @property
    def total_cost(self) -> int:
        return sum(s.cost for s in self.steps)

    @property
    def stem_flags(self) -> list[bool]:
        flags = [False] * len(self.steps)
        for stem in self.stems:
            for p in stem.positions:
                flags[p] = True
        return flags

    def indices_of(self, ref: int) -> tuple[Index, ...]:
        if ref < self.n_leaves:
            return self.leaf_indices[ref]
        return self.steps[self._pos_of(ref)].indices

    def _pos_of(self, result_id: int) -> int:
        for pos, s in enumerate(self.steps):
            if s.result == result_id:
                return pos
        raise TncError(f"no step produces SSA id {result_id}")

    def step_union(self, pos: int) -> tuple[Index, ...]:
        s = self.steps[pos]
        lhs = self.indices_of(s.lhs)
        rhs = self.indices_of(s.rhs)
        seen = {ix.label for ix in lhs}
        return lhs + tuple(ix for ix in rhs if ix.label not in seen)


def _detect_stems(t: ContractionTree) -> list[list[TreeNode]]:
    internal = t.internal_postorder()
    if not internal:
        return []
    parent: dict[int, TreeNode] = {}
    for node in internal:
        parent[node.left.nid] = node
        parent[node.right.nid] = node
    cost = {n.nid: _union_cost(n.left.indices, n.right.indices) for n in internal}
    total = sum(cost.values())
    marked: set[int] = set()

    def sibling(p: TreeNode, child: TreeNode) -> TreeNode:
        return p.right if p.left.nid == child.nid else p.left

    def absorbs(p: TreeNode, chain_child: TreeNode) -> bool:
        return sibling(p, chain_child).rank <= p.rank - 1

    def grow(seed: TreeNode) -> list[TreeNode]:
        chain = [seed]
        top = seed
        while True:
            p = parent.get(top.nid)
            if p is None or p.nid in marked or not absorbs(p, top):
                break
            chain.append(p)
            top = p
        bottom = seed
        while True:
            cands = [
                c
                for c in (bottom.left, bottom.right)
                if not c.is_leaf and c.nid not in marked and absorbs(bottom, c)
            ]
            if not cands:
                break
            cands.sort(key=lambda c: (-cost[c.nid], c.nid))
            chain.insert(0, cands[0])
            bottom = cands[0]
        return chain

    chains: list[list[TreeNode]] = []
    for seed in sorted(internal, key=lambda n: (-cost[n.nid], n.nid)):
        if seed.nid in marked:
            continue
        chain = grow(seed)
        marked.update(v.nid for v in chain)
        if len(chain) < 2:
            continue
        chain_cost = sum(cost[v.nid] for v in chain)
        if not chains or chain_cost >= STEM_COST_FRACTION * total:
            chains.append(chain)
    return chains


def linearize(t: ContractionTree) -> LinearSchedule:
    """Depth-first post-order with every stem chain kept contiguous.

    For each stem, the off-chain branch subtrees are emitted first (in
    absorption order), then the chain steps run bottom to top as one block.
    """
    chains = _detect_stems(t)
    chain_by_top: dict[int, list[TreeNode]] = {ch[-1].nid: ch for ch in chains}
    on_chain: dict[int, int] = {}
    for ci, ch in enumerate(chains):
        for v in ch:
            on_chain[v.nid] = ci
    order: list[TreeNode] = []

    def emit(node: TreeNode) -> None:
        if node.is_leaf:
            return
        ch = chain_by_top.get(node.nid)
        if ch is None:
            emit(node.left)
            emit(node.right)
            order.append(node)
            return
        bottom = ch[0]
        emit(bottom.left)
        emit(bottom.right)
        for prev, v in zip(ch, ch[1:]):
            off = v.right if v.left.nid == prev.nid else v.left
            emit(off)
        order.extend(ch)

    emit(t.root)
    steps = [
        Step(
            n.left.nid,
            n.right.nid,
            n.nid,
            n.indices,
            _union_cost(n.left.indices, n.right.indices),
        )
        for n in order
    ]
    pos_of = {s.result: p for p, s in enumerate(steps)}
    stems = [
        Stem([pos_of[v.nid] for v in ch], sum(steps[pos_of[v.nid]].cost for v in ch))
        for ch in chains
    ]
    total = sum(s.cost for s in steps)
    heavy = sum(1 for st in stems if st.cost >= STEM_COST_FRACTION * total)
    return LinearSchedule(
        t.n_leaves, list(t.leaf_indices), steps, stems, multi_stem=heavy >= 2
    )
