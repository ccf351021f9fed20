"""Sliced-index lifetimes, per-index overhead, slice selection, branch exchange.

Slicing fixes a closed index to each of its values, splitting the run into
independent subtasks at the price of recomputation.  The per-index overhead
is O(a) = d_a * C_a / C_ori, where C_a is the tree cost re-evaluated with
dim(a) := 1; O(a) > 1 exactly when slicing a adds work.  The factor 2 often
quoted for qubit networks is the dim-2 case of d_a.

Lifetimes are 1-based step intervals [start, end]: start is the first step
whose operands carry the index, end the step where it is summed out (last
step for open indices).  Branch exchange swaps adjacent stem absorptions,
which never changes the step-cost multiset, to make lifetimes nest.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import NetworkError, SlicingError
from .network import TensorNetwork
from .tensor import Index
from .tree import ContractionTree, LinearSchedule, Step, _symdiff, _union_cost, linearize, tree_metrics


@dataclass(frozen=True)
class Lifetime:
    label: str
    start: int  # first step (1-based) whose operands contain the index
    end: int    # step where the index is summed out, or last step


@dataclass(frozen=True)
class SliceEntry:
    index: Index
    lifetime: Lifetime
    fork: int   # checkpoint position, <= lifetime.start
    merge: int  # merge position, >= lifetime.end

    @classmethod
    def at_lifetime(cls, index: Index, lt: Lifetime) -> "SliceEntry":
        return cls(index, lt, lt.start, lt.end)


@dataclass
class SliceSpec:
    entries: list[SliceEntry]
    nesting_ok: bool = False

    def __post_init__(self) -> None:
        self.nesting_ok = intervals_nested(self.entries)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.index.label for e in self.entries)

    @property
    def n_subtasks(self) -> int:
        n = 1
        for e in self.entries:
            n *= e.index.dim
        return n

    def dims_projected(self) -> dict[str, int]:
        return {e.index.label: 1 for e in self.entries}

    def to_json(self) -> str:
        return json.dumps(
            [
                {
                    "label": e.index.label,
                    "dim": e.index.dim,
                    "fork": e.fork,
                    "start": e.lifetime.start,
                    "end": e.lifetime.end,
                    "merge": e.merge,
                }
                for e in self.entries
            ]
        )

    @classmethod
    def from_json(cls, text: str) -> "SliceSpec":
        entries = [
            SliceEntry(
                Index(d["label"], d.get("dim", 2)),
                Lifetime(d["label"], d["start"], d["end"]),
                d["fork"],
                d["merge"],
            )
            for d in json.loads(text)
        ]
        return cls(entries)


def intervals_nested(entries: Sequence[SliceEntry]) -> bool:
    """True when all (fork, merge) intervals form a chain under inclusion."""
    spans = sorted(((e.fork, -e.merge) for e in entries))
    hi = None
    for fork, neg_merge in spans:
        merge = -neg_merge
        if hi is not None and merge > hi:
            return False
        hi = merge
    return True


def compute_lifetimes(
    s: LinearSchedule, net: TensorNetwork | None = None
) -> dict[str, Lifetime]:
    """Start/end step of every index appearing in the schedule."""
    start: dict[str, int] = {}
    end: dict[str, int] = {}
    last = len(s.steps)
    for pos, step in enumerate(s.steps):
        num = pos + 1
        result_labels = {ix.label for ix in step.indices}
        for ix in s.step_union(pos):
            start.setdefault(ix.label, num)
            if ix.label not in result_labels:
                end[ix.label] = num
    if net is not None:
        for label in net.labels:
            if label not in start:
                raise NetworkError(f"index {label!r} never appears in the schedule")
    return {
        label: Lifetime(label, first, end.get(label, last))
        for label, first in start.items()
    }


def index_overhead(
    t: ContractionTree, label: str, dims: dict[str, int] | None = None
) -> Fraction:
    """O(a) = d_a * C_a / C_ori with C_a the cost at dim(a) := 1.

    ``dims`` carries dimension overrides already in force (previously sliced
    indices at 1); the overhead is then relative to that projected tree.
    """
    base = dict(dims) if dims else {}
    d = None
    for ixs in t.leaf_indices:
        for ix in ixs:
            if ix.label == label:
                d = base.get(label, ix.dim)
    if d is None:
        raise SlicingError(f"index {label!r} does not occur in the tree")
    c_ori = tree_metrics(t, base or None).total_cost
    base[label] = 1
    c_a = tree_metrics(t, base).total_cost
    return Fraction(d * c_a, c_ori)


def slicing_overhead(t: ContractionTree, labels: Sequence[str]) -> Fraction:
    """Total overhead (prod d) * C_sliced / C_ori of slicing ``labels``."""
    dims = {l: 1 for l in labels}
    d_all = 1
    seen = set()
    for ixs in t.leaf_indices:
        for ix in ixs:
            if ix.label in dims and ix.label not in seen:
                seen.add(ix.label)
                d_all *= ix.dim
    c_ori = tree_metrics(t).total_cost
    c_sliced = tree_metrics(t, dims).total_cost
    return Fraction(d_all * c_sliced, c_ori)


def _closed_labels(t: ContractionTree) -> set[str]:
    seen: dict[str, int] = {}
    for ixs in t.leaf_indices:
        for ix in ixs:
            seen[ix.label] = seen.get(ix.label, 0) + 1
    return {l for l, c in seen.items() if c == 2}


def _effective_rank(indices: Sequence[Index], dims: dict[str, int]) -> int:
    return sum(1 for ix in indices if dims.get(ix.label, ix.dim) >= 2)


def select_slices(
    t: ContractionTree, max_rank: int, budget: int = 64, seed: int = 0
) -> SliceSpec:
    """Greedy minimal-overhead slicing until every intermediate fits the cap.

    Per round, candidates are the closed indices present in at least one
    currently-maximal intermediate; at most ``budget`` of them are evaluated
    (seeded subsampling beyond that) and the minimal O(a) wins, ties broken
    by label.  Overheads are recomputed after each pick, so the per-round
    overheads multiply to the total.
    """
    leaf_max = max((len(ixs) for ixs in t.leaf_indices), default=0)
    if max_rank < leaf_max:
        raise SlicingError(
            f"rank cap {max_rank} is below the maximum leaf rank {leaf_max}"
        )
    rng = random.Random(seed)
    closed = _closed_labels(t)
    internal = t.internal_postorder()
    sliced: dict[str, int] = {}
    chosen: list[str] = []
    while True:
        ranks = [_effective_rank(n.indices, sliced) for n in internal]
        cur_max = max(ranks, default=0)
        if cur_max <= max_rank:
            break
        cands: set[str] = set()
        for node, rank in zip(internal, ranks):
            if rank == cur_max:
                for ix in node.indices:
                    if (
                        ix.label in closed
                        and ix.label not in sliced
                        and sliced.get(ix.label, ix.dim) >= 2
                    ):
                        cands.add(ix.label)
        cand_list = sorted(cands)
        if not cand_list:
            raise SlicingError(
                f"cannot reach rank cap {max_rank}: no closed index reduces the "
                f"maximal intermediate rank {cur_max}"
            )
        if len(cand_list) > budget:
            cand_list = sorted(rng.sample(cand_list, budget))
        best_label, best_o = None, None
        for label in cand_list:
            o = index_overhead(t, label, sliced)
            if best_o is None or o < best_o:
                best_label, best_o = label, o
        sliced[best_label] = 1
        chosen.append(best_label)
    lifetimes = compute_lifetimes(linearize(t))
    dim_of = {}
    for ixs in t.leaf_indices:
        for ix in ixs:
            dim_of[ix.label] = ix.dim
    entries = [
        SliceEntry.at_lifetime(Index(l, dim_of[l]), lifetimes[l]) for l in chosen
    ]
    return SliceSpec(entries)


def respec_on_schedule(s: LinearSchedule, spec: SliceSpec) -> SliceSpec:
    """Re-anchor entry lifetimes (and fork/merge) on a (new) schedule."""
    lts = compute_lifetimes(s)
    return SliceSpec(
        [SliceEntry.at_lifetime(e.index, lts[e.index.label]) for e in spec.entries]
    )


def _swap_adjacent(s: LinearSchedule, pos: int) -> LinearSchedule | None:
    """Swap the absorptions at step positions pos and pos+1, or None.

    Legal when step pos+1 consumes step pos's result, step pos itself
    consumes an earlier result (so both are absorptions, branch operands
    mutually independent), and the step-cost multiset is preserved.
    """
    lo, hi = s.steps[pos], s.steps[pos + 1]
    if hi.lhs == lo.result:
        branch_hi = hi.rhs
    elif hi.rhs == lo.result:
        branch_hi = hi.lhs
    else:
        return None
    if branch_hi == lo.result:
        return None
    if lo.lhs >= s.n_leaves:
        stem_in, branch_lo = lo.lhs, lo.rhs
    elif lo.rhs >= s.n_leaves:
        stem_in, branch_lo = lo.rhs, lo.lhs
    else:
        stem_in, branch_lo = lo.lhs, lo.rhs  # chain bottom: either works
    in_ix = s.indices_of(stem_in)
    b1 = s.indices_of(branch_lo)
    b2 = s.indices_of(branch_hi)
    mid = _symdiff(in_ix, b2)
    new_lo = Step(stem_in, branch_hi, lo.result, mid, _union_cost(in_ix, b2))
    new_hi = Step(
        lo.result, branch_lo, hi.result, _symdiff(mid, b1), _union_cost(mid, b1)
    )
    if {ix.label for ix in new_hi.indices} != {ix.label for ix in hi.indices}:
        return None
    if sorted((new_lo.cost, new_hi.cost)) != sorted((lo.cost, hi.cost)):
        return None  # exchange would change the complexity; not a legal move
    steps = list(s.steps)
    steps[pos], steps[pos + 1] = new_lo, new_hi
    return LinearSchedule(s.n_leaves, s.leaf_indices, steps, s.stems, s.multi_stem)


def _crossings(s: LinearSchedule, labels: Sequence[str]) -> int:
    lts = compute_lifetimes(s)
    spans = [(lts[l].start, lts[l].end) for l in labels]
    bad = 0
    for i in range(len(spans)):
        for j in range(i + 1, len(spans)):
            (a0, a1), (b0, b1) = spans[i], spans[j]
            nested = (a0 <= b0 and b1 <= a1) or (b0 <= a0 and a1 <= b1)
            if not nested:
                bad += 1
    return bad


def branch_exchange_nest(
    s: LinearSchedule, spec: SliceSpec, max_passes: int | None = None
) -> tuple[LinearSchedule, SliceSpec]:
    """Reorder stem absorptions so the sliced lifetimes nest.

    Greedy local search over legal adjacent swaps (cost multiset preserved,
    value unchanged by commutativity of Einstein summation).  Failure to
    nest is a reported state: the best-effort schedule comes back with
    ``nesting_ok`` false on the re-anchored spec.
    """
    labels = spec.labels
    best = s
    best_bad = _crossings(s, labels)
    passes = 0
    limit = max_passes if max_passes is not None else max(4, len(s.steps))
    while best_bad > 0 and passes < limit:
        passes += 1
        improved = False
        stem_positions = sorted(p for stem in best.stems for p in stem.positions)
        for pos in stem_positions:
            if pos + 1 >= len(best.steps):
                continue
            cand = _swap_adjacent(best, pos)
            if cand is None:
                continue
            bad = _crossings(cand, labels)
            if bad < best_bad:
                best, best_bad = cand, bad
                improved = True
                break
        if not improved:
            break
    return best, respec_on_schedule(best, spec)
