"""Tree-like, merge and spindle reuse schedules with checkpoint accounting.

Subtasks produced by slicing repeat each other's work outside the sliced
indices' lifetimes.  The planner turns a linear schedule plus a slice spec
into an action program over six primitives:

    RUN(lo, hi, assignment)   execute steps lo..hi (1-based, inclusive)
    CHECKPOINT(buf)           snapshot the live frontier
    RESTORE(buf) / FREE(buf)  reset to / drop a snapshot
    STORE_PARTIAL(buf)        park a finished branch for merging
    MERGE(buf, index)         sum dim(index) parked branches

Pre-lifetime sharing alone (``plan_tree_reuse``) is a depth-first fork
tree: checkpoint at each fork, run branch 0 fully, branch 1 from the
checkpoint.  ``plan_spindle`` adds post-lifetime merging with a two-way
depth-first order (leaf pair, merge, next leaf pair, merge ...), which
needs at most one partial buffer beyond the checkpoints.

All predicted quantities are exact integers under the projected cost model
(sliced dims forced to 1), so the executor's counters must match them
without tolerances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import MemoryBudgetError, PlanningError
from .slicing import SliceEntry, SliceSpec, index_overhead
from .tree import ContractionTree, LinearSchedule, linearize

RUN = "RUN"
CHECKPOINT = "CHECKPOINT"
RESTORE = "RESTORE"
STORE_PARTIAL = "STORE_PARTIAL"
MERGE = "MERGE"
FREE = "FREE"


@dataclass(frozen=True)
class ReuseAction:
    kind: str
    lo: int = 0
    hi: int = -1
    assignment: tuple[tuple[str, int], ...] = ()
    buf: int = -1
    index: str = ""
    dim: int = 0

    def to_obj(self):
        if self.kind == RUN:
            return {
                "kind": RUN,
                "lo": self.lo,
                "hi": self.hi,
                "assignment": {l: v for l, v in self.assignment},
            }
        if self.kind == MERGE:
            return {"kind": MERGE, "buf": self.buf, "index": self.index, "dim": self.dim}
        return {"kind": self.kind, "buf": self.buf}


def _run(lo: int, hi: int, asn: tuple[tuple[str, int], ...]) -> ReuseAction:
    return ReuseAction(RUN, lo=lo, hi=hi, assignment=asn)


@dataclass
class ReuseSchedule:
    """Action program realizing reuse for one outer-slice assignment."""

    schedule: LinearSchedule
    actions: list[ReuseAction]
    nested: list[SliceEntry]
    outer: list[SliceEntry]
    demoted: list[str] = field(default_factory=list)

    @property
    def sliced_labels(self) -> tuple[str, ...]:
        return tuple(e.index.label for e in self.nested + self.outer)

    def dims_projected(self) -> dict[str, int]:
        return {l: 1 for l in self.sliced_labels}

    @property
    def outer_count(self) -> int:
        n = 1
        for e in self.outer:
            n *= e.index.dim
        return n

    @property
    def nested_count(self) -> int:
        n = 1
        for e in self.nested:
            n *= e.index.dim
        return n

    def to_json(self) -> str:
        return json.dumps(
            {
                "nested": [e.index.label for e in self.nested],
                "outer": [e.index.label for e in self.outer],
                "demoted": self.demoted,
                "actions": [a.to_obj() for a in self.actions],
            }
        )


@dataclass
class ReusePlanReport:
    predicted_multiplies: int
    predicted_peak_bytes: int
    overhead_with_reuse: Fraction
    overhead_without_reuse: Fraction

    def to_obj(self):
        return {
            "predicted_multiplies": self.predicted_multiplies,
            "predicted_peak_bytes": self.predicted_peak_bytes,
            "overhead_with_reuse": float(self.overhead_with_reuse),
            "overhead_without_reuse": float(self.overhead_without_reuse),
        }


def projected_cost(s: LinearSchedule, pos: int, dims: dict[str, int]) -> int:
    cost = 1
    for ix in s.step_union(pos):
        cost *= dims.get(ix.label, ix.dim)
    return cost


def projected_size(indices, dims: dict[str, int]) -> int:
    size = 1
    for ix in indices:
        size *= dims.get(ix.label, ix.dim)
    return size


def dependent_results(s: LinearSchedule, label: str) -> set[int]:
    """SSA ids whose value depends on the assignment of ``label``."""
    dep: set[int] = set()

    def carries(ref: int) -> bool:
        if ref < s.n_leaves:
            return any(ix.label == label for ix in s.leaf_indices[ref])
        return ref in dep

    for step in s.steps:
        if carries(step.lhs) or carries(step.rhs):
            dep.add(step.result)
    return dep


@dataclass
class ScheduleCheck:
    """Results of the stack interpreter over an action program."""

    multiplies_per_run: int      # per outer-slice assignment
    peak_checkpoints: int
    peak_stored: int             # checkpoints + partial buffers, simultaneous
    peak_bytes: int              # live frontier + checkpoints + partials
    checkpoint_bytes: dict[int, int]  # buf -> snapshot bytes at CHECKPOINT time
    ok: bool


def interpret(rs: ReuseSchedule, element_bytes: int = 8) -> ScheduleCheck:
    """Validate bracket structure and account storage, without data.

    Checks: RESTORE/FREE only on live checkpoints, every checkpoint freed,
    every MERGE preceded by exactly dim(index) STORE_PARTIALs, operands of
    every executed step available, and a single live value at the end.
    """
    s = rs.schedule
    dims = rs.dims_projected()
    live: dict[int, int] = {}
    cps: dict[int, dict[int, int]] = {}
    partials: dict[int, list[dict[int, int]]] = {}
    cp_bytes: dict[int, int] = {}
    mult = 0
    peak_cp = 0
    peak_stored = 0
    peak_bytes = 0

    def note_peaks() -> None:
        nonlocal peak_cp, peak_stored, peak_bytes
        n_part = sum(len(v) for v in partials.values())
        peak_cp = max(peak_cp, len(cps))
        peak_stored = max(peak_stored, len(cps) + n_part)
        total = sum(live.values())
        total += sum(sum(c.values()) for c in cps.values())
        total += sum(sum(p.values()) for v in partials.values() for p in v)
        peak_bytes = max(peak_bytes, total * element_bytes)

    for act in rs.actions:
        if act.kind == RUN:
            for pos in range(act.lo - 1, act.hi):
                step = s.steps[pos]
                for ref in (step.lhs, step.rhs):
                    if ref >= s.n_leaves:
                        if ref not in live:
                            raise PlanningError(
                                f"step {pos + 1} needs SSA {ref} which is not live"
                            )
                        del live[ref]
                mult += projected_cost(s, pos, dims)
                live[step.result] = projected_size(step.indices, dims)
                note_peaks()
        elif act.kind == CHECKPOINT:
            cps[act.buf] = dict(live)
            cp_bytes[act.buf] = sum(live.values()) * element_bytes
        elif act.kind == RESTORE:
            if act.buf not in cps:
                raise PlanningError(f"RESTORE of dead checkpoint {act.buf}")
            live = dict(cps[act.buf])
        elif act.kind == FREE:
            if act.buf not in cps:
                raise PlanningError(f"FREE of dead checkpoint {act.buf}")
            del cps[act.buf]
        elif act.kind == STORE_PARTIAL:
            partials.setdefault(act.buf, []).append(dict(live))
        elif act.kind == MERGE:
            got = partials.pop(act.buf, [])
            if len(got) != act.dim:
                raise PlanningError(
                    f"MERGE on buffer {act.buf} expects {act.dim} partials, "
                    f"found {len(got)}"
                )
            live = dict(got[-1])
        else:
            raise PlanningError(f"unknown action kind {act.kind}")
        note_peaks()
    if cps:
        raise PlanningError(f"checkpoints never freed: {sorted(cps)}")
    if partials:
        raise PlanningError(f"partial buffers never merged: {sorted(partials)}")
    if len(live) != 1:
        raise PlanningError(f"{len(live)} live values at end of program")
    return ScheduleCheck(mult, peak_cp, peak_stored, peak_bytes, cp_bytes, True)


def _sorted_nested(entries: Sequence[SliceEntry]) -> list[SliceEntry]:
    return sorted(entries, key=lambda e: (e.fork, -e.merge, e.index.label))


def _require_concentric(nested: Sequence[SliceEntry]) -> None:
    for outer, inner in zip(nested, nested[1:]):
        if not (outer.fork <= inner.fork and inner.merge <= outer.merge):
            raise PlanningError(
                f"lifetimes of {outer.index.label!r} and {inner.index.label!r} "
                "are not nested; apply branch_exchange_nest first"
            )


def _partition(
    spec: SliceSpec, nested_labels: Iterable[str] | None
) -> tuple[list[SliceEntry], list[SliceEntry]]:
    if nested_labels is None:
        picked = set(spec.labels)
    else:
        picked = set(nested_labels)
    nested = _sorted_nested([e for e in spec.entries if e.index.label in picked])
    outer = [e for e in spec.entries if e.index.label not in picked]
    return nested, outer


def _emit_tree(s: LinearSchedule, nested: list[SliceEntry]) -> list[ReuseAction]:
    last = len(s.steps)
    actions: list[ReuseAction] = []
    if not nested:
        actions.append(_run(1, last, ()))
        return actions
    if nested[0].fork > 1:
        actions.append(_run(1, nested[0].fork - 1, ()))

    def rec(j: int, asn: tuple[tuple[str, int], ...]) -> None:
        e = nested[j]
        actions.append(ReuseAction(CHECKPOINT, buf=j))
        for v in range(e.index.dim):
            if v > 0:
                actions.append(ReuseAction(RESTORE, buf=j))
            if v == e.index.dim - 1:
                actions.append(ReuseAction(FREE, buf=j))
            asn2 = asn + ((e.index.label, v),)
            if j + 1 < len(nested):
                if e.fork <= nested[j + 1].fork - 1:
                    actions.append(_run(e.fork, nested[j + 1].fork - 1, asn2))
                rec(j + 1, asn2)
            else:
                actions.append(_run(e.fork, last, asn2))

    rec(0, ())
    return actions


def _emit_spindle(s: LinearSchedule, nested: list[SliceEntry]) -> list[ReuseAction]:
    last = len(s.steps)
    actions: list[ReuseAction] = []
    if not nested:
        actions.append(_run(1, last, ()))
        return actions
    if nested[0].fork > 1:
        actions.append(_run(1, nested[0].fork - 1, ()))

    def rec(j: int, asn: tuple[tuple[str, int], ...]) -> None:
        e = nested[j]
        actions.append(ReuseAction(CHECKPOINT, buf=j))
        for v in range(e.index.dim):
            if v > 0:
                actions.append(ReuseAction(RESTORE, buf=j))
            if v == e.index.dim - 1:
                actions.append(ReuseAction(FREE, buf=j))
            asn2 = asn + ((e.index.label, v),)
            if j + 1 < len(nested):
                inner = nested[j + 1]
                if e.fork <= inner.fork - 1:
                    actions.append(_run(e.fork, inner.fork - 1, asn2))
                rec(j + 1, asn2)
                if inner.merge + 1 <= e.merge:
                    actions.append(_run(inner.merge + 1, e.merge, asn2))
            else:
                actions.append(_run(e.fork, e.merge, asn2))
            actions.append(ReuseAction(STORE_PARTIAL, buf=j))
        actions.append(
            ReuseAction(MERGE, buf=j, index=e.index.label, dim=e.index.dim)
        )

    rec(0, ())
    if nested[0].merge < last:
        actions.append(_run(nested[0].merge + 1, last, ()))
    return actions


def _validate_merges(s: LinearSchedule, rs: ReuseSchedule) -> None:
    """A merge is sound only if exactly one live value depends on the index."""
    dims = rs.dims_projected()
    dep_sets = {e.index.label: dependent_results(s, e.index.label) for e in rs.nested}
    live: set[int] = set()
    cps: dict[int, set[int]] = {}
    stash: dict[int, set[int]] = {}
    for act in rs.actions:
        if act.kind == RUN:
            for pos in range(act.lo - 1, act.hi):
                step = s.steps[pos]
                live.discard(step.lhs)
                live.discard(step.rhs)
                live.add(step.result)
        elif act.kind == CHECKPOINT:
            cps[act.buf] = set(live)
        elif act.kind == RESTORE:
            live = set(cps[act.buf])
        elif act.kind == FREE:
            del cps[act.buf]
        elif act.kind == STORE_PARTIAL:
            stash[act.buf] = set(live)
        elif act.kind == MERGE:
            dep_live = stash.get(act.buf, set()) & dep_sets[act.index]
            if len(dep_live) != 1:
                raise PlanningError(
                    f"merge of index {act.index!r} sees {len(dep_live)} dependent "
                    "live values; lifetimes are not in merge position"
                )
            live = set(stash.pop(act.buf))


def plan_tree_reuse(
    s: LinearSchedule,
    spec: SliceSpec,
    mem_budget: int | None = None,
    *,
    nested_labels: Iterable[str] | None = None,
    element_bytes: int = 8,
) -> ReuseSchedule:
    """Pre-lifetime sharing only: fork tree with depth-first traversal.

    The common prefix before each fork runs once per parent branch; at most
    one checkpoint per nesting level is live.  An index whose outermost
    checkpoint alone exceeds the memory budget is demoted to the outer
    (plain re-run) slices and reported in ``demoted``.
    """
    nested, outer = _partition(spec, nested_labels)
    demoted: list[str] = []
    while True:
        rs = ReuseSchedule(s, _emit_tree(s, nested), nested, outer, demoted)
        if mem_budget is None or not nested:
            return rs
        check = interpret(rs, element_bytes)
        worst = check.checkpoint_bytes.get(0, 0)
        if worst <= mem_budget:
            return rs
        victim = nested.pop(0)
        outer = outer + [victim]
        demoted.append(victim.index.label)


def plan_spindle(
    s: LinearSchedule,
    spec: SliceSpec,
    mem_budget: int | None = None,
    *,
    nested_labels: Iterable[str] | None = None,
    element_bytes: int = 8,
) -> tuple[ReuseSchedule, ReusePlanReport]:
    """Combined pre-lifetime checkpoints and post-lifetime merges.

    Execution order is the two-way depth-first traverse: innermost leaf
    pair, merge, next leaf pair, merge, ...  Requires the nested entries'
    (fork, merge) intervals to be concentric.
    """
    nested, outer = _partition(spec, nested_labels)
    _require_concentric(nested)
    rs = ReuseSchedule(s, _emit_spindle(s, nested), nested, outer)
    _validate_merges(s, rs)
    check = interpret(rs, element_bytes)
    if mem_budget is not None and check.peak_bytes > mem_budget:
        raise MemoryBudgetError(
            f"spindle peak {check.peak_bytes} B exceeds budget {mem_budget} B"
        )
    dims = rs.dims_projected()
    proj_total = sum(projected_cost(s, p, dims) for p in range(len(s.steps)))
    c_ori = s.total_cost
    predicted = check.multiplies_per_run * rs.outer_count
    report = ReusePlanReport(
        predicted_multiplies=predicted,
        predicted_peak_bytes=check.peak_bytes,
        overhead_with_reuse=Fraction(predicted, c_ori),
        overhead_without_reuse=Fraction(
            rs.outer_count * rs.nested_count * proj_total, c_ori
        ),
    )
    return rs, report


@dataclass
class TuneResult:
    spec: SliceSpec
    nested_labels: list[str]
    added_multiplies: int
    demoted: list[str]


def tune_memory(
    s: LinearSchedule,
    spec: SliceSpec,
    mem_budget: int,
    *,
    nested_labels: Iterable[str] | None = None,
    element_bytes: int = 8,
) -> TuneResult:
    """Move forks earlier / merges later until the plan fits the budget.

    Ranks on a stem rise and fall like a hill, so displacing a fork or a
    merge outward stores a smaller tensor at the price of re-running the
    displaced steps at a deeper multiplicity.  Moves are chosen to minimize
    the exact added multiplies; if no legal move remains, the innermost
    index is demoted to the outer slices.
    """
    by_label = {e.index.label: e for e in spec.entries}
    nested = _sorted_nested(
        [by_label[l] for l in (nested_labels if nested_labels is not None else spec.labels)]
    )
    demoted: list[str] = []
    added_total = 0

    def build_spec(cur: list[SliceEntry]) -> SliceSpec:
        merged = {e.index.label: e for e in cur}
        entries = [merged.get(e.index.label, e) for e in spec.entries]
        return SliceSpec(entries)

    def predicted(cur: list[SliceEntry]) -> tuple[int, int]:
        sp = build_spec(cur)
        _, rep = plan_spindle(
            s,
            sp,
            None,
            nested_labels=[e.index.label for e in cur],
            element_bytes=element_bytes,
        )
        return rep.predicted_peak_bytes, rep.predicted_multiplies

    while True:
        peak, mult = predicted(nested)
        if peak <= mem_budget:
            return TuneResult(
                build_spec(nested), [e.index.label for e in nested], added_total, demoted
            )
        moves: list[tuple[int, int, SliceEntry]] = []  # (added, slot, new entry)
        for j, e in enumerate(nested):
            fork_floor = nested[j - 1].fork if j > 0 else 1
            merge_ceil = nested[j - 1].merge if j > 0 else len(s.steps)
            if e.fork - 1 >= fork_floor:
                cand = SliceEntry(e.index, e.lifetime, e.fork - 1, e.merge)
                trial = nested[:j] + [cand] + nested[j + 1 :]
                _, m2 = predicted(trial)
                moves.append((m2 - mult, j, cand))
            if e.merge + 1 <= merge_ceil:
                cand = SliceEntry(e.index, e.lifetime, e.fork, e.merge + 1)
                trial = nested[:j] + [cand] + nested[j + 1 :]
                _, m2 = predicted(trial)
                moves.append((m2 - mult, j, cand))
        if not moves:
            if not nested:
                raise MemoryBudgetError(
                    f"budget {mem_budget} B unreachable even with no reuse"
                )
            victim = nested.pop()
            demoted.append(victim.index.label)
            continue
        moves.sort(key=lambda m: (m[0], m[1], m[2].fork, m[2].merge))
        added, j, cand = moves[0]
        nested[j] = cand
        added_total += added


@dataclass
class ReusePartition:
    nested: list[SliceEntry]
    outer: list[SliceEntry]
    schedule: LinearSchedule
    spec: SliceSpec
    overheads: dict[str, Fraction]

    @property
    def nested_labels(self) -> list[str]:
        return [e.index.label for e in self.nested]


def choose_reuse_subset(
    t: ContractionTree,
    spec: SliceSpec,
    mem_budget: int | None = None,
    max_k: int = 12,
    *,
    element_bytes: int = 8,
) -> ReusePartition:
    """Pick the reuse subset: highest index overhead first, while the
    lifetimes (after branch exchange) stay nested, the plan fits the memory
    budget and the subset stays within ``max_k``.

    Indices with O(a) = 1 gain nothing from reuse and are never admitted.
    """
    from .slicing import branch_exchange_nest  # local: avoids cycle at import

    s = linearize(t)
    s, spec = branch_exchange_nest(s, spec)
    overheads = {l: index_overhead(t, l) for l in spec.labels}
    order = sorted(spec.entries, key=lambda e: (-overheads[e.index.label], e.index.label))
    chosen: list[SliceEntry] = []
    for e in order:
        if overheads[e.index.label] <= 1:
            continue
        if len(chosen) >= max_k:
            break
        trial = _sorted_nested(chosen + [e])
        try:
            _require_concentric(trial)
            _, rep = plan_spindle(
                s,
                spec,
                None,
                nested_labels=[x.index.label for x in trial],
                element_bytes=element_bytes,
            )
        except PlanningError:
            continue
        if mem_budget is not None and rep.predicted_peak_bytes > mem_budget:
            continue
        chosen = trial
    chosen_labels = {e.index.label for e in chosen}
    outer = [e for e in spec.entries if e.index.label not in chosen_labels]
    return ReusePartition(chosen, outer, s, spec, overheads)
