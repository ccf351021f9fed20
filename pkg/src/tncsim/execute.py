"""Execution of direct, sliced and reuse schedules with exact counters.

Counters are integers: one multiply per element of the M x K x N space per
contraction, summed over every executed step.  They must match the planning
side exactly (no tolerances), which the test suite asserts.

Precision policy: single means complex64 for data at rest and complex128 in
flight.  Leaves, checkpoints, merge partials, spilled/reported values and
anything live at the end of a RUN action are stored (and byte-accounted) as
complex64; inside one RUN range the evolving intermediates stay at
accumulation precision, the way a fused kernel holds its tensor without
materializing between steps.  The split-common kernel is deliberately not
given this treatment; its accumulation behavior in the operand precision is
the whole point of blocked summation.

Determinism: subtask values are reduced in enumeration order through a
fixed hierarchical topology (groups of ``group_size`` first, then the group
sums), so the final value is identical for any worker count.  Workers own
disjoint blocks of outer-slice assignments and share nothing mutable.
"""

from __future__ import annotations

import itertools
import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .contract import contract_pair, multiply_cost
from .errors import MemoryBudgetError, PlanningError, TncError
from .network import TensorNetwork
from .reuse import (
    MERGE,
    RESTORE,
    RUN,
    STORE_PARTIAL,
    CHECKPOINT,
    FREE,
    ReuseSchedule,
    dependent_results,
)
from .slicing import SliceSpec
from .tensor import ELEMENT_BYTES, DenseTensor, project
from .tree import ContractionTree, LinearSchedule, linearize


@dataclass
class RunStats:
    multiplies: int = 0
    bytes_peak: int = 0
    bytes_moved: int = 0
    wall_time: float = 0.0
    subtasks_done: int = 0

    def to_obj(self):
        return {
            "multiplies": self.multiplies,
            "bytes_peak": self.bytes_peak,
            "bytes_moved": self.bytes_moved,
            "wall_time": self.wall_time,
            "subtasks_done": self.subtasks_done,
        }


@dataclass(frozen=True)
class ReductionTopology:
    """Two-level reduction: groups of ``group_size`` summed first."""

    group_size: int = 256

    def __post_init__(self) -> None:
        if self.group_size < 1:
            raise TncError("group_size must be >= 1")

    def levels(self, n: int) -> list[int]:
        """Partial-sum counts per level for n inputs."""
        out = [n]
        while out[-1] > 1:
            out.append(-(-out[-1] // self.group_size))
        return out


@dataclass
class RunResult:
    value: complex
    stats: RunStats
    partials: dict[tuple[int, ...], complex]
    partial_labels: tuple[str, ...]
    partial_dims: tuple[int, ...]


def hierarchical_reduce(partials: Sequence[complex], topo: ReductionTopology):
    """Sum group-by-group, then the group results, in fixed left order."""
    if len(partials) == 0:
        raise TncError("nothing to reduce")
    vals = list(partials)
    g = topo.group_size
    groups = []
    for lo in range(0, len(vals), g):
        acc = vals[lo]
        for v in vals[lo + 1 : lo + g]:
            acc = acc + v
        groups.append(acc)
    total = groups[0]
    for v in groups[1:]:
        total = total + v
    return total


def _enumerate(dims: Sequence[int]) -> Iterable[tuple[int, ...]]:
    return itertools.product(*[range(d) for d in dims])


class _Engine:
    """Per-run state: precision-converted leaves and counters."""

    def __init__(
        self,
        net: TensorNetwork,
        precision: str,
        max_intermediate_bytes: int | None = None,
    ):
        self.leaves = [t.astype(precision) for t in net.tensors]
        self.precision = precision
        self.cap = max_intermediate_bytes

    def fetch(self, s: LinearSchedule, ref: int, assignment, values):
        if ref < s.n_leaves:
            return project(self.leaves[ref], assignment)
        return values[ref]

    def run_range(
        self,
        s: LinearSchedule,
        lo: int,
        hi: int,
        assignment: dict[str, int],
        values: dict[int, DenseTensor],
        stats: RunStats,
        aux_bytes: int = 0,
    ) -> None:
        single = self.precision == "single"
        rate = ELEMENT_BYTES[self.precision]
        live = sum(v.size for v in values.values())
        for pos in range(lo - 1, hi):
            step = s.steps[pos]
            lhs = self.fetch(s, step.lhs, assignment, values)
            rhs = self.fetch(s, step.rhs, assignment, values)
            if single:
                if lhs.precision == "single":
                    lhs = lhs.astype("double")
                if rhs.precision == "single":
                    rhs = rhs.astype("double")
            out = contract_pair(lhs, rhs)
            if self.cap is not None and out.size * rate > self.cap:
                raise MemoryBudgetError(
                    f"step {pos + 1} produces a {out.size * rate}-byte "
                    f"intermediate over the {self.cap}-byte cap"
                )
            stats.multiplies += multiply_cost(lhs.indices, rhs.indices)
            stats.bytes_moved += (lhs.size + rhs.size + out.size) * rate
            for ref in (step.lhs, step.rhs):
                if ref >= s.n_leaves and ref in values:
                    live -= values[ref].size
                    del values[ref]
            values[step.result] = out
            live += out.size
            stats.bytes_peak = max(stats.bytes_peak, live * rate + aux_bytes)
        if single:
            # round everything that survives the range back to storage
            for key, val in values.items():
                if val.precision != "single":
                    values[key] = val.astype("single")


def run_direct(
    net: TensorNetwork,
    t: ContractionTree,
    precision: str = "double",
    max_intermediate_bytes: int | None = None,
) -> tuple[complex, RunStats]:
    """Contract the closed network along the tree; multiplies == total_cost."""
    s = linearize(t)
    eng = _Engine(net, precision, max_intermediate_bytes)
    stats = RunStats()
    t0 = time.perf_counter()
    values: dict[int, DenseTensor] = {}
    eng.run_range(s, 1, len(s.steps), {}, values, stats)
    root = s.steps[-1].result if s.steps else 0
    if s.steps:
        value = values[root].value()
    else:
        value = eng.leaves[0].value()
    stats.wall_time = time.perf_counter() - t0
    stats.subtasks_done = 1
    return value, stats


def run_sliced(
    net: TensorNetwork,
    t: ContractionTree,
    spec: SliceSpec,
    precision: str = "double",
    max_intermediate_bytes: int | None = None,
) -> RunResult:
    """Sum of projected-network contractions over all slice assignments."""
    s = linearize(t)
    eng = _Engine(net, precision, max_intermediate_bytes)
    stats = RunStats()
    t0 = time.perf_counter()
    labels = spec.labels
    dims = tuple(e.index.dim for e in spec.entries)
    acc = None
    partials: dict[tuple[int, ...], complex] = {}
    root = s.steps[-1].result if s.steps else 0
    for key in _enumerate(dims):
        assignment = dict(zip(labels, key))
        values: dict[int, DenseTensor] = {}
        eng.run_range(s, 1, len(s.steps), assignment, values, stats)
        val = values[root].value() if s.steps else project(eng.leaves[0], assignment).value()
        partials[key] = val
        acc = val if acc is None else acc + val
        stats.subtasks_done += 1
    stats.wall_time = time.perf_counter() - t0
    return RunResult(acc, stats, partials, labels, dims)


def _run_program(
    eng: _Engine,
    rs: ReuseSchedule,
    outer_assignment: dict[str, int],
    dep_sets: dict[str, set[int]],
    mem_budget: int | None,
) -> tuple[complex, RunStats]:
    s = rs.schedule
    stats = RunStats()
    values: dict[int, DenseTensor] = {}
    cps: dict[int, dict[int, DenseTensor]] = {}
    bufs: dict[int, list[dict[int, DenseTensor]]] = {}
    parked = False
    root = s.steps[-1].result
    acc = None

    def add_root(v):
        nonlocal acc
        acc = v if acc is None else acc + v

    def aux_bytes() -> int:
        seen: dict[int, int] = {}
        for pool in itertools.chain(
            cps.values(), (p for v in bufs.values() for p in v)
        ):
            for tensor in pool.values():
                seen[id(tensor)] = tensor.nbytes
        return sum(seen.values())

    for act in rs.actions:
        if act.kind == RUN:
            asn = dict(outer_assignment)
            asn.update(dict(act.assignment))
            eng.run_range(s, act.lo, act.hi, asn, values, stats, aux_bytes())
            parked = False
        elif act.kind == CHECKPOINT:
            snap = dict(values)
            size = sum(v.nbytes for v in snap.values())
            if mem_budget is not None and size > mem_budget:
                label = rs.nested[act.buf].index.label
                raise MemoryBudgetError(
                    f"checkpoint at fork of index {label!r} needs {size} B, "
                    f"budget {mem_budget} B"
                )
            cps[act.buf] = snap
        elif act.kind == RESTORE:
            if root in values and not parked:
                add_root(values[root].value())
            values = dict(cps[act.buf])
            parked = False
        elif act.kind == FREE:
            del cps[act.buf]
        elif act.kind == STORE_PARTIAL:
            bufs.setdefault(act.buf, []).append(dict(values))
            parked = True
        elif act.kind == MERGE:
            parts = bufs.pop(act.buf)
            if len(parts) != act.dim:
                raise PlanningError(
                    f"merge expected {act.dim} partials, found {len(parts)}"
                )
            dep = dep_sets[act.index]
            merged: dict[int, DenseTensor] = {}
            for ssa, first in parts[0].items():
                if ssa in dep:
                    data = parts[0][ssa].data.copy()
                    for p in parts[1:]:
                        data = data + p[ssa].data
                    merged[ssa] = DenseTensor(first.indices, data)
                else:
                    merged[ssa] = first
            values = merged
            parked = False
        else:
            raise PlanningError(f"unknown action {act.kind}")
    if root in values:
        add_root(values[root].value())
    if acc is None:
        raise PlanningError("reuse program produced no final value")
    stats.subtasks_done = rs.nested_count
    return acc, stats


def run_reuse(
    net: TensorNetwork,
    t: ContractionTree,
    rs: ReuseSchedule,
    workers: int = 1,
    precision: str = "double",
    group_size: int = 256,
    mem_budget: int | None = None,
    max_intermediate_bytes: int | None = None,
) -> RunResult:
    """Execute a reuse program once per outer-slice assignment.

    Outer assignments are block-partitioned over ``workers``; each spindle
    runs sequentially inside one worker.  The final value reduces the outer
    partials hierarchically in enumeration order, so it is identical for
    any worker count.
    """
    eng = _Engine(net, precision, max_intermediate_bytes)
    t0 = time.perf_counter()
    labels = tuple(e.index.label for e in rs.outer)
    dims = tuple(e.index.dim for e in rs.outer)
    dep_sets = {
        e.index.label: dependent_results(rs.schedule, e.index.label)
        for e in rs.nested
    }
    keys = list(_enumerate(dims))
    results: list[complex | None] = [None] * len(keys)
    all_stats: list[RunStats | None] = [None] * len(keys)

    def work(block: range) -> None:
        for i in block:
            val, st = _run_program(
                eng, rs, dict(zip(labels, keys[i])), dep_sets, mem_budget
            )
            results[i] = val
            all_stats[i] = st

    workers = max(1, workers)
    if workers == 1 or len(keys) <= 1:
        work(range(len(keys)))
    else:
        size = -(-len(keys) // workers)
        blocks = [range(lo, min(lo + size, len(keys))) for lo in range(0, len(keys), size)]
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            futures = [pool.submit(work, b) for b in blocks]
            for f in futures:
                f.result()
    stats = RunStats()
    for st in all_stats:
        stats.multiplies += st.multiplies
        stats.bytes_moved += st.bytes_moved
        stats.bytes_peak = max(stats.bytes_peak, st.bytes_peak)
        stats.subtasks_done += st.subtasks_done
    value = hierarchical_reduce(results, ReductionTopology(group_size))
    stats.wall_time = time.perf_counter() - t0
    partials = dict(zip(keys, results))
    return RunResult(value, stats, partials, labels, dims)


# -- replay verification ----------------------------------------------------


@dataclass
class ReplayReport:
    sampled: list[tuple[int, ...]]
    max_rel_dev: float
    failures: list[tuple[int, ...]]
    ok: bool

    def to_obj(self):
        return {
            "sampled": [list(k) for k in self.sampled],
            "max_rel_dev": self.max_rel_dev,
            "failures": [list(k) for k in self.failures],
            "ok": self.ok,
        }


DEFAULT_REPLAY_TOL = {"single": 1e-5, "double": 1e-10, "exact": 0.0}


def replay_verify(
    net: TensorNetwork,
    t: ContractionTree,
    spec: SliceSpec,
    result: RunResult,
    sample_count: int,
    seed: int = 0,
    precision: str = "double",
    tol: float | None = None,
) -> ReplayReport:
    """Recompute a sample of subtask partials independently (no reuse).

    Each sampled partial is recomputed as a plain sliced sum over the slice
    indices not fixed by the partial's key and compared within tolerance.
    Deviations beyond tolerance make a verification-failed report, not a
    crash.
    """
    if tol is None:
        tol = DEFAULT_REPLAY_TOL[precision]
    if sample_count <= 0 or not result.partials:
        return ReplayReport([], 0.0, [], True)
    s = linearize(t)
    eng = _Engine(net, precision)
    fixed = result.partial_labels
    rest = [e for e in spec.entries if e.index.label not in fixed]
    rest_labels = tuple(e.index.label for e in rest)
    rest_dims = tuple(e.index.dim for e in rest)
    rng = np.random.default_rng(seed)
    keys = sorted(result.partials)
    take = min(sample_count, len(keys))
    picked = [keys[i] for i in sorted(rng.choice(len(keys), size=take, replace=False))]
    root = s.steps[-1].result
    failures = []
    max_dev = 0.0
    for key in picked:
        base = dict(zip(fixed, key))
        acc = None
        for sub in _enumerate(rest_dims):
            assignment = dict(base)
            assignment.update(dict(zip(rest_labels, sub)))
            values: dict[int, DenseTensor] = {}
            eng.run_range(s, 1, len(s.steps), assignment, values, RunStats())
            v = values[root].value()
            acc = v if acc is None else acc + v
        got = result.partials[key]
        denom = max(abs(acc), 1e-300)
        dev = abs(got - acc) / denom
        max_dev = max(max_dev, float(dev))
        if dev > tol:
            failures.append(key)
    return ReplayReport(picked, max_dev, failures, not failures)


def simulate_collection_failures(
    n_partials: int, per_partial: float, seed: int = 0, trials: int = 2000
) -> float:
    """Seeded Bernoulli injector: frequency of whole-result failures.

    A collection fails when any of its n partials fails; the frequency is
    checkable against the closed form 1 - (1 - p)^n.
    """
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(trials):
        if (rng.random(n_partials) < per_partial).any():
            fails += 1
    return fails / trials


# -- partial-result spill files ---------------------------------------------

_SPILL_MAGIC = b"TNCPART1"


def write_partials(path: str, result: RunResult) -> None:
    """Binary spill: header JSON line + (assignment bits, re, im) records."""
    head = json.dumps(
        {"labels": list(result.partial_labels), "dims": list(result.partial_dims)}
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_SPILL_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(struct.pack("<Q", len(result.partials)))
        for key in sorted(result.partials):
            code = 0
            for v, d in zip(key, result.partial_dims):
                code = code * d + v
            val = complex(result.partials[key])
            fh.write(struct.pack("<Qdd", code, val.real, val.imag))


def read_partials(path: str) -> tuple[tuple[str, ...], tuple[int, ...], dict]:
    with open(path, "rb") as fh:
        if fh.read(len(_SPILL_MAGIC)) != _SPILL_MAGIC:
            raise TncError(f"{path}: not a partials spill file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        head = json.loads(fh.read(hlen).decode())
        labels = tuple(head["labels"])
        dims = tuple(head["dims"])
        (count,) = struct.unpack("<Q", fh.read(8))
        partials = {}
        for _ in range(count):
            code, re, im = struct.unpack("<Qdd", fh.read(24))
            key = []
            for d in reversed(dims):
                key.append(code % d)
                code //= d
            partials[tuple(reversed(key))] = complex(re, im)
    return labels, dims, partials
