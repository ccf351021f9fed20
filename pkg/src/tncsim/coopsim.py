"""Discrete simulator of core-array-cooperation fused execution.

The model walks the stem steps of a schedule and tracks where the stem
tensor lives.  Solo mode holds the whole stem tensor in one cell's
scratchpad (rank cap ``intra_rank_cap``); cooperation mode spreads up to
log2(cells) indices across the array (cap ``coop_rank_cap``), swapping an
inter-cell index into the scratchpad right before it is contracted.

A fused section is a run of steps executed without storing/reloading the
stem tensor: a section of length n costs 2 intermediate memory accesses
instead of the step-by-step 2n, canceling 2(n-1).  Sections break when the
stem tensor stops fitting the active cap; breaks are recorded, never
errors.

Swap traffic convention: per-cell traffic is counted one-way (bytes
received), so a pairwise swap moves half an intra-cell tensor per cell and
an n-index batch swap (1 - 2^-n) of one, giving the one-by-one over batch
ratio n*2^(n-1) / (2^n - 1).

Everything here counts bytes and events, not time; optional bandwidth
parameters turn byte counts into model-labeled time estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import TncError
from .tree import LinearSchedule

DEFAULT_DMA_BANDWIDTH = 51.2e9  # bytes/s per core group, model parameter


@dataclass(frozen=True)
class ArrayParams:
    cells: int = 64
    intra_rank_cap: int = 13
    element_bytes: int = 8
    dma_bandwidth: float | None = None
    rma_bandwidth: float | None = None

    def __post_init__(self) -> None:
        if self.cells < 1 or self.cells & (self.cells - 1):
            raise TncError(f"cells must be a power of two, got {self.cells}")

    @property
    def inter_bits(self) -> int:
        return self.cells.bit_length() - 1

    @property
    def coop_rank_cap(self) -> int:
        return self.intra_rank_cap + self.inter_bits


@dataclass
class SwapEvent:
    step: int                 # 1-based stem-walk step number
    indices: tuple[str, ...]  # inter-cell indices brought intra
    victims: tuple[str, ...]  # intra indices sent out
    group_cells: int
    per_cell_bytes: Fraction


@dataclass
class FusedSection:
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class TrafficReport:
    dma_bytes: int = 0
    rma_bytes: Fraction = Fraction(0)
    swap_events: list[SwapEvent] = field(default_factory=list)
    fused_sections: list[FusedSection] = field(default_factory=list)
    memory_accesses: int = 0
    baseline_accesses: int = 0
    section_overflows: int = 0  # steps too large even for the active cap

    @property
    def mean_fused_length(self) -> float:
        if not self.fused_sections:
            return 0.0
        return sum(s.length for s in self.fused_sections) / len(self.fused_sections)

    def times(self, p: ArrayParams) -> dict[str, float]:
        """Model-derived time estimates (bytes / bandwidth), never measured."""
        out = {}
        if p.dma_bandwidth:
            out["dma_seconds_model"] = self.dma_bytes / p.dma_bandwidth
        if p.rma_bandwidth:
            out["rma_seconds_model"] = float(self.rma_bytes) / p.rma_bandwidth
        return out

    def to_obj(self):
        return {
            "dma_bytes": self.dma_bytes,
            "rma_bytes": float(self.rma_bytes),
            "memory_accesses": self.memory_accesses,
            "baseline_accesses": self.baseline_accesses,
            "fused_sections": [[s.start, s.end, s.length] for s in self.fused_sections],
            "mean_fused_length": self.mean_fused_length,
            "swap_events": [
                {
                    "step": e.step,
                    "indices": list(e.indices),
                    "victims": list(e.victims),
                    "group_cells": e.group_cells,
                    "per_cell_bytes": float(e.per_cell_bytes),
                }
                for e in self.swap_events
            ],
            "section_overflows": self.section_overflows,
        }


def batch_swap_ratio(n: int) -> Fraction:
    """Communication reduction of an n-index batch swap: n*2^(n-1)/(2^n - 1)."""
    if n < 1:
        raise TncError(f"batch size must be >= 1, got {n}")
    return Fraction(n * 2 ** (n - 1), 2**n - 1)


def failure_rate(n_nodes: int, per_node: float) -> float:
    """Whole-collection failure probability 1 - (1 - p)^N."""
    if not 0.0 <= per_node <= 1.0:
        raise TncError(f"probability out of range: {per_node}")
    if n_nodes < 0:
        raise TncError(f"negative node count: {n_nodes}")
    return 1.0 - (1.0 - per_node) ** n_nodes


@dataclass
class _StemStep:
    """One stem-walk step, symbolic."""

    number: int                    # 1-based within the walk
    in_labels: tuple[str, ...]     # stem input tensor indices
    contracted: tuple[str, ...]    # indices summed at this step
    out_labels: tuple[str, ...]    # stem result indices
    out_rank: int


def _stem_walk(s: LinearSchedule, stem_positions: Sequence[int]) -> list[_StemStep]:
    walk = []
    for num, pos in enumerate(stem_positions, start=1):
        step = s.steps[pos]
        lhs = s.indices_of(step.lhs)
        rhs = s.indices_of(step.rhs)
        # The stem input is the larger operand (the evolving big tensor).
        stem_in = lhs if len(lhs) >= len(rhs) else rhs
        out_labels = tuple(ix.label for ix in step.indices)
        out_set = set(out_labels)
        union = {ix.label for ix in lhs} | {ix.label for ix in rhs}
        contracted = tuple(sorted(union - out_set))
        walk.append(
            _StemStep(
                num,
                tuple(ix.label for ix in stem_in),
                contracted,
                out_labels,
                len(out_labels),
            )
        )
    return walk


def _remaining_life(walk: Sequence[_StemStep], label: str, now: int) -> int:
    """Steps until the label is contracted on the stem; large if never."""
    for st in walk[now - 1 :]:
        if label in st.contracted:
            return st.number - now
    return len(walk) + 1


def simulate_fusion(
    s: LinearSchedule, p: ArrayParams, cooperate: bool
) -> TrafficReport:
    """Walk every stem, tracking residency, sections and traffic.

    Initial inter-cell placement takes the longest-lifetime indices; the
    swap victim is the intra index with the longest remaining life (ties by
    label).  Solo mode never swaps; it breaks whenever the stem tensor rank
    exceeds the scratchpad cap.
    """
    if not s.stems:
        raise TncError("schedule has no stem to simulate")
    report = TrafficReport()
    for stem in s.stems:
        _simulate_stem(s, stem.positions, p, cooperate, report)
    return report


def _life_order(walk, labels, now):
    return sorted(labels, key=lambda lab: (-_remaining_life(walk, lab, now), lab))


def _simulate_stem(s, positions, p: ArrayParams, cooperate, report: TrafficReport):
    walk = _stem_walk(s, positions)
    cap = p.coop_rank_cap if cooperate else p.intra_rank_cap
    report.baseline_accesses += 2 * len(walk)

    inter: list[str] = []
    section_start: int | None = None
    section_bytes_in = 0

    def open_section(st: _StemStep) -> None:
        nonlocal inter, section_start, section_bytes_in
        section_start = st.number
        section_bytes_in = 2 ** len(st.in_labels) * p.element_bytes
        inter = []
        if cooperate:
            # distribute only what the scratchpad cannot hold, longest
            # lifetimes first, so cooperation is a no-op below the solo cap
            need = min(p.inter_bits, max(0, len(st.in_labels) - p.intra_rank_cap))
            inter = _life_order(walk, st.in_labels, st.number)[:need]
        if len(st.in_labels) > cap:
            report.section_overflows += 1

    def close_section(end_num: int, end_rank: int) -> None:
        nonlocal section_start
        if section_start is None:
            return
        report.fused_sections.append(FusedSection(section_start, end_num))
        report.memory_accesses += 2
        report.dma_bytes += section_bytes_in + 2**end_rank * p.element_bytes
        section_start = None

    last = walk[-1]
    for st in walk:
        if section_start is None:
            open_section(st)
        if cooperate:
            pending = [lab for lab in st.contracted if lab in inter]
            if pending:
                intra_rank = max(len(st.in_labels) - len(inter), 0)
                per_cell = Fraction(2**intra_rank * p.element_bytes, 2)
                kept = [lab for lab in inter if lab not in pending]
                intra_pool = _life_order(
                    walk,
                    (
                        lab
                        for lab in st.in_labels
                        if lab not in inter and lab not in st.contracted
                    ),
                    st.number,
                )
                victims = intra_pool[: len(pending)]
                for k, lab in enumerate(pending):
                    vic = (victims[k],) if k < len(victims) else ()
                    report.swap_events.append(
                        SwapEvent(st.number, (lab,), vic, 2, per_cell)
                    )
                    report.rma_bytes += per_cell * p.cells
                inter = kept + victims
        inter_kept = [lab for lab in inter if lab in st.out_labels]
        if cooperate:
            # results are written distributed when the scratchpad part would
            # overflow: promotion is a write-pattern choice, not a swap
            overflow = st.out_rank - len(inter_kept) - p.intra_rank_cap
            if overflow > 0:
                room = p.inter_bits - len(inter_kept)
                promos = _life_order(
                    walk,
                    (lab for lab in st.out_labels if lab not in inter_kept),
                    st.number,
                )[: min(overflow, room)]
                inter_kept = inter_kept + promos
        fits = st.out_rank <= cap and (
            st.out_rank - len(inter_kept) <= p.intra_rank_cap
            if cooperate
            else st.out_rank <= cap
        )
        if fits and len(st.in_labels) <= cap and st is not last:
            inter = inter_kept
            continue
        close_section(st.number, st.out_rank)


@dataclass
class BatchSwapPlan:
    events: list[SwapEvent]
    one_by_one_per_cell: Fraction
    batched_per_cell: Fraction

    @property
    def ratio(self) -> Fraction:
        if self.batched_per_cell == 0:
            return Fraction(1)
        return self.one_by_one_per_cell / self.batched_per_cell


def plan_batch_swaps(
    s: LinearSchedule, p: ArrayParams, lookahead: int = 0
) -> BatchSwapPlan:
    """Group pending swaps whose lifetimes end within ``lookahead`` steps.

    An n-index batch uses a 2^n-cell group; per-cell one-way traffic is
    (1 - 2^-n) of the intra tensor versus n halves one-by-one, so counted
    traffic reproduces ``batch_swap_ratio(n)`` exactly.
    """
    if not s.stems:
        raise TncError("schedule has no stem to plan swaps for")
    events: list[SwapEvent] = []
    one_total = Fraction(0)
    batch_total = Fraction(0)
    for stem in s.stems:
        walk = _stem_walk(s, stem.positions)
        inter: list[str] = []
        if walk:
            first = walk[0]
            need = min(p.inter_bits, max(0, len(first.in_labels) - p.intra_rank_cap))
            inter = _life_order(walk, first.in_labels, 1)[:need]
        for st in walk:
            pending = [lab for lab in st.contracted if lab in inter]
            if not pending:
                inter = [lab for lab in inter if lab in st.out_labels]
                continue
            batch = list(pending)
            for lab in inter:
                if lab in batch:
                    continue
                life = _remaining_life(walk, lab, st.number)
                if life <= lookahead:
                    batch.append(lab)
            n = len(batch)
            intra_rank = max(len(st.in_labels) - len(inter), 0)
            unit = Fraction(2**intra_rank * p.element_bytes)
            intra_pool = sorted(
                (lab for lab in st.in_labels if lab not in inter and lab not in st.contracted),
                key=lambda lab: (-_remaining_life(walk, lab, st.number), lab),
            )
            victims = tuple(intra_pool[: len(batch)])
            per_cell = unit * (1 - Fraction(1, 2**n))
            events.append(SwapEvent(st.number, tuple(batch), victims, 2**n, per_cell))
            one_total += Fraction(n, 2) * unit
            batch_total += per_cell
            inter = [lab for lab in inter if lab not in batch] + list(victims)
            inter = [lab for lab in inter if lab in st.out_labels]
    return BatchSwapPlan(events, one_total, batch_total)
