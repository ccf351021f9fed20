"""Command-line pipeline: ingest, plan, slice, reuse, execute, report.

Sub-commands expose each stage with one config surface:

* ``run``        full pipeline to an amplitude + run report
* ``plan``       tree metrics and stem structure
* ``slice``      slice selection + per-index overhead table
* ``reuse-plan`` reuse partition, action program and plan report
* ``cost``       core-array fusion simulation, solo and cooperation modes
* ``perm-stats`` stride/offset bucket histogram over a schedule
* ``verify``     replay verification against a partials spill file

Exit codes: 0 success, 2 config error, 3 planning failure, 4 verification
failure.  All sub-commands are pure functions of (inputs, flags, seed);
reports are byte-identical across runs except the ``timing`` block.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from typing import Sequence

from .circuit import circuit_to_network, parse_circuit
from .contract import contraction_permutations
from .coopsim import ArrayParams, plan_batch_swaps, simulate_fusion
from .errors import (
    CircuitParseError,
    MemoryBudgetError,
    NetworkError,
    PlanningError,
    SlicingError,
    TncError,
)
from .execute import (
    RunResult,
    read_partials,
    replay_verify,
    run_direct,
    run_reuse,
    run_sliced,
    write_partials,
)
from .network import TensorNetwork
from .reuse import plan_spindle, tune_memory, choose_reuse_subset
from .slicing import SliceSpec, index_overhead, select_slices, slicing_overhead
from .tensor import ELEMENT_BYTES
from .tree import ContractionTree, greedy_path, linearize, tree_metrics


class SystemExit2(Exception):
    """Config error carrying exit code 2."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PLANNING = 3
EXIT_VERIFY = 4


@dataclass
class JobConfig:
    command: str
    circuit: str | None = None
    bitstring: str | None = None
    network: str | None = None
    tree: str | None = None
    max_rank: int | None = None
    mem_budget_bytes: int | None = None
    reuse_max_k: int = 12
    reuse: bool = True
    workers: int = 1
    precision: str = "double"
    seed: int = 0
    group_size: int = 256
    lookahead: int = 0
    slice_budget: int = 64
    verify_samples: int = 0
    cells: int = 64
    intra_cap: int = 13
    partials_out: str | None = None
    partials: str | None = None
    out: str | None = None
    format: str = "json"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--circuit", help="circuit text file")
    p.add_argument("--bitstring", help="target bitstring (qubit 0 rightmost)")
    p.add_argument("--network", help="tensor network JSON file")
    p.add_argument("--tree", help="contraction tree JSON file ({'ssa_path': ...})")
    p.add_argument("--max-rank", type=int, dest="max_rank")
    p.add_argument("--mem-budget-bytes", type=int, dest="mem_budget_bytes")
    p.add_argument("--reuse-max-k", type=int, default=12, dest="reuse_max_k")
    p.add_argument("--no-reuse", action="store_false", dest="reuse", default=True)
    p.add_argument(
        "--workers",
        type=int,
        default=int(os.environ.get("TNCSIM_WORKERS", "1")),
    )
    p.add_argument("--precision", choices=["single", "double"], default="double")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group-size", type=int, default=256, dest="group_size")
    p.add_argument("--lookahead", type=int, default=0)
    p.add_argument("--slice-budget", type=int, default=64, dest="slice_budget")
    p.add_argument("--verify-samples", type=int, default=0, dest="verify_samples")
    p.add_argument("--cells", type=int, default=64)
    p.add_argument("--intra-cap", type=int, default=13, dest="intra_cap")
    p.add_argument("--partials-out", dest="partials_out")
    p.add_argument("--partials")
    p.add_argument("--out")
    p.add_argument("--format", choices=["json", "csv"], default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tncsim",
        description="Tensor-network contraction engine for circuit amplitudes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "plan", "slice", "reuse-plan", "cost", "perm-stats", "verify"):
        _add_common(sub.add_parser(name))
    return parser


def _load_network(cfg: JobConfig) -> TensorNetwork:
    if cfg.network:
        with open(cfg.network) as fh:
            return TensorNetwork.from_json(fh.read(), cfg.precision)
    if not cfg.circuit:
        raise SystemExit2("one of --circuit or --network is required")
    with open(cfg.circuit) as fh:
        circ = parse_circuit(fh.read())
    if cfg.bitstring is None:
        raise SystemExit2("--bitstring is required with --circuit")
    return circuit_to_network(circ, cfg.bitstring)


def _load_tree(cfg: JobConfig, net: TensorNetwork) -> ContractionTree:
    if cfg.tree:
        return ContractionTree.load(cfg.tree, net)
    return greedy_path(net, cfg.seed)


def _emit(cfg: JobConfig, obj: dict, csv_rows: list[tuple] | None = None) -> None:
    if cfg.format == "csv":
        rows = csv_rows if csv_rows is not None else _flatten_rows(obj)
        text = "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"
    else:
        text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _flatten_rows(obj: dict, prefix: str = "") -> list[tuple]:
    rows = []
    for key, val in obj.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            rows.extend(_flatten_rows(val, name + "."))
        elif isinstance(val, list):
            rows.append((name, json.dumps(val)))
        else:
            rows.append((name, val))
    return rows


def _amplitude_obj(value) -> list[float]:
    c = complex(value)
    return [c.real, c.imag]


def cmd_run(cfg: JobConfig) -> int:
    net = _load_network(cfg)
    tree = _load_tree(cfg, net)
    metrics = tree_metrics(tree)
    element_bytes = ELEMENT_BYTES[cfg.precision]
    report: dict = {
        "command": "run",
        "config": _config_obj(cfg),
        "tree": {
            "total_cost": metrics.total_cost,
            "flops": 8 * metrics.total_cost,
            "max_rank": metrics.max_rank,
            "peak_memory_elements": metrics.peak_memory_elements,
        },
    }
    spec = SliceSpec([])
    if cfg.max_rank is not None:
        spec = select_slices(tree, cfg.max_rank, cfg.slice_budget, cfg.seed)
    report["slicing"] = {
        "labels": list(spec.labels),
        "n_subtasks": spec.n_subtasks,
        "nesting_ok": spec.nesting_ok,
        "overhead": float(slicing_overhead(tree, spec.labels)) if spec.entries else 1.0,
    }
    t0 = time.perf_counter()
    replay = None
    if spec.entries and cfg.reuse:
        part = choose_reuse_subset(
            tree, spec, cfg.mem_budget_bytes, cfg.reuse_max_k, element_bytes=element_bytes
        )
        schedule, spec2, nested_labels = part.schedule, part.spec, part.nested_labels
        if cfg.mem_budget_bytes is not None and nested_labels:
            tuned = tune_memory(
                schedule,
                spec2,
                cfg.mem_budget_bytes,
                nested_labels=nested_labels,
                element_bytes=element_bytes,
            )
            spec2, nested_labels = tuned.spec, tuned.nested_labels
        rs, plan_report = plan_spindle(
            schedule,
            spec2,
            cfg.mem_budget_bytes,
            nested_labels=nested_labels,
            element_bytes=element_bytes,
        )
        result = run_reuse(
            net,
            tree,
            rs,
            workers=cfg.workers,
            precision=cfg.precision,
            group_size=cfg.group_size,
            mem_budget=cfg.mem_budget_bytes,
        )
        report["reuse"] = {
            "nested": nested_labels,
            "outer": [e.index.label for e in rs.outer],
            "plan": plan_report.to_obj(),
        }
    elif spec.entries:
        result = run_sliced(net, tree, spec, cfg.precision)
        report["reuse"] = None
    else:
        value, stats = run_direct(net, tree, cfg.precision)
        result = RunResult(value, stats, {(): value}, (), ())
        report["reuse"] = None
    if spec.entries and cfg.verify_samples > 0:
        replay = replay_verify(
            net,
            tree,
            spec,
            result,
            cfg.verify_samples,
            cfg.seed,
            cfg.precision,
        )
        report["replay"] = replay.to_obj()
    else:
        report["replay"] = None
    wall = time.perf_counter() - t0
    report["amplitude"] = _amplitude_obj(result.value)
    stats_obj = result.stats.to_obj()
    timing = {"wall_time": stats_obj.pop("wall_time"), "pipeline_seconds": wall}
    report["stats"] = stats_obj
    report["timing"] = timing
    if cfg.partials_out:
        write_partials(cfg.partials_out, result)
    _emit(cfg, report)
    if replay is not None and not replay.ok:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_plan(cfg: JobConfig) -> int:
    net = _load_network(cfg)
    tree = _load_tree(cfg, net)
    metrics = tree_metrics(tree)
    s = linearize(tree)
    report = {
        "command": "plan",
        "config": _config_obj(cfg),
        "total_cost": metrics.total_cost,
        "flops": 8 * metrics.total_cost,
        "max_rank": metrics.max_rank,
        "peak_memory_elements": metrics.peak_memory_elements,
        "n_steps": len(s.steps),
        "stems": [
            {"steps": st.positions, "cost": st.cost, "share": st.cost / metrics.total_cost}
            for st in s.stems
        ],
        "multi_stem": s.multi_stem,
        "ssa_path": tree.to_ssa_path(),
    }
    _emit(cfg, report)
    return EXIT_OK


def cmd_slice(cfg: JobConfig) -> int:
    net = _load_network(cfg)
    tree = _load_tree(cfg, net)
    if cfg.max_rank is None:
        raise SystemExit2("slice requires --max-rank")
    spec = select_slices(tree, cfg.max_rank, cfg.slice_budget, cfg.seed)
    overheads = [(l, index_overhead(tree, l)) for l in spec.labels]
    overheads.sort(key=lambda kv: (-kv[1], kv[0]))
    report = {
        "command": "slice",
        "config": _config_obj(cfg),
        "spec": json.loads(spec.to_json()),
        "nesting_ok": spec.nesting_ok,
        "n_subtasks": spec.n_subtasks,
        "total_overhead": float(slicing_overhead(tree, spec.labels)) if spec.entries else 1.0,
        "index_overheads": [[l, float(o)] for l, o in overheads],
    }
    rows = [("label", "overhead")] + [(l, float(o)) for l, o in overheads]
    _emit(cfg, report, csv_rows=rows)
    return EXIT_OK


def cmd_reuse_plan(cfg: JobConfig) -> int:
    net = _load_network(cfg)
    tree = _load_tree(cfg, net)
    if cfg.max_rank is None:
        raise SystemExit2("reuse-plan requires --max-rank")
    element_bytes = ELEMENT_BYTES[cfg.precision]
    spec = select_slices(tree, cfg.max_rank, cfg.slice_budget, cfg.seed)
    part = choose_reuse_subset(
        tree, spec, cfg.mem_budget_bytes, cfg.reuse_max_k, element_bytes=element_bytes
    )
    rs, plan_report = plan_spindle(
        part.schedule,
        part.spec,
        cfg.mem_budget_bytes,
        nested_labels=part.nested_labels,
        element_bytes=element_bytes,
    )
    report = {
        "command": "reuse-plan",
        "config": _config_obj(cfg),
        "nested": part.nested_labels,
        "outer": [e.index.label for e in rs.outer],
        "overheads": {l: float(o) for l, o in part.overheads.items()},
        "plan": plan_report.to_obj(),
        "schedule": json.loads(rs.to_json()),
    }
    _emit(cfg, report)
    return EXIT_OK


def cmd_cost(cfg: JobConfig) -> int:
    net = _load_network(cfg)
    tree = _load_tree(cfg, net)
    s = linearize(tree)
    params = ArrayParams(cells=cfg.cells, intra_rank_cap=cfg.intra_cap)
    solo = simulate_fusion(s, params, cooperate=False)
    coop = simulate_fusion(s, params, cooperate=True)
    batch = plan_batch_swaps(s, params, cfg.lookahead)
    report = {
        "command": "cost",
        "config": _config_obj(cfg),
        "params": {
            "cells": params.cells,
            "intra_rank_cap": params.intra_rank_cap,
            "coop_rank_cap": params.coop_rank_cap,
        },
        "solo": solo.to_obj(),
        "coop": coop.to_obj(),
        "batch_swaps": {
            "lookahead": cfg.lookahead,
            "events": len(batch.events),
            "one_by_one_per_cell_bytes": float(batch.one_by_one_per_cell),
            "batched_per_cell_bytes": float(batch.batched_per_cell),
            "ratio": float(batch.ratio),
        },
    }
    rows = [
        ("mode", "sections", "mean_fused_length", "memory_accesses", "baseline", "dma_bytes", "rma_bytes"),
        ("solo", len(solo.fused_sections), solo.mean_fused_length, solo.memory_accesses, solo.baseline_accesses, solo.dma_bytes, float(solo.rma_bytes)),
        ("coop", len(coop.fused_sections), coop.mean_fused_length, coop.memory_accesses, coop.baseline_accesses, coop.dma_bytes, float(coop.rma_bytes)),
    ]
    _emit(cfg, report, csv_rows=rows)
    return EXIT_OK


def cmd_perm_stats(cfg: JobConfig) -> int:
    net = _load_network(cfg)
    tree = _load_tree(cfg, net)
    s = linearize(tree)
    buckets: dict[str, dict[str, int]] = {}
    for pos in range(len(s.steps)):
        step = s.steps[pos]
        lhs = s.indices_of(step.lhs)
        rhs = s.indices_of(step.rhs)
        for plan in contraction_permutations(lhs, rhs):
            b = buckets.setdefault(plan.case_class, {"count": 0, "elements": 0})
            b["count"] += 1
            size = 1
            for ix in plan.source_order:
                size *= ix.dim
            b["elements"] += size
    report = {
        "command": "perm-stats",
        "config": _config_obj(cfg),
        "buckets": {k: buckets[k] for k in sorted(buckets)},
    }
    rows = [("case", "count", "elements")] + [
        (k, buckets[k]["count"], buckets[k]["elements"]) for k in sorted(buckets)
    ]
    _emit(cfg, report, csv_rows=rows)
    return EXIT_OK


def cmd_verify(cfg: JobConfig) -> int:
    net = _load_network(cfg)
    tree = _load_tree(cfg, net)
    if not cfg.partials:
        raise SystemExit2("verify requires --partials")
    if cfg.max_rank is None:
        raise SystemExit2("verify requires --max-rank (to rebuild the slice spec)")
    labels, dims, partials = read_partials(cfg.partials)
    spec = select_slices(tree, cfg.max_rank, cfg.slice_budget, cfg.seed)
    result = RunResult(0j, None, partials, labels, dims)
    samples = cfg.verify_samples if cfg.verify_samples > 0 else min(len(partials), 16)
    replay = replay_verify(
        net, tree, spec, result, samples, cfg.seed, cfg.precision
    )
    report = {
        "command": "verify",
        "config": _config_obj(cfg),
        "replay": replay.to_obj(),
    }
    _emit(cfg, report)
    return EXIT_OK if replay.ok else EXIT_VERIFY


def _config_obj(cfg: JobConfig) -> dict:
    out = {}
    for key, val in vars(cfg).items():
        if key in ("out", "format", "partials_out", "partials"):
            continue
        out[key] = val
    return out


COMMANDS = {
    "run": cmd_run,
    "plan": cmd_plan,
    "slice": cmd_slice,
    "reuse-plan": cmd_reuse_plan,
    "cost": cmd_cost,
    "perm-stats": cmd_perm_stats,
    "verify": cmd_verify,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = JobConfig(**vars(args))
    try:
        return COMMANDS[cfg.command](cfg)
    except SystemExit2 as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, CircuitParseError, NetworkError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SlicingError, PlanningError, MemoryBudgetError) as e:
        print(f"planning failure: {e}", file=sys.stderr)
        return EXIT_PLANNING
    except TncError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
