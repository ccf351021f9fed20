#!/usr/bin/env python3
"""Measure slicing overhead with and without spindle reuse on a circuit.

Runs the full pipeline (slice, branch-exchange, reuse subset, spindle plan,
execute) and prints the planned vs. measured multiply counts, which must
agree exactly.

    python scripts/reuse_gain.py --qubits 12 --depth 10 --max-rank 6 --max-k 4
"""

import argparse

from tncsim import (
    circuit_to_network,
    greedy_path,
    parse_circuit,
    run_direct,
    run_reuse,
    run_sliced,
    select_slices,
)
from tncsim.reuse import choose_reuse_subset, plan_spindle

from overhead_table import random_circuit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--circuit")
    ap.add_argument("--qubits", type=int, default=12)
    ap.add_argument("--depth", type=int, default=10)
    ap.add_argument("--bitstring", default=None)
    ap.add_argument("--max-rank", type=int, default=6)
    ap.add_argument("--max-k", type=int, default=12, dest="max_k")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    text = open(args.circuit).read() if args.circuit else random_circuit(
        args.qubits, args.depth, args.seed
    )
    circ = parse_circuit(text)
    bits = args.bitstring or "0" * circ.n_qubits
    net = circuit_to_network(circ, bits)
    tree = greedy_path(net, args.seed)
    direct, dstats = run_direct(net, tree)
    print(f"direct: cost={dstats.multiplies} amplitude={direct:.6g}")

    spec = select_slices(tree, args.max_rank, seed=args.seed)
    if not spec.entries:
        print("tree already fits the rank cap; nothing to slice")
        return
    part = choose_reuse_subset(tree, spec, max_k=args.max_k)
    print(f"sliced indices: {list(spec.labels)}")
    print(f"reuse subset:   {part.nested_labels}")
    rs, rep = plan_spindle(part.schedule, part.spec, nested_labels=part.nested_labels)
    sliced = run_sliced(net, tree, part.spec)
    reused = run_reuse(net, tree, rs)
    print(
        f"sliced:  multiplies={sliced.stats.multiplies} "
        f"overhead={sliced.stats.multiplies / dstats.multiplies:.3f}"
    )
    print(
        f"reused:  multiplies={reused.stats.multiplies} "
        f"overhead={reused.stats.multiplies / dstats.multiplies:.3f} "
        f"(predicted {rep.predicted_multiplies}, "
        f"match={rep.predicted_multiplies == reused.stats.multiplies})"
    )
    print(
        f"value drift vs direct: sliced {abs(sliced.value - direct):.3e}, "
        f"reused {abs(reused.value - direct):.3e}"
    )


if __name__ == "__main__":
    main()
