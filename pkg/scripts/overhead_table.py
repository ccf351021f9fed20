#!/usr/bin/env python3
"""Per-index slicing overhead table for a circuit, CSV on stdout.

Ranks the sliced indices of a circuit by their individual overhead
O(a) = d_a * C_a / C_ori, the quantity that decides which indices are worth
reusing.  Typical use:

    python scripts/overhead_table.py --qubits 12 --depth 10 --max-rank 6
"""

import argparse
import random
import sys

from tncsim import (
    circuit_to_network,
    greedy_path,
    index_overhead,
    parse_circuit,
    select_slices,
    slicing_overhead,
    tree_metrics,
)


def random_circuit(n, depth, seed):
    rng = random.Random(seed)
    lines = [str(n)]
    mixers = ["h", "x_1_2", "y_1_2", "hz_1_2"]
    for cycle in range(depth):
        if cycle % 2 == 0:
            for q in range(n):
                lines.append(f"{cycle} {rng.choice(mixers)} {q}")
        else:
            qubits = list(range(n))
            rng.shuffle(qubits)
            for a, b in zip(qubits[0::2], qubits[1::2]):
                lines.append(
                    f"{cycle} fs {a} {b} {rng.uniform(0.9, 2.2):.6f} "
                    f"{rng.uniform(0.2, 1.2):.6f}"
                )
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--circuit", help="circuit file; omit for a random one")
    ap.add_argument("--qubits", type=int, default=12)
    ap.add_argument("--depth", type=int, default=10)
    ap.add_argument("--bitstring", default=None)
    ap.add_argument("--max-rank", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--top", type=int, default=12)
    args = ap.parse_args()

    if args.circuit:
        text = open(args.circuit).read()
    else:
        text = random_circuit(args.qubits, args.depth, args.seed)
    circ = parse_circuit(text)
    bits = args.bitstring or "0" * circ.n_qubits
    net = circuit_to_network(circ, bits)
    tree = greedy_path(net, args.seed)
    m = tree_metrics(tree)
    print(f"# total_cost={m.total_cost} max_rank={m.max_rank}", file=sys.stderr)

    spec = select_slices(tree, args.max_rank, seed=args.seed)
    rows = sorted(
        ((label, index_overhead(tree, label)) for label in spec.labels),
        key=lambda kv: (-kv[1], kv[0]),
    )
    total = slicing_overhead(tree, spec.labels)
    print("rank,label,overhead")
    for i, (label, o) in enumerate(rows[: args.top], start=1):
        print(f"{i},{label},{float(o):.6f}")
    rest = rows[args.top :]
    if rest:
        prod = 1.0
        for _, o in rest:
            prod *= float(o)
        print(f"-,other_{len(rest)}_indices,{prod:.6f}")
    print(f"# total sliced overhead: {float(total):.3f}", file=sys.stderr)


if __name__ == "__main__":
    main()
