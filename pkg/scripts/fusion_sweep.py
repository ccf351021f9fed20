#!/usr/bin/env python3
"""Sweep the cooperation fusion model over random stem schedules.

Emits one CSV row per schedule with memory accesses and mean fused-section
length for the solo (single-scratchpad) and cooperation (array-wide) modes,
the data behind access-reduction plots.

    python scripts/fusion_sweep.py --schedules 50 --intra-cap 13 --cells 64
"""

import argparse
import random

from tncsim import linearize, simulate_fusion
from tncsim.coopsim import ArrayParams


def random_stem(seed, lo=8, hi=16):
    import numpy as np

    from tncsim import DenseTensor, Index, TensorNetwork
    from tncsim.tree import ContractionTree

    rng = random.Random(seed)
    data_rng = np.random.default_rng(seed)
    width = rng.randint(lo, hi)
    window = [f"w{k}" for k in range(width)]
    legs = [[x for x in window]]
    nxt = width
    for _ in range(rng.randint(8, 18)):
        n_close = rng.randint(1, min(2, len(window) - 2)) if len(window) > 3 else 1
        closed = [window.pop(rng.randrange(len(window))) for _ in range(n_close)]
        opened = [f"w{nxt + i}" for i in range(rng.randint(1, 2))]
        nxt += len(opened)
        window.extend(opened)
        legs.append(closed + opened)
    while window:
        take = min(2, len(window))
        legs.append([window.pop(0) for _ in range(take)])
    tensors = []
    for leg in legs:
        size = 2 ** len(leg)
        vals = data_rng.standard_normal(size) + 1j * data_rng.standard_normal(size)
        tensors.append(DenseTensor([Index(l) for l in leg], vals / size**0.5))
    net = TensorNetwork(tensors)
    path = []
    prev = 0
    for k in range(1, len(tensors)):
        path.append([prev, k])
        prev = len(tensors) + k - 1
    return ContractionTree.from_ssa_path(net.leaf_indices(), path)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedules", type=int, default=50)
    ap.add_argument("--cells", type=int, default=64)
    ap.add_argument("--intra-cap", type=int, default=13, dest="intra_cap")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = ArrayParams(cells=args.cells, intra_rank_cap=args.intra_cap)
    print(
        "seed,steps,solo_accesses,coop_accesses,solo_mean_len,coop_mean_len,"
        "rma_bytes,swap_events"
    )
    for k in range(args.schedules):
        seed = args.seed + k
        s = linearize(random_stem(seed))
        if not s.stems:
            continue
        solo = simulate_fusion(s, params, cooperate=False)
        coop = simulate_fusion(s, params, cooperate=True)
        steps = sum(len(st.positions) for st in s.stems)
        print(
            f"{seed},{steps},{solo.memory_accesses},{coop.memory_accesses},"
            f"{solo.mean_fused_length:.2f},{coop.mean_fused_length:.2f},"
            f"{float(coop.rma_bytes):.0f},{len(coop.swap_events)}"
        )


if __name__ == "__main__":
    main()
