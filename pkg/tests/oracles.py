"""Independent oracles and generators for the test suite.

Everything here is deliberately written on a different path from the
package: nested-loop einsum, element-wise permutation, a direct
state-vector simulator, and arithmetic projections of recorded step costs.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import numpy as np

from tncsim import Circuit, DenseTensor, Index, TensorNetwork
from tncsim.tree import ContractionTree, LinearSchedule


def permute_oracle(t: DenseTensor, target_order) -> np.ndarray:
    """Element-by-element nested-loop permutation."""
    dims = t.dims
    tgt = list(target_order)
    src_pos = {ix.label: p for p, ix in enumerate(t.indices)}
    out = np.empty(t.size, dtype=t.data.dtype)
    tgt_dims = [ix.dim for ix in tgt]
    for onum, coords in enumerate(itertools.product(*[range(d) for d in tgt_dims])):
        src_coords = [0] * t.rank
        for ix, c in zip(tgt, coords):
            src_coords[src_pos[ix.label]] = c
        snum = 0
        for c, d in zip(src_coords, dims):
            snum = snum * d + c
        out[onum] = t.data[snum]
    return out


def einsum_oracle(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Brute-force nested-loop Einstein summation, double precision."""
    common = [ix for ix in a.indices if ix.label in set(b.labels)]
    free_a = [ix for ix in a.indices if ix.label not in {c.label for c in common}]
    free_b = [ix for ix in b.indices if ix.label not in {c.label for c in common}]
    result = free_a + free_b

    def flat(indices, coords, order):
        num = 0
        for ix in order:
            num = num * ix.dim + coords[ix.label]
        return num

    out = np.zeros(int(np.prod([ix.dim for ix in result])) or 1, dtype=np.complex128)
    for rc in itertools.product(*[range(ix.dim) for ix in result]):
        coords = {ix.label: c for ix, c in zip(result, rc)}
        acc = 0j
        for cc in itertools.product(*[range(ix.dim) for ix in common]):
            coords.update({ix.label: c for ix, c in zip(common, cc)})
            va = a.data[flat(a.indices, coords, a.indices)]
            vb = b.data[flat(b.indices, coords, b.indices)]
            acc += complex(va) * complex(vb)
        out[flat(result, coords, result)] = acc
    return DenseTensor(result, out)


def contract_tree_recursive(net: TensorNetwork, t: ContractionTree):
    """Evaluate the tree by plain recursion (no schedule), double precision."""
    from tncsim import contract_pair

    def go(node):
        if node.is_leaf:
            return net.tensors[node.nid].astype("double")
        return contract_pair(go(node.left), go(node.right))

    return go(t.root).value()


def statevector_amplitude(circ: Circuit, bits: str) -> complex:
    """Direct state-vector simulation; qubit q occupies bit position q."""
    n = circ.n_qubits
    v = np.zeros(2**n, dtype=np.complex128)
    v[0] = 1.0
    for g in circ.gates:
        m = g.matrix()
        if len(g.qubits) == 1:
            q = g.qubits[0]
            for base in range(2**n):
                if not (base >> q) & 1:
                    i0, i1 = base, base | (1 << q)
                    a0, a1 = v[i0], v[i1]
                    v[i0] = m[0, 0] * a0 + m[0, 1] * a1
                    v[i1] = m[1, 0] * a0 + m[1, 1] * a1
        else:
            q0, q1 = g.qubits
            for base in range(2**n):
                if not (base >> q0) & 1 and not (base >> q1) & 1:
                    idx = [
                        base,
                        base | (1 << q1),
                        base | (1 << q0),
                        base | (1 << q0) | (1 << q1),
                    ]
                    vec = np.array([v[i] for i in idx])
                    for i, val in zip(idx, m @ vec):
                        v[i] = val
    return complex(v[int(bits, 2)])


def projected_cost_oracle(s: LinearSchedule, label: str, dim: int) -> Fraction:
    """Index overhead from recorded step costs: scale steps containing the
    index by 1/dim, multiply the lot by dim, divide by the original total."""
    total = 0
    projected = Fraction(0)
    for pos, step in enumerate(s.steps):
        union = {ix.label for ix in s.step_union(pos)}
        total += step.cost
        projected += Fraction(step.cost, dim) if label in union else step.cost
    return dim * projected / total


GATES_1Q = ["h", "t", "x", "y", "z", "x_1_2", "y_1_2", "hz_1_2"]
GATES_2Q = ["cz", "cx", "is"]


def random_circuit_text(n_qubits: int, depth: int, seed: int) -> str:
    """Layered random circuit: alternating 1q layers and disjoint 2q pairs."""
    rng = random.Random(seed)
    lines = [str(n_qubits)]
    for cycle in range(depth):
        if cycle % 2 == 0:
            for q in range(n_qubits):
                name = rng.choice(GATES_1Q + ["rz"])
                if name == "rz":
                    lines.append(f"{cycle} rz {q} {rng.uniform(0, 6.28):.6f}")
                else:
                    lines.append(f"{cycle} {name} {q}")
        else:
            qubits = list(range(n_qubits))
            rng.shuffle(qubits)
            for a, b in zip(qubits[0::2], qubits[1::2]):
                name = rng.choice(GATES_2Q + ["fs"])
                if name == "fs":
                    lines.append(
                        f"{cycle} fs {a} {b} {rng.uniform(0, 3.14):.6f} "
                        f"{rng.uniform(0, 3.14):.6f}"
                    )
                else:
                    lines.append(f"{cycle} {name} {a} {b}")
    return "\n".join(lines)


def random_dense_circuit_text(n_qubits: int, depth: int, seed: int) -> str:
    """Random circuit with generic (non-Clifford) angles: amplitudes spread
    over the Porter-Thomas-like distribution instead of sparse grids."""
    rng = random.Random(seed)
    lines = [str(n_qubits)]
    mixers = ["h", "x_1_2", "y_1_2", "hz_1_2"]
    for cycle in range(depth):
        if cycle % 2 == 0:
            for q in range(n_qubits):
                if cycle == 0 or rng.random() < 0.5:
                    lines.append(f"{cycle} {rng.choice(mixers)} {q}")
                else:
                    lines.append(f"{cycle} rz {q} {rng.uniform(0.3, 5.9):.6f}")
        else:
            qubits = list(range(n_qubits))
            rng.shuffle(qubits)
            for a, b in zip(qubits[0::2], qubits[1::2]):
                theta = rng.uniform(0.9, 2.2)
                phi = rng.uniform(0.2, 1.2)
                lines.append(f"{cycle} fs {a} {b} {theta:.6f} {phi:.6f}")
    return "\n".join(lines)


def random_bits(n: int, seed: int) -> str:
    rng = random.Random(seed * 7919 + 13)
    return "".join(rng.choice("01") for _ in range(n))


def stem_network(
    initial: list[tuple[str, int]],
    events: list[tuple[list[str], list[tuple[str, int]]]],
    seed: int = 0,
    precision: str = "double",
) -> tuple[TensorNetwork, ContractionTree]:
    """Synthetic stem: T0 over the initial window, one absorbed tensor per
    event closing/opening window indices, left-deep tree.

    ``events[i] = (closed_labels, [(new_label, dim), ...])``; the window
    after the last event must be empty so the network is closed.
    """
    rng = np.random.default_rng(seed)
    dims = dict(initial)
    window = [lab for lab, _ in initial]

    def rand_tensor(indices):
        size = int(np.prod([ix.dim for ix in indices])) or 1
        data = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        return DenseTensor(indices, data / np.sqrt(size), precision=precision)

    tensors = [rand_tensor([Index(lab, d) for lab, d in initial])]
    for closed, opened in events:
        for lab in closed:
            if lab not in window:
                raise ValueError(f"{lab} not in window {window}")
            window.remove(lab)
        legs = [Index(lab, dims[lab]) for lab in closed]
        for lab, d in opened:
            dims[lab] = d
            window.append(lab)
            legs.append(Index(lab, d))
        tensors.append(rand_tensor(legs))
    if window:
        raise ValueError(f"network not closed, window left: {window}")
    net = TensorNetwork(tensors)
    path = []
    prev = 0
    nid = len(tensors)
    for k in range(1, len(tensors)):
        path.append([prev, k])
        prev = nid
        nid += 1
    return net, ContractionTree.from_ssa_path(net.leaf_indices(), path)


def join_disjoint(
    net_a: TensorNetwork,
    tree_a: ContractionTree,
    net_b: TensorNetwork,
    tree_b: ContractionTree,
    prefix: str = "B",
) -> tuple[TensorNetwork, ContractionTree]:
    """One network from two closed ones (relabeled apart), with a combined
    tree that contracts each part and outer-products the two scalars."""
    tensors = list(net_a.tensors)
    for tensor in net_b.tensors:
        ixs = tuple(Index(prefix + ix.label, ix.dim) for ix in tensor.indices)
        tensors.append(DenseTensor(ixs, tensor.data))
    net = TensorNetwork(tensors)
    n_a, n_b = len(net_a.tensors), len(net_b.tensors)

    def remap_a(ref):
        return ref if ref < n_a else ref + n_b

    def remap_b(ref):
        return ref + n_a if ref < n_b else ref + n_a + (n_a - 1)

    path = [[remap_a(l), remap_a(r)] for l, r in tree_a.to_ssa_path()]
    path += [[remap_b(l), remap_b(r)] for l, r in tree_b.to_ssa_path()]
    root_a = n_a + n_b + (n_a - 1) - 1
    root_b = n_a + n_b + (n_a - 1) + (n_b - 1) - 1
    path.append([root_a, root_b])
    return net, ContractionTree.from_ssa_path(net.leaf_indices(), path)


def valley_stem(seed=0, hill=10, u_dim=4):
    """Stem with two expensive dim-2 hills flanking a cheap valley where
    three nested dim-``u_dim`` indices u1..u3 live.

    The valley steps are an order of magnitude cheaper than the hill steps,
    so the per-index overhead of the u's approaches their dimension while
    hill indices stay below 2.
    """
    initial = [(f"h{k}", 2) for k in range(hill)]
    window = [lab for lab, _ in initial]
    events = []
    nxt = hill

    def roll(n):
        nonlocal nxt
        for _ in range(n):
            closed = [window.pop(0)]
            events.append((closed, [(f"h{nxt}", 2)]))
            window.append(f"h{nxt}")
            nxt += 1

    roll(4)  # first hill
    while len(window) > 2:  # descend into the valley
        events.append(([window.pop(0), window.pop(0)], [(f"h{nxt}", 2)]))
        window.append(f"h{nxt}")
        nxt += 1
    for j in (1, 2, 3):  # open the nested dim-4 indices
        pad = next(lab for lab in window if not lab.startswith("u"))
        window.remove(pad)
        events.append(([pad], [(f"u{j}", u_dim), (f"h{nxt}", 2)]))
        window.extend([f"u{j}", f"h{nxt}"])
        nxt += 1
    for j in (3, 2, 1):  # close them innermost-first
        window.remove(f"u{j}")
        events.append(([f"u{j}"], [(f"h{nxt}", 2)]))
        window.append(f"h{nxt}")
        nxt += 1
    while len(window) < hill:  # ascend to the second hill
        closed = [window.pop(0)]
        events.append((closed, [(f"h{nxt}", 2), (f"h{nxt + 1}", 2)]))
        window += [f"h{nxt}", f"h{nxt + 1}"]
        nxt += 2
    roll(4)  # second hill
    while window:
        take = min(2, len(window))
        events.append(([window.pop(0) for _ in range(take)], []))
    return stem_network(initial, events, seed=seed)


def oscillating_stem(low=14, high=18, steps=20, seed=1):
    """Stem whose result rank oscillates between ``low`` and ``high``."""
    initial = [(f"w{k}", 2) for k in range(low)]
    window = [lab for lab, _ in initial]
    events = []
    nxt = low
    cycle = list(range(low + 1, high + 1)) + list(range(high - 1, low - 1, -1))
    ranks = list(itertools.islice(itertools.cycle(cycle), steps))
    cur = low
    for r in ranks:
        if r > cur:
            closed = [window.pop(0)]
            opened = [(f"w{nxt + i}", 2) for i in range(r - cur + 1)]
        else:
            closed = [window.pop(0) for _ in range(cur - r + 1)]
            opened = [(f"w{nxt}", 2)]
        nxt += len(opened)
        window.extend(lab for lab, _ in opened)
        events.append((closed, opened))
        cur = r
    while window:
        take = min(2, len(window))
        events.append(([window.pop(0) for _ in range(take)], []))
    return stem_network(initial, events, seed=seed)


def swap_stem(n, m=4, seed=0):
    """Stem engineered so exactly n inter-cell indices are contracted on
    consecutive steps: e-labels close first, then t1..tn, then two pads."""
    initial = (
        [(f"e{i}", 2) for i in range(m)]
        + [(f"t{j}", 2) for j in range(1, n + 1)]
        + [("q1", 2), ("q2", 2)]
    )
    events = [([f"e{i}"], []) for i in range(m)]
    events += [([f"t{j}"], []) for j in range(1, n + 1)]
    events.append((["q1", "q2"], []))
    return stem_network(initial, events, seed=seed)


def random_stem_schedule(seed):
    """Random-walk window stem, linearized; for cost-model sweeps."""
    from tncsim import linearize

    rng = random.Random(seed)
    width = rng.randint(8, 16)
    initial = [(f"w{k}", 2) for k in range(width)]
    window = [lab for lab, _ in initial]
    events = []
    nxt = width
    for _ in range(rng.randint(8, 18)):
        n_close = rng.randint(1, min(2, len(window) - 2)) if len(window) > 3 else 1
        n_open = rng.randint(1, 2)
        closed = [window.pop(rng.randrange(len(window))) for _ in range(n_close)]
        opened = [(f"w{nxt + i}", 2) for i in range(n_open)]
        nxt += n_open
        window.extend(lab for lab, _ in opened)
        events.append((closed, opened))
    while window:
        take = min(2, len(window))
        events.append(([window.pop(0) for _ in range(take)], []))
    net, t = stem_network(initial, events, seed=seed)
    return linearize(t)


def nested_stem(
    k: int = 2,
    mid: int = 2,
    seed: int = 0,
    dims: dict[str, int] | None = None,
    precision: str = "double",
    lead: int = 0,
) -> tuple[TensorNetwork, ContractionTree]:
    """Stem carrying k concentrically nested sliceable indices u1 .. uk.

    ``lead`` rolling steps run before u1 opens, then u_j opens at step
    lead+j and closes in reverse order after ``mid`` middle steps, so the
    lifetimes nest: u1 outermost.  ``dims`` overrides the dimension of
    individual u labels.
    """
    width = k + 2
    initial = [(f"p{i}", 2) for i in range(width)]
    window = [lab for lab, _ in initial]
    events: list[tuple[list[str], list[tuple[str, int]]]] = []
    nxt = width
    for _ in range(lead):
        pad = window.pop(0)
        events.append(([pad], [(f"p{nxt}", 2)]))
        window.append(f"p{nxt}")
        nxt += 1
    for j in range(1, k + 1):
        d = (dims or {}).get(f"u{j}", 2)
        closed = [window.pop(0)]
        events.append((closed, [(f"u{j}", d)]))
        window.append(f"u{j}")
    for _ in range(mid):
        pad = next(lab for lab in window if lab.startswith("p"))
        window.remove(pad)
        events.append(([pad], [(f"p{nxt}", 2)]))
        window.append(f"p{nxt}")
        nxt += 1
    for j in range(k, 0, -1):
        window.remove(f"u{j}")
        events.append(([f"u{j}"], [(f"p{nxt}", 2)]))
        window.append(f"p{nxt}")
        nxt += 1
    while window:
        take = min(2, len(window))
        events.append(([window.pop(0) for _ in range(take)], []))
    return stem_network(initial, events, seed, precision)


def hill_stem(
    peak: int, plateau: int = 2, dim: int = 2, seed: int = 0, precision: str = "double"
) -> tuple[TensorNetwork, ContractionTree]:
    """Stem whose window rises to ``peak``, rolls for ``plateau`` steps and
    falls back; leaf ranks stay <= 3 while intermediates reach ``peak``."""
    initial = [("w0", dim), ("w1", dim)]
    window = ["w0", "w1"]
    nxt = 2
    events: list[tuple[list[str], list[tuple[str, int]]]] = []
    while len(window) < peak:
        closed = [window.pop(0)]
        opened = [(f"w{nxt}", dim), (f"w{nxt + 1}", dim)]
        nxt += 2
        window += [lab for lab, _ in opened]
        events.append((closed, opened))
    for _ in range(plateau):
        closed = [window.pop(0)]
        opened = [(f"w{nxt}", dim)]
        window.append(f"w{nxt}")
        nxt += 1
        events.append((closed, opened))
    while len(window) > 2:
        closed = [window.pop(0), window.pop(0)]
        opened = [(f"w{nxt}", dim)]
        window.append(f"w{nxt}")
        nxt += 1
        events.append((closed, opened))
    events.append((list(window), []))
    return stem_network(initial, events, seed, precision)


def rolling_stem(
    width: int, length: int, dim: int = 2, seed: int = 0, precision: str = "double"
) -> tuple[TensorNetwork, ContractionTree]:
    """Constant-width stem: each absorbed tensor closes the oldest window
    index and opens a fresh one; final events drain the window."""
    initial = [(f"w{k}", dim) for k in range(width)]
    events: list[tuple[list[str], list[tuple[str, int]]]] = []
    nxt = width
    window = [lab for lab, _ in initial]
    for _ in range(length):
        closed = [window.pop(0)]
        opened = [(f"w{nxt}", dim)]
        window.append(f"w{nxt}")
        nxt += 1
        events.append((closed, opened))
    while window:
        events.append(([window.pop(0), window.pop(0)] if len(window) > 1 else [window.pop(0)], []))
    return stem_network(initial, events, seed, precision)
