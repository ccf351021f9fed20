"""Pairwise tensor contraction and the split-common kernel.

A contraction is executed as permute + matrix multiply (TTGT): common
indices are rearranged to the K direction of an M x K by K x N product.
The larger operand always takes the multiplier (left) slot; ties go to the
operand whose first label sorts lower.  The result index order is fixed to
free-of-A (in A's order) followed by free-of-B (in B's order) regardless of
which operand multiplies, so plans are reproducible.

``split_common_contract`` partitions the K dimension into ``blocks *
group_size`` panels, accumulates each panel independently and combines the
partial products along a fixed left-complete binary tree.  That caps the
per-element accumulation chain at roughly K/(b*g) plus log2(b*g), the
blocked-summation route to a smaller floating-point error bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ContractionError
from .tensor import DenseTensor, Index, PermutationPlan, classify_permutation, permute


@dataclass(frozen=True)
class ContractionShape:
    """M x K x N shape of a pairwise contraction plus its narrow rate."""

    m: int
    n: int
    k: int
    n_common: int
    n_a: int
    n_b: int
    narrow: Fraction

    @property
    def multiplies(self) -> int:
        """Scalar-multiply count (one per element of the union index space)."""
        return self.m * self.k * self.n


@dataclass(frozen=True)
class TtgtPlan:
    """Symbolic plan for one contraction: operand orders and result legs."""

    a_target: tuple[Index, ...]
    b_target: tuple[Index, ...]
    result_indices: tuple[Index, ...]
    shape: ContractionShape
    b_is_multiplier: bool


def _split_legs(a_indices: Sequence[Index], b_indices: Sequence[Index]):
    b_by_label = {ix.label: ix for ix in b_indices}
    common = []
    free_a = []
    for ix in a_indices:
        other = b_by_label.get(ix.label)
        if other is None:
            free_a.append(ix)
        else:
            if other.dim != ix.dim:
                raise ContractionError(
                    f"shared label {ix.label!r} has dims {ix.dim} != {other.dim}"
                )
            common.append(ix)
    common_labels = {ix.label for ix in common}
    free_b = [ix for ix in b_indices if ix.label not in common_labels]
    return free_a, common, free_b


def contraction_shape(
    a_indices: Sequence[Index], b_indices: Sequence[Index]
) -> ContractionShape:
    free_a, common, free_b = _split_legs(a_indices, b_indices)
    m = n = k = 1
    for ix in free_a:
        m *= ix.dim
    for ix in common:
        k *= ix.dim
    for ix in free_b:
        n *= ix.dim
    n_a, n_b = len(a_indices), len(b_indices)
    narrow = Fraction(2 * len(common), n_a + n_b) if n_a + n_b else Fraction(0)
    return ContractionShape(m, n, k, len(common), n_a, n_b, narrow)


def multiply_cost(a_indices: Sequence[Index], b_indices: Sequence[Index]) -> int:
    """Exact scalar-multiply count M*K*N of contracting the two index sets."""
    return contraction_shape(a_indices, b_indices).multiplies


def ttgt_plan(a_indices: Sequence[Index], b_indices: Sequence[Index]) -> TtgtPlan:
    """Decide operand orders for the matrix multiply, large operand left."""
    free_a, common, free_b = _split_legs(a_indices, b_indices)
    shape = contraction_shape(a_indices, b_indices)
    size_a, size_b = shape.m * shape.k, shape.k * shape.n
    if size_b > size_a:
        b_mult = True
    elif size_b < size_a:
        b_mult = False
    else:
        first_a = a_indices[0].label if a_indices else ""
        first_b = b_indices[0].label if b_indices else ""
        b_mult = first_b < first_a
    if b_mult:
        a_target = tuple(common) + tuple(free_a)  # (K, M) side
        b_target = tuple(free_b) + tuple(common)  # (N, K) multiplier
    else:
        a_target = tuple(free_a) + tuple(common)  # (M, K) multiplier
        b_target = tuple(common) + tuple(free_b)  # (K, N) side
    return TtgtPlan(a_target, b_target, tuple(free_a) + tuple(free_b), shape, b_mult)


def contraction_permutations(
    a_indices: Sequence[Index], b_indices: Sequence[Index]
) -> list[PermutationPlan]:
    """Stride/offset plans of the operand permutations one contraction runs."""
    plan = ttgt_plan(a_indices, b_indices)
    return [
        classify_permutation(tuple(a_indices), plan.a_target),
        classify_permutation(tuple(b_indices), plan.b_target),
    ]


def _matmul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.matmul(x, y)


def _panel_product(a2, b2, lo, hi, b_mult):
    # K runs along a2 columns / b2 rows in multiplier-left layout.
    if b_mult:
        return _matmul(b2[:, lo:hi], a2[lo:hi, :])  # (N, M)
    return _matmul(a2[:, lo:hi], b2[lo:hi, :])  # (M, N)


def _finish(per_panel, plan: TtgtPlan):
    out = per_panel
    if plan.b_is_multiplier:
        out = np.ascontiguousarray(out.T)  # (N, M) -> (M, N), row-major
    return DenseTensor(plan.result_indices, out.reshape(-1))


def contract_pair(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Einstein summation over all shared labels.

    Result index order is free-of-A (A's order) then free-of-B (B's order).
    """
    plan = ttgt_plan(a.indices, b.indices)
    shape = plan.shape
    a2 = permute(a, plan.a_target).data
    b2 = permute(b, plan.b_target).data
    if plan.b_is_multiplier:
        a2 = a2.reshape(shape.k, shape.m)
        b2 = b2.reshape(shape.n, shape.k)
    else:
        a2 = a2.reshape(shape.m, shape.k)
        b2 = b2.reshape(shape.k, shape.n)
    out = _panel_product(a2, b2, 0, shape.k, plan.b_is_multiplier)
    return _finish(out, plan)


def split_common_contract(
    a: DenseTensor, b: DenseTensor, blocks: int, group_size: int
) -> DenseTensor:
    """Contract with the K dimension partitioned into blocks*group_size panels.

    Panels are accumulated independently, then combined by pairwise tree
    summation; there is never a single running accumulation across all K.
    With blocks == group_size == 1 this is the same single product as
    ``contract_pair``, rounding behavior included.  K not divisible by the
    panel count leaves the remainder on the last panel.
    """
    if blocks < 1 or group_size < 1:
        raise ContractionError(
            f"blocks*group_size must be positive, got {blocks}*{group_size}"
        )
    plan = ttgt_plan(a.indices, b.indices)
    shape = plan.shape
    a2 = permute(a, plan.a_target).data
    b2 = permute(b, plan.b_target).data
    if plan.b_is_multiplier:
        a2 = a2.reshape(shape.k, shape.m)
        b2 = b2.reshape(shape.n, shape.k)
    else:
        a2 = a2.reshape(shape.m, shape.k)
        b2 = b2.reshape(shape.k, shape.n)
    panels = min(blocks * group_size, shape.k)
    base = shape.k // panels
    bounds = [i * base for i in range(panels)] + [shape.k]
    partials = [
        _panel_product(a2, b2, bounds[i], bounds[i + 1], plan.b_is_multiplier)
        for i in range(panels)
    ]
    while len(partials) > 1:
        nxt = []
        for i in range(0, len(partials), 2):
            if i + 1 < len(partials):
                nxt.append(partials[i] + partials[i + 1])
            else:
                nxt.append(partials[i])
        partials = nxt
    return _finish(partials[0], plan)
