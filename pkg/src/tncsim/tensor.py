"""Dense labeled tensors and layout-aware permutation.

Tensors store their values as a flat row-major array of complex numbers over
an ordered list of labeled indices.  Permutation is driven by a
(stride, offset) classification of the target order: the data is moved in
contiguous chunks of ``prod(dims of the trailing stride indices)`` elements,
which is the plain-array analogue of a vectorized transpose kernel.  Complex
elements are stored interleaved (re, im), so ``offset == 1`` means each
(re, im) pair moves as an unbroken unit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidPermutationError, TensorError

DTYPES = {
    "single": np.complex64,
    "double": np.complex128,
    "exact": object,  # Python ints / Fractions, summed without rounding
}

ELEMENT_BYTES = {"single": 8, "double": 16, "exact": 16}

#: Permutation case buckets, keyed by (chunk elements, offset).  Cases not in
#: the table fall back to element-wise copying ("scalar-fallback");
#: "contiguous" is the identity order, one whole-tensor chunk.
PERM_CASES = (
    "[2,1]",
    "[4,1]",
    "[4,2]",
    "[>=8,1]",
    "[>=8,2]",
    "[>=8,4]",
    "contiguous",
    "scalar-fallback",
)


@dataclass(frozen=True, order=True)
class Index:
    """A labeled tensor leg.  ``dim`` is 2 for qubit circuits, arbitrary allowed."""

    label: str
    dim: int = 2

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise TensorError(f"index {self.label!r} has dim {self.dim} < 1")


class DenseTensor:
    """Ordered labeled indices plus a flat row-major array of complex values."""

    __slots__ = ("indices", "data")

    def __init__(
        self,
        indices: Sequence[Index],
        data,
        precision: str | None = None,
    ):
        self.indices: tuple[Index, ...] = tuple(indices)
        labels = [ix.label for ix in self.indices]
        if len(set(labels)) != len(labels):
            raise TensorError(f"duplicate index labels in tensor: {labels}")
        if precision is not None and precision not in DTYPES:
            raise TensorError(f"unknown precision {precision!r}")
        arr = np.asarray(data, dtype=DTYPES[precision] if precision else None)
        arr = arr.reshape(-1)
        size = 1
        for ix in self.indices:
            size *= ix.dim
        if arr.size != size:
            raise TensorError(
                f"data length {arr.size} != product of dims {size} "
                f"for indices {labels}"
            )
        if arr.dtype not in (np.complex64, np.complex128, np.dtype(object)):
            arr = arr.astype(np.complex128)
        self.data = arr

    @property
    def rank(self) -> int:
        return len(self.indices)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(ix.label for ix in self.indices)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(ix.dim for ix in self.indices)

    @property
    def precision(self) -> str:
        if self.data.dtype == np.complex64:
            return "single"
        if self.data.dtype == np.complex128:
            return "double"
        return "exact"

    @property
    def nbytes(self) -> int:
        return self.size * ELEMENT_BYTES[self.precision]

    def value(self):
        """Scalar value of a rank-0 tensor."""
        if self.rank != 0:
            raise TensorError(f"tensor of rank {self.rank} is not a scalar")
        return self.data[0]

    def astype(self, precision: str) -> "DenseTensor":
        return DenseTensor(self.indices, self.data, precision=precision)

    def __repr__(self) -> str:
        legs = ",".join(f"{ix.label}:{ix.dim}" for ix in self.indices)
        return f"DenseTensor([{legs}], {self.precision})"

    # -- exchange formats ------------------------------------------------

    def to_json(self) -> str:
        obj = {
            "indices": [{"label": ix.label, "dim": ix.dim} for ix in self.indices],
            "data": [[float(v.real), float(v.imag)] for v in self.data],
        }
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str, precision: str = "double") -> "DenseTensor":
        obj = json.loads(text)
        indices = [Index(d["label"], int(d["dim"])) for d in obj["indices"]]
        data = [complex(re, im) for re, im in obj["data"]]
        return cls(indices, data, precision=precision)

    def to_bytes(self) -> bytes:
        """Binary format: header (rank, dims, precision tag) + raw
        little-endian interleaved floats."""
        if self.precision == "exact":
            raise TensorError("exact-precision tensors have no binary form")
        tag = 0 if self.precision == "single" else 1
        head = struct.pack("<BB", tag, self.rank)
        for ix in self.indices:
            lab = ix.label.encode()
            head += struct.pack("<H", len(lab)) + lab + struct.pack("<I", ix.dim)
        ftype = "<f4" if tag == 0 else "<f8"
        parts = np.empty(2 * self.size, dtype=ftype)
        parts[0::2] = self.data.real
        parts[1::2] = self.data.imag
        return head + parts.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "DenseTensor":
        tag, rank = struct.unpack_from("<BB", raw, 0)
        off = 2
        indices = []
        for _ in range(rank):
            (n,) = struct.unpack_from("<H", raw, off)
            off += 2
            lab = raw[off : off + n].decode()
            off += n
            (dim,) = struct.unpack_from("<I", raw, off)
            off += 4
            indices.append(Index(lab, dim))
        ftype = "<f4" if tag == 0 else "<f8"
        parts = np.frombuffer(raw, dtype=ftype, offset=off)
        data = parts[0::2] + 1j * parts[1::2]
        return cls(indices, data, precision="single" if tag == 0 else "double")


@dataclass(frozen=True)
class PermutationPlan:
    """(stride, offset) classification of a permutation.

    ``offset`` is m such that exactly the last m-1 source indices are
    relocated off the tail: the final target index is the (rank-m+1)-th
    source index.  ``stride`` is the length of the maximal suffix of the
    target order that is a contiguous ascending run in the source order.
    ``chunk`` is the element count of one contiguous copy unit and
    ``src_step`` the source-element step between consecutive chunk entries
    (1 exactly when offset is 1).
    """

    source_order: tuple[Index, ...]
    target_order: tuple[Index, ...]
    stride: int
    offset: int
    case_class: str
    chunk: int
    src_step: int


def _case_bucket(chunk: int, offset: int, identity: bool) -> str:
    if identity:
        return "contiguous"
    if chunk == 2 and offset == 1:
        return "[2,1]"
    if chunk == 4 and offset in (1, 2):
        return f"[4,{offset}]"
    if chunk >= 8 and offset in (1, 2, 4):
        return f"[>=8,{offset}]"
    return "scalar-fallback"


def classify_permutation(
    source_order: Sequence[Index], target_order: Sequence[Index]
) -> PermutationPlan:
    """Derive the (stride, offset) plan for rearranging ``source_order``
    into ``target_order``.

    Identity gives (stride=rank, offset=1) and a full reversal of a dim-2
    tensor gives stride=1.  When several trailing runs tie for "last and
    longest", the maximal contiguous suffix wins.
    """
    src = tuple(source_order)
    tgt = tuple(target_order)
    if sorted(src) != sorted(tgt):
        raise InvalidPermutationError(
            f"{[i.label for i in tgt]} is not a permutation of "
            f"{[i.label for i in src]}"
        )
    rank = len(src)
    if rank == 0:
        return PermutationPlan(src, tgt, 0, 1, "scalar-fallback", 1, 1)
    pos = {ix.label: p for p, ix in enumerate(src)}
    p_last = pos[tgt[-1].label]
    offset = rank - p_last
    stride = 1
    while stride < rank and pos[tgt[-stride - 1].label] == pos[tgt[-stride].label] - 1:
        stride += 1
    chunk = 1
    for ix in tgt[rank - stride :]:
        chunk *= ix.dim
    src_step = 1
    for ix in src[p_last + 1 :]:
        src_step *= ix.dim
    return PermutationPlan(
        src, tgt, stride, offset, _case_bucket(chunk, offset, src == tgt), chunk, src_step
    )


def permute(t: DenseTensor, target_order: Sequence[Index]) -> DenseTensor:
    """Reorder tensor legs, copying in contiguous chunks per the plan.

    Each chunk is ``plan.chunk`` consecutive target elements whose source
    positions form an arithmetic run of step ``plan.src_step``; the chunk
    decomposition is exactly what the stride/offset classification promises.
    """
    plan = classify_permutation(t.indices, target_order)
    tgt = plan.target_order
    if t.rank == 0 or plan.case_class == "contiguous":
        return DenseTensor(tgt, t.data.copy())
    src_strides = {}
    step = 1
    for ix in reversed(t.indices):
        src_strides[ix.label] = step
        step *= ix.dim
    bases = np.zeros(1, dtype=np.int64)
    for ix in tgt[: t.rank - plan.stride]:
        moves = np.arange(ix.dim, dtype=np.int64) * src_strides[ix.label]
        bases = (bases[:, None] + moves[None, :]).reshape(-1)
    run = np.arange(plan.chunk, dtype=np.int64) * plan.src_step
    offsets = (bases[:, None] + run[None, :]).reshape(-1)
    return DenseTensor(tgt, t.data[offsets])


def project(t: DenseTensor, assignment: dict[str, int]) -> DenseTensor:
    """Fix some indices to concrete values, dropping them from the tensor.

    This is the slicing primitive: projecting a shared index onto each of
    its values splits a contraction into independent subtasks.
    """
    hit = [ix for ix in t.indices if ix.label in assignment]
    if not hit:
        return t
    sel = tuple(
        assignment[ix.label] if ix.label in assignment else slice(None)
        for ix in t.indices
    )
    kept = tuple(ix for ix in t.indices if ix.label not in assignment)
    arr = t.data.reshape(t.dims)[sel]
    return DenseTensor(kept, np.ascontiguousarray(arr).reshape(-1))
