"""Tensor networks: multisets of tensors glued by shared index labels."""

from __future__ import annotations

import json
from typing import Sequence

from .errors import NetworkError
from .tensor import DenseTensor, Index


class TensorNetwork:
    """A multiset of tensors sharing labeled indices.

    Every label may appear in at most two tensors; a closed network (every
    label appearing exactly twice) contracts to a scalar.
    """

    def __init__(self, tensors: Sequence[DenseTensor]):
        self.tensors: list[DenseTensor] = list(tensors)
        counts: dict[str, int] = {}
        dims: dict[str, int] = {}
        for t in self.tensors:
            for ix in t.indices:
                counts[ix.label] = counts.get(ix.label, 0) + 1
                if dims.setdefault(ix.label, ix.dim) != ix.dim:
                    raise NetworkError(f"label {ix.label!r} used with two dims")
                if counts[ix.label] > 2:
                    raise NetworkError(f"label {ix.label!r} appears in >2 tensors")
        self._counts = counts
        self._dims = dims

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._dims)

    def dim_of(self, label: str) -> int:
        try:
            return self._dims[label]
        except KeyError:
            raise NetworkError(f"label {label!r} not in network") from None

    def multiplicity(self, label: str) -> int:
        return self._counts.get(label, 0)

    @property
    def open_labels(self) -> tuple[str, ...]:
        return tuple(l for l, c in self._counts.items() if c == 1)

    @property
    def closed_labels(self) -> tuple[str, ...]:
        return tuple(l for l, c in self._counts.items() if c == 2)

    @property
    def is_closed(self) -> bool:
        return not self.open_labels

    def leaf_indices(self) -> list[tuple[Index, ...]]:
        return [t.indices for t in self.tensors]

    def astype(self, precision: str) -> "TensorNetwork":
        return TensorNetwork([t.astype(precision) for t in self.tensors])

    # -- io --------------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"tensors": [json.loads(t.to_json()) for t in self.tensors]})

    @classmethod
    def from_json(cls, text: str, precision: str = "double") -> "TensorNetwork":
        obj = json.loads(text)
        return cls(
            [DenseTensor.from_json(json.dumps(t), precision) for t in obj["tensors"]]
        )
