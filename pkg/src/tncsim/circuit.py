"""Quantum circuit parsing and conversion to a closed tensor network.

Text format: the first line is the qubit count; each following non-empty
line reads ``cycle name q0 [q1] [param ...]`` (the layout used by published
random-circuit files, cycle leading).  Lines starting with ``#`` are
comments.

Gate conventions (the matrices below are the single source of truth):

* ``h t x y z cz cx is`` are the textbook matrices (``is`` = iSWAP with
  +i on the swap block).
* ``x_1_2 = sqrt(X)``, ``y_1_2 = sqrt(Y)`` via (1+i)/2 * (I - i*G).
* ``hz_1_2 = sqrt(W)``, W = (X+Y)/sqrt(2), as
  [[1, -sqrt(i)], [sqrt(-i), 1]] / sqrt(2).
* ``rz(t) = diag(exp(-it/2), exp(it/2))``.
* ``fs(theta, phi)``: fSim with -i*sin(theta) on the swap block and
  exp(-i*phi) on |11>.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CircuitParseError, NetworkError
from .network import TensorNetwork
from .tensor import DenseTensor, Index

_S2 = 1.0 / math.sqrt(2.0)


def _sqrt_involution(g: np.ndarray) -> np.ndarray:
    # sqrt of a unitary involution: ((1+i) I + (1-i) G) / 2
    eye = np.eye(g.shape[0])
    return ((1 + 1j) * eye + (1 - 1j) * g) / 2


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)

GATE_ARITY: dict[str, tuple[int, int]] = {
    # name -> (qubits, params)
    "h": (1, 0),
    "t": (1, 0),
    "x": (1, 0),
    "y": (1, 0),
    "z": (1, 0),
    "x_1_2": (1, 0),
    "y_1_2": (1, 0),
    "hz_1_2": (1, 0),
    "rz": (1, 1),
    "cz": (2, 0),
    "cx": (2, 0),
    "is": (2, 0),
    "fs": (2, 2),
}


def gate_matrix(name: str, params: tuple[float, ...] = ()) -> np.ndarray:
    """Unitary matrix of a supported gate, 2x2 or 4x4."""
    if name == "h":
        return np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex)
    if name == "t":
        return np.diag([1.0, cmath.exp(1j * math.pi / 4)])
    if name == "x":
        return _X.copy()
    if name == "y":
        return _Y.copy()
    if name == "z":
        return np.diag([1.0, -1.0]).astype(complex)
    if name == "x_1_2":
        return _sqrt_involution(_X)
    if name == "y_1_2":
        return _sqrt_involution(_Y)
    if name == "hz_1_2":
        return np.array(
            [[_S2, -_S2 * cmath.exp(1j * math.pi / 4)],
             [_S2 * cmath.exp(-1j * math.pi / 4), _S2]],
            dtype=complex,
        )
    if name == "rz":
        (theta,) = params
        return np.diag([cmath.exp(-0.5j * theta), cmath.exp(0.5j * theta)])
    if name == "cz":
        return np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
    if name == "cx":
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = _X
        return m
    if name == "is":
        m = np.eye(4, dtype=complex)
        m[1, 1] = m[2, 2] = 0
        m[1, 2] = m[2, 1] = 1j
        return m
    if name == "fs":
        theta, phi = params
        m = np.eye(4, dtype=complex)
        m[1, 1] = m[2, 2] = math.cos(theta)
        m[1, 2] = m[2, 1] = -1j * math.sin(theta)
        m[3, 3] = cmath.exp(-1j * phi)
        return m
    raise KeyError(name)


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    cycle: int = 0

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.name, self.params)


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)


def parse_circuit(text: str) -> Circuit:
    """Parse the text format described in the module docstring."""
    lines = text.splitlines()
    n_qubits = None
    gates: list[Gate] = []
    busy: dict[int, set[int]] = {}  # cycle -> qubits already acted on
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if n_qubits is None:
            try:
                n_qubits = int(line)
            except ValueError:
                raise CircuitParseError(f"expected qubit count, got {line!r}", lineno)
            if n_qubits < 1:
                raise CircuitParseError("qubit count must be positive", lineno)
            continue
        parts = line.split()
        if len(parts) < 3:
            raise CircuitParseError(f"malformed gate line {line!r}", lineno)
        try:
            cycle = int(parts[0])
        except ValueError:
            raise CircuitParseError(f"bad cycle {parts[0]!r}", lineno)
        if cycle < 0:
            raise CircuitParseError(f"negative cycle {cycle}", lineno)
        name = parts[1]
        if name not in GATE_ARITY:
            raise CircuitParseError(f"unknown gate {name!r}", lineno)
        nq, np_ = GATE_ARITY[name]
        fields = parts[2:]
        if len(fields) != nq + np_:
            raise CircuitParseError(
                f"gate {name!r} takes {nq} qubit(s) and {np_} param(s), "
                f"got {len(fields)} field(s)",
                lineno,
            )
        try:
            qubits = tuple(int(f) for f in fields[:nq])
        except ValueError:
            raise CircuitParseError(f"bad qubit id in {line!r}", lineno)
        try:
            params = tuple(float(f) for f in fields[nq:])
        except ValueError:
            raise CircuitParseError(f"bad parameter in {line!r}", lineno)
        for q in qubits:
            if not 0 <= q < n_qubits:
                raise CircuitParseError(f"qubit {q} out of range", lineno)
        if len(set(qubits)) != len(qubits):
            raise CircuitParseError(f"duplicate qubit in {line!r}", lineno)
        seen = busy.setdefault(cycle, set())
        for q in qubits:
            if q in seen:
                raise CircuitParseError(
                    f"qubit {q} used twice in cycle {cycle}", lineno
                )
            seen.add(q)
        gates.append(Gate(name, qubits, params, cycle))
    if n_qubits is None:
        raise CircuitParseError("empty circuit text", 1)
    gates.sort(key=lambda g: g.cycle)  # stable: file order kept within a cycle
    return Circuit(n_qubits, gates)


def circuit_to_network(c: Circuit, bitstring: str) -> TensorNetwork:
    """Closed network whose full contraction is the amplitude <b|C|0...0>.

    One rank-1 |0> tensor per qubit, one rank-2/rank-4 tensor per gate and
    one rank-1 projection <b_i| per qubit.  Wire labels are ``q{i}.{k}``
    where k counts the segments of qubit i's worldline.

    The bitstring reads as a binary number: qubit 0 is the rightmost
    character (little-endian, as in measurement strings).
    """
    if len(bitstring) != c.n_qubits:
        raise NetworkError(
            f"bitstring length {len(bitstring)} != qubit count {c.n_qubits}"
        )
    if set(bitstring) - {"0", "1"}:
        raise NetworkError(f"bitstring must be over 0/1, got {bitstring!r}")
    wire = [0] * c.n_qubits
    tensors = [
        DenseTensor([Index(f"q{q}.0")], [1.0, 0.0]) for q in range(c.n_qubits)
    ]
    for g in c.gates:
        ins = [Index(f"q{q}.{wire[q]}") for q in g.qubits]
        for q in g.qubits:
            wire[q] += 1
        outs = [Index(f"q{q}.{wire[q]}") for q in g.qubits]
        # matrix element <outs|U|ins>: row-major over (outs..., ins...)
        tensors.append(DenseTensor(outs + ins, g.matrix().reshape(-1)))
    for q in range(c.n_qubits):
        bit = bitstring[c.n_qubits - 1 - q]
        vec = [1.0, 0.0] if bit == "0" else [0.0, 1.0]
        tensors.append(DenseTensor([Index(f"q{q}.{wire[q]}")], vec))
    return TensorNetwork(tensors)
