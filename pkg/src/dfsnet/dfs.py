"""Two-atom decoherence-free encoding: |0~> = |10>, |1~> = |01> per node."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .statevec import PHOTON, QubitLabel, RegisterError, StateVector, atom, inner

MAX_NODES = 6
NORM_TOL = 1e-9
DEFAULT_NAMES = "ijklmn"

# (atom1, atom2) bits of each code word
CODE_WORDS = {0: (1, 0), 1: (0, 1)}


class LogicalOutcome(enum.Enum):
    LOGICAL0 = "0"
    LOGICAL1 = "1"
    LEAK00 = "00"
    LEAK11 = "11"

    @property
    def is_leak(self) -> bool:
        return self in (LogicalOutcome.LEAK00, LogicalOutcome.LEAK11)

    @property
    def bit(self) -> int:
        if self.is_leak:
            raise ValueError(f"{self.name} is outside the code space")
        return int(self.value)


def classify_bits(a1: int, a2: int) -> LogicalOutcome:
    return {
        (1, 0): LogicalOutcome.LOGICAL0,
        (0, 1): LogicalOutcome.LOGICAL1,
        (0, 0): LogicalOutcome.LEAK00,
        (1, 1): LogicalOutcome.LEAK11,
    }[(int(a1), int(a2))]


@dataclass(frozen=True)
class Node:
    index: int
    name: str

    @property
    def atoms(self) -> tuple[QubitLabel, QubitLabel]:
        return atom(self.index, 1), atom(self.index, 2)

    @property
    def port(self) -> str:
        return f"port {self.name}"

    @property
    def detector(self) -> str:
        return f"D{self.name}"


@dataclass(frozen=True)
class NetworkLayout:
    node_count: int
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not 1 <= self.node_count <= MAX_NODES:
            raise ValueError(f"node_count must be in [1, {MAX_NODES}], got {self.node_count}")
        names = tuple(self.names) or tuple(DEFAULT_NAMES[: self.node_count])
        if len(names) != self.node_count or len(set(names)) != len(names):
            raise ValueError("need one distinct name per node")
        object.__setattr__(self, "names", names)

    @property
    def nodes(self) -> tuple[Node, ...]:
        return tuple(Node(k, n) for k, n in enumerate(self.names))

    def node(self, key: int | str) -> Node:
        if isinstance(key, str):
            if key not in self.names:
                raise KeyError(f"no node named {key!r}")
            key = self.names.index(key)
        if not 0 <= key < self.node_count:
            raise KeyError(f"no node {key}")
        return self.nodes[key]

    @property
    def register(self) -> tuple[QubitLabel, ...]:
        """Canonical atom register: node-major, atom 1 before atom 2."""
        return tuple(q for n in self.nodes for q in n.atoms)

    def check_register(self, state: StateVector) -> None:
        reg = state.register
        if reg[: 2 * self.node_count] != self.register:
            raise RegisterError("state register does not follow the layout order")
        if reg[2 * self.node_count:] not in ((), (PHOTON,)):
            raise RegisterError("only a trailing photon may follow the atoms")


def _physical_index(layout: NetworkLayout, bits: str) -> int:
    idx = 0
    for k, b in enumerate(bits):
        a1, a2 = CODE_WORDS[int(b)]
        idx |= a1 << (2 * k) | a2 << (2 * k + 1)
    return idx


def _check_bits(layout: NetworkLayout, bits: str) -> None:
    if len(bits) != layout.node_count or set(bits) - {"0", "1"}:
        raise ValueError(f"logical string {bits!r} does not match {layout.node_count} nodes")


def encode_basis(layout: NetworkLayout, bits: str) -> StateVector:
    _check_bits(layout, bits)
    amps = np.zeros(4 ** layout.node_count, dtype=complex)
    amps[_physical_index(layout, bits)] = 1
    return StateVector(amps, layout.register)


def logical_superposition(layout: NetworkLayout, coeffs: Mapping[str, complex],
                          tol: float = NORM_TOL) -> StateVector:
    amps = np.zeros(4 ** layout.node_count, dtype=complex)
    for bits, c in coeffs.items():
        _check_bits(layout, bits)
        amps[_physical_index(layout, bits)] += c
    norm2 = float(np.vdot(amps, amps).real)
    if abs(norm2 - 1) > tol:
        raise ValueError(f"coefficients not normalized (norm^2 = {norm2:.12g})")
    return StateVector(amps, layout.register)


def logical_coefficients(state: StateVector, layout: NetworkLayout) -> dict[str, complex]:
    """Amplitude of every logical basis string (atoms only, photon-free state)."""
    layout.check_register(state)
    if state.has_photon:
        raise RegisterError("state still holds a photon")
    out = {}
    for tup in itertools.product("01", repeat=layout.node_count):
        bits = "".join(tup)
        out[bits] = complex(state.amplitudes[_physical_index(layout, bits)])
    return out


def code_space_weight(state: StateVector, layout: NetworkLayout) -> float:
    return float(sum(abs(c) ** 2 for c in logical_coefficients(state, layout).values()))


@dataclass(frozen=True)
class LogicalReadout:
    alpha: complex | None
    beta: complex | None
    leakage: float
    entangled: bool
    populations: dict[LogicalOutcome, float]

    @property
    def amplitudes(self) -> tuple[complex, complex]:
        if self.entangled:
            raise ValueError("node is entangled with the rest; no local amplitudes")
        return self.alpha, self.beta


def _node_matrix(state: StateVector, node: Node) -> np.ndarray:
    """Reshape to (4 node basis states, rest); node index = a1 + 2*a2."""
    a1, a2 = node.atoms
    ax1 = state.n - 1 - state.position(a1)
    ax2 = state.n - 1 - state.position(a2)
    t = np.moveaxis(state.tensor(), [ax2, ax1], [0, 1])
    return t.reshape(4, -1)


def extract_logical(state: StateVector, layout: NetworkLayout, node: int | str,
                    tol: float = NORM_TOL) -> LogicalReadout:
    nd = layout.node(node)
    m = _node_matrix(state, nd)
    # rows: |a2 a1>: 0 -> 00, 1 -> a1=1 (|10>), 2 -> a2=1 (|01>), 3 -> 11
    pops_arr = np.sum(np.abs(m) ** 2, axis=1)
    pops = {
        LogicalOutcome.LEAK00: float(pops_arr[0]),
        LogicalOutcome.LOGICAL0: float(pops_arr[1]),
        LogicalOutcome.LOGICAL1: float(pops_arr[2]),
        LogicalOutcome.LEAK11: float(pops_arr[3]),
    }
    leakage = pops[LogicalOutcome.LEAK00] + pops[LogicalOutcome.LEAK11]
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if s.size > 1 and s[1] > np.sqrt(tol):
        return LogicalReadout(None, None, leakage, True, pops)
    vec = u[:, 0] * s[0]
    rest = vh[0]
    # fix the split phase: first significant amplitude of the rest factor real positive
    k = int(np.argmax(np.abs(rest) > np.sqrt(tol)))
    vec = vec * (rest[k] / abs(rest[k]))
    return LogicalReadout(complex(vec[1]), complex(vec[2]), leakage, False, pops)


def leakage(state: StateVector, layout: NetworkLayout, node: int | str) -> float:
    m = _node_matrix(state, layout.node(node))
    return float(np.sum(np.abs(m[[0, 3]]) ** 2))


def logical_fidelity(state: StateVector, layout: NetworkLayout,
                     target: Mapping[str, complex]) -> float:
    ref = logical_superposition(layout, target)
    return abs(inner(ref, state)) ** 2
