"""Dense state-vector engine over a labeled qubit register.

Basis convention: the qubit at register position ``k`` contributes bit ``k``
of the basis index (little-endian). Atom basis is ``{|0>, |1>}``; the photon
polarization basis is ``{|h> = 0, |v> = 1}``.

Multi-qubit matrices passed to :func:`apply_unitary` use the textbook
Kronecker order: ``targets[0]`` is the most significant bit of the matrix
index, so ``np.kron(A, B)`` applies ``A`` to ``targets[0]`` and ``B`` to
``targets[1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_QUBITS = 14
MAX_ORACLE_QUBITS = 8
UNITARY_TOL = 1e-9
IMPOSSIBLE_TOL = 1e-12

_SQ2 = 1 / np.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2
I2 = np.eye(2, dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


class RegisterError(ValueError):
    """Bad register layout, missing or duplicated qubit."""


class NotUnitaryError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class QubitLabel:
    kind: str  # "atom" or "photon"
    node: int = -1
    atom: int = 0

    def __post_init__(self):
        if self.kind == "atom":
            if self.node < 0 or self.atom not in (1, 2):
                raise RegisterError(f"bad atom label node={self.node} atom={self.atom}")
        elif self.kind == "photon":
            if self.node != -1 or self.atom != 0:
                raise RegisterError("photon label carries no node/atom index")
        else:
            raise RegisterError(f"unknown qubit kind {self.kind!r}")

    @property
    def is_photon(self) -> bool:
        return self.kind == "photon"

    def __str__(self) -> str:
        return "photon" if self.is_photon else f"atom{self.atom}@{self.node}"


def atom(node: int, index: int) -> QubitLabel:
    return QubitLabel("atom", node, index)


PHOTON = QubitLabel("photon")


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    register: tuple[QubitLabel, ...]

    def __post_init__(self):
        reg = tuple(self.register)
        object.__setattr__(self, "register", reg)
        _check_register(reg)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2 ** len(reg):
            raise RegisterError(f"{amps.size} amplitudes for {len(reg)} qubits")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n(self) -> int:
        return len(self.register)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def has_photon(self) -> bool:
        return PHOTON in self.register

    @classmethod
    def _trusted(cls, amps: np.ndarray, register: tuple[QubitLabel, ...]) -> "StateVector":
        # internal constructor: register already validated, amps freshly allocated
        obj = object.__new__(cls)
        amps = amps.reshape(-1)
        amps.flags.writeable = False
        object.__setattr__(obj, "amplitudes", amps)
        object.__setattr__(obj, "register", register)
        return obj

    def position(self, label: QubitLabel) -> int:
        try:
            return self.register.index(label)
        except ValueError:
            raise RegisterError(f"{label} not in register") from None

    def amplitude(self, bits: Mapping[QubitLabel, int]) -> complex:
        """Amplitude of the basis state given by ``bits`` (must cover the register)."""
        if set(bits) != set(self.register):
            raise RegisterError("bit assignment must cover the whole register")
        idx = sum(int(bits[q]) << k for k, q in enumerate(self.register))
        return complex(self.amplitudes[idx])

    def tensor(self) -> np.ndarray:
        """Amplitudes as an n-axis tensor; register position k is axis n-1-k."""
        return self.amplitudes.reshape([2] * self.n)

    def normalized(self) -> "StateVector":
        return StateVector(self.amplitudes / np.sqrt(self.norm2), self.register)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.register)


def _check_register(reg: Sequence[QubitLabel], allow_empty: bool = True) -> None:
    # an empty register is the scalar left after detecting the last qubit
    if len(reg) > MAX_QUBITS or (not reg and not allow_empty):
        raise RegisterError(f"register size {len(reg)} outside [1, {MAX_QUBITS}]")
    if len(set(reg)) != len(reg):
        raise RegisterError("duplicate qubit labels")
    if sum(q.is_photon for q in reg) > 1:
        raise RegisterError("at most one photon per register")


def _axis(state: StateVector, label: QubitLabel) -> int:
    return state.n - 1 - state.position(label)


def _from_tensor(t: np.ndarray, register: tuple[QubitLabel, ...]) -> StateVector:
    return StateVector._trusted(np.ascontiguousarray(t), register)


def new_register(labels: Sequence[QubitLabel], basis_index: int = 0) -> StateVector:
    labels = tuple(labels)
    _check_register(labels, allow_empty=False)
    if not 0 <= basis_index < 2 ** len(labels):
        raise RegisterError(f"basis index {basis_index} out of range for {len(labels)} qubits")
    amps = np.zeros(2 ** len(labels), dtype=complex)
    amps[basis_index] = 1.0
    return StateVector(amps, labels)


def basis_index(register: Sequence[QubitLabel], bits: Mapping[QubitLabel, int]) -> int:
    return sum(int(bits.get(q, 0)) << k for k, q in enumerate(register))


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(
        u.conj().T @ u, np.eye(u.shape[0]), atol=tol, rtol=0
    )


def _check_targets(state: StateVector, targets: Sequence[QubitLabel]) -> None:
    if len(set(targets)) != len(targets):
        raise RegisterError("duplicate targets")
    for t in targets:
        state.position(t)


def apply_unitary(state: StateVector, targets: Sequence[QubitLabel], u: np.ndarray,
                  check: bool = True) -> StateVector:
    targets = tuple(targets)
    _check_targets(state, targets)
    m = len(targets)
    u = np.asarray(u, dtype=complex)
    if u.shape != (2 ** m, 2 ** m):
        raise NotUnitaryError(f"matrix shape {u.shape} does not match {m} targets")
    if check and not is_unitary(u):
        raise NotUnitaryError("matrix is not unitary within tolerance")
    if m == 1:
        k = state.position(targets[0])
        t = state.amplitudes.reshape(2 ** (state.n - 1 - k), 2, 2 ** k)
        return StateVector._trusted(np.matmul(u, t), state.register)
    n = state.n
    axes = [_axis(state, t) for t in targets]
    fresh = list(range(n, n + m))
    out_axes = list(range(n))
    for a, f in zip(axes, fresh):
        out_axes[a] = f
    out = np.einsum(u.reshape([2] * (2 * m)), fresh + axes, state.tensor(), list(range(n)), out_axes)
    return _from_tensor(out, state.register)


def controlled_phase(state: StateVector, controls: Mapping[QubitLabel, int],
                     phase: complex) -> StateVector:
    """Multiply by ``phase`` every amplitude whose bits match all ``controls``."""
    if not controls:
        raise RegisterError("controlled_phase needs at least one control")
    if abs(abs(phase) - 1) > UNITARY_TOL:
        raise NotUnitaryError(f"|phase| = {abs(phase)} != 1")
    t = np.array(state.tensor())
    idx: list = [slice(None)] * state.n
    for q, bit in controls.items():
        idx[_axis(state, q)] = int(bit)
    t[tuple(idx)] *= phase
    return _from_tensor(t, state.register)


def diagonal_phase(state: StateVector, qubit: QubitLabel, phase: complex) -> StateVector:
    """Shorthand for a phase on the |1> level of one qubit."""
    return controlled_phase(state, {qubit: 1}, phase)


def add_qubit(state: StateVector, label: QubitLabel, vector: Sequence[complex]) -> StateVector:
    """Append ``label`` in the single-qubit state ``vector`` as the new last position."""
    vec = np.asarray(vector, dtype=complex)
    if vec.shape != (2,) or abs(np.vdot(vec, vec).real - 1) > UNITARY_TOL:
        raise ValueError("qubit state must be a normalized 2-vector")
    reg = state.register + (label,)
    _check_register(reg)
    # last position is the most significant bit, i.e. the leading kron factor
    return StateVector._trusted(np.multiply.outer(vec, state.amplitudes), reg)


def product(*states: StateVector) -> StateVector:
    """Tensor product; the register of the first argument comes first."""
    amps = np.ones(1, dtype=complex)
    reg: tuple[QubitLabel, ...] = ()
    for s in states:
        amps = np.kron(s.amplitudes, amps)
        reg += s.register
    return StateVector(amps, reg)


@dataclass(frozen=True)
class ProjectionResult:
    probability: float
    post_state: StateVector | None
    unnormalized: np.ndarray = field(repr=False, default=None)

    @property
    def impossible(self) -> bool:
        return self.post_state is None


def project(state: StateVector, qubit: QubitLabel, onto: Sequence[complex]) -> ProjectionResult:
    """Project ``qubit`` onto ``onto`` and drop it from the register."""
    vec = np.asarray(onto, dtype=complex)
    if vec.shape != (2,) or abs(np.vdot(vec, vec).real - 1) > UNITARY_TOL:
        raise ValueError("projection vector must be a normalized 2-vector")
    k = state.position(qubit)
    rest = state.register[:k] + state.register[k + 1:]
    t = state.amplitudes.reshape(2 ** (state.n - 1 - k), 2, 2 ** k)
    c = vec.conj()
    flat = (c[0] * t[:, 0, :] + c[1] * t[:, 1, :]).reshape(-1)
    prob = float(np.vdot(flat, flat).real)
    if prob < IMPOSSIBLE_TOL:
        return ProjectionResult(prob, None, flat)
    return ProjectionResult(prob, StateVector._trusted(flat / np.sqrt(prob), rest), flat)


def probabilities(state: StateVector, qubit: QubitLabel) -> tuple[float, float]:
    ax = _axis(state, qubit)
    p = np.abs(state.tensor()) ** 2
    p1 = float(np.take(p, 1, axis=ax).sum())
    return 1.0 - p1, p1


def measure(state: StateVector, qubit: QubitLabel, rng: np.random.Generator | None = None,
            outcome: int | None = None) -> tuple[int, StateVector, float]:
    """Computational-basis measurement; the qubit stays in the register, collapsed.

    Pass ``outcome`` to condition on a branch instead of sampling.
    """
    p0, p1 = probabilities(state, qubit)
    if outcome is None:
        if rng is None:
            raise ValueError("need an rng or a forced outcome")
        outcome = int(rng.random() < p1)
    prob = p1 if outcome else p0
    if prob < IMPOSSIBLE_TOL:
        raise ValueError(f"outcome {outcome} on {qubit} has probability {prob:.3g}")
    ax = _axis(state, qubit)
    t = np.array(state.tensor())
    idx: list = [slice(None)] * state.n
    idx[ax] = 1 - outcome
    t[tuple(idx)] = 0
    return outcome, _from_tensor(t / np.sqrt(prob), state.register), prob


def inner(a: StateVector, b: StateVector) -> complex:
    if a.register != b.register:
        raise RegisterError("register mismatch")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: StateVector, b: StateVector) -> float:
    return abs(inner(a, b)) ** 2


# --- dense oracle -----------------------------------------------------------

@dataclass(frozen=True)
class Gate:
    targets: tuple[QubitLabel, ...]
    matrix: np.ndarray


@dataclass(frozen=True)
class Phase:
    controls: tuple[tuple[QubitLabel, int], ...]
    phase: complex


Op = Gate | Phase


def run_ops(state: StateVector, ops: Iterable[Op]) -> StateVector:
    """Streaming application of an op sequence."""
    for op in ops:
        if isinstance(op, Gate):
            state = apply_unitary(state, op.targets, op.matrix)
        else:
            state = controlled_phase(state, dict(op.controls), op.phase)
    return state


def _op_matrix(register: Sequence[QubitLabel], op: Op) -> np.ndarray:
    n = len(register)
    dim = 2 ** n
    bits = (np.arange(dim)[:, None] >> np.arange(n)[None, :]) & 1  # bits[i, k]
    pos = {q: k for k, q in enumerate(register)}
    if isinstance(op, Phase):
        mask = np.ones(dim, dtype=bool)
        for q, b in op.controls:
            mask &= bits[:, pos[q]] == b
        return np.diag(np.where(mask, op.phase, 1.0).astype(complex))
    tpos = [pos[q] for q in op.targets]
    m = len(tpos)
    # sub-index of each basis state within the gate, targets[0] most significant
    sub = np.zeros(dim, dtype=int)
    for r, k in enumerate(tpos):
        sub |= bits[:, k] << (m - 1 - r)
    others = [k for k in range(n) if k not in tpos]
    rest = np.zeros(dim, dtype=int)
    for k in others:
        rest |= bits[:, k] << k
    same_rest = rest[:, None] == rest[None, :]
    return np.where(same_rest, np.asarray(op.matrix, dtype=complex)[sub[:, None], sub[None, :]], 0)


def build_full_matrix(register: Sequence[QubitLabel], ops: Iterable[Op]) -> np.ndarray:
    """Explicit product of full-dimension step matrices; a test oracle only."""
    register = tuple(register)
    if len(register) > MAX_ORACLE_QUBITS:
        raise RegisterError(f"oracle limited to {MAX_ORACLE_QUBITS} qubits")
    full = np.eye(2 ** len(register), dtype=complex)
    for op in ops:
        full = _op_matrix(register, op) @ full
    return full
