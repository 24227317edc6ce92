"""Logical gates and protocols on DFS-encoded nodes, driven by single photons.

Every heralded primitive runs the full photon-atom state vector: the photon is
appended to the register on injection and projected out on detection. The
success branch is returned; probabilities are exact Born weights.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dfs
from .optics import (
    ANTI_POL,
    DIAG_POL,
    H_POL,
    apply_hwp,
    cavity_reflect,
    polarizer_project,
)
from .statevec import (
    CNOT,
    H,
    PHOTON,
    X,
    StateVector,
    add_qubit,
    apply_unitary,
    atom,
    measure,
    project,
)

Reflect = Callable[[StateVector, int], StateVector]


@dataclass(frozen=True)
class HeraldedOutcome:
    success: bool
    detector: str | None
    probability: float
    post_state: StateVector | None
    photons_used: int
    cavity_reflections: int
    channel_hops: int = 0
    lost: bool = False


def detector_name(node: int) -> str:
    return f"D{dfs.DEFAULT_NAMES[node]}"


def _outcome(success, node, prob, post, photons, refl, hops=0) -> HeraldedOutcome:
    return HeraldedOutcome(success, detector_name(node), prob, post, photons, refl, hops)


# --- photon handling --------------------------------------------------------

def inject_photon(state: StateVector, polarization=DIAG_POL) -> StateVector:
    if state.has_photon:
        raise RuntimeError("a photon is already in flight")
    return add_qubit(state, PHOTON, polarization)


def _herald(state: StateVector, rng: np.random.Generator | None):
    """P45 detection. Returns (clicked, click probability, branch state)."""
    click = polarizer_project(state, 45.0)
    if rng is None or rng.random() < click.probability:
        return True, click.probability, click.post_state
    miss = project(state, PHOTON, ANTI_POL)
    return False, click.probability, miss.post_state


# --- atom-level sequences ---------------------------------------------------

def _x_sequence(state: StateVector, node: int, reflect: Reflect) -> StateVector:
    """CNOT(2->1) H2 U_CPF H2 CNOT(2->1); the CPF fires only on an h photon."""
    a1, a2 = atom(node, 1), atom(node, 2)
    state = apply_unitary(state, [a2, a1], CNOT, check=False)
    state = apply_unitary(state, [a2], H, check=False)
    state = reflect(state, node)
    state = apply_unitary(state, [a2], H, check=False)
    return apply_unitary(state, [a2, a1], CNOT, check=False)


def _flip_reflect(state: StateVector, node: int, which: int, reflect: Reflect) -> StateVector:
    """sigma_x on atom ``which``, reflect, sigma_x again."""
    q = atom(node, which)
    state = apply_unitary(state, [q], X, check=False)
    state = reflect(state, node)
    return apply_unitary(state, [q], X, check=False)


# --- deterministic single-node gates ----------------------------------------

def x_gate(state: StateVector, node: int, *, reflect: Reflect = cavity_reflect,
           rng=None) -> HeraldedOutcome:
    """Logical flip with an h photon: the CPF always fires, detection is certain."""
    s = _x_sequence(inject_photon(state, H_POL), node, reflect)
    det = project(s, PHOTON, H_POL)
    return _outcome(True, node, det.probability, det.post_state, 1, 1)


def z_gate(state: StateVector, node: int, *, reflect: Reflect = cavity_reflect,
           rng=None) -> HeraldedOutcome:
    s = _flip_reflect(inject_photon(state, H_POL), node, 1, reflect)
    det = project(s, PHOTON, H_POL)
    return _outcome(True, node, det.probability, det.post_state, 1, 1)


def logical_x(state: StateVector, node: int, reflect: Reflect = cavity_reflect) -> StateVector:
    return x_gate(state, node, reflect=reflect).post_state


def logical_z(state: StateVector, node: int, reflect: Reflect = cavity_reflect) -> StateVector:
    return z_gate(state, node, reflect=reflect).post_state


# --- heralded gates ---------------------------------------------------------

def hadamard_gate(state: StateVector, node: int, *, reflect: Reflect = cavity_reflect,
                  rng: np.random.Generator | None = None) -> HeraldedOutcome:
    """Logical Hadamard on ``node``.

    Photon in (|h>+|v>)/sqrt2; photon-conditioned flip; HWP1 swaps h and v;
    photon-conditioned phase via sigma_x(1) U_CPF sigma_x(1); P45 then D click.
    With ``rng=None`` the click branch is returned; otherwise the click is sampled.
    """
    s = inject_photon(state, DIAG_POL)
    s = _x_sequence(s, node, reflect)
    s = apply_hwp(s, 45.0)
    s = _flip_reflect(s, node, 1, reflect)
    ok, p, post = _herald(s, rng)
    return _outcome(ok, node, p, post, 1, 2)


def cz_gate(state: StateVector, control: int, target: int, *,
            reflect: Reflect = cavity_reflect,
            rng: np.random.Generator | None = None) -> HeraldedOutcome:
    """Two-node phase flip on |1~>|1~>, photon entering at ``control``.

    Detection happens at the target node's detector after one pass through
    the additional channel (HWP1 then HWP2 at 22.5 degrees).
    """
    if control == target:
        raise ValueError("control and target must be different nodes")
    s = inject_photon(state, DIAG_POL)
    s = _flip_reflect(s, control, 2, reflect)
    s = apply_hwp(s, 45.0)
    s = apply_hwp(s, 22.5)
    s = _flip_reflect(s, target, 1, reflect)
    ok, p, post = _herald(s, rng)
    return _outcome(ok, target, p, post, 1, 2, 1)


# --- composition ------------------------------------------------------------

class Executor:
    """Runs one primitive at a time; the default post-selects every click.

    Subclasses hook noise (loss, dephasing, imperfect reflections) in here
    without the protocols knowing.
    """

    reflect: Reflect = staticmethod(cavity_reflect)
    rng: np.random.Generator | None = None

    def run(self, gate, state: StateVector, *nodes: int) -> HeraldedOutcome:
        return gate(state, *nodes, reflect=self.reflect, rng=self.rng)


IDEAL = Executor()


@dataclass
class _Chain:
    state: StateVector
    probability: float = 1.0
    photons: int = 0
    reflections: int = 0
    hops: int = 0
    failed: HeraldedOutcome | None = None
    detector: str | None = None

    def step(self, executor: Executor, gate, *nodes: int) -> bool:
        out = executor.run(gate, self.state, *nodes)
        self.probability *= out.probability
        self.photons += out.photons_used
        self.reflections += out.cavity_reflections
        self.hops += out.channel_hops
        if not out.success:
            self.failed = out
            return False
        self.state = out.post_state
        self.detector = out.detector
        return True

    def result(self) -> HeraldedOutcome:
        if self.failed is not None:
            return HeraldedOutcome(False, self.failed.detector, self.probability,
                                   self.failed.post_state, self.photons, self.reflections,
                                   self.hops, self.failed.lost)
        return HeraldedOutcome(True, self.detector, self.probability, self.state,
                               self.photons, self.reflections, self.hops)


def run_sequence(state: StateVector, steps, executor: Executor | None = None) -> HeraldedOutcome:
    """Run ``(gate, *nodes)`` steps in order, aborting on the first failure."""
    executor = executor or IDEAL
    chain = _Chain(state)
    for gate, *nodes in steps:
        if not chain.step(executor, gate, *nodes):
            break
    return chain.result()


def cnot_steps(control: int, target: int):
    return [(hadamard_gate, target), (cz_gate, control, target), (hadamard_gate, target)]


def cnot_gate(state, control: int, target: int, executor: Executor | None = None) -> HeraldedOutcome:
    return run_sequence(state, cnot_steps(control, target), executor)


def swap_steps(i: int, j: int):
    return cnot_steps(i, j) + cnot_steps(j, i) + cnot_steps(i, j)


def swap_gate(state, i: int, j: int, executor: Executor | None = None) -> HeraldedOutcome:
    return run_sequence(state, swap_steps(i, j), executor)


def bell_prep_steps(j: int, k: int):
    return [(hadamard_gate, j)] + cnot_steps(j, k)


def bell_prep(state, j: int, k: int, executor: Executor | None = None) -> HeraldedOutcome:
    return run_sequence(state, bell_prep_steps(j, k), executor)


class LeakageError(RuntimeError):
    pass


@dataclass(frozen=True)
class BellMeasurement:
    m_i: int | None
    m_j: int | None
    post_state: StateVector | None
    probability: float  # Born probability of the (m_i, m_j) branch given heralding
    herald: HeraldedOutcome
    outcomes: tuple[dfs.LogicalOutcome, dfs.LogicalOutcome] | None = None


def _measure_node(state, node, rng, forced_bit):
    a1, a2 = atom(node, 1), atom(node, 2)
    if forced_bit is None:
        b1, s, p1 = measure(state, a1, rng)
        b2, s, p2 = measure(s, a2, rng)
    else:
        w1, w2 = dfs.CODE_WORDS[int(forced_bit)]
        b1, s, p1 = measure(state, a1, outcome=w1)
        b2, s, p2 = measure(s, a2, outcome=w2)
    return dfs.classify_bits(b1, b2), s, p1 * p2


def bell_measure(state, i: int, j: int, rng: np.random.Generator | None = None, *,
                 forced: tuple[int, int] | None = None,
                 executor: Executor | None = None) -> BellMeasurement:
    """CNOT(i->j), H(i), then read both atom pairs.

    ``forced`` conditions on a branch instead of sampling it.
    """
    herald = run_sequence(state, cnot_steps(i, j) + [(hadamard_gate, i)], executor)
    if not herald.success:
        return BellMeasurement(None, None, None, 0.0, herald)
    fi, fj = forced if forced is not None else (None, None)
    oi, s, pi = _measure_node(herald.post_state, i, rng, fi)
    oj, s, pj = _measure_node(s, j, rng, fj)
    if oi.is_leak or oj.is_leak:
        raise LeakageError(f"Bell measurement read {oi.name}/{oj.name}")
    return BellMeasurement(oi.bit, oj.bit, s, pi * pj, herald, (oi, oj))


class Correction(str, enum.Enum):
    I = "I"
    X = "X"
    Z = "Z"
    ZX = "ZX"


CORRECTIONS = {
    (0, 0): Correction.I,
    (0, 1): Correction.X,
    (1, 0): Correction.Z,
    (1, 1): Correction.ZX,  # X first, then Z
}

_CORRECTION_STEPS = {
    Correction.I: [],
    Correction.X: [x_gate],
    Correction.Z: [z_gate],
    Correction.ZX: [x_gate, z_gate],
}


@dataclass(frozen=True)
class TeleportResult:
    success: bool
    outcomes: tuple[int, int] | None
    correction: Correction | None
    final_state: StateVector | None
    total_success_probability: float  # product of all herald probabilities
    branch_probability: float
    photons_used: int
    cavity_reflections: int
    failed_stage: str | None = None


def teleport(state, i: int, j: int, k: int, rng: np.random.Generator | None = None, *,
             forced: tuple[int, int] | None = None,
             executor: Executor | None = None) -> TeleportResult:
    """Move node i's logical state to node k through a Bell pair on (j, k).

    A failed herald aborts: the unknown input cannot be prepared again.
    """
    executor = executor or IDEAL
    prep = bell_prep(state, j, k, executor)
    photons, refl = prep.photons_used, prep.cavity_reflections
    if not prep.success:
        return TeleportResult(False, None, None, None, prep.probability, 0.0,
                              photons, refl, "bell_prep")
    bm = bell_measure(prep.post_state, i, j, rng, forced=forced, executor=executor)
    photons += bm.herald.photons_used
    refl += bm.herald.cavity_reflections
    prob = prep.probability * bm.herald.probability
    if not bm.herald.success:
        return TeleportResult(False, None, None, None, prob, 0.0, photons, refl, "bell_measure")
    corr = CORRECTIONS[(bm.m_i, bm.m_j)]
    fix = run_sequence(bm.post_state, [(g, k) for g in _CORRECTION_STEPS[corr]], executor)
    photons += fix.photons_used
    refl += fix.cavity_reflections
    prob *= fix.probability
    if not fix.success:
        return TeleportResult(False, (bm.m_i, bm.m_j), corr, None, prob, bm.probability,
                              photons, refl, "correction")
    return TeleportResult(True, (bm.m_i, bm.m_j), corr, fix.post_state, prob,
                          bm.probability, photons, refl)


# --- retries and timing -----------------------------------------------------

class MaxAttemptsExceeded(RuntimeError):
    pass


def repeat_until_success(gate: Callable[[StateVector, np.random.Generator], HeraldedOutcome],
                         prepare: Callable[[], StateVector], rng: np.random.Generator,
                         max_attempts: int = 1000) -> tuple[HeraldedOutcome, int]:
    """Re-prepare and rerun ``gate`` until it heralds success."""
    for attempt in range(1, max_attempts + 1):
        out = gate(prepare(), rng)
        if out.success:
            return out, attempt
    raise MaxAttemptsExceeded(f"no success in {max_attempts} attempts")


# cavity reflections per protocol
REFLECTIONS = {
    "XGate": 1,
    "ZGate": 1,
    "Hadamard": 2,
    "CZ": 2,
    "CNOT": 6,
    "Swap": 18,
    "BellPrep": 8,
    "BellMeasure": 8,
}
KAPPA_T_MIN = 50.0


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExperimentalParams:
    kappa_mhz: float = 4.0  # kappa / 2pi
    g_mhz: float = 30.0
    gamma_mhz: float = 2.6
    T_us: float = 5.0  # per reflection

    def __post_init__(self):
        for name in ("kappa_mhz", "g_mhz", "gamma_mhz", "T_us"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def kappa_T(self) -> float:
        return 2 * math.pi * self.kappa_mhz * 1e6 * self.T_us * 1e-6


@dataclass(frozen=True)
class GateTime:
    protocol: str
    seconds: float
    reflections: int
    kappa_T: float
    regime_ok: bool


def estimate_gate_time(params: ExperimentalParams, protocol: str) -> GateTime:
    if protocol not in REFLECTIONS:
        raise KeyError(f"unknown protocol {protocol!r}")
    n = REFLECTIONS[protocol]
    kt = params.kappa_T
    ok = kt >= KAPPA_T_MIN
    if not ok:
        warnings.warn(f"kappa*T = {kt:.3g} < {KAPPA_T_MIN}: CPF outside the long-pulse regime",
                      RegimeWarning, stacklevel=2)
    return GateTime(protocol, n * params.T_us * 1e-6, n, kt, ok)
