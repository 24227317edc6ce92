"""Trajectory-level noise: collective dephasing, photon loss, imperfect CPF,
and a seeded Monte Carlo harness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import dfs
from .optics import cavity_reflect, imperfect_reflect
from .protocols import Executor, HeraldedOutcome
from .statevec import H, StateVector, apply_unitary, atom, controlled_phase, fidelity, new_register

DEPHASING_KINDS = ("off", "uniform", "gaussian")
EPOCHS = ("before", "between", "both")


@dataclass(frozen=True)
class Dephasing:
    kind: str = "off"
    sigma: float = 0.0  # radians, gaussian only
    scope: str = "node"  # "node": independent phase per node; "global": one phase for all
    epochs: str = "between"

    def __post_init__(self):
        if self.kind not in DEPHASING_KINDS:
            raise ValueError(f"dephasing kind must be one of {DEPHASING_KINDS}")
        if self.scope not in ("node", "global"):
            raise ValueError("dephasing scope must be 'node' or 'global'")
        if self.epochs not in EPOCHS:
            raise ValueError(f"dephasing epochs must be one of {EPOCHS}")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError("sigma must be finite and non-negative")

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        n = 1 if self.scope == "global" else count
        if self.kind == "uniform":
            phi = rng.uniform(0.0, 2 * np.pi, n)
        elif self.kind == "gaussian":
            phi = rng.normal(0.0, self.sigma, n)
        else:
            phi = np.zeros(n)
        return np.broadcast_to(phi, count) if self.scope == "global" else phi


@dataclass(frozen=True)
class NoiseSpec:
    dephasing: Dephasing = field(default_factory=Dephasing)
    photon_loss_per_reflection: float = 0.0
    photon_loss_per_channel_hop: float = 0.0
    cpf_phase_error: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("photon_loss_per_reflection", "photon_loss_per_channel_hop"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if not math.isfinite(self.cpf_phase_error):
            raise ValueError("cpf_phase_error must be finite")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def is_ideal(self) -> bool:
        return (self.dephasing.kind == "off" and self.photon_loss_per_reflection == 0
                and self.photon_loss_per_channel_hop == 0 and self.cpf_phase_error == 0)

    def survival(self, reflections: int, hops: int) -> float:
        return ((1 - self.photon_loss_per_reflection) ** reflections
                * (1 - self.photon_loss_per_channel_hop) ** hops)


# --- channels ---------------------------------------------------------------

def collective_dephasing(state: StateVector, node: int, phi: float) -> StateVector:
    """exp(i phi) on the |1> level of both atoms of ``node``."""
    phase = np.exp(1j * phi)
    for k in (1, 2):
        state = controlled_phase(state, {atom(node, k): 1}, phase)
    return state


def _atom_nodes(state: StateVector) -> list[int]:
    return sorted({q.node for q in state.register if not q.is_photon})


def dephase(state: StateVector, dephasing: Dephasing, rng: np.random.Generator) -> StateVector:
    if dephasing.kind == "off":
        return state
    nodes = _atom_nodes(state)
    for node, phi in zip(nodes, dephasing.sample(rng, len(nodes))):
        state = collective_dephasing(state, node, float(phi))
    return state


def dephasing_on_code_space(layout: dfs.NetworkLayout, phis: Sequence[float]) -> np.ndarray:
    """Matrix of per-node collective dephasing restricted to the logical basis."""
    basis = [dfs.encode_basis(layout, format(k, f"0{layout.node_count}b"))
             for k in range(2 ** layout.node_count)]
    images = []
    for b in basis:
        s = b
        for node, phi in enumerate(phis):
            s = collective_dephasing(s, node, phi)
        images.append(s.amplitudes)
    return np.array([[np.vdot(a.amplitudes, img) for img in images] for a in basis])


def imperfect_cpf(epsilon: float):
    return imperfect_reflect(epsilon) if epsilon else cavity_reflect


def with_photon_loss(execution: Callable[[np.random.Generator | None], HeraldedOutcome],
                     spec: NoiseSpec, rng: np.random.Generator | None = None) -> HeraldedOutcome:
    """Wrap one heralded execution with lumped photon loss.

    Loss is state independent, so the surviving click branch is exactly the
    ideal one; only the herald probability is reweighted. With ``rng=None``
    the click branch is post-selected.
    """
    out = execution(rng)
    survive = spec.survival(out.cavity_reflections, out.channel_hops)
    prob = out.probability * survive
    if rng is not None and out.success and rng.random() >= survive:
        return HeraldedOutcome(False, out.detector, prob, None, out.photons_used,
                               out.cavity_reflections, out.channel_hops, lost=True)
    if survive == 0.0:
        return HeraldedOutcome(False, out.detector, 0.0, None, out.photons_used,
                               out.cavity_reflections, out.channel_hops, lost=True)
    return HeraldedOutcome(out.success, out.detector, prob, out.post_state, out.photons_used,
                           out.cavity_reflections, out.channel_hops, out.lost)


class NoisyExecutor(Executor):
    """Executor applying a :class:`NoiseSpec` around every heralded primitive."""

    def __init__(self, spec: NoiseSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        self.rng = rng
        self.reflect = imperfect_cpf(spec.cpf_phase_error)
        self._calls = 0
        if spec.dephasing.kind != "off" and rng is None:
            raise ValueError("random dephasing needs an rng")

    def run(self, gate, state: StateVector, *nodes: int) -> HeraldedOutcome:
        deph = self.spec.dephasing
        if self._calls == 0 and deph.epochs in ("before", "both"):
            state = dephase(state, deph, self.rng)
        self._calls += 1
        out = with_photon_loss(
            lambda rng: gate(state, *nodes, reflect=self.reflect, rng=rng), self.spec, self.rng
        )
        if out.success and deph.epochs in ("between", "both"):
            out = HeraldedOutcome(out.success, out.detector, out.probability,
                                  dephase(out.post_state, deph, self.rng), out.photons_used,
                                  out.cavity_reflections, out.channel_hops)
        return out


# --- Monte Carlo ------------------------------------------------------------

@dataclass(frozen=True)
class Trial:
    herald: bool
    fidelity: float | None = None
    leakage: float = 0.0


@dataclass
class _Moments:
    n: int = 0
    s: float = 0.0
    ss: float = 0.0

    def add(self, x: float):
        self.n += 1
        self.s += x
        self.ss += x * x

    def merge(self, other: "_Moments") -> "_Moments":
        return _Moments(self.n + other.n, self.s + other.s, self.ss + other.ss)

    @property
    def mean(self) -> float:
        return self.s / self.n if self.n else float("nan")

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return 0.0
        var = max(self.ss - self.s * self.s / self.n, 0.0) / (self.n - 1)
        return math.sqrt(var / self.n)


@dataclass(frozen=True)
class EnsembleStats:
    trials: int
    herald_rate: float
    herald_stderr: float
    conditional_fidelity: float
    fidelity_stderr: float
    leakage_rate: float
    successes: int

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "herald_rate": {"value": self.herald_rate, "stderr": self.herald_stderr},
            "conditional_fidelity": {"value": self.conditional_fidelity,
                                     "stderr": self.fidelity_stderr},
            "leakage_rate": self.leakage_rate,
        }


@dataclass
class Accumulator:
    herald: _Moments = field(default_factory=_Moments)
    fid: _Moments = field(default_factory=_Moments)
    leak: _Moments = field(default_factory=_Moments)

    def add(self, t: Trial):
        self.herald.add(float(t.herald))
        if t.herald and t.fidelity is not None:
            self.fid.add(t.fidelity)
            self.leak.add(t.leakage)

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.herald.merge(other.herald), self.fid.merge(other.fid),
                           self.leak.merge(other.leak))

    def stats(self) -> EnsembleStats:
        return EnsembleStats(
            trials=self.herald.n,
            herald_rate=self.herald.mean,
            herald_stderr=self.herald.stderr,
            conditional_fidelity=self.fid.mean,
            fidelity_stderr=self.fid.stderr,
            leakage_rate=self.leak.mean if self.leak.n else 0.0,
            successes=int(round(self.herald.s)),
        )


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index``; reproducible on its own."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(index,)))


Scenario = Callable[[np.random.Generator, NoiseSpec], Trial]


def monte_carlo(scenario: Scenario, spec: NoiseSpec, trials: int) -> EnsembleStats:
    if trials < 1:
        raise ValueError("need at least one trial")
    acc = Accumulator()
    for i in range(trials):
        acc.add(scenario(trial_rng(spec.seed, i), spec))
    return acc.stats()


# --- stock scenarios ----------------------------------------------------------

def protocol_scenario(layout: dfs.NetworkLayout, run: Callable, prepare: Callable[[], StateVector],
                      target: Mapping[str, complex]) -> Scenario:
    """Run ``run(state, executor)`` once per trial against a logical target.

    Fidelity is taken on the click branch against ``target``; leakage is the
    weight outside the code space, summed over nodes.
    """
    def trial(rng, spec):
        ex = NoisyExecutor(spec, rng)
        out = run(prepare(), ex)
        if not out.success:
            return Trial(False)
        state = out.post_state
        return Trial(True, dfs.logical_fidelity(state, layout, target),
                     1.0 - dfs.code_space_weight(state, layout))
    return trial


def dfs_idle_scenario(layout: dfs.NetworkLayout, coeffs: Mapping[str, complex]) -> Scenario:
    """Code state sitting through one round of collective dephasing."""
    ref = dfs.logical_superposition(layout, coeffs)

    def trial(rng, spec):
        deph = spec.dephasing if spec.dephasing.kind != "off" else Dephasing("uniform")
        s = dephase(ref, deph, rng)
        return Trial(True, dfs.logical_fidelity(s, layout, coeffs),
                     1.0 - dfs.code_space_weight(s, layout))
    return trial


def bare_qubit_scenario() -> Scenario:
    """Control: one unencoded atom in (|0>+|1>)/sqrt2 under the same phase noise."""
    q = atom(0, 1)
    ref = apply_unitary(new_register([q]), [q], H)

    def trial(rng, spec):
        deph = spec.dephasing if spec.dephasing.kind != "off" else Dephasing("uniform")
        phi = float(deph.sample(rng, 1)[0])
        return Trial(True, fidelity(ref, controlled_phase(ref, {q: 1}, np.exp(1j * phi))))
    return trial
