"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s``; the lines are
also shown without ``-s``.
"""
import math
import time

import numpy as np
import pytest

from dfsnet import dfs, optics
from dfsnet import protocols as P
from dfsnet.dfs import NetworkLayout
from dfsnet.noise import (
    Dephasing, NoiseSpec, bare_qubit_scenario, collective_dephasing, dephasing_on_code_space,
    monte_carlo, protocol_scenario,
)
from dfsnet.statevec import (
    CNOT, H, MAX_ORACLE_QUBITS, X, Z, Gate, Phase, StateVector, atom, build_full_matrix, run_ops,
)

from conftest import random_unit, random_unitary

S2 = 1 / math.sqrt(2)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def logical_vec(state, layout):
    c = dfs.logical_coefficients(state, layout)
    n = layout.node_count
    return np.array([c[format(k, f"0{n}b")] for k in range(2 ** n)])


def phase_aligned_error(got, want):
    """Max amplitude error after removing the global phase."""
    k = int(np.argmax(np.abs(want)))
    ph = got[k] / abs(got[k]) if abs(got[k]) > 0 else 1
    return float(np.max(np.abs(got * np.conj(ph) * (want[k] / abs(want[k])) - want)))


# 1 ---------------------------------------------------------------------------

def test_criterion_1_hadamard_mapping(report):
    lay = NetworkLayout(1)
    t = time.perf_counter()
    err_one = phase_aligned_error(
        logical_vec(P.hadamard_gate(dfs.encode_basis(lay, "1"), 0).post_state, lay),
        np.array([S2, -S2]))
    err_zero = phase_aligned_error(
        logical_vec(P.hadamard_gate(dfs.encode_basis(lay, "0"), 0).post_state, lay),
        np.array([S2, S2]))
    elapsed = time.perf_counter() - t
    ok = err_one <= 1e-9 and err_zero <= 1e-9 and elapsed < 1.0
    report(1, ok, f"H|1>, H|0> errors {err_one:.1e}, {err_zero:.1e}; {elapsed * 1e3:.1f} ms")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_cz_mapping(report):
    lay = NetworkLayout(2)
    rng = np.random.default_rng(2)
    worst_amp = worst_p = 0.0
    for _ in range(50):
        a, b, c, d = random_unit(rng, 4)
        s = dfs.logical_superposition(lay, {"00": a, "01": b, "10": c, "11": d})
        out = P.cz_gate(s, 0, 1)
        worst_amp = max(worst_amp, phase_aligned_error(logical_vec(out.post_state, lay),
                                                       np.array([a, b, c, -d])))
        worst_p = max(worst_p, abs(out.probability - 0.5))
    ok = worst_amp <= 1e-9 and worst_p <= 1e-12
    report(2, ok, f"50 tuples; amplitude error {worst_amp:.1e}, probability error {worst_p:.1e}")


# 3 ---------------------------------------------------------------------------

def _physical_swap_oracle(register, i, j):
    """Dense matrix exchanging the atom pairs of nodes i and j."""
    swap2 = np.eye(4)[[0, 2, 1, 3]]
    ops = [Gate((atom(i, k), atom(j, k)), swap2) for k in (1, 2)]
    return build_full_matrix(register, ops)


def test_criterion_3_swap(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    cases = 0
    # product of two random logical states
    l2 = NetworkLayout(2)
    for _ in range(5):
        u, v = random_unit(rng, 2), random_unit(rng, 2)
        s = dfs.logical_superposition(l2, {f"{x}{y}": u[x] * v[y] for x in (0, 1) for y in (0, 1)})
        out = P.swap_gate(s, 0, 1).post_state
        want = np.kron(v, u)
        worst = max(worst, phase_aligned_error(logical_vec(out, l2), want))
        dense = _physical_swap_oracle(l2.register, 0, 1) @ s.amplitudes
        worst = max(worst, phase_aligned_error(out.amplitudes, dense))
        cases += 1
    # node 0 entangled with a spectator node 2
    l3 = NetworkLayout(3)
    assert len(l3.register) <= MAX_ORACLE_QUBITS
    for _ in range(5):
        v = random_unit(rng, 2)
        a, b = random_unit(rng, 2)
        coeffs = {"0" + f"{y}" + "0": a * v[y] for y in (0, 1)}
        coeffs.update({"1" + f"{y}" + "1": b * v[y] for y in (0, 1)})
        s = dfs.logical_superposition(l3, coeffs)
        out = P.swap_gate(s, 0, 1).post_state
        dense = _physical_swap_oracle(l3.register, 0, 1) @ s.amplitudes
        worst = max(worst, phase_aligned_error(out.amplitudes, dense))
        want = {f"{y}0" + "0": a * v[y] for y in (0, 1)}
        want.update({f"{y}1" + "1": b * v[y] for y in (0, 1)})
        wv = np.array([want.get(format(k, "03b"), 0) for k in range(8)])
        worst = max(worst, phase_aligned_error(logical_vec(out, l3), wv))
        cases += 1
    report(3, worst <= 1e-9, f"{cases} cases incl. spectator entanglement; max error {worst:.1e}")


# 4 ---------------------------------------------------------------------------

# correction table, written out here rather than imported
CORRECTION_TABLE = {(0, 0): "I", (0, 1): "X", (1, 0): "Z", (1, 1): "ZX"}


def test_criterion_4_teleportation(report):
    lay = NetworkLayout(3)
    rng = np.random.default_rng(4)
    worst_f = worst_p = 0.0
    table_ok = True
    for _ in range(100):
        alpha, beta = random_unit(rng, 2)
        s = dfs.logical_superposition(lay, {"000": alpha, "100": beta})
        for branch, corr in CORRECTION_TABLE.items():
            res = P.teleport(s, 0, 1, 2, forced=branch)
            table_ok &= res.success and res.correction.value == corr
            r = dfs.extract_logical(res.final_state, lay, 2)
            f = abs(np.conj(alpha) * r.alpha + np.conj(beta) * r.beta) ** 2
            worst_f = max(worst_f, abs(1 - f))
            worst_p = max(worst_p, abs(res.branch_probability - 0.25))
    ok = table_ok and worst_f <= 1e-9 and worst_p <= 1e-9
    report(4, ok, f"100 inputs x 4 branches; fidelity error {worst_f:.1e}, "
                  f"branch probability error {worst_p:.1e}, corrections match: {table_ok}")


# 5 ---------------------------------------------------------------------------

def test_criterion_5_dfs_robustness(report):
    rng = np.random.default_rng(5)
    worst = 0.0
    for n in range(1, 5):
        lay = NetworkLayout(n)
        for _ in range(20):
            v = random_unit(rng, 2 ** n)
            coeffs = {format(k, f"0{n}b"): v[k] for k in range(2 ** n)}
            s = dfs.logical_superposition(lay, coeffs)
            phis = rng.uniform(0, 2 * np.pi, n)
            for node, phi in enumerate(phis):
                s = collective_dephasing(s, node, phi)
            worst = max(worst, abs(1 - dfs.logical_fidelity(s, lay, coeffs)))
            m = dephasing_on_code_space(lay, phis)
            worst = max(worst, float(np.max(np.abs(m - m[0, 0] * np.eye(2 ** n)))))
    bare = monte_carlo(bare_qubit_scenario(), NoiseSpec(Dephasing("uniform"), seed=5), 100_000)
    ok = worst <= 1e-12 and abs(bare.conditional_fidelity - 0.5) <= 0.01
    report(5, ok, f"code-space deviation {worst:.1e}; bare control mean "
                  f"{bare.conditional_fidelity:.4f} +- {bare.fidelity_stderr:.4f}")


# 6 ---------------------------------------------------------------------------

def test_criterion_6_loss_heralding(report):
    lay = NetworkLayout(1)
    n = 100_000
    spec = NoiseSpec(photon_loss_per_reflection=0.1, seed=6)
    scen = protocol_scenario(lay, lambda s, ex: ex.run(P.hadamard_gate, s, 0),
                             lambda: dfs.encode_basis(lay, "1"), {"0": S2, "1": -S2})
    st = monte_carlo(scen, spec, n)
    p = 0.5 * 0.9 ** 2
    sigma = math.sqrt(p * (1 - p) / n)
    ok = abs(st.herald_rate - p) <= 3 * sigma and abs(1 - st.conditional_fidelity) <= 1e-9
    report(6, ok, f"herald {st.herald_rate:.5f} vs {p} (3 sigma = {3 * sigma:.5f}); "
                  f"conditional fidelity {st.conditional_fidelity:.12f}")


# 7 ---------------------------------------------------------------------------

SINGLE_NODE = "TR1 C PBS Cavity PBS C TR2 HWP1 M TR1 C PBS Cavity PBS C TR2 P45 Di".split()
TWO_NODE_IJ = ("TR1 TR1* C PBS Cavity PBS C TR2 HWP1 M TR1 HWP2 TR3* TR3 "
               "C PBS Cavity PBS C TR4 P45 Dj").split()


def test_criterion_7_routing(report):
    T0, T1 = 1.0, 1.0
    checks = [
        ("time-switched", optics.hadamard_table("i", T0, T1),
         optics.hadamard_schedule(T0, T1), SINGLE_NODE, "port i"),
        ("early switch", optics.hadamard_table("i", T0, T1),
         optics.hadamard_schedule(T0, T1, early_switch=True), SINGLE_NODE, "port i"),
        ("static two-node", optics.cz_table(T0, T1), optics.cz_schedule("i", T0, T1),
         TWO_NODE_IJ, "port i"),
    ]
    parts, ok = [], True
    for name, table, sched, path, entry in checks:
        t = time.perf_counter()
        v = optics.validate_schedule(table, sched, path, entry)
        dt = time.perf_counter() - t
        ok &= v.ok and dt < 0.1 and v.trace[-1].label == path[-1]
        parts.append(f"{name} {'ok' if v.ok else 'diverged'} ({dt * 1e3:.2f} ms)")
    report(7, ok, "; ".join(parts))


# 8 ---------------------------------------------------------------------------

def _order(seconds):
    return math.floor(math.log10(seconds))


def test_criterion_8_timing(report):
    ok = True
    parts = []
    for T in (3.0, 4.0, 5.0):
        params = P.ExperimentalParams(kappa_mhz=4.0, T_us=T)
        for proto in ("Hadamard", "CNOT"):
            gt = P.estimate_gate_time(params, proto)
            ok &= _order(gt.seconds) in (-6, -5) and gt.regime_ok
            parts.append(f"{proto}@{T:g}us={gt.seconds:.1e}s")
    kt = P.ExperimentalParams(kappa_mhz=4.0, T_us=3.0).kappa_T
    report(8, ok, ", ".join(parts) + f"; min kappa*T {kt:.1f}")


# 9 ---------------------------------------------------------------------------

FIXED = {1: [X, Z, H], 2: [CNOT]}


def _random_sequence(rng, register):
    ops = []
    for _ in range(rng.integers(1, 16)):
        kind = rng.integers(0, 4)
        if kind == 0:
            m = int(rng.integers(1, min(3, len(register)) + 1))
            idx = rng.choice(len(register), m, replace=False)
            ops.append(Gate(tuple(register[k] for k in idx), random_unitary(rng, 2 ** m)))
        elif kind == 1:
            m = int(rng.integers(1, min(2, len(register)) + 1))
            idx = rng.choice(len(register), m, replace=False)
            mats = FIXED[m]
            ops.append(Gate(tuple(register[k] for k in idx), mats[rng.integers(len(mats))]))
        else:
            m = int(rng.integers(1, len(register) + 1))
            idx = rng.choice(len(register), m, replace=False)
            ctl = tuple((register[k], int(rng.integers(0, 2))) for k in idx)
            ops.append(Phase(ctl, np.exp(1j * rng.uniform(0, 2 * np.pi))))
    return ops


def test_criterion_9_oracle_equivalence(report):
    rng = np.random.default_rng(9)
    labels = [atom(n, k) for n in range(3) for k in (1, 2)]
    worst = 0.0
    t = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(1, 7))
        register = tuple(labels[:n])
        ops = _random_sequence(rng, register)
        s = StateVector(random_unit(rng, 2 ** n), register)
        dense = build_full_matrix(register, ops) @ s.amplitudes
        worst = max(worst, float(np.max(np.abs(run_ops(s, ops).amplitudes - dense))))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-9 and elapsed < 60
    report(9, ok, f"200 sequences; max amplitude error {worst:.1e}; {elapsed:.2f} s")
