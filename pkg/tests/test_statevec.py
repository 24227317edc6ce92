import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfsnet.statevec import (
    CNOT, H, MAX_QUBITS, PHOTON, X, Z, Gate, NotUnitaryError, Phase, RegisterError, StateVector,
    add_qubit, apply_unitary, atom, build_full_matrix, controlled_phase, fidelity, inner, measure,
    new_register, probabilities, product, project, run_ops,
)

from conftest import random_unit, random_unitary

A, B, C = atom(0, 1), atom(0, 2), atom(1, 1)


def test_little_endian_basis_index():
    s = new_register([A, B], 1)
    assert s.amplitude({A: 1, B: 0}) == 1
    s = new_register([A, B], 2)
    assert s.amplitude({A: 0, B: 1}) == 1


def test_apply_x_flips_only_target():
    s = apply_unitary(new_register([A, B, C]), [B], X)
    assert s.amplitude({A: 0, B: 1, C: 0}) == 1


def test_first_target_is_control_of_two_qubit_matrix():
    s = new_register([A, B], 1)  # A=1, B=0
    assert apply_unitary(s, [A, B], CNOT).amplitude({A: 1, B: 1}) == 1
    assert apply_unitary(s, [B, A], CNOT).amplitude({A: 1, B: 0}) == 1


def test_rejects_non_unitary_and_bad_shapes():
    s = new_register([A])
    with pytest.raises(NotUnitaryError):
        apply_unitary(s, [A], np.array([[1, 1], [0, 1]]))
    with pytest.raises(NotUnitaryError):
        apply_unitary(s, [A], CNOT)


def test_register_validation():
    with pytest.raises(RegisterError):
        new_register([A, A])
    with pytest.raises(RegisterError):
        new_register([atom(k, 1) for k in range(MAX_QUBITS + 1)])
    with pytest.raises(RegisterError):
        new_register([])
    with pytest.raises(RegisterError):
        atom(0, 3)
    with pytest.raises(RegisterError):
        apply_unitary(new_register([A]), [B], X)


def test_state_is_immutable_and_copies_input():
    amps = np.array([1, 0], dtype=complex)
    s = StateVector(amps, (A,))
    amps[0] = 0
    assert s.amplitudes[0] == 1
    with pytest.raises(ValueError):
        s.amplitudes[0] = 2


def test_controlled_phase_hits_matching_amplitudes_only():
    s = apply_unitary(apply_unitary(new_register([A, B]), [A], H), [B], H)
    out = controlled_phase(s, {A: 1, B: 1}, -1)
    assert np.allclose(out.amplitudes, [0.5, 0.5, 0.5, -0.5])
    with pytest.raises(NotUnitaryError):
        controlled_phase(s, {A: 1}, 2.0)
    with pytest.raises(RegisterError):
        controlled_phase(s, {}, -1)


def test_add_qubit_and_product_agree():
    s = apply_unitary(new_register([A]), [A], H)
    v = np.array([0.6, 0.8j])
    a = add_qubit(s, PHOTON, v)
    b = product(s, StateVector(v, (PHOTON,)))
    assert a.register == b.register == (A, PHOTON)
    assert np.allclose(a.amplitudes, b.amplitudes)


def test_projecting_last_qubit_leaves_scalar():
    r = project(StateVector(np.array([0.6, 0.8]), (A,)), A, [0, 1])
    assert r.post_state.n == 0 and r.probability == pytest.approx(0.64)


def test_impossible_projection_flagged():
    r = project(new_register([A, B]), A, [0, 1])
    assert r.impossible and r.probability == 0


def test_measure_forced_and_sampled():
    s = apply_unitary(new_register([A, B]), [A], H)
    bit, post, p = measure(s, A, outcome=1)
    assert (bit, p) == (1, pytest.approx(0.5))
    assert post.amplitude({A: 1, B: 0}) == pytest.approx(1)
    bit, _, _ = measure(s, A, np.random.default_rng(0))
    assert bit in (0, 1)
    with pytest.raises(ValueError):
        measure(new_register([A]), A, outcome=1)


def test_inner_requires_same_register():
    with pytest.raises(RegisterError):
        inner(new_register([A]), new_register([B]))


# --- properties ---------------------------------------------------------------

LABELS = [atom(n, k) for n in range(3) for k in (1, 2)]


@st.composite
def states_and_targets(draw, max_targets=3):
    n = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    m = draw(st.integers(1, min(max_targets, n)))
    rng = np.random.default_rng(seed)
    reg = LABELS[:n]
    targets = list(rng.permutation(n)[:m])
    return StateVector(random_unit(rng, 2 ** n), tuple(reg)), [reg[t] for t in targets], rng


@given(states_and_targets())
def test_unitaries_preserve_norm(case):
    s, targets, rng = case
    out = apply_unitary(s, targets, random_unitary(rng, 2 ** len(targets)))
    assert out.norm2 == pytest.approx(1, abs=1e-12)


@given(states_and_targets())
def test_streaming_matches_dense_oracle(case):
    s, targets, rng = case
    ops = [Gate(tuple(targets), random_unitary(rng, 2 ** len(targets))),
           Phase(((targets[0], 1),), np.exp(1j * rng.uniform(0, 6.3)))]
    dense = build_full_matrix(s.register, ops) @ s.amplitudes
    assert np.allclose(run_ops(s, ops).amplitudes, dense, atol=1e-12, rtol=0)


@given(states_and_targets(max_targets=1), st.floats(0, np.pi), st.floats(0, 2 * np.pi))
def test_projection_is_complete(case, theta, phi):
    s, (q,), _ = case
    up = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    down = np.array([-np.conj(up[1]), np.conj(up[0])])
    assert project(s, q, up).probability + project(s, q, down).probability == pytest.approx(1)
    assert sum(probabilities(s, q)) == pytest.approx(1)


def test_fidelity_ignores_global_phase(rng):
    s = StateVector(random_unit(rng, 8), tuple(LABELS[:3]))
    t = StateVector(s.amplitudes * np.exp(0.7j), s.register)
    assert fidelity(s, t) == pytest.approx(1)


def test_oracle_size_limit():
    with pytest.raises(RegisterError):
        build_full_matrix([atom(k, 1) for k in range(9)], [])


def test_z_phase_is_a_diagonal_gate():
    s = apply_unitary(new_register([A]), [A], H)
    assert np.allclose(apply_unitary(s, [A], Z).amplitudes,
                       controlled_phase(s, {A: 1}, -1).amplitudes)
