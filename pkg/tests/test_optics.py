import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfsnet import optics
from dfsnet.optics import (
    DIAG_POL, H_POL, OpticalTable, RoutingError, TRSchedule, TRState, V_POL, apply_hwp,
    cavity_reflect, hwp_unitary, imperfect_reflect, polarizer_project, route_photon,
    validate_schedule,
)
from dfsnet.statevec import PHOTON, StateVector, atom, new_register, add_qubit

# element sequences written out independently of the module constants
SINGLE_NODE = ("TR1 C PBS Cavity PBS C TR2 HWP1 M TR1 C PBS Cavity PBS C TR2 P45 Di").split()
TWO_NODE_IJ = ("TR1 TR1* C PBS Cavity PBS C TR2 HWP1 M TR1 HWP2 TR3* TR3 "
               "C PBS Cavity PBS C TR4 P45 Dj").split()
TWO_NODE_JI = ("TR3* TR3 C PBS Cavity PBS C TR4 HWP1 M TR3 HWP2 TR1* "
               "C PBS Cavity PBS C TR2 P45 Di").split()


@given(st.floats(-360, 360))
def test_hwp_is_hermitian_unitary(theta):
    u = hwp_unitary(theta)
    assert np.allclose(u, u.conj().T) and np.allclose(u @ u, np.eye(2))


def test_hwp_angles():
    assert np.allclose(hwp_unitary(45) @ H_POL, V_POL)
    assert np.allclose(hwp_unitary(22.5) @ H_POL, DIAG_POL)


def _photon(pol):
    return StateVector(np.asarray(pol, dtype=complex), (PHOTON,))


def test_polarizer_probabilities():
    assert polarizer_project(_photon(DIAG_POL)).probability == pytest.approx(1)
    assert polarizer_project(_photon(H_POL)).probability == pytest.approx(0.5)
    # a plate at 0 degrees maps diagonal onto anti-diagonal
    assert polarizer_project(apply_hwp(_photon(DIAG_POL), 0)).probability == pytest.approx(0)


def _node_state(a1, a2, pol):
    s = new_register([atom(0, 1), atom(0, 2)], a1 + 2 * a2)
    return add_qubit(s, PHOTON, pol)


@pytest.mark.parametrize("a1,a2,pol,sign", [
    (1, 1, H_POL, -1), (1, 0, H_POL, 1), (0, 1, H_POL, 1), (0, 0, H_POL, 1), (1, 1, V_POL, 1),
])
def test_cpf_truth_table(a1, a2, pol, sign):
    s = _node_state(a1, a2, pol)
    assert np.allclose(cavity_reflect(s, 0).amplitudes, sign * s.amplitudes)


def test_imperfect_reflection_phase():
    eps = 0.3
    s = _node_state(1, 1, H_POL)
    out = imperfect_reflect(eps)(s, 0)
    assert np.allclose(out.amplitudes, np.exp(1j * (np.pi + eps)) * s.amplitudes)
    assert imperfect_reflect(eps).epsilon == eps


def test_tr_schedule_semantics():
    sch = TRSchedule({"TR": [(-np.inf, "transmit"), (2.0, "reflect")]})
    assert sch.state_at("TR", 1.999) is TRState.TRANSMIT
    assert sch.state_at("TR", 2.0) is TRState.REFLECT
    with pytest.raises(ValueError):
        TRSchedule({"TR": [(1.0, "transmit"), (1.0, "reflect")]})
    with pytest.raises(RoutingError):
        sch.state_at("other", 0)


@pytest.mark.parametrize("T0,T1", [(1.0, 1.0), (2.5, 0.7), (0.1, 3.0)])
def test_single_node_path(T0, T1):
    table = optics.hadamard_table("i", T0, T1)
    for early in (False, True):
        v = validate_schedule(table, optics.hadamard_schedule(T0, T1, early_switch=early),
                              SINGLE_NODE, "port i")
        assert v.ok, v


def test_two_node_paths():
    table = optics.cz_table()
    assert validate_schedule(table, optics.cz_schedule("i"), TWO_NODE_IJ, "port i").ok
    assert validate_schedule(table, optics.cz_schedule("j"), TWO_NODE_JI, "port j").ok


def test_wrong_schedule_reports_divergence():
    table = optics.hadamard_table()
    stuck = TRSchedule({"TR1": [(-np.inf, "transmit")], "TR2": [(-np.inf, "reflect"),
                                                               (3.0, "transmit")]})
    v = validate_schedule(table, stuck, SINGLE_NODE, "port i")
    assert not v.ok and v.decided_at == "TR1" and v.error
    never = TRSchedule({"TR1": [(-np.inf, "transmit"), (2.0, "reflect")],
                        "TR2": [(-np.inf, "reflect")]})
    v = validate_schedule(table, never, SINGLE_NODE, "port i")
    assert not v.ok and v.decided_at == "TR2" and v.expected == "P45"


def test_routing_loop_is_bounded():
    table = optics.hadamard_table()
    sch = TRSchedule({"TR1": [(-np.inf, "transmit"), (2.0, "reflect")],
                      "TR2": [(-np.inf, "reflect")]})
    with pytest.raises(RoutingError) as exc:
        route_photon(table, sch, "port i", max_hops=50)
    assert len(exc.value.trace) == 50


def test_unknown_entry():
    with pytest.raises(RoutingError):
        route_photon(optics.hadamard_table(), optics.hadamard_schedule(), "port z")


def test_table_yaml_round_trip():
    for name, b in optics.builtin_setups(1.5, 0.5).items():
        text = optics.dump_table(b["table"], b["schedules"], b["expected_paths"])
        table, schedules, expected = optics.load_table(text)
        for check in expected.values():
            assert validate_schedule(table, schedules[check["schedule"]], check["path"],
                                     check["entry"]).ok, name


def test_bad_table_rejected():
    with pytest.raises(ValueError):
        OpticalTable({}, [optics.Edge("a", "x", "b", "y")])


def test_routing_is_fast():
    b = optics.builtin_setups()["hadamard"]
    t = time.perf_counter()
    validate_schedule(b["table"], b["schedules"]["standard"], SINGLE_NODE, "port i")
    assert time.perf_counter() - t < 0.1
