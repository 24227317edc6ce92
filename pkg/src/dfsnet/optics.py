"""Optical-table elements, the cavity reflection primitive and a photon router.

State evolution collapses PBS + cavity + PBS into :func:`cavity_reflect`;
the router walks the full element graph to validate TR switching schedules.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import yaml

from .statevec import PHOTON, ProjectionResult, StateVector, apply_unitary, atom, controlled_phase, project

H_POL = np.array([1, 0], dtype=complex)
V_POL = np.array([0, 1], dtype=complex)
DIAG_POL = np.array([1, 1], dtype=complex) / np.sqrt(2)
ANTI_POL = np.array([1, -1], dtype=complex) / np.sqrt(2)

MAX_HOPS = 256


# --- polarization and cavity actions ----------------------------------------

def hwp_unitary(theta_deg: float) -> np.ndarray:
    """Half-wave plate with its axis at ``theta_deg`` to the horizontal."""
    t = np.deg2rad(2 * theta_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, s], [s, -c]], dtype=complex)


def polarizer_axis(theta_deg: float) -> np.ndarray:
    t = np.deg2rad(theta_deg)
    return np.array([np.cos(t), np.sin(t)], dtype=complex)


def apply_hwp(state: StateVector, theta_deg: float) -> StateVector:
    return apply_unitary(state, [PHOTON], hwp_unitary(theta_deg), check=False)


def polarizer_project(state: StateVector, theta_deg: float = 45.0) -> ProjectionResult:
    """Transmission through the polarizer, i.e. a detector click behind it."""
    return project(state, PHOTON, polarizer_axis(theta_deg))


def cavity_reflect(state: StateVector, node: int, phase: complex = -1) -> StateVector:
    """Reflect the photon off cavity ``node``.

    Only the h component enters the cavity (the PBS diverts v), and it picks
    up ``phase`` iff both atoms of the node are in |1>.
    """
    return controlled_phase(state, {PHOTON: 0, atom(node, 1): 1, atom(node, 2): 1}, phase)


def imperfect_reflect(epsilon: float) -> Callable[[StateVector, int], StateVector]:
    """Reflection primitive whose conditional phase is exp(i(pi + epsilon))."""
    phase = np.exp(1j * (np.pi + epsilon))
    if epsilon == 0:
        phase = -1

    def reflect(state: StateVector, node: int) -> StateVector:
        return cavity_reflect(state, node, phase)

    reflect.epsilon = epsilon
    return reflect


# --- table model ------------------------------------------------------------

class Kind(str, enum.Enum):
    PORT = "port"
    TR = "tr"
    CIRCULATOR = "circulator"
    PBS = "pbs"
    CAVITY = "cavity"
    HWP = "hwp"
    POLARIZER = "polarizer"
    MIRROR = "mirror"
    DETECTOR = "detector"
    DUMP = "dump"


class TRState(str, enum.Enum):
    TRANSMIT = "transmit"
    REFLECT = "reflect"


# 4-port switch: transmit a<->b, c<->d; reflect a<->d, c<->b
_TR_ROUTES = {
    TRState.TRANSMIT: {"a": "b", "b": "a", "c": "d", "d": "c"},
    TRState.REFLECT: {"a": "d", "d": "a", "c": "b", "b": "c"},
}


@dataclass(frozen=True)
class Element:
    id: str
    kind: Kind
    label: str = ""
    angle: float | None = None
    routes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.label:
            object.__setattr__(self, "label", self.id)
        object.__setattr__(self, "routes", dict(self.routes))

    @property
    def is_sink(self) -> bool:
        return self.kind in (Kind.DETECTOR, Kind.DUMP)

    def out_port(self, in_port: str, tr_state: TRState | None = None) -> str | None:
        if self.kind is Kind.TR:
            return _TR_ROUTES[tr_state].get(in_port)
        return self.routes.get(in_port)


@dataclass(frozen=True)
class Edge:
    src: str
    src_port: str
    dst: str
    dst_port: str
    transit: float = 0.0


@dataclass
class TRSchedule:
    """Per-TR list of (switch time, state); the last switch at or before t rules."""
    switches: dict[str, list[tuple[float, TRState]]]
    T0: float = 1.0
    T1: float = 1.0

    def __post_init__(self):
        self.switches = {
            k: [(float(t), TRState(s)) for t, s in v] for k, v in self.switches.items()
        }
        for tr, seq in self.switches.items():
            times = [t for t, _ in seq]
            if not seq or any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError(f"switch times for {tr} must be non-empty and strictly increasing")

    def state_at(self, tr: str, t: float) -> TRState:
        seq = self.switches.get(tr)
        if not seq:
            raise RoutingError(f"no schedule for {tr}", [])
        times = [s for s, _ in seq]
        k = bisect.bisect_right(times, t) - 1
        if k < 0:
            raise RoutingError(f"{tr} has no state before t={t}", [])
        return seq[k][1]


@dataclass(frozen=True)
class Hop:
    element: str
    label: str
    time: float
    action: str


class RoutingError(RuntimeError):
    def __init__(self, msg: str, trace: Sequence[Hop]):
        super().__init__(msg)
        self.trace = list(trace)


@dataclass
class OpticalTable:
    elements: dict[str, Element]
    edges: list[Edge]
    entries: dict[str, tuple[str, str]] = field(default_factory=dict)  # port name -> (element, in port)

    def __post_init__(self):
        self._links: dict[tuple[str, str], Edge] = {}
        for e in self.edges:
            for el in (e.src, e.dst):
                if el not in self.elements:
                    raise ValueError(f"edge references unknown element {el!r}")
            key = (e.src, e.src_port)
            if key in self._links:
                raise ValueError(f"two edges leave {e.src}:{e.src_port}")
            self._links[key] = e

    def link(self, element: str, port: str) -> Edge | None:
        return self._links.get((element, port))


def route_photon(table: OpticalTable, schedule: TRSchedule, entry: str,
                 t0: float = 0.0, max_hops: int = MAX_HOPS) -> list[Hop]:
    """Walk the photon from ``entry`` until it hits a detector."""
    if entry not in table.entries:
        raise RoutingError(f"unknown entry port {entry!r}", [])
    el_id, port = table.entries[entry]
    t = t0
    trace: list[Hop] = []
    for _ in range(max_hops):
        el = table.elements[el_id]
        if el.kind is Kind.DETECTOR:
            trace.append(Hop(el.id, el.label, t, "detect"))
            return trace
        if el.kind is Kind.DUMP:
            trace.append(Hop(el.id, el.label, t, "lost"))
            raise RoutingError(f"photon exits at {el.label} (t={t:g})", trace)
        tr_state = schedule.state_at(el.id, t) if el.kind is Kind.TR else None
        out = el.out_port(port, tr_state)
        action = tr_state.value if tr_state else "pass"
        trace.append(Hop(el.id, el.label, t, action))
        edge = table.link(el.id, out) if out else None
        if edge is None:
            raise RoutingError(f"dead end at {el.label}:{out or port} (t={t:g})", trace)
        el_id, port, t = edge.dst, edge.dst_port, t + edge.transit
    raise RoutingError(f"photon still in flight after {max_hops} hops", trace)


@dataclass(frozen=True)
class Validation:
    ok: bool
    trace: list[Hop]
    divergence: int | None = None  # first mismatching position
    expected: str | None = None
    actual: str | None = None
    decided_at: str | None = None  # element that sent the photon astray
    error: str | None = None


def validate_schedule(table: OpticalTable, schedule: TRSchedule, expected: Sequence[str],
                      entry: str, t0: float = 0.0) -> Validation:
    error = None
    try:
        trace = route_photon(table, schedule, entry, t0)
    except RoutingError as exc:
        trace, error = exc.trace, str(exc)
    labels = [h.label for h in trace]
    if labels == list(expected) and error is None:
        return Validation(True, trace)
    k = next((i for i, (a, b) in enumerate(zip(labels, expected)) if a != b),
             min(len(labels), len(expected)))
    return Validation(
        False, trace, k,
        expected[k] if k < len(expected) else None,
        labels[k] if k < len(labels) else None,
        labels[k - 1] if 0 < k <= len(labels) else None,
        error,
    )


# --- builders ---------------------------------------------------------------

class _Builder:
    def __init__(self):
        self.elements: dict[str, Element] = {}
        self.edges: list[Edge] = []
        self.entries: dict[str, tuple[str, str]] = {}

    def add(self, id, kind, label="", angle=None, routes=None):
        self.elements[id] = Element(id, kind, label, angle, routes or {})

    def wire(self, a, pa, b, pb, t_ab=0.0, t_ba=None):
        self.edges.append(Edge(a, pa, b, pb, t_ab))
        self.edges.append(Edge(b, pb, a, pa, t_ab if t_ba is None else t_ba))

    def one_way(self, a, pa, b, pb, t=0.0):
        self.edges.append(Edge(a, pa, b, pb, t))

    def node_optics(self, n, T0, T1, tr_in, tr_out):
        """Circulator, PBS, cavity, output TR, HWP1 loop mirror and P45 + detector."""
        c, pbs, cav = f"C_{n}", f"PBS_{n}", f"Cavity_{n}"
        self.add(c, Kind.CIRCULATOR, "C", routes={"1": "2", "2": "3", "3": "1"})
        self.add(pbs, Kind.PBS, "PBS", routes={"in": "cav", "cav": "in"})
        self.add(cav, Kind.CAVITY, "Cavity", routes={"io": "io"})
        self.add(tr_out, Kind.TR, tr_out)
        self.add(f"HWP1_{n}", Kind.HWP, "HWP1", angle=45.0, routes={"in": "out"})
        self.add(f"M_{n}", Kind.MIRROR, "M", routes={"in": "out"})
        self.add(f"P45_{n}", Kind.POLARIZER, "P45", angle=45.0, routes={"in": "out"})
        self.add(f"D{n}", Kind.DETECTOR, f"D{n}")
        # T0 covers TR1-C-PBS-Cavity-PBS-C-TR2, charged on the C->PBS leg
        self.wire(tr_in, "b", c, "1")
        self.wire(c, "2", pbs, "in", T0, 0.0)
        self.wire(pbs, "cav", cav, "io")
        self.wire(c, "3", tr_out, "a")
        self.wire(tr_out, "d", f"HWP1_{n}", "in")
        # T1 covers TR2-HWP1-M-TR1
        self.one_way(f"HWP1_{n}", "out", f"M_{n}", "in", T1)
        self.one_way(f"M_{n}", "out", tr_in, "c")
        self.wire(tr_out, "b", f"P45_{n}", "in")
        self.one_way(f"P45_{n}", "out", f"D{n}", "in")

    def build(self):
        return OpticalTable(self.elements, self.edges, self.entries)


def hadamard_table(node: str = "i", T0: float = 1.0, T1: float = 1.0) -> OpticalTable:
    """Single-node table for the logical Hadamard."""
    b = _Builder()
    b.add("TR1", Kind.TR, "TR1")
    b.add("dump", Kind.DUMP, "exit")
    b.entries[f"port {node}"] = ("TR1", "a")
    b.node_optics(node, T0, T1, "TR1", "TR2")
    b.one_way("TR1", "d", "dump", "in")
    b.one_way("TR2", "c", "dump", "in")
    return b.build()


def hadamard_schedule(T0: float = 1.0, T1: float = 1.0, t0: float = 0.0,
                      early_switch: bool = False) -> TRSchedule:
    """TR1 transmits the incoming pulse then reflects it back from M; TR2 reflects
    the first pass into the HWP1 loop then transmits to P45.

    ``early_switch`` flips TR1 as soon as the pulse has cleared it instead of
    waiting T0 + T1.
    """
    back_at_tr1 = t0 + T0 + T1
    second_pass = t0 + 2 * T0 + T1
    tr1_switch = t0 + T0 / 2 if early_switch else back_at_tr1
    return TRSchedule(
        {
            "TR1": [(-np.inf, TRState.TRANSMIT), (tr1_switch, TRState.REFLECT)],
            "TR2": [(-np.inf, TRState.REFLECT), (second_pass, TRState.TRANSMIT)],
        },
        T0, T1,
    )


HADAMARD_PATH = [
    "TR1", "C", "PBS", "Cavity", "PBS", "C", "TR2", "HWP1", "M",
    "TR1", "C", "PBS", "Cavity", "PBS", "C", "TR2", "P45", "Di",
]


def cz_table(T0: float = 1.0, T1: float = 1.0) -> OpticalTable:
    """Two nodes i, j joined by the additional channel (TR1*, HWP2, TR3*).

    Node i: port i -> TR1 -> TR1* -> C.  Node j: port j -> TR3* -> TR3 -> C.
    """
    b = _Builder()
    for tr in ("TR1", "TR1*", "TR3", "TR3*"):
        b.add(tr, Kind.TR, tr)
    b.add("HWP2", Kind.HWP, "HWP2", angle=22.5, routes={"from_i": "to_j", "from_j": "to_i"})
    b.add("dump", Kind.DUMP, "exit")
    b.entries["port i"] = ("TR1", "a")
    b.entries["port j"] = ("TR3*", "a")
    # node i: TR1.b -> TR1*.a, TR1*.b is the input side of the node optics
    b.wire("TR1", "b", "TR1*", "a")
    b.node_optics("i", T0, T1, "TR1*", "TR2")
    # the HWP1 loop of node i returns to TR1 (not TR1*): rewire mirror output
    b.edges = [e for e in b.edges if not (e.src == "M_i")]
    b.one_way("M_i", "out", "TR1", "c")
    b.one_way("TR1", "d", "HWP2", "from_i")
    b.one_way("HWP2", "to_j", "TR3*", "c")
    # node j
    b.wire("TR3*", "b", "TR3", "a")
    b.node_optics("j", T0, T1, "TR3", "TR4")
    b.one_way("TR3", "d", "HWP2", "from_j")
    b.one_way("HWP2", "to_i", "TR1*", "c")
    # open ports
    for tr, p in (("TR1", "c"), ("TR1*", "d"), ("TR3*", "d"), ("TR2", "c"), ("TR4", "c")):
        if (tr, p) not in {(e.src, e.src_port) for e in b.edges}:
            b.one_way(tr, p, "dump", "in")
    return b.build()


def cz_schedule(control: str = "i", T0: float = 1.0, T1: float = 1.0) -> TRSchedule:
    """Static TR settings for the two-node phase gate with the photon entering at ``control``."""
    tx, rf = TRState.TRANSMIT, TRState.REFLECT
    if control == "i":
        states = {"TR1": tx, "TR1*": tx, "TR2": rf, "TR3": tx, "TR3*": rf, "TR4": tx}
    elif control == "j":
        states = {"TR1": tx, "TR1*": rf, "TR2": tx, "TR3": tx, "TR3*": tx, "TR4": rf}
    else:
        raise ValueError("control must be 'i' or 'j'")
    return TRSchedule({k: [(-np.inf, s)] for k, s in states.items()}, T0, T1)


CZ_PATH_IJ = [
    "TR1", "TR1*", "C", "PBS", "Cavity", "PBS", "C", "TR2", "HWP1", "M", "TR1", "HWP2",
    "TR3*", "TR3", "C", "PBS", "Cavity", "PBS", "C", "TR4", "P45", "Dj",
]
CZ_PATH_JI = [
    "TR3*", "TR3", "C", "PBS", "Cavity", "PBS", "C", "TR4", "HWP1", "M", "TR3", "HWP2",
    "TR1*", "C", "PBS", "Cavity", "PBS", "C", "TR2", "P45", "Di",
]


# --- declarative text format ------------------------------------------------

def table_to_dict(table: OpticalTable, schedules: Mapping[str, TRSchedule] | None = None,
                  expected_paths: Mapping[str, dict] | None = None) -> dict:
    elements = []
    for el in table.elements.values():
        d = {"id": el.id, "kind": el.kind.value, "label": el.label}
        if el.angle is not None:
            d["angle"] = el.angle
        if el.routes:
            d["routes"] = dict(el.routes)
        elements.append(d)
    return {
        "elements": elements,
        "edges": [[e.src, e.src_port, e.dst, e.dst_port, e.transit] for e in table.edges],
        "entries": {k: list(v) for k, v in table.entries.items()},
        "schedules": {
            name: {
                "T0": s.T0, "T1": s.T1,
                "switches": {tr: [[t, st.value] for t, st in seq] for tr, seq in s.switches.items()},
            }
            for name, s in (schedules or {}).items()
        },
        "expected_paths": {k: {**v, "path": list(v["path"])} for k, v in (expected_paths or {}).items()},
    }


def table_from_dict(d: Mapping) -> tuple[OpticalTable, dict[str, TRSchedule], dict[str, dict]]:
    elements = {}
    for e in d["elements"]:
        el = Element(e["id"], e["kind"], e.get("label", ""), e.get("angle"), e.get("routes", {}))
        elements[el.id] = el
    edges = [Edge(s, sp, t, tp, float(tt)) for s, sp, t, tp, tt in d["edges"]]
    entries = {k: (v[0], v[1]) for k, v in d.get("entries", {}).items()}
    schedules = {
        name: TRSchedule({tr: [(t, st) for t, st in seq] for tr, seq in s["switches"].items()},
                         float(s["T0"]), float(s["T1"]))
        for name, s in d.get("schedules", {}).items()
    }
    return OpticalTable(elements, edges, entries), schedules, dict(d.get("expected_paths", {}))


def dump_table(table, schedules=None, expected_paths=None) -> str:
    return yaml.safe_dump(table_to_dict(table, schedules, expected_paths), sort_keys=False)


def load_table(text: str):
    return table_from_dict(yaml.safe_load(text))


def builtin_setups(T0: float = 1.0, T1: float = 1.0) -> dict[str, dict]:
    """Named (table, schedules, expected paths) bundles: single-node Hadamard and two-node C-Z."""
    return {
        "hadamard": {
            "table": hadamard_table("i", T0, T1),
            "schedules": {
                "standard": hadamard_schedule(T0, T1),
                "early-switch": hadamard_schedule(T0, T1, early_switch=True),
            },
            "expected_paths": {
                "hadamard": {"entry": "port i", "schedule": "standard", "path": HADAMARD_PATH},
                "hadamard-early": {"entry": "port i", "schedule": "early-switch", "path": HADAMARD_PATH},
            },
        },
        "cz": {
            "table": cz_table(T0, T1),
            "schedules": {"cz-ij": cz_schedule("i", T0, T1), "cz-ji": cz_schedule("j", T0, T1)},
            "expected_paths": {
                "cz-ij": {"entry": "port i", "schedule": "cz-ij", "path": CZ_PATH_IJ},
                "cz-ji": {"entry": "port j", "schedule": "cz-ji", "path": CZ_PATH_JI},
            },
        },
    }
