"""Scenario execution and report assembly behind the command line."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import replace
from datetime import datetime, timezone
from typing import Callable, Sequence

import numpy as np

from . import __version__, dfs, optics
from . import protocols as P
from .noise import NoiseSpec, NoisyExecutor, Trial, monte_carlo, protocol_scenario
from .scenario import Scenario, format_complex, scenario_to_dict

REPORT_SCHEMA = "dfsnet.report/1"
TRUTH_SCHEMA = "dfsnet.truth-table/1"
EXACT_TOL = 1e-9
AMP_CUTOFF = 1e-12

EXIT_OK, EXIT_VALIDATION, EXIT_ACCEPTANCE = 0, 2, 3

_SQ2 = 1 / math.sqrt(2)
LOGICAL_GATES = {
    "XGate": np.array([[0, 1], [1, 0]], dtype=complex),
    "ZGate": np.array([[1, 0], [0, -1]], dtype=complex),
    "Hadamard": np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "Swap": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}
LOGICAL_GATES["BellPrep"] = LOGICAL_GATES["CNOT"] @ np.kron(LOGICAL_GATES["Hadamard"], np.eye(2))


# --- protocol dispatch --------------------------------------------------------

def _single(gate):
    return lambda s, t, ex: ex.run(gate, s, *t)


PROTOCOL_RUNNERS: dict[str, Callable] = {
    "XGate": _single(P.x_gate),
    "ZGate": _single(P.z_gate),
    "Hadamard": _single(P.hadamard_gate),
    "CZ": _single(P.cz_gate),
    "CNOT": lambda s, t, ex: P.cnot_gate(s, *t, executor=ex),
    "Swap": lambda s, t, ex: P.swap_gate(s, *t, executor=ex),
    "BellPrep": lambda s, t, ex: P.bell_prep(s, *t, executor=ex),
}


def apply_logical(coeffs: dict[str, complex], nodes: Sequence[int], gate: np.ndarray,
                  node_count: int) -> dict[str, complex]:
    """Reference action of a logical gate on bit-string amplitudes.

    Independent of the photon-mediated path: plain tensor contraction with
    node k on axis k.
    """
    t = np.zeros([2] * node_count, dtype=complex)
    for bits, c in coeffs.items():
        t[tuple(int(b) for b in bits)] += c
    m = len(nodes)
    g = gate.reshape([2] * (2 * m))
    fresh = list(range(node_count, node_count + m))
    out_axes = list(range(node_count))
    for a, f in zip(nodes, fresh):
        out_axes[a] = f
    t = np.einsum(g, fresh + list(nodes), t, list(range(node_count)), out_axes)
    return {"".join(map(str, idx)): complex(t[idx])
            for idx in itertools.product((0, 1), repeat=node_count)}


def _measured(value: float, *, tolerance: float | None = None, stderr: float | None = None):
    d = {"value": value}
    if stderr is not None:
        d["stderr"] = stderr
    else:
        d["tolerance"] = tolerance
    return d


def _amp_table(coeffs: dict[str, complex]) -> dict[str, dict]:
    return {k: {"re": float(f"{c.real:.12g}"), "im": float(f"{c.imag:.12g}"),
                "text": format_complex(c)}
            for k, c in coeffs.items() if abs(c) > AMP_CUTOFF}


def _gate_time(sc: Scenario):
    if sc.protocol not in P.REFLECTIONS:
        return None
    params = P.ExperimentalParams(**sc.params) if sc.params else P.ExperimentalParams()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", P.RegimeWarning)
        gt = P.estimate_gate_time(params, sc.protocol)
    return {
        "seconds": _measured(gt.seconds, tolerance=0.0),
        "reflections": gt.reflections,
        "kappa_T": _measured(gt.kappa_T, tolerance=1e-9),
        "regime_ok": gt.regime_ok,
    }


def _random_dephasing(noise: NoiseSpec) -> bool:
    return noise.dephasing.kind != "off"


def run_gate(sc: Scenario) -> tuple[dict, bool]:
    layout = dfs.NetworkLayout(sc.nodes)
    coeffs = sc.normalized_input()
    runner = PROTOCOL_RUNNERS[sc.protocol]
    target = apply_logical(coeffs, sc.targets, LOGICAL_GATES[sc.protocol], sc.nodes)
    state = dfs.logical_superposition(layout, coeffs)
    report: dict = {}
    ok = True
    fid = None
    herald = None
    if not _random_dephasing(sc.noise):
        out = runner(state, sc.targets, NoisyExecutor(sc.noise))
        herald = out.probability
        exact = {
            "herald_probability": _measured(out.probability, tolerance=EXACT_TOL),
            "photons_used": out.photons_used,
            "cavity_reflections": out.cavity_reflections,
            "detector": out.detector,
        }
        if out.success:
            fid = dfs.logical_fidelity(out.post_state, layout, target)
            exact["conditional_fidelity"] = _measured(fid, tolerance=EXACT_TOL)
            exact["leakage"] = _measured(max(0.0, 1 - dfs.code_space_weight(out.post_state, layout)),
                                         tolerance=EXACT_TOL)
            exact["output"] = _amp_table(dfs.logical_coefficients(out.post_state, layout))
        report["exact"] = exact
    report["expected_output"] = _amp_table(target)
    if sc.trials:
        stats = monte_carlo(
            protocol_scenario(layout, lambda s, ex: runner(s, sc.targets, ex),
                              lambda: state, target),
            sc.noise, sc.trials,
        )
        report["monte_carlo"] = stats.as_dict()
        fid = stats.conditional_fidelity
        herald = stats.herald_rate
    acc = sc.acceptance
    if acc.min_fidelity is not None and (fid is None or not fid >= acc.min_fidelity):
        ok = False
    if acc.herald_rate is not None and (herald is None
                                        or not acc.herald_rate[0] <= herald <= acc.herald_rate[1]):
        ok = False
    return report, ok


def run_teleport(sc: Scenario) -> tuple[dict, bool]:
    layout = dfs.NetworkLayout(sc.nodes)
    i, j, k = sc.targets
    coeffs = sc.normalized_input()
    alpha, beta = coeffs.get("0", 0j), coeffs.get("1", 0j)
    full = {}
    for bits in ("0", "1"):
        key = ["0"] * sc.nodes
        key[i] = bits
        full["".join(key)] = coeffs.get(bits, 0j)
    state = dfs.logical_superposition(layout, full)
    ok = True
    branches = [sc.force_branch] if sc.force_branch else list(P.CORRECTIONS)
    rows = []
    if not _random_dephasing(sc.noise):
        for br in branches:
            res = P.teleport(state, i, j, k, forced=br, executor=NoisyExecutor(sc.noise))
            row = {
                "branch": list(br),
                "expected_correction": P.CORRECTIONS[br].value,
                "success": res.success,
                "branch_probability": _measured(res.branch_probability, tolerance=EXACT_TOL),
                "herald_probability": _measured(res.total_success_probability, tolerance=EXACT_TOL),
                "photons_used": res.photons_used,
            }
            if res.success:
                rd = dfs.extract_logical(res.final_state, layout, k)
                fid = abs(np.conj(alpha) * (rd.alpha or 0) + np.conj(beta) * (rd.beta or 0)) ** 2
                row["applied_correction"] = res.correction.value
                row["table_match"] = res.correction is P.CORRECTIONS[br]
                row["fidelity"] = _measured(float(fid), tolerance=EXACT_TOL)
                ideal = sc.noise.is_ideal
                row["pass"] = bool(row["table_match"] and (not ideal or abs(fid - 1) <= EXACT_TOL))
                ok &= row["pass"]
            rows.append(row)
    report = {"branches": rows}
    if sc.trials:
        def scenario(rng, spec):
            res = P.teleport(state, i, j, k, rng, forced=sc.force_branch,
                             executor=NoisyExecutor(spec, rng))
            if not res.success:
                return Trial(False)
            rd = dfs.extract_logical(res.final_state, layout, k)
            if rd.entangled:
                return Trial(True, 0.0, rd.leakage)
            f = abs(np.conj(alpha) * rd.alpha + np.conj(beta) * rd.beta) ** 2
            return Trial(True, float(f), rd.leakage)
        stats = monte_carlo(scenario, sc.noise, sc.trials)
        report["monte_carlo"] = stats.as_dict()
        if sc.acceptance.min_fidelity is not None:
            ok &= stats.conditional_fidelity >= sc.acceptance.min_fidelity
        if sc.acceptance.herald_rate is not None:
            lo, hi = sc.acceptance.herald_rate
            ok &= lo <= stats.herald_rate <= hi
    return report, bool(ok)


def routing_check(setup: str = "hadamard", check: str | None = None, T0: float = 1.0,
                  T1: float = 1.0, table_text: str | None = None) -> tuple[dict, bool]:
    if table_text is not None:
        table, schedules, expected = optics.load_table(table_text)
    else:
        setups = optics.builtin_setups(T0, T1)
        if setup not in setups:
            raise KeyError(f"unknown routing setup {setup!r}")
        b = setups[setup]
        table, schedules, expected = b["table"], b["schedules"], b["expected_paths"]
    names = [check] if check and check in expected else list(expected)
    if check and check not in expected and check != setup:
        raise KeyError(f"no expected path named {check!r}")
    results = []
    ok = True
    for name in names:
        e = expected[name]
        v = optics.validate_schedule(table, schedules[e["schedule"]], e["path"], e["entry"])
        results.append({
            "check": name,
            "entry": e["entry"],
            "schedule": e["schedule"],
            "result": "PASS" if v.ok else "FAIL",
            "trace": [{"element": h.label, "time": h.time, "action": h.action} for h in v.trace],
            "divergence": None if v.ok else {
                "index": v.divergence, "expected": v.expected, "actual": v.actual,
                "decided_at": v.decided_at, "error": v.error,
            },
        })
        ok &= v.ok
    return {"checks": results}, bool(ok)


def run_scenario(sc: Scenario, timestamp: bool = True) -> tuple[dict, int]:
    if sc.protocol == "RoutingCheck":
        text = None
        if sc.routing.table_file:
            with open(sc.routing.table_file, encoding="utf-8") as fh:
                text = fh.read()
        body, ok = routing_check(sc.routing.setup, sc.routing.check, sc.routing.T0,
                                 sc.routing.T1, text)
    elif sc.protocol == "Teleport":
        body, ok = run_teleport(sc)
    else:
        body, ok = run_gate(sc)
    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "scenario": scenario_to_dict(sc),
        "protocol": sc.protocol,
        "result": body,
        "gate_time": _gate_time(sc),
        "passed": ok,
    }
    if timestamp:
        report["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return report, EXIT_OK if ok else EXIT_ACCEPTANCE


# --- truth tables and sweeps ----------------------------------------------------

TRUTH_PROTOCOLS = ("CZ", "CNOT", "Swap", "Hadamard", "XGate", "ZGate")


def truth_table(protocol: str, nodes: Sequence[int] | None = None) -> dict:
    if protocol not in TRUTH_PROTOCOLS:
        raise KeyError(f"truth tables cover {', '.join(TRUTH_PROTOCOLS)}")
    arity = 1 if protocol in ("Hadamard", "XGate", "ZGate") else 2
    nodes = tuple(nodes) if nodes else tuple(range(arity))
    if len(nodes) != arity:
        raise ValueError(f"{protocol} acts on {arity} node(s)")
    count = max(nodes) + 1
    layout = dfs.NetworkLayout(count)
    rows = []
    for bits in itertools.product("01", repeat=arity):
        key = ["0"] * count
        for n, b in zip(nodes, bits):
            key[n] = b
        inp = "".join(key)
        out = PROTOCOL_RUNNERS[protocol](dfs.encode_basis(layout, inp), nodes, P.IDEAL)
        coeffs = dfs.logical_coefficients(out.post_state, layout)
        rows.append({
            "input": "".join(bits),
            "outputs": {"".join(k[n] for n in nodes): format_complex(c)
                        for k, c in coeffs.items() if abs(c) > AMP_CUTOFF},
            "herald_probability": _measured(out.probability, tolerance=EXACT_TOL),
        })
    return {"schema": TRUTH_SCHEMA, "protocol": protocol, "nodes": list(nodes), "rows": rows}


def truth_table_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["input", "output", "amplitude", "herald_probability"])
    for r in table["rows"]:
        for out, amp in r["outputs"].items():
            w.writerow([r["input"], out, amp, f"{r['herald_probability']['value']:.12g}"])
    return buf.getvalue()


SWEEP_PARAMETERS = ("cpf_phase_error", "photon_loss", "dephasing_sigma")


def _sweep_noise(noise: NoiseSpec, parameter: str, value: float) -> NoiseSpec:
    if parameter == "cpf_phase_error":
        return replace(noise, cpf_phase_error=value)
    if parameter == "photon_loss":
        return replace(noise, photon_loss_per_reflection=value)
    if parameter == "dephasing_sigma":
        return replace(noise, dephasing=replace(noise.dephasing, kind="gaussian", sigma=value))
    raise KeyError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")


def sweep(sc: Scenario, parameter: str, grid: Sequence[float]) -> list[dict]:
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("grid is empty")
    diffs = np.diff(grid)
    if len(grid) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("grid must be strictly monotone")
    if sc.protocol in ("Teleport", "RoutingCheck"):
        raise ValueError(f"sweeps cover gate protocols, not {sc.protocol}")
    rows = []
    for v in grid:
        noise = _sweep_noise(sc.noise, parameter, v)
        if _random_dephasing(noise) and not sc.trials:
            raise ValueError("dephasing sweeps need trials > 0")
        report, _ = run_gate(replace(sc, noise=noise))
        row = {"value": v, "herald_probability": "", "herald_rate": "", "herald_stderr": "",
               "fidelity": "", "fidelity_stderr": ""}
        if "exact" in report:
            row["herald_probability"] = report["exact"]["herald_probability"]["value"]
            row["fidelity"] = report["exact"].get("conditional_fidelity", {}).get("value", "")
            row["fidelity_stderr"] = 0.0
        if "monte_carlo" in report:
            mc = report["monte_carlo"]
            row["herald_rate"] = mc["herald_rate"]["value"]
            row["herald_stderr"] = mc["herald_rate"]["stderr"]
            row["fidelity"] = mc["conditional_fidelity"]["value"]
            row["fidelity_stderr"] = mc["conditional_fidelity"]["stderr"]
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def report_csv(report: dict) -> str:
    """Flatten a run report into (key, value) rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(obj, list):
            for n, v in enumerate(obj):
                walk(f"{prefix}[{n}]", v)
        else:
            w.writerow([prefix, f"{obj:.12g}" if isinstance(obj, float) else obj])
    walk("", report)
    return buf.getvalue()


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"
