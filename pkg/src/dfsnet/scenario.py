"""Declarative scenario files (YAML) and the complex-number text syntax."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import yaml

from .dfs import DEFAULT_NAMES, MAX_NODES
from .noise import Dephasing, NoiseSpec

SCHEMA = "dfsnet.scenario/1"
PROTOCOLS = ("XGate", "ZGate", "Hadamard", "CZ", "CNOT", "Swap", "BellPrep", "Teleport",
             "RoutingCheck")
ARITY = {"XGate": 1, "ZGate": 1, "Hadamard": 1, "CZ": 2, "CNOT": 2, "Swap": 2, "BellPrep": 2,
         "Teleport": 3, "RoutingCheck": 0}
FORMATS = ("json", "csv")
INPUT_NORM_TOL = 1e-6

_COMPLEX = re.compile(r"^[0-9eE.+\-]*i?$")


class ScenarioError(ValueError):
    """Parse failure, with the position in the source text when known."""

    def __init__(self, msg: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(msg + where)
        self.line, self.column = line, column


class ValidationError(ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


def parse_complex(text: Any) -> complex:
    """Parse ``re+im i`` syntax: ``0.6``, ``-0.8i``, ``0.6+0.8i``, ``1e-3-2i``."""
    if isinstance(text, bool):
        raise ValueError(f"not a number: {text!r}")
    if isinstance(text, (int, float)):
        return complex(text)
    t = str(text).replace(" ", "")
    if not t or not _COMPLEX.match(t):
        raise ValueError(f"not a complex number: {text!r}")
    try:
        # the stdlib parser does the work once the imaginary unit is spelled j
        return complex(t[:-1] + "j" if t.endswith("i") else t)
    except ValueError:
        raise ValueError(f"not a complex number: {text!r}") from None


def format_complex(z: complex, digits: int = 12) -> str:
    z = complex(z)
    return f"{z.real:.{digits}g}{z.imag:+.{digits}g}i"


@dataclass(frozen=True)
class Acceptance:
    min_fidelity: float | None = None
    herald_rate: tuple[float, float] | None = None


@dataclass(frozen=True)
class Routing:
    setup: str = "hadamard"
    check: str = "hadamard"
    T0: float = 1.0
    T1: float = 1.0
    table_file: str | None = None


@dataclass(frozen=True)
class Scenario:
    protocol: str
    nodes: int
    targets: tuple[int, ...] = ()
    input: Mapping[str, complex] = field(default_factory=dict)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    trials: int = 0
    output_format: str = "json"
    force_branch: tuple[int, int] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    acceptance: Acceptance = field(default_factory=Acceptance)
    routing: Routing = field(default_factory=Routing)
    name: str = ""

    def with_overrides(self, **kw) -> "Scenario":
        noise_kw = {k: kw.pop(k) for k in ("seed",) if kw.get(k) is not None}
        kw = {k: v for k, v in kw.items() if v is not None}
        out = replace(self, **kw)
        if noise_kw:
            out = replace(out, noise=replace(out.noise, **noise_kw))
        return out

    def normalized_input(self) -> dict[str, complex]:
        norm = math.sqrt(sum(abs(c) ** 2 for c in self.input.values()))
        return {k: c / norm for k, c in self.input.items()}


# --- dict <-> Scenario ------------------------------------------------------------

def _num(d: Mapping, key: str, default, kind=float, path: str = ""):
    v = d.get(key, default)
    if v is None:
        return None
    try:
        if kind is int and (isinstance(v, bool) or float(v) != int(v)):
            raise ValueError
        return kind(v)
    except (TypeError, ValueError):
        raise ValidationError(path + key, f"expected {kind.__name__}, got {v!r}") from None


def scenario_from_dict(d: Mapping) -> Scenario:
    if not isinstance(d, Mapping):
        raise ValidationError("<root>", "scenario must be a mapping")
    schema = d.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValidationError("schema", f"unsupported schema {schema!r}")
    protocol = d.get("protocol")
    if protocol not in PROTOCOLS:
        raise ValidationError("protocol", f"must be one of {', '.join(PROTOCOLS)}")
    nodes = _num(d, "nodes", ARITY[protocol] or 1, int)
    if not 1 <= nodes <= MAX_NODES:
        raise ValidationError("nodes", f"must be between 1 and {MAX_NODES}")
    targets = d.get("targets", list(range(ARITY[protocol])))
    if not isinstance(targets, list) or len(targets) != ARITY[protocol]:
        raise ValidationError("targets", f"{protocol} takes {ARITY[protocol]} node(s)")
    names = DEFAULT_NAMES[:nodes]
    resolved = []
    for t in targets:
        if isinstance(t, str) and t in names:
            t = names.index(t)
        if not isinstance(t, int) or isinstance(t, bool) or not 0 <= t < nodes:
            raise ValidationError("targets", f"node {t!r} not in a {nodes}-node layout")
        resolved.append(t)
    if len(set(resolved)) != len(resolved):
        raise ValidationError("targets", "nodes must be distinct")

    raw_input = d.get("input", {})
    if not isinstance(raw_input, Mapping):
        raise ValidationError("input", "must map logical bit strings to amplitudes")
    width = 1 if protocol == "Teleport" else nodes
    coeffs = {}
    for k, v in raw_input.items():
        key = str(k)
        if len(key) != width or set(key) - {"0", "1"}:
            raise ValidationError(f"input.{key}", f"expected a {width}-bit logical string")
        try:
            coeffs[key] = parse_complex(v)
        except ValueError as exc:
            raise ValidationError(f"input.{key}", str(exc)) from None
    if protocol != "RoutingCheck":
        if not coeffs:
            raise ValidationError("input", "no amplitudes given")
        norm2 = sum(abs(c) ** 2 for c in coeffs.values())
        if abs(norm2 - 1) > INPUT_NORM_TOL:
            raise ValidationError("input", f"amplitudes not normalized (norm^2 = {norm2:.9g})")

    nz = d.get("noise") or {}
    if not isinstance(nz, Mapping):
        raise ValidationError("noise", "must be a mapping")
    dp = nz.get("dephasing") or {}
    try:
        deph = Dephasing(
            kind=str(dp.get("kind", "off")),
            sigma=_num(dp, "sigma", 0.0, path="noise.dephasing."),
            scope=str(dp.get("scope", "node")),
            epochs=str(dp.get("epochs", "between")),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("noise.dephasing", str(exc)) from None
    try:
        noise = NoiseSpec(
            dephasing=deph,
            photon_loss_per_reflection=_num(nz, "photon_loss_per_reflection", 0.0, path="noise."),
            photon_loss_per_channel_hop=_num(nz, "photon_loss_per_channel_hop", 0.0, path="noise."),
            cpf_phase_error=_num(nz, "cpf_phase_error", 0.0, path="noise."),
            seed=_num(nz, "seed", 0, int, path="noise."),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("noise", str(exc)) from None

    trials = _num(d, "trials", 0, int)
    if trials < 0:
        raise ValidationError("trials", "must be >= 0")
    out = d.get("output") or {}
    fmt = out.get("format", "json")
    if fmt not in FORMATS:
        raise ValidationError("output.format", f"must be one of {FORMATS}")

    fb = d.get("force_branch")
    if fb is not None:
        if protocol != "Teleport":
            raise ValidationError("force_branch", "only meaningful for Teleport")
        fb = _parse_branch(fb)

    params = d.get("params") or {}
    if not isinstance(params, Mapping):
        raise ValidationError("params", "must be a mapping")
    params = {str(k): _num(params, k, None, path="params.") for k in params}

    acc = d.get("acceptance") or {}
    hr = acc.get("herald_rate")
    if hr is not None:
        if not isinstance(hr, list) or len(hr) != 2:
            raise ValidationError("acceptance.herald_rate", "expected [low, high]")
        hr = (float(hr[0]), float(hr[1]))
    acceptance = Acceptance(_num(acc, "min_fidelity", None, path="acceptance."), hr)

    rt = d.get("routing") or {}
    routing = Routing(
        setup=str(rt.get("setup", "hadamard")),
        check=str(rt.get("check", rt.get("setup", "hadamard"))),
        T0=_num(rt, "T0", 1.0, path="routing."),
        T1=_num(rt, "T1", 1.0, path="routing."),
        table_file=rt.get("table_file"),
    )
    return Scenario(protocol, nodes, tuple(resolved), coeffs, noise, trials, fmt, fb, params,
                    acceptance, routing, str(d.get("name", "")))


def _parse_branch(fb) -> tuple[int, int]:
    if isinstance(fb, str):
        fb = fb.split(",")
    try:
        bits = tuple(int(x) for x in fb)
    except (TypeError, ValueError):
        bits = ()
    if len(bits) != 2 or set(bits) - {0, 1}:
        raise ValidationError("force_branch", "expected two bits, e.g. [1, 0]")
    return bits


def _float_repr(z: complex) -> str:
    # lossless text form; reports use format_complex with 12 digits instead
    return f"{z.real!r}{z.imag:+}i" if z.imag else repr(z.real)


def scenario_to_dict(s: Scenario) -> dict:
    d: dict[str, Any] = {"schema": SCHEMA}
    if s.name:
        d["name"] = s.name
    d.update(protocol=s.protocol, nodes=s.nodes, targets=list(s.targets))
    d["input"] = {k: _float_repr(v) for k, v in s.input.items()}
    n = s.noise
    d["noise"] = {
        "dephasing": {"kind": n.dephasing.kind, "sigma": n.dephasing.sigma,
                      "scope": n.dephasing.scope, "epochs": n.dephasing.epochs},
        "photon_loss_per_reflection": n.photon_loss_per_reflection,
        "photon_loss_per_channel_hop": n.photon_loss_per_channel_hop,
        "cpf_phase_error": n.cpf_phase_error,
        "seed": int(n.seed),
    }
    d["trials"] = s.trials
    d["output"] = {"format": s.output_format}
    if s.force_branch is not None:
        d["force_branch"] = list(s.force_branch)
    if s.params:
        d["params"] = dict(s.params)
    acc = {}
    if s.acceptance.min_fidelity is not None:
        acc["min_fidelity"] = s.acceptance.min_fidelity
    if s.acceptance.herald_rate is not None:
        acc["herald_rate"] = list(s.acceptance.herald_rate)
    if acc:
        d["acceptance"] = acc
    if s.protocol == "RoutingCheck":
        r = s.routing
        d["routing"] = {"setup": r.setup, "check": r.check, "T0": r.T0, "T1": r.T1}
        if r.table_file:
            d["routing"]["table_file"] = r.table_file
    return d


def loads(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        msg = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ScenarioError(f"parse error: {msg}", mark.line + 1, mark.column + 1) from None
        raise ScenarioError(f"parse error: {msg}") from None
    return scenario_from_dict(data)


def dumps(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)


def load(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
