"""Scenario, trace, and summary files.

Scenario files are JSON documents (graph, per-agent quadratics, x0,
schedule, protocol, horizon). Trace files are CSV with every number
printed to 17 significant digits, which round-trips doubles exactly;
the sibling summary is an INI document carrying the scenario echo, the
certificate block, the verification verdicts, and any requested point
samples. Because the round trip is exact, re-running the checks on a
trace read back from disk reproduces the in-memory verdicts bit for
bit.
"""

from __future__ import annotations

import configparser
import json
import os

import numpy as np

from .graph import from_edges
from .objective import ObjectiveSpec
from .schedule import SamplingSchedule
from .simulator import (
    CertificateBlock,
    SamplePoint,
    Scenario,
    ScenarioError,
    SimulationTrace,
    TraceRecord,
    VerificationReport,
)

__all__ = [
    "FileFormatError",
    "BUILTIN_NAMES",
    "parse_scenario",
    "emit_scenario",
    "builtin_scenario",
    "write_trace",
    "read_trace",
    "write_summary",
    "read_summary",
]


class FileFormatError(ValueError):
    """A trace or summary file is missing pieces or malformed."""


_TOP_KEYS = {
    "name",
    "graph",
    "objective",
    "x0",
    "C",
    "schedule",
    "protocol",
    "beta",
    "horizon",
    "unsafe_beta",
}
_SCHEDULE_KEYS = {"kind", "T_c", "k_eps", "eps", "b"}


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def parse_scenario(source: str | os.PathLike) -> Scenario:
    """Read a scenario from a JSON file path or a JSON text.

    A string that starts with ``{`` is taken as the document itself;
    anything else is treated as a path. Every structural and semantic
    requirement is checked here, so the returned Scenario is ready to
    run.

    Raises:
        ScenarioError: syntax error (with line and column) or any
            violated requirement, named.
        OSError: unreadable path.
    """
    if isinstance(source, str) and source.lstrip().startswith("{"):
        text, origin = source, "<scenario text>"
    else:
        origin = os.fspath(source)
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{origin}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{origin}: scenario document must be a JSON object")
    try:
        return _scenario_from_doc(doc)
    except ScenarioError as exc:
        raise ScenarioError(f"{origin}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{origin}: {exc}") from None


def _scenario_from_doc(doc: dict) -> Scenario:
    _reject_unknown(doc, _TOP_KEYS, "scenario")
    for key in ("graph", "objective", "x0", "schedule", "protocol", "horizon"):
        if key not in doc:
            raise ScenarioError(f"missing required field {key!r}")

    graph = doc["graph"]
    if not isinstance(graph, dict):
        raise ScenarioError("graph must be an object with n and edges")
    _reject_unknown(graph, {"n", "edges"}, "graph")
    if "n" not in graph or "edges" not in graph:
        raise ScenarioError("graph needs both n and edges")
    n = _integer(graph["n"], "graph.n")
    edges_doc = graph["edges"]
    if not isinstance(edges_doc, list):
        raise ScenarioError("graph.edges must be a list of [from, to] or [from, to, weight]")
    edges = []
    for pos, item in enumerate(edges_doc):
        if not isinstance(item, list) or len(item) not in (2, 3):
            raise ScenarioError(
                f"graph.edges[{pos}] must be [from, to] or [from, to, weight]"
            )
        src = _integer(item[0], f"graph.edges[{pos}][0]")
        dst = _integer(item[1], f"graph.edges[{pos}][1]")
        if len(item) == 3:
            edges.append((src, dst, _real(item[2], f"graph.edges[{pos}][2]")))
        else:
            edges.append((src, dst))
    try:
        topology = from_edges(n, edges)
    except ValueError as exc:
        raise ScenarioError(f"graph: {exc}") from None

    objective_doc = doc["objective"]
    if not isinstance(objective_doc, dict):
        raise ScenarioError("objective must be an object")
    _reject_unknown(objective_doc, {"quadratic"}, "objective")
    if "quadratic" not in objective_doc:
        raise ScenarioError("objective needs a quadratic cost list")
    quads = objective_doc["quadratic"]
    if not isinstance(quads, list):
        raise ScenarioError("objective.quadratic must be a list of {a, b, c} objects")
    coefficients = []
    for pos, item in enumerate(quads):
        where = f"objective.quadratic[{pos}]"
        if not isinstance(item, dict):
            raise ScenarioError(f"{where} must be an object with a, b, c")
        _reject_unknown(item, {"a", "b", "c"}, where)
        for key in ("a", "b", "c"):
            if key not in item:
                raise ScenarioError(f"{where} is missing {key!r}")
        coefficients.append(
            (
                _real(item["a"], f"{where}.a"),
                _real(item["b"], f"{where}.b"),
                _real(item["c"], f"{where}.c"),
            )
        )
    try:
        objective = ObjectiveSpec.quadratic(coefficients)
    except ValueError as exc:
        raise ScenarioError(f"objective: {exc}") from None

    x0_doc = doc["x0"]
    if not isinstance(x0_doc, list) or not x0_doc:
        raise ScenarioError("x0 must be a non-empty list of reals")
    x0 = np.array([_real(v, f"x0[{i}]") for i, v in enumerate(x0_doc)])

    schedule_doc = doc["schedule"]
    if not isinstance(schedule_doc, dict):
        raise ScenarioError("schedule must be an object")
    _reject_unknown(schedule_doc, _SCHEDULE_KEYS, "schedule")
    for key in ("kind", "T_c"):
        if key not in schedule_doc:
            raise ScenarioError(f"schedule needs {key!r}")
    kind = schedule_doc["kind"]
    if not isinstance(kind, str):
        raise ScenarioError("schedule.kind must be a string")
    kwargs = {}
    if "k_eps" in schedule_doc:
        kwargs["k_eps"] = _integer(schedule_doc["k_eps"], "schedule.k_eps")
    if "eps" in schedule_doc:
        kwargs["eps"] = _real(schedule_doc["eps"], "schedule.eps")
    if "b" in schedule_doc:
        kwargs["b"] = _real(schedule_doc["b"], "schedule.b")
    try:
        schedule = SamplingSchedule(
            kind=kind, t_c=_real(schedule_doc["T_c"], "schedule.T_c"), **kwargs
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"schedule: {exc}") from None

    protocol = doc["protocol"]
    if not isinstance(protocol, str):
        raise ScenarioError("protocol must be a string")
    beta = _real(doc["beta"], "beta") if "beta" in doc else None
    horizon = _real(doc["horizon"], "horizon")
    unsafe = doc.get("unsafe_beta", False)
    if not isinstance(unsafe, bool):
        raise ScenarioError("unsafe_beta must be true or false")
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise ScenarioError("name must be a string")
    c = _real(doc["C"], "C") if "C" in doc else float(np.sum(x0))

    return Scenario(
        topology=topology,
        objective=objective,
        x0=x0,
        c=c,
        schedule=schedule,
        protocol=protocol,
        horizon=horizon,
        beta=beta,
        unsafe_beta=unsafe,
        name=name,
    )


def emit_scenario(sc: Scenario) -> str:
    """Serialize a scenario to its JSON text; parse_scenario round-trips it."""
    if sc.objective.form != "quadratic":
        raise ValueError("only quadratic objectives have a file form")
    doc: dict = {}
    if sc.name is not None:
        doc["name"] = sc.name
    weights = sc.topology.weights
    edges = []
    for dst in range(sc.n):
        for src in range(sc.n):
            if weights[dst, src] > 0.0:
                edges.append([src + 1, dst + 1, float(weights[dst, src])])
    edges.sort(key=lambda e: (e[0], e[1]))
    doc["graph"] = {"n": sc.n, "edges": edges}
    doc["objective"] = {
        "quadratic": [
            {"a": cost.a, "b": cost.b, "c": cost.c} for cost in sc.objective.costs
        ]
    }
    doc["x0"] = [float(v) for v in sc.x0]
    doc["C"] = sc.c
    sched: dict = {"kind": sc.schedule.kind, "T_c": sc.schedule.t_c}
    if sc.schedule.kind == "truncated":
        sched["k_eps"] = sc.schedule.k_eps
        sched["eps"] = sc.schedule.eps
    if sc.schedule.kind == "power":
        sched["b"] = sc.schedule.b
    doc["schedule"] = sched
    doc["protocol"] = sc.protocol
    if sc.beta is not None:
        doc["beta"] = sc.beta
    doc["horizon"] = sc.horizon
    doc["unsafe_beta"] = sc.unsafe_beta
    return json.dumps(doc, indent=2) + "\n"


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ScenarioError(f"unknown field {where}.{key}")


def _real(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where} must be a real number, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ScenarioError(f"{where} must be an integer, got {value!r}")
    return int(value)


# ---------------------------------------------------------------------------
# Builtins
# ---------------------------------------------------------------------------

BUILTIN_NAMES = ("dispatch3-directed", "dispatch3-undirected-demo", "two-agent-undirected")

# Three-generator costs: marginal cost 2*a*x + b in currency/MWh.
_DISPATCH3_COSTS = ((0.096, 1.22, 51.0), (0.072, 3.41, 31.0), (0.105, 2.53, 78.0))


def builtin_scenario(name: str) -> Scenario:
    """One of the shipped demonstration scenarios, by name.

    ``dispatch3-directed`` is the three-generator dispatch problem on a
    strongly connected unbalanced digraph with the truncated schedule
    settling at 2 s. Its step gain is pinned well above the certified
    bound (which is far too conservative to settle within the horizon)
    and therefore carries the unsafe flag; the trace checks still all
    pass. ``dispatch3-undirected-demo`` solves the same dispatch on an
    undirected triangle at the certified gain. ``two-agent-undirected``
    is the minimal closed-form example that lands on the optimum in a
    single step.
    """
    if name == "dispatch3-directed":
        # The light (3, 2) edge damps the gradient observer enough for the
        # tracking error to clear 1e-3 by the settling time at this gain.
        return Scenario(
            topology=from_edges(3, [(1, 2), (2, 1), (2, 3), (3, 1), (3, 2, 0.5)]),
            objective=ObjectiveSpec.quadratic(_DISPATCH3_COSTS),
            x0=np.array([140.0, 140.0, 140.0]),
            c=420.0,
            schedule=SamplingSchedule.truncated(2.0, 80, 0.01),
            protocol="directed",
            horizon=5.0,
            beta=0.1,
            unsafe_beta=True,
            name=name,
        )
    if name == "dispatch3-undirected-demo":
        return Scenario(
            topology=from_edges(3, [(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1)]),
            objective=ObjectiveSpec.quadratic(_DISPATCH3_COSTS),
            x0=np.array([140.0, 140.0, 140.0]),
            c=420.0,
            schedule=SamplingSchedule.truncated(2.0, 80, 0.01),
            protocol="undirected",
            horizon=5.0,
            name=name,
        )
    if name == "two-agent-undirected":
        return Scenario(
            topology=from_edges(2, [(1, 2), (2, 1)]),
            objective=ObjectiveSpec.quadratic([(1.0, 0.0, 0.0), (1.0, -8.0, 16.0)]),
            x0=np.array([0.0, 0.0]),
            c=0.0,
            schedule=SamplingSchedule.truncated(1.0, 40, 0.02),
            protocol="undirected",
            horizon=2.2,
            name=name,
        )
    known = ", ".join(BUILTIN_NAMES)
    raise ValueError(f"unknown builtin scenario {name!r}; available: {known}")


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_trace(path: str | os.PathLike, tr: SimulationTrace) -> None:
    """Write the per-step records as CSV, one row per sampling instant."""
    records = tr.records
    n = records[0].x.size
    header = ["k", "t", "T_k"]
    header += [f"x_{i + 1}" for i in range(n)]
    header += ["f", "constraint_residual", "V", "e_psi_norm"]
    with_psi = records[0].psi is not None
    if with_psi:
        header += [f"psi_{i + 1}_{m + 1}" for i in range(n) for m in range(n)]
    lines = [",".join(header)]
    for rec in records:
        row = [str(rec.k), _fmt(rec.t), _fmt(rec.interval)]
        row += [_fmt(v) for v in rec.x]
        row += [_fmt(rec.f), _fmt(rec.constraint_residual), _fmt(rec.v), _fmt(rec.e_psi_norm)]
        if with_psi:
            row += [_fmt(v) for v in rec.psi]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace(path: str | os.PathLike) -> tuple[TraceRecord, ...]:
    """Read trace records back; auxiliary state is not stored in the file."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise FileFormatError(f"{os.fspath(path)}: empty trace file")
    header = lines[0].split(",")
    n = sum(1 for col in header if col.startswith("x_"))
    expected = ["k", "t", "T_k"]
    expected += [f"x_{i + 1}" for i in range(n)]
    expected += ["f", "constraint_residual", "V", "e_psi_norm"]
    with_psi = len(header) > len(expected)
    if with_psi:
        expected += [f"psi_{i + 1}_{m + 1}" for i in range(n) for m in range(n)]
    if header != expected or n == 0:
        raise FileFormatError(f"{os.fspath(path)}: unrecognized trace header")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(expected):
            raise FileFormatError(
                f"{os.fspath(path)}:{lineno}: expected {len(expected)} cells, "
                f"got {len(cells)}"
            )
        try:
            k = int(cells[0])
            vals = [float(c) for c in cells[1:]]
        except ValueError:
            raise FileFormatError(
                f"{os.fspath(path)}:{lineno}: non-numeric cell"
            ) from None
        psi = np.array(vals[2 + n + 4 :]) if with_psi else None
        records.append(
            TraceRecord(
                k=k,
                t=vals[0],
                interval=vals[1],
                x=np.array(vals[2 : 2 + n]),
                f=vals[2 + n],
                constraint_residual=vals[2 + n + 1],
                v=vals[2 + n + 2],
                e_psi_norm=vals[2 + n + 3],
                psi=psi,
            )
        )
    if not records:
        raise FileFormatError(f"{os.fspath(path)}: trace has no records")
    return tuple(records)


# ---------------------------------------------------------------------------
# Summary files
# ---------------------------------------------------------------------------


def write_summary(
    path: str | os.PathLike,
    sc: Scenario,
    tr: SimulationTrace,
    report: VerificationReport,
    samples: list[tuple[float, SamplePoint, float]] | None = None,
) -> None:
    """Write the INI summary: scenario echo, certificates, verdicts, samples."""
    cert = tr.certificate
    lines = ["[scenario]"]
    if sc.name is not None:
        lines.append(f"name = {sc.name}")
    lines.append(f"protocol = {sc.protocol}")
    lines.append(f"n = {sc.n}")
    lines.append(f"C = {_fmt(sc.c)}")
    lines.append(f"horizon = {_fmt(sc.horizon)}")
    lines.append(f"schedule = {sc.schedule.kind}")
    lines.append(f"T_c = {_fmt(sc.schedule.t_c)}")
    if sc.schedule.kind == "truncated":
        lines.append(f"k_eps = {sc.schedule.k_eps}")
        lines.append(f"eps = {_fmt(sc.schedule.eps)}")
    if sc.schedule.kind == "power":
        lines.append(f"b = {_fmt(sc.schedule.b)}")
    lines.append(f"unsafe_beta = {str(sc.unsafe_beta).lower()}")
    lines.append(f"records = {len(tr.records)}")
    lines.append("")
    lines.append("[certificates]")
    for field in (
        "beta",
        "beta_max",
        "epsilon",
        "rate_factor",
        "accuracy_bound",
        "f_star",
        "nu_star",
        "v0",
        "gap0",
        "l0",
        "l",
    ):
        lines.append(f"{field} = {_fmt(getattr(cert, field))}")
    lines.append(f"x_star = {' '.join(_fmt(v) for v in cert.x_star)}")
    lines.append("")
    lines.append("[verification]")
    for check in report.checks:
        verdict = "skipped" if check.passed is None else ("pass" if check.passed else "FAIL")
        lines.append(f"{check.name} = {verdict} | {check.detail}")
    if samples:
        lines.append("")
        lines.append("[samples]")
        for idx, (t, point, f_val) in enumerate(samples):
            lines.append(f"t_{idx} = {_fmt(t)}")
            lines.append(f"x_t_{idx} = {' '.join(_fmt(v) for v in point.x)}")
            lines.append(f"f_t_{idx} = {_fmt(f_val)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_summary(path: str | os.PathLike) -> tuple[CertificateBlock, dict]:
    """Read the certificate block and the scenario echo back from a summary.

    Returns:
        (certificate, meta) where meta holds the [scenario] section
        values under their keys, typed (n and records as int, C and
        horizon and schedule parameters as float, unsafe_beta as bool).
    """
    parser = configparser.RawConfigParser()
    parser.optionxform = str
    with open(path, "r", encoding="utf-8") as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise FileFormatError(f"{os.fspath(path)}: {exc}") from None
    for section in ("scenario", "certificates", "verification"):
        if not parser.has_section(section):
            raise FileFormatError(f"{os.fspath(path)}: missing [{section}] section")
    scn = parser["scenario"]
    certs = parser["certificates"]
    try:
        meta = {
            "name": scn.get("name"),
            "protocol": scn["protocol"],
            "n": int(scn["n"]),
            "C": float(scn["C"]),
            "horizon": float(scn["horizon"]),
            "schedule": scn["schedule"],
            "T_c": float(scn["T_c"]),
            "unsafe_beta": scn["unsafe_beta"] == "true",
            "records": int(scn["records"]),
        }
        if "k_eps" in scn:
            meta["k_eps"] = int(scn["k_eps"])
        if "eps" in scn:
            meta["eps"] = float(scn["eps"])
        if "b" in scn:
            meta["b"] = float(scn["b"])
        cert = CertificateBlock(
            protocol=meta["protocol"],
            beta=float(certs["beta"]),
            beta_max=float(certs["beta_max"]),
            epsilon=float(certs["epsilon"]),
            rate_factor=float(certs["rate_factor"]),
            accuracy_bound=float(certs["accuracy_bound"]),
            f_star=float(certs["f_star"]),
            nu_star=float(certs["nu_star"]),
            x_star=np.array([float(tok) for tok in certs["x_star"].split()]),
            v0=float(certs["v0"]),
            gap0=float(certs["gap0"]),
            l0=float(certs["l0"]),
            l=float(certs["l"]),
        )
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{os.fspath(path)}: {exc}") from None
    return cert, meta
