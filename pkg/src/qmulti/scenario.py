"""Scenario documents: declarations plus an ordered list of tasks.

A scenario is a JSON (or YAML) object::

    {
      "tolerance": 1e-9,
      "declarations": {"A": {"kind": "observable", ...}, "rho": {"kind": "state", ...}},
      "tasks": [
        {"name": "LA", "kind": "luders", "args": {"observable": "A"}},
        {"name": "p", "kind": "distribution", "args": {"target": "A", "state": "rho"},
         "expected": {"0": 0.75, "1": 0.25}, "tol": 1e-9}
      ]
    }

Task results are bound to the task name and may be referenced by later
tasks. Any reference may instead be an inline declaration object. Axis and
factor indices are 0-based.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import QMultiError, StructureError
from .instruments import (Instrument, conditioned_observable, construct_holevo,
                          construct_luders, instrument_deviation,
                          instrument_distribution, instrument_marginal,
                          instrument_part,
                          reduced_instrument, seq_product_observables,
                          sequential_instruments, tensor_instruments,
                          verify_instrument_product_structure,
                          verify_joint_instrument)
from .linalg import DEFAULT_TOL, max_abs
from .observables import (Observable, State, distribution, luders_sequential,
                          marginal, part, reduced_observable,
                          tensor_observables, verify_joint,
                          verify_product_structure)
from .outcomes import OutcomeMap, OutcomeSpace
from .sampling import sample_trajectories
from .serialize import from_document, matrix_from_literal, to_document

TASK_KINDS = (
    "validate", "distribution", "marginal", "reduce", "tensor", "sequential", "luders",
    "holevo", "part", "seq-product", "conditioned", "verify-joint",
    "verify-joint-instrument", "verify-product-structure", "sample",
)

# argument name -> "ref" | "refs" | "refmap" | "value"; required args are marked with "!"
_SCHEMA = {
    "validate": {"target!": "ref"},
    "distribution": {"target!": "ref", "state!": "ref", "delta": "value"},
    "marginal": {"target!": "ref", "axis!": "value"},
    "reduce": {"target!": "ref", "factor!": "value", "dims": "value"},
    "tensor": {"parts!": "refs"},
    "sequential": {"parts!": "refs"},
    "luders": {"observable!": "ref"},
    "holevo": {"observable!": "ref", "alphas!": "refmap", "out_factors": "value"},
    "part": {"target!": "ref", "mapping!": "value"},
    "seq-product": {"first!": "ref", "instrument!": "ref", "then!": "ref"},
    "conditioned": {"observable!": "ref", "instrument!": "ref", "given!": "ref"},
    "verify-joint": {"joint!": "ref", "targets!": "refs"},
    "verify-joint-instrument": {"joint!": "ref", "targets!": "refs"},
    "verify-product-structure": {"target!": "ref", "maps": "value"},
    "sample": {"chain!": "refs", "state!": "ref", "trajectories": "value", "seed": "value",
               "steps": "value", "sigmas": "value"},
}


class ScenarioError(QMultiError):
    """Malformed document, unknown name, or invalid declaration."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


@dataclass
class Task:
    name: str
    kind: str
    args: dict
    expected: Any = None
    tol: float | None = None
    deps: list[str] = field(default_factory=list)


@dataclass
class Scenario:
    tolerance: float
    declarations: dict
    tasks: list[Task]


def _load_text(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        try:
            import yaml
        except ImportError:  # pragma: no cover
            raise ScenarioError("document", f"invalid JSON: {exc}") from None
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as yexc:
            raise ScenarioError("document", f"neither valid JSON ({exc}) nor YAML ({yexc})") from None
    if not isinstance(doc, dict):
        raise ScenarioError("document", "top level must be an object")
    return doc


def parse_scenario(text, tol: float | None = None) -> Scenario:
    """Parse and eagerly validate a scenario document (text or already-loaded dict)."""
    doc = _load_text(text) if isinstance(text, str) else text
    tolerance = float(tol if tol is not None else doc.get("tolerance", DEFAULT_TOL))
    decls_doc = doc.get("declarations", {})
    tasks_doc = doc.get("tasks", [])
    if not isinstance(decls_doc, dict):
        raise ScenarioError("declarations", "must be an object")
    if not isinstance(tasks_doc, list):
        raise ScenarioError("tasks", "must be a list")

    declarations = {}
    for name, d in decls_doc.items():
        declarations[name] = _declaration(d, f"declarations.{name}", tolerance)

    known = set(declarations)
    tasks = []
    for k, t in enumerate(tasks_doc):
        loc = f"tasks[{k}]"
        if not isinstance(t, dict):
            raise ScenarioError(loc, "task must be an object")
        kind = t.get("kind")
        if kind not in _SCHEMA:
            raise ScenarioError(loc, f"unknown task kind {kind!r}; expected one of {', '.join(TASK_KINDS)}")
        name = str(t.get("name", f"task{k}"))
        if name in known:
            raise ScenarioError(loc, f"name {name!r} is already defined")
        args = t.get("args", t.get("arguments", {}))
        if not isinstance(args, dict):
            raise ScenarioError(loc, "args must be an object")
        schema = {a.rstrip("!"): (typ, a.endswith("!")) for a, typ in _SCHEMA[kind].items()}
        for a in args:
            if a not in schema:
                raise ScenarioError(f"{loc}.args", f"unexpected argument {a!r} for {kind}")
        resolved = {}
        deps = []
        for a, (typ, required) in schema.items():
            if a not in args:
                if required:
                    raise ScenarioError(f"{loc}.args", f"missing required argument {a!r}")
                continue
            resolved[a] = _parse_arg(args[a], typ, known, f"{loc}.args.{a}", tolerance, deps)
        expected_tol = t.get("tol", t.get("tolerance"))
        tasks.append(Task(name, kind, resolved, t.get("expected"),
                          float(expected_tol) if expected_tol is not None else None,
                          list(dict.fromkeys(deps))))
        known.add(name)
    return Scenario(tolerance, declarations, tasks)


def _declaration(d, loc: str, tol: float):
    if not isinstance(d, dict):
        raise ScenarioError(loc, "declaration must be an object")
    try:
        return from_document(d, tol)
    except (QMultiError, KeyError, TypeError) as exc:
        raise ScenarioError(loc, f"invalid {d.get('kind', 'declaration')}: {exc}") from None


@dataclass(frozen=True)
class _Ref:
    name: str


def _parse_arg(value, typ: str, known: set, loc: str, tol: float, deps: list):
    if typ == "value":
        return value
    if typ == "ref":
        if isinstance(value, str):
            if value not in known:
                raise ScenarioError(loc, f"unknown name {value!r}")
            deps.append(value)
            return _Ref(value)
        if isinstance(value, dict):
            return _declaration(value, loc, tol)
        raise ScenarioError(loc, "expected a name or an inline declaration")
    if typ == "refs":
        if not isinstance(value, list):
            raise ScenarioError(loc, "expected a list")
        return [_parse_arg(v, "ref", known, f"{loc}[{k}]", tol, deps) for k, v in enumerate(value)]
    if typ == "refmap":
        if not isinstance(value, dict):
            raise ScenarioError(loc, "expected an object")
        return {k: _parse_arg(v, "ref", known, f"{loc}.{k}", tol, deps) for k, v in value.items()}
    raise AssertionError(typ)


# ---------------------------------------------------------------- execution


@dataclass
class TaskResult:
    name: str
    kind: str
    status: str  # "pass" | "fail" | "error"
    value: Any = None
    details: dict = field(default_factory=dict)
    deviation: float | None = None
    message: str = ""
    elapsed: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = {"name": self.name, "kind": self.kind, "status": self.status}
        if self.value is not None:
            d["value"] = to_document(self.value)
        if self.details:
            d["details"] = to_document(self.details)
        if self.deviation is not None:
            d["deviation"] = self.deviation
        if self.message:
            d["message"] = self.message
        if timing:
            d["elapsed"] = self.elapsed
        return d


@dataclass
class Report:
    tolerance: float
    results: list[TaskResult]

    @property
    def passed(self) -> bool:
        return all(r.status == "pass" for r in self.results)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "tolerance": self.tolerance,
            "status": "pass" if self.passed else "fail",
            "exit_code": self.exit_code,
            "tasks": [r.to_dict(timing) for r in self.results],
        }

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, allow_nan=True)

    def to_text(self) -> str:
        lines = [f"{'task':<28} {'kind':<26} {'status':<6} {'deviation':>11}  note"]
        for r in self.results:
            dev = "" if r.deviation is None else f"{r.deviation:.3e}"
            lines.append(f"{r.name:<28} {r.kind:<26} {r.status:<6} {dev:>11}  {r.message}")
        lines.append(f"overall: {'pass' if self.passed else 'fail'} (exit {self.exit_code})")
        return "\n".join(lines)


class _Failed(Exception):
    pass


def _resolve(arg, env: dict):
    if isinstance(arg, _Ref):
        if arg.name not in env:
            raise _Failed(f"dependency {arg.name!r} has no value")
        return env[arg.name]
    if isinstance(arg, list):
        return [_resolve(a, env) for a in arg]
    if isinstance(arg, dict):
        return {k: _resolve(v, env) for k, v in arg.items()}
    return arg


def _closure(scenario: Scenario, only) -> list[Task]:
    if only is None:
        return list(scenario.tasks)
    by_name = {t.name: t for t in scenario.tasks}
    for n in only:
        if n not in by_name:
            raise ScenarioError("tasks", f"no task named {n!r}")
    needed = set()
    stack = list(only)
    while stack:
        n = stack.pop()
        if n in needed or n not in by_name:
            continue
        needed.add(n)
        stack.extend(by_name[n].deps)
    return [t for t in scenario.tasks if t.name in needed]


def run_scenario(scenario: Scenario, parallel: bool = False, only=None,
                 overrides: dict | None = None) -> Report:
    """Execute tasks in document order (or in dependency waves with ``parallel``).

    ``only`` restricts the run to the named tasks and their dependencies;
    ``overrides`` maps a task name to argument values replacing its own.
    """
    tasks = _closure(scenario, only)
    if overrides:
        tasks = [Task(t.name, t.kind, {**t.args, **overrides.get(t.name, {})}, t.expected, t.tol, t.deps)
                 for t in tasks]
    env = dict(scenario.declarations)
    results: dict[str, TaskResult] = {}
    if not parallel:
        for t in tasks:
            results[t.name] = _run_task(t, env, results, scenario.tolerance)
    else:
        done: set = set()
        pending = list(tasks)
        with ThreadPoolExecutor() as pool:
            while pending:
                wave = [t for t in pending if all(d in done or d in scenario.declarations for d in t.deps)]
                # tasks in a wave only read earlier waves and each writes its own name
                futures = {t.name: pool.submit(_run_task, t, env, results, scenario.tolerance)
                           for t in wave}
                for t in wave:
                    results[t.name] = futures[t.name].result()
                    done.add(t.name)
                pending = [t for t in pending if t.name not in done]
    return Report(scenario.tolerance, [results[t.name] for t in tasks])


def _run_task(task: Task, env: dict, results: dict, tol: float) -> TaskResult:
    start = time.perf_counter()
    for d in task.deps:
        if d in results and results[d].status == "error":
            return TaskResult(task.name, task.kind, "error", message=f"dependency {d!r} failed",
                              elapsed=time.perf_counter() - start)
    try:
        args = _resolve(task.args, env)
        value, details, ok = _HANDLERS[task.kind](args, tol)
        status = "pass" if ok else "fail"
        message = "" if ok else details.get("reason", "verification failed")
        deviation = None
        if task.expected is not None:
            deviation = expected_deviation(value if value is not None else details, task.expected, tol)
            limit = task.tol if task.tol is not None else tol
            if not deviation <= limit:
                status = "fail"
                message = f"deviation {deviation:.3e} from expected exceeds {limit:g}"
        if value is not None:
            env[task.name] = value
        return TaskResult(task.name, task.kind, status, value=value, details=details,
                          deviation=deviation, message=message, elapsed=time.perf_counter() - start)
    except (_Failed, QMultiError, KeyError, TypeError, ValueError) as exc:
        return TaskResult(task.name, task.kind, "error", message=f"{type(exc).__name__}: {exc}",
                          elapsed=time.perf_counter() - start)


# ---------------------------------------------------------------- handlers
# each returns (value bound to the task name or None, details dict, passed)


def _require(obj, types, what):
    if not isinstance(obj, types):
        names = " or ".join(t.__name__ for t in (types if isinstance(types, tuple) else (types,)))
        raise TypeError(f"{what} must be {names}, got {type(obj).__name__}")
    return obj


def _state(obj) -> State:
    if isinstance(obj, State):
        return obj
    if isinstance(obj, np.ndarray):
        return State(obj)
    raise TypeError(f"expected a state, got {type(obj).__name__}")


def _table(d: dict) -> dict:
    return {OutcomeSpace.key(x): p for x, p in d.items()}


def _h_validate(a, tol):
    t = a["target"]
    if isinstance(t, Observable):
        residual = max_abs(sum(e for _, e in t.items()) - np.eye(t.dim))
        return None, {"kind": "observable", "dim": t.dim, "shape": list(t.space.shape),
                      "completeness_residual": residual}, True
    if isinstance(t, Instrument):
        return None, {"kind": "instrument", "in_dim": t.in_dim, "out_dim": t.out_dim,
                      "shape": list(t.space.shape), "channel_residual": t.channel_residual()}, True
    if isinstance(t, State):
        return None, {"kind": "state", "dim": t.dim}, True
    if isinstance(t, np.ndarray):
        return None, {"kind": "matrix", "shape": list(t.shape)}, True
    raise TypeError(f"cannot validate a {type(t).__name__}")


def _h_distribution(a, tol):
    t = _require(a["target"], (Observable, Instrument), "target")
    rho = _state(a["state"])
    fn = instrument_distribution if isinstance(t, Instrument) else distribution
    if a.get("delta") is not None:
        return None, {"probability": fn(t, rho, a["delta"])}, True
    return _table(fn(t, rho)), {}, True


def _h_marginal(a, tol):
    t = _require(a["target"], (Observable, Instrument), "target")
    axis = int(a["axis"])
    if isinstance(t, Instrument):
        return instrument_marginal(t, axis, tol), {}, True
    return marginal(t, axis, tol), {}, True


def _h_reduce(a, tol):
    t = _require(a["target"], (Observable, Instrument), "target")
    dims = a.get("dims")
    if isinstance(t, Instrument):
        return reduced_instrument(t, int(a["factor"]), dims, tol), {}, True
    return reduced_observable(t, int(a["factor"]), dims, tol), {}, True


def _h_tensor(a, tol):
    parts = a["parts"]
    if all(isinstance(p, Instrument) for p in parts):
        return tensor_instruments(parts, tol), {}, True
    if all(isinstance(p, Observable) for p in parts):
        return tensor_observables(parts, tol), {}, True
    raise TypeError("tensor parts must be all observables or all instruments")


def _h_sequential(a, tol):
    parts = a["parts"]
    if all(isinstance(p, Instrument) for p in parts):
        return sequential_instruments(parts, tol), {}, True
    if all(isinstance(p, Observable) for p in parts):
        return luders_sequential(parts, tol), {}, True
    raise TypeError("sequential parts must be all observables or all instruments")


def _h_luders(a, tol):
    return construct_luders(_require(a["observable"], Observable, "observable"), tol), {}, True


def _h_holevo(a, tol):
    obs = _require(a["observable"], Observable, "observable")
    alphas = {k: _state(v) for k, v in a["alphas"].items()}
    return construct_holevo(obs, alphas, tol, out_factors=a.get("out_factors")), {}, True


def _outcome_map(space: OutcomeSpace, mapping) -> OutcomeMap:
    if not isinstance(mapping, dict):
        raise TypeError("an outcome mapping is an object from source outcome keys to target labels")
    table = {space.normalize(k): str(v) for k, v in mapping.items()}
    return OutcomeMap.from_function(space, lambda x: table[x] if x in table else _missing(x))


def _missing(x):
    raise StructureError(f"outcome map is not total; missing {OutcomeSpace.key(x)!r}")


def _h_part(a, tol):
    t = _require(a["target"], (Observable, Instrument), "target")
    f = _outcome_map(t.space, a["mapping"])
    if isinstance(t, Instrument):
        return instrument_part(t, f, tol), {}, True
    return part(t, f, tol), {}, True


def _h_seq_product(a, tol):
    return seq_product_observables(_require(a["first"], Observable, "first"),
                                   _require(a["instrument"], Instrument, "instrument"),
                                   _require(a["then"], Observable, "then"), tol), {}, True


def _h_conditioned(a, tol):
    return conditioned_observable(_require(a["observable"], Observable, "observable"),
                                  _require(a["instrument"], Instrument, "instrument"),
                                  _require(a["given"], Observable, "given"), tol), {}, True


def _h_verify_joint(a, tol):
    j = _require(a["joint"], Observable, "joint")
    report = verify_joint(j, [_require(t, Observable, "target") for t in a["targets"]], tol)
    details = {"passed": report.passed, "deviations": report.deviations}
    if not report.passed:
        details["reason"] = (f"marginal {report.worst_axis} deviates by "
                             f"{report.deviations[report.worst_axis]:.3e}")
    return None, details, report.passed


def _h_verify_joint_instrument(a, tol):
    j = _require(a["joint"], Instrument, "joint")
    report = verify_joint_instrument(j, [_require(t, Instrument, "target") for t in a["targets"]], tol)
    details = {"passed": report.passed, "deviations": report.deviations,
               "measured_observables_coexist": report.observables_coexist,
               "observable_deviations": report.observables.deviations}
    ok = report.passed and report.observables_coexist
    if not ok:
        details["reason"] = f"reduced marginal deviations {['%.3e' % d for d in report.deviations]}"
    return None, details, ok


def _h_verify_product_structure(a, tol):
    t = _require(a["target"], (Observable, Instrument), "target")
    maps = a.get("maps")
    if maps is None:
        fs = [OutcomeMap.projection(t.space, i) for i in range(t.space.n_axes)]
    else:
        fs = [_outcome_map(t.space, m) for m in maps]
    if isinstance(t, Instrument):
        check, _, devs = verify_instrument_product_structure(t, fs, tol)
    else:
        rep = verify_product_structure(t, fs, tol)
        check, devs = rep.check, rep.part_deviations
    ok = check.passed and all(d <= tol for d in devs)
    details = {"passed": ok}
    if check.passed:
        details["bijection"] = {OutcomeSpace.key(x): OutcomeSpace.key(y) for x, y in check.bijection.items()}
        details["part_deviations"] = devs
    else:
        details["bad_intersection"] = OutcomeSpace.key(check.bad_intersection)
        details["intersection_size"] = len(check.members)
        details["reason"] = (f"intersection for {OutcomeSpace.key(check.bad_intersection)!r} has "
                             f"{len(check.members)} elements")
    return None, details, ok


def _h_sample(a, tol):
    chain = [_require(c, Instrument, "chain element") for c in a["chain"]]
    n = int(a.get("trajectories", 1000))
    seed = int(a.get("seed", 0))
    sigmas = float(a.get("sigmas", 4.0))
    summary = sample_trajectories(chain, _state(a["state"]), seed, n, a.get("steps"), tol)
    zs = summary.z_scores()
    ok = summary.within(sigmas)
    details = {
        "trajectories": n, "seed": seed,
        "counts": _table(summary.counts),
        "frequencies": _table(summary.frequencies()),
        "analytic": _table(summary.analytic),
        "max_abs_z": max(abs(z) for z in zs.values()),
        "sigmas": sigmas,
        "digest": summary.digest(),
        "passed": ok,
    }
    if not ok:
        details["reason"] = f"empirical frequencies beyond {sigmas:g} sigma"
    return None, details, ok


_HANDLERS = {
    "validate": _h_validate,
    "distribution": _h_distribution,
    "marginal": _h_marginal,
    "reduce": _h_reduce,
    "tensor": _h_tensor,
    "sequential": _h_sequential,
    "luders": _h_luders,
    "holevo": _h_holevo,
    "part": _h_part,
    "seq-product": _h_seq_product,
    "conditioned": _h_conditioned,
    "verify-joint": _h_verify_joint,
    "verify-joint-instrument": _h_verify_joint_instrument,
    "verify-product-structure": _h_verify_product_structure,
    "sample": _h_sample,
}


# ---------------------------------------------------------------- expected values


def expected_deviation(value, expected, tol: float = DEFAULT_TOL) -> float:
    """Max absolute deviation between a computed value and an ``expected`` literal.

    Observables and instruments may be compared against declaration objects
    (instruments extensionally); tables against objects keyed by outcome;
    matrices against matrix literals; numbers against numbers.
    """
    if isinstance(value, Instrument):
        if not isinstance(expected, dict):
            return float("inf")
        other = from_document({"kind": "instrument", **expected}, tol=max(tol, 1e-6))
        try:
            return instrument_deviation(value, other)
        except QMultiError:
            return float("inf")
    if isinstance(value, Observable):
        if isinstance(expected, dict) and "effects" in expected:
            expected = expected["effects"]
        if not isinstance(expected, dict):
            return float("inf")
        keys = {OutcomeSpace.key(x) for x in value.outcomes}
        if set(expected) != keys:
            return float("inf")
        return max(expected_deviation(value[k], v, tol) for k, v in expected.items())
    if isinstance(value, State):
        value = value.matrix
    if isinstance(value, np.ndarray):
        try:
            other = matrix_from_literal(expected)
        except QMultiError:
            return float("inf")
        return max_abs(value - other) if other.shape == value.shape else float("inf")
    if isinstance(value, dict):
        if not isinstance(expected, dict) or set(map(str, expected)) - set(map(str, value)):
            return float("inf")
        lookup = {str(k): v for k, v in value.items()}
        if set(lookup) != set(map(str, expected)):
            return float("inf")
        return max((expected_deviation(lookup[str(k)], v, tol) for k, v in expected.items()), default=0.0)
    if isinstance(value, (list, tuple)):
        if not isinstance(expected, list) or len(expected) != len(value):
            return float("inf")
        return max((expected_deviation(v, e, tol) for v, e in zip(value, expected)), default=0.0)
    if isinstance(value, bool) or isinstance(expected, bool):
        return 0.0 if value == expected else float("inf")
    if isinstance(value, (int, float)) and isinstance(expected, (int, float)):
        return abs(float(value) - float(expected))
    return 0.0 if value == expected else float("inf")
