"""JSON problem/scenario files and CSV/JSON result writers.

Schema violations are reported as :class:`SchemaError` with a JSONPath-like
location (``$.A[1][0]``) so the CLI can point at the offending entry.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import jsonschema
import numpy as np

from .admm import AdmmSettings, SolveResult
from .bench import BenchConfig, BenchReport, surrogate_bench_config
from .hmpc import CondensedQP, Encoding, HmpcProblem, ProblemError, extract_solution
from .sim import ClosedLoopTrace, ReferenceChange, Scenario

__all__ = [
    "SchemaError",
    "PROBLEM_SCHEMA",
    "SCENARIO_SCHEMA",
    "load_json",
    "problem_from_dict",
    "problem_to_dict",
    "load_problem",
    "save_problem",
    "load_state",
    "load_scenario",
    "scenario_to_dict",
    "save_scenario",
    "load_bench_config",
    "result_to_dict",
    "trace_to_csv",
    "report_to_csv",
]


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["A", "B", "E", "F", "y_lower", "y_upper", "Q", "R",
                 "T_e", "T_h", "S_e", "S_h", "N", "w"],
    "properties": {
        "A": _MAT, "B": _MAT, "E": _MAT, "F": _MAT,
        "y_lower": _VEC, "y_upper": _VEC,
        "Q": _MAT, "R": _MAT, "T_e": _MAT, "S_e": _MAT,
        "T_h": _VEC, "S_h": _VEC,
        "N": {"type": "integer", "minimum": 2},
        "w": {"type": "number", "minimum": 0},
        # optional benchmark metadata
        "position_states": {"type": "array", "items": {"type": "integer", "minimum": 0},
                            "minItems": 2, "maxItems": 2},
        "reference": {"type": "object", "required": ["x_r", "u_r"],
                      "properties": {"x_r": _VEC, "u_r": _VEC}},
        "init_box": {"type": "object", "required": ["lower", "upper"],
                     "properties": {"lower": _VEC, "upper": _VEC}},
        "radius": {"type": "number", "exclusiveMinimum": 0},
    },
}

_SETTINGS_SCHEMA = {
    "type": "object",
    "properties": {
        "rho": {"type": "number", "exclusiveMinimum": 0},
        "eps_p": {"type": "number", "exclusiveMinimum": 0},
        "eps_d": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["x0", "reference_schedule", "steps"],
    "properties": {
        "problem": {"type": "object"},
        "problem_file": {"type": "string"},
        "x0": _VEC,
        "reference_schedule": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["start_step", "x_r", "u_r"],
                "properties": {"start_step": {"type": "integer", "minimum": 0},
                               "x_r": _VEC, "u_r": _VEC},
            },
        },
        "steps": {"type": "integer", "minimum": 1},
        "settings": _SETTINGS_SCHEMA,
        "encoding": {"enum": [e.value for e in Encoding]},
        "warm_start": {"type": "boolean"},
    },
    "oneOf": [{"required": ["problem"]}, {"required": ["problem_file"]}],
}

STATE_SCHEMA = {
    "type": "object",
    "required": ["x"],
    "properties": {"x": _VEC, "x_r": _VEC, "u_r": _VEC},
}


def _jsonpath(parts, prefix="$") -> str:
    out = prefix
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _validate(doc, schema, prefix="$"):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise SchemaError(_jsonpath(err.absolute_path, prefix), err.message)


def load_json(path) -> dict:
    """Parse a JSON file; syntax errors become :class:`SchemaError` at ``$``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError("$", f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def problem_from_dict(doc: dict, prefix: str = "$") -> HmpcProblem:
    _validate(doc, PROBLEM_SCHEMA, prefix)
    try:
        return HmpcProblem(
            A=doc["A"], B=doc["B"], E=doc["E"], F=doc["F"],
            y_lower=doc["y_lower"], y_upper=doc["y_upper"],
            Q=doc["Q"], R=doc["R"], T_e=doc["T_e"], T_h=doc["T_h"],
            S_e=doc["S_e"], S_h=doc["S_h"], N=doc["N"], w=doc["w"],
        )
    except ProblemError as exc:
        field, _, msg = str(exc).partition(": ")
        raise SchemaError(f"{prefix}.{field}", msg) from exc
    except ValueError as exc:
        # ragged nested arrays
        raise SchemaError(prefix, str(exc)) from exc


def problem_to_dict(prob: HmpcProblem) -> dict:
    return {
        "A": prob.A.tolist(), "B": prob.B.tolist(), "E": prob.E.tolist(), "F": prob.F.tolist(),
        "y_lower": prob.y_lower.tolist(), "y_upper": prob.y_upper.tolist(),
        "Q": prob.Q.tolist(), "R": prob.R.tolist(), "T_e": prob.T_e.tolist(),
        "T_h": prob.T_h.tolist(), "S_e": prob.S_e.tolist(), "S_h": prob.S_h.tolist(),
        "N": prob.N, "w": prob.w,
    }


def load_problem(path) -> HmpcProblem:
    return problem_from_dict(load_json(path))


def save_problem(prob: HmpcProblem, path, extra: dict | None = None) -> None:
    doc = problem_to_dict(prob)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))


def _vector(doc, key, size, path):
    v = np.asarray(doc[key], dtype=float)
    if v.shape != (size,):
        raise SchemaError(f"{path}.{key}", f"expected {size} entries, got {v.size}")
    return v


def load_state(path, prob: HmpcProblem, reference_path=None):
    """Read ``x`` (and optionally ``x_r``, ``u_r``) from a state file.

    A separate reference file, when given, overrides the reference in the
    state file.  Missing references default to the origin.
    """
    doc = load_json(path)
    _validate(doc, STATE_SCHEMA)
    x = _vector(doc, "x", prob.n_x, "$")
    ref = doc
    if reference_path is not None:
        ref = load_json(reference_path)
        _validate(ref, {"type": "object", "required": ["x_r", "u_r"],
                        "properties": {"x_r": _VEC, "u_r": _VEC}})
    x_r = _vector(ref, "x_r", prob.n_x, "$") if "x_r" in ref else np.zeros(prob.n_x)
    u_r = _vector(ref, "u_r", prob.n_u, "$") if "u_r" in ref else np.zeros(prob.n_u)
    return x, x_r, u_r


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    """Read a scenario file.  ``overrides`` replaces ``settings``/``encoding``/``steps`` keys."""
    doc = load_json(path)
    if overrides:
        doc = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
    _validate(doc, SCENARIO_SCHEMA)
    if "problem" in doc:
        prob = problem_from_dict(doc["problem"], "$.problem")
    else:
        ppath = Path(doc["problem_file"])
        if not ppath.is_absolute():
            ppath = Path(path).parent / ppath
        prob = load_problem(ppath)
    x0 = _vector(doc, "x0", prob.n_x, "$")
    schedule = []
    for i, r in enumerate(doc["reference_schedule"]):
        p = f"$.reference_schedule[{i}]"
        schedule.append(ReferenceChange(r["start_step"], _vector(r, "x_r", prob.n_x, p),
                                        _vector(r, "u_r", prob.n_u, p)))
    starts = [r.start_step for r in schedule]
    if starts[0] != 0:
        raise SchemaError("$.reference_schedule[0].start_step", "first reference must start at step 0")
    for i in range(1, len(starts)):
        if starts[i] <= starts[i - 1]:
            raise SchemaError(f"$.reference_schedule[{i}].start_step", "start steps must be strictly increasing")
    try:
        settings = AdmmSettings(**doc.get("settings", {}))
    except ValueError as exc:
        raise SchemaError("$.settings", str(exc)) from exc
    return Scenario(problem=prob, x0=x0, reference_schedule=schedule, steps=doc["steps"],
                    settings=settings, encoding=Encoding(doc.get("encoding", "band")),
                    warm_start=doc.get("warm_start", True))


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "problem": problem_to_dict(sc.problem),
        "x0": sc.x0.tolist(),
        "reference_schedule": [{"start_step": r.start_step, "x_r": np.asarray(r.x_r, float).tolist(),
                                "u_r": np.asarray(r.u_r, float).tolist()} for r in sc.reference_schedule],
        "steps": sc.steps,
        "settings": {"rho": sc.settings.rho, "eps_p": sc.settings.eps_p,
                     "eps_d": sc.settings.eps_d, "max_iter": sc.settings.max_iter},
        "encoding": sc.encoding.value,
        "warm_start": sc.warm_start,
    }


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2))


def load_bench_config(path=None, N: int | None = None) -> BenchConfig:
    """Benchmark setup from a problem file with ``position_states``; the surrogate when ``path`` is None."""
    if path is None:
        return surrogate_bench_config(**({"N": N} if N else {}))
    doc = load_json(path)
    prob = problem_from_dict(doc)
    if "position_states" not in doc:
        raise SchemaError("$.position_states", "benchmark problems must name two position states")
    pos = tuple(doc["position_states"])
    for k, i in enumerate(pos):
        if i >= prob.n_x:
            raise SchemaError(f"$.position_states[{k}]", f"state index {i} out of range for n_x={prob.n_x}")
    ref = doc.get("reference", {"x_r": [0.0] * prob.n_x, "u_r": [0.0] * prob.n_u})
    x_r = _vector(ref, "x_r", prob.n_x, "$.reference")
    u_r = _vector(ref, "u_r", prob.n_u, "$.reference")
    if "init_box" in doc:
        lo = _vector(doc["init_box"], "lower", prob.n_x, "$.init_box")
        hi = _vector(doc["init_box"], "upper", prob.n_x, "$.init_box")
    else:
        lo, hi = np.zeros(prob.n_x), np.zeros(prob.n_x)
    return BenchConfig(problem=prob, position_idx=pos, x_r=x_r, u_r=u_r,
                       init_lower=lo, init_upper=hi, radius=float(doc.get("radius", 2.0)))


def result_to_dict(qp: CondensedQP, res: SolveResult) -> dict:
    sol = extract_solution(qp, res.z)
    return {
        "status": res.status.value,
        "iterations": res.iterations,
        "primal_residual": res.primal_residual,
        "dual_residual": res.dual_residual,
        "setup_time_s": res.setup_time,
        "solve_time_s": res.solve_time,
        "encoding": qp.encoding.value,
        "u0": sol.u0.tolist(),
        "x": sol.x.tolist(),
        "u": sol.u.tolist(),
        "theta": sol.theta.as_dict(),
        "z": res.z.tolist(),
        "s": res.s.tolist(),
        "lambda": res.lam.tolist(),
    }


def trace_to_csv(trace: ClosedLoopTrace, n_x: int, n_u: int, stream=None) -> str:
    """One row per step: t, x, u, x_r, iterations, solve_time_us, primal_res, dual_res."""
    stream = stream or io.StringIO()
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["t", *[f"x{i}" for i in range(n_x)], *[f"u{i}" for i in range(n_u)],
                *[f"x_r{i}" for i in range(n_x)], "iterations", "solve_time_us",
                "primal_res", "dual_res"])
    for r in trace.rows:
        w.writerow([r.t, *map(repr, map(float, r.x)), *map(repr, map(float, r.u)),
                    *map(repr, map(float, r.x_r)), r.iterations, f"{1e6 * r.solve_time:.3f}",
                    repr(r.primal_residual), repr(r.dual_residual)])
    return stream.getvalue() if isinstance(stream, io.StringIO) else ""


def report_to_csv(report: BenchReport, stream=None) -> str:
    """Configuration rows followed by ratio rows, one table each, blank line between."""
    stream = stream or io.StringIO()
    w = csv.DictWriter(stream, fieldnames=BenchReport.ROW_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(report.rows)
    stream.write("\n")
    w = csv.DictWriter(stream, fieldnames=BenchReport.RATIO_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(report.ratios)
    return stream.getvalue() if isinstance(stream, io.StringIO) else ""
