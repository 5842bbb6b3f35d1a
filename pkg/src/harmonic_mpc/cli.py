"""Command-line front end.

Exit codes: 0 success, 1 bad input (message names the JSON path),
2 setup or divergence failure, 3 iteration limit reached.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as hio
from .admm import AdmmSettings, DivergenceError, Status
from .bench import bench_compare, gen_polygon
from .hmpc import Encoding
from .qpcore import SetupError
from .sim import Controller, run_closed_loop

log = logging.getLogger("harmonic_mpc")

EXIT_OK, EXIT_INPUT, EXIT_SETUP, EXIT_MAX_ITER = 0, 1, 2, 3

_DEFAULTS = AdmmSettings()


class _UsageError(Exception):
    pass


def _parse_sides(text: str) -> list[int]:
    """``a..b``, ``a..b:step`` or a comma list ``a,b,c``."""
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            lo, hi = (int(v) for v in span.split(".."))
            step = int(step) if step else 1
            if step < 1 or hi < lo:
                raise ValueError
            sides = list(range(lo, hi + 1, step))
            if sides[-1] != hi:
                sides.append(hi)
        else:
            sides = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sides range {text!r}; use a..b, a..b:step or a,b,c")
    if min(sides) < 3:
        raise argparse.ArgumentTypeError("polygons need at least 3 sides")
    return sides


def _settings_overrides(args) -> dict:
    out = {}
    for key in ("rho", "eps_p", "eps_d", "max_iter"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def _settings(args) -> AdmmSettings:
    try:
        return AdmmSettings(**_settings_overrides(args))
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("solver")
    g.add_argument("--rho", type=float, default=None, help=f"ADMM penalty (default {_DEFAULTS.rho:g})")
    g.add_argument("--eps-p", dest="eps_p", type=float, default=None,
                   help=f"primal tolerance (default {_DEFAULTS.eps_p:g})")
    g.add_argument("--eps-d", dest="eps_d", type=float, default=None,
                   help=f"dual tolerance (default {_DEFAULTS.eps_d:g})")
    g.add_argument("--max-iter", dest="max_iter", type=int, default=None,
                   help=f"iteration limit (default {_DEFAULTS.max_iter})")
    g.add_argument("--encoding", choices=[e.value for e in Encoding], default=None,
                   help="output constraint encoding (default band)")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--out", type=Path, default=None, help="output file (stdout when omitted)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="hmpc", description="Harmonic MPC solver with cone-band constraints")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve one HMPC problem")
    p.add_argument("problem", type=Path)
    p.add_argument("state", type=Path, help="JSON with x (and optionally x_r, u_r)")
    p.add_argument("--reference", type=Path, default=None, help="JSON with x_r and u_r")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop simulation, CSV trace")
    p.add_argument("scenario", type=Path)
    p.add_argument("--steps", type=int, default=None, help="override the scenario's step count")
    p.add_argument("--cold", action="store_true", help="disable warm starting")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG written next to --out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench-compare", parents=[common], help="band vs split-cone benchmark")
    p.add_argument("problem", type=Path, nargs="?", default=None,
                   help="problem with position_states (default: built-in surrogate)")
    p.add_argument("--sides-range", dest="sides", type=_parse_sides, default=_parse_sides("5..64:8"),
                   help="a..b[:step] or a,b,c (default 5..64:8)")
    p.add_argument("--runs", type=int, default=20, help="solves per configuration (default 20)")
    p.add_argument("--min-runs", type=int, default=5, help="fewer runs are flagged low-confidence")
    p.add_argument("--horizon", type=int, default=None, help="horizon N of the surrogate (default 5)")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG written next to --out")
    p.set_defaults(func=cmd_bench_compare)

    p = sub.add_parser("gen-polygon", parents=[common], help="half-space rows of a regular polygon")
    p.add_argument("sides", type=int)
    p.add_argument("--radius", type=float, default=2.0)
    p.set_defaults(func=cmd_gen_polygon)
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def cmd_solve(args) -> int:
    prob = hio.load_problem(args.problem)
    x, x_r, u_r = hio.load_state(args.state, prob, args.reference)
    ctrl = Controller(prob, _settings(args), Encoding(args.encoding or "band"))
    res = ctrl.solve(x, x_r, u_r, warm=False)
    _emit(json.dumps(hio.result_to_dict(ctrl.qp, res), indent=2) + "\n", args.out)
    log.info("status %s after %d iterations", res.status.value, res.iterations)
    return EXIT_OK if res.status is Status.CONVERGED else EXIT_MAX_ITER


def cmd_simulate(args) -> int:
    overrides = {"encoding": args.encoding, "steps": args.steps}
    if args.cold:
        overrides["warm_start"] = False
    sc_settings = _settings_overrides(args)
    doc_overrides = {k: v for k, v in overrides.items() if v is not None}
    sc = hio.load_scenario(args.scenario, doc_overrides)
    if sc_settings:
        base = {k: getattr(sc.settings, k) for k in ("rho", "eps_p", "eps_d", "max_iter")}
        sc.settings = AdmmSettings(**{**base, **sc_settings})
    trace = run_closed_loop(sc)
    _emit(hio.trace_to_csv(trace, sc.problem.n_x, sc.problem.n_u), args.out)
    if args.out is not None and not args.no_plot and trace.rows:
        from .plotting import plot_trace
        plot_trace(trace, args.out.with_suffix(".png"), title=f"{sc.encoding.value} encoding")
    if trace.aborted:
        print(f"error: simulation aborted at {trace.aborted}", file=sys.stderr)
        return EXIT_SETUP
    if not all(r.converged for r in trace.rows):
        print("warning: iteration limit reached in at least one step", file=sys.stderr)
        return EXIT_MAX_ITER
    return EXIT_OK


def cmd_bench_compare(args) -> int:
    if args.runs < 1:
        raise _UsageError("--runs must be >= 1")
    cfg = hio.load_bench_config(args.problem, N=args.horizon)

    def progress(row):
        log.info("l=%d %s: %.3f ms, %.1f iterations", row["sides"], row["encoding"],
                 row["time_avg_ms"], row["iter_avg"])

    report = bench_compare(cfg, args.sides, args.runs, _settings(args), seed=args.seed,
                           min_runs=args.min_runs, progress=progress)
    csv_text = hio.report_to_csv(report)
    if args.out is None:
        sys.stdout.write(csv_text)
    else:
        out = args.out.with_suffix(".csv")
        _emit(csv_text, out)
        out.with_suffix(".json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        if not args.no_plot:
            from .plotting import plot_bench
            plot_bench(report, out.with_suffix(".png"))
    return EXIT_OK


def cmd_gen_polygon(args) -> int:
    try:
        rows, lower, upper, vertices = gen_polygon(args.sides, args.radius)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    doc = {"sides": args.sides, "radius": args.radius, "rows": rows.tolist(),
           "lower": lower.tolist(), "upper": upper.tolist(), "vertices": vertices.tolist()}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except hio.SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SetupError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SETUP


if __name__ == "__main__":
    sys.exit(main())
