"""Command-line interface.

Verbs: gen, solve, sweep, baseline, oracle, check.
Exit codes: 0 success, 2 infeasible/capped, 3 validation or parse error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .baselines import brute_force_optimum, split_learning_plan
from .constraints import check_constraints
from .io import emit, load_scenario, load_solution, save_scenario, solution_to_dict
from .model import (CapExceededError, InfeasibleError, ParseError,
                    RightTrainError, ValidationError)
from .presets import gen_scenario
from .solve import STRATEGIES, righttrain_solve, sweep
from .trees import enumerate_instance_trees

EXIT_OK, EXIT_INFEASIBLE, EXIT_VALIDATION, EXIT_IO = 0, 2, 3, 4


def _tmax_values(args):
    if args.tmax_range:
        try:
            start, stop, step = (float(v) for v in args.tmax_range.split(":"))
        except ValueError:
            raise ValidationError("--tmax-range must be start:stop:step")
        if step <= 0 or stop < start:
            raise ValidationError("--tmax-range must be increasing with step > 0")
        values = []
        t = start
        while t <= stop * (1 + 1e-12):
            values.append(round(t, 12))
            t += step
        return values
    if args.tmax is None:
        raise ValidationError("a deadline is required (--tmax or --tmax-range)")
    return [args.tmax]


def _print_solution(sol, out, fmt):
    if out:
        emit(sol, fmt, out)
    else:
        json.dump(solution_to_dict(sol), sys.stdout, indent=2)
        sys.stdout.write("\n")
    m = sol.metrics
    print(f"# strategy={sol.strategy} objective={m.objective:.6g} J "
          f"epochs={m.epochs} total_time={m.total_time:.6g} s "
          f"data_fraction={m.data_fraction:.4g}", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="righttrain",
        description="Energy-aware placement of distributed DNN training")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, deadline=True):
        p.add_argument("--scenario", help="scenario JSON file")
        if deadline:
            p.add_argument("--tmax", type=float, help="learning deadline, seconds")
            p.add_argument("--tmax-range", help="start:stop:step deadline sweep")
        p.add_argument("--eps", type=float, default=0.1,
                       help="restricted-path approximation factor (default 0.1)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p_gen = sub.add_parser("gen", help="write a preset scenario file")
    p_gen.add_argument("--preset", required=True, choices=("small", "large", "gap"))
    common(p_gen, deadline=False)

    p_solve = sub.add_parser("solve", help="run the full placement pipeline")
    common(p_solve)

    p_sweep = sub.add_parser("sweep", help="compare strategies across deadlines")
    common(p_sweep)
    p_sweep.add_argument("--strategies", default=",".join(STRATEGIES),
                         help="comma list from righttrain,sl,optimum")

    p_base = sub.add_parser("baseline", help="best split-learning plan")
    common(p_base)

    p_oracle = sub.add_parser("oracle", help="brute-force optimum (small scenarios)")
    common(p_oracle)
    p_oracle.add_argument("--cap", type=int, default=10 ** 6,
                          help="candidate cap (default 1e6)")

    p_check = sub.add_parser("check", help="validate a solution file")
    common(p_check)
    p_check.add_argument("--solution", required=True, help="solution JSON file")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InfeasibleError, CapExceededError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RightTrainError as exc:  # residual model errors are usage errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _need_scenario(args):
    if not args.scenario:
        raise ValidationError("--scenario is required")
    return load_scenario(args.scenario)


def _dispatch(args) -> int:
    if args.verb == "gen":
        scenario = gen_scenario(args.preset, args.seed)
        if not args.out:
            raise ValidationError("gen requires --out")
        save_scenario(scenario, args.out)
        print(f"wrote {args.preset} scenario to {args.out}", file=sys.stderr)
        return EXIT_OK

    if args.verb == "solve":
        scenario = _need_scenario(args)
        sol = righttrain_solve(scenario, _tmax_values(args)[0], eps=args.eps)
        _print_solution(sol, args.out, args.format)
        return EXIT_OK

    if args.verb == "baseline":
        scenario = _need_scenario(args)
        sol = split_learning_plan(scenario, _tmax_values(args)[0])
        _print_solution(sol, args.out, args.format)
        return EXIT_OK

    if args.verb == "oracle":
        scenario = _need_scenario(args)
        trees = enumerate_instance_trees(scenario, allow_truncation=True)
        sol = brute_force_optimum(scenario, trees, _tmax_values(args)[0],
                                  cap=args.cap)
        _print_solution(sol, args.out, args.format)
        return EXIT_OK

    if args.verb == "sweep":
        scenario = _need_scenario(args)
        strategies = tuple(s for s in args.strategies.split(",") if s)
        result = sweep(scenario, _tmax_values(args), strategies=strategies,
                       eps=args.eps)
        if args.out:
            emit(result, args.format, args.out)
        else:
            from .io import CSV_COLUMNS, _fmt
            print(",".join(CSV_COLUMNS))
            for row in result.rows:
                print(",".join(_fmt(getattr(row, c)) for c in CSV_COLUMNS))
        n_ok = sum(1 for r in result.rows if r.status == "ok")
        print(f"# {len(result.rows)} rows, {n_ok} feasible", file=sys.stderr)
        return EXIT_OK

    if args.verb == "check":
        scenario = _need_scenario(args)
        sol = load_solution(args.solution)
        sol.validate(scenario)
        report = check_constraints(sol, scenario)
        print(report)
        if not report.ok:
            return EXIT_VALIDATION
        if args.tmax is not None:
            from .perf import evaluate
            m = evaluate(sol, scenario).metrics
            if m.total_time > args.tmax * (1 + 1e-9):
                print(f"deadline violated: {m.total_time:.6g} > {args.tmax:.6g}")
                return EXIT_VALIDATION
        return EXIT_OK

    raise ValidationError(f"unknown verb {args.verb!r}")  # pragma: no cover
