"""Command-line entry point ``pde``.

Exit codes: 0 success, 2 invalid input, 3 a solver stopped at a limit,
4 file access error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import forecast as fc
from .core import (
    DemandMatrix, ValidationError, aggregate_to_periods, disaggregate_evenly, load_demand_csv,
    load_instance, save_instance, write_demand_csv,
)
from .mappings import build_candidate_set, load_candidates_csv, save_candidates_csv
from .pde import analysis1, analysis2, dump_report, load_report
from .plan import SolverLimitError, save_plan, solve_bp_wbp
from .report import FORMATS, render
from .synthetic import CostProfile, generate_synthetic_instance

log = logging.getLogger("periodic_demand")

EXIT_OK, EXIT_INVALID, EXIT_LIMIT, EXIT_IO = 0, 2, 3, 4


class LimitReached(Exception):
    pass


def _milp_options(args) -> dict:
    opts = {}
    if getattr(args, "time_limit", None):
        opts["time_limit"] = args.time_limit
    if getattr(args, "node_limit", None):
        opts["node_limit"] = args.node_limit
    if getattr(args, "gap", None):
        opts["gap_limit"] = args.gap
    return opts


def _load_demand(path: str, K: int) -> DemandMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header.startswith("origin_period"):
        return fc.load_forecast_csv(path).as_matrix()
    return aggregate_to_periods(load_demand_csv(path), K=K)


def _horizon(Y: DemandMatrix, T: int, what: str) -> DemandMatrix:
    if Y.periods < T:
        raise ValidationError(f"{what} covers {Y.periods} periods, the instance horizon is {T}")
    if Y.periods > T:
        log.info("%s: using the first %d of %d periods", what, T, Y.periods)
    return Y.rows(0, T)


def cmd_gen(args) -> int:
    prof = CostProfile(demand_level=args.demand_level)
    inst, Y = generate_synthetic_instance(
        args.seed, args.commodities, args.weeks, args.terminals,
        trains_per_week=args.trains_per_week, cost_profile=prof,
        history_weeks=args.history_weeks + args.weeks)
    save_instance(inst, args.output)
    if args.history:
        write_demand_csv(args.history, disaggregate_evenly(Y.rows(0, args.history_weeks)))
    if args.actuals:
        write_demand_csv(args.actuals, disaggregate_evenly(Y.rows(args.history_weeks)))
    print(f"wrote {args.output}: {inst.K} commodities, {len(inst.blocks)} blocks, "
          f"{len(inst.graph.arcs)} arcs")
    return EXIT_OK


def cmd_forecast(args) -> int:
    inst = load_instance(args.instance)
    H = _load_demand(args.history, inst.K)
    order = args.order if args.order == "auto" else int(args.order)
    fs = fc.make_forecast(H, inst.T, args.model, order)
    fc.save_forecast_csv(fs, args.output)
    if args.metrics:
        m = fc.backtest(H, inst.T, args.model, order)
        Path(args.metrics).write_text(json.dumps(m.as_dict(), indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")
        print(f"backtest over {m.origins} origins: mean WAPE {m.mean_wape:.2f}% "
              f"({m.undefined_wape} undefined), mean RMSE {m.mean_rmse:.3f}")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    inst = load_instance(args.instance)
    Y = _horizon(_load_demand(args.demand, inst.K), inst.T, args.demand)
    save_candidates_csv(build_candidate_set(Y), args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_plan(args) -> int:
    inst = load_instance(args.instance)
    cands = load_candidates_csv(args.periodic, inst.K)
    y = cands.get(args.mapping.upper())
    Y = _horizon(_load_demand(args.eval_demand, inst.K), inst.T, args.eval_demand)
    plan = solve_bp_wbp(inst, y, Y, _milp_options(args))
    save_plan(plan, args.output)
    c = plan.costs
    print(f"C_PDE {c.total:.6g} = design {c.design:.6g} + flow {c.flow:.6g} + out {c.out:.6g}")
    if not plan.proven:
        raise LimitReached("plan written, but a solve stopped at a limit")
    return EXIT_OK


def _finish(res, output) -> int:
    dump_report([res], output)
    print(render(load_report(output), "table"))
    if not res.proven:
        raise LimitReached("report written, but a solve stopped at a limit")
    return EXIT_OK


def cmd_analyze1(args) -> int:
    inst = load_instance(args.instance)
    Y = _horizon(_load_demand(args.actuals, inst.K), inst.T, args.actuals)
    return _finish(analysis1(inst, Y, _milp_options(args)), args.output)


def cmd_analyze2(args) -> int:
    inst = load_instance(args.instance)
    H = _load_demand(args.history, inst.K)
    Y = _horizon(_load_demand(args.actuals, inst.K), inst.T, args.actuals)
    order = args.order if args.order == "auto" else int(args.order)
    return _finish(analysis2(inst, H, Y, args.model, order, _milp_options(args)), args.output)


def cmd_report(args) -> int:
    docs = []
    for path in args.inputs:
        docs.extend(load_report(path))
    text = render(docs, args.format)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.figures:
        from .plotting import write_figures
        for p in write_figures(docs, args.figures):
            print(f"figure: {p}", file=sys.stderr)
    return EXIT_OK


def cmd_correlate(args) -> int:
    H = aggregate_to_periods(load_demand_csv(args.history))
    r = fc.lagged_pearson(H.values[:, args.a], H.values[:, args.b], args.lag)
    if not r.defined:
        print("undefined (a series has zero variance)")
    else:
        print(f"r = {r.r:.4f}, p = {r.p_value:.3g}, "
              f"{'significant' if r.significant else 'not significant'} at 95% (n = {r.n})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pde", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp):
        sp.add_argument("--time-limit", type=float, help="seconds per MILP solve")
        sp.add_argument("--node-limit", type=int, help="branch-and-bound nodes per MILP solve")
        sp.add_argument("--gap", type=float, help="relative gap at which a MILP solve stops")

    g = sub.add_parser("gen", help="generate a synthetic instance and demand files")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--commodities", type=int, required=True)
    g.add_argument("--weeks", type=int, required=True, help="planning horizon T")
    g.add_argument("--terminals", type=int, required=True)
    g.add_argument("--trains-per-week", type=int, default=7)
    g.add_argument("--history-weeks", type=int, default=318)
    g.add_argument("--demand-level", type=float, default=CostProfile.demand_level)
    g.add_argument("--history", help="write daily history CSV here")
    g.add_argument("--actuals", help="write daily CSV of the T weeks after the history here")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("forecast", help="forecast the planning horizon")
    f.add_argument("--instance", required=True)
    f.add_argument("--history", required=True)
    f.add_argument("--model", choices=[fc.CONSTANT, fc.AR], default=fc.AR)
    f.add_argument("--order", default="auto")
    f.add_argument("--metrics", help="also backtest and write WAPE/RMSE JSON here")
    f.add_argument("-o", "--output", required=True)
    f.set_defaults(func=cmd_forecast)

    e = sub.add_parser("estimate", help="build the candidate periodic demands")
    e.add_argument("--instance", required=True)
    e.add_argument("--demand", required=True, help="forecast CSV or daily demand CSV")
    e.add_argument("-o", "--output", required=True)
    e.set_defaults(func=cmd_estimate)

    pl = sub.add_parser("plan", help="design for one candidate and evaluate it week by week")
    pl.add_argument("--instance", required=True)
    pl.add_argument("--periodic", required=True)
    pl.add_argument("--mapping", choices=["max", "mean", "q2", "q3"], required=True)
    pl.add_argument("--eval-demand", required=True)
    pl.add_argument("-o", "--output", required=True)
    solver_flags(pl)
    pl.set_defaults(func=cmd_plan)

    a1 = sub.add_parser("analyze1", help="candidates from actual demand vs weekly redesign")
    a1.add_argument("--instance", required=True)
    a1.add_argument("--actuals", required=True)
    a1.add_argument("-o", "--output", required=True)
    solver_flags(a1)
    a1.set_defaults(func=cmd_analyze1)

    a2 = sub.add_parser("analyze2", help="select on forecasts, evaluate on actual demand")
    a2.add_argument("--instance", required=True)
    a2.add_argument("--history", required=True)
    a2.add_argument("--actuals", required=True)
    a2.add_argument("--model", choices=[fc.CONSTANT, fc.AR], default=fc.AR)
    a2.add_argument("--order", default="auto")
    a2.add_argument("-o", "--output", required=True)
    solver_flags(a2)
    a2.set_defaults(func=cmd_analyze2)

    r = sub.add_parser("report", help="render one or more report files")
    r.add_argument("--in", dest="inputs", action="append", required=True)
    r.add_argument("--format", choices=FORMATS, default="table")
    r.add_argument("--figures", help="directory for PNG figures")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("correlate", help="lagged Pearson correlation of two commodities")
    c.add_argument("--history", required=True)
    c.add_argument("--a", type=int, required=True)
    c.add_argument("--b", type=int, required=True)
    c.add_argument("--lag", type=int, default=0)
    c.set_defaults(func=cmd_correlate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LimitReached as exc:
        print(f"warning: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except SolverLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyError as exc:
        print(f"error: unknown key {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
