"""``gfsim`` command-line front end.

Exit status: 0 on success, 2 for invalid flags or inputs, 1 for failures
during computation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import seqmat, sim, theory


class _UsageError(Exception):
    pass


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _cmd_construct(args):
    if args.target_census:
        try:
            target = [int(v) for v in args.target_census.split(",")]
        except ValueError:
            raise _UsageError("--target-census expects three comma-separated integers")
        if len(target) != 3:
            raise _UsageError("--target-census expects three comma-separated integers")
        S = seqmat.construct_with_cycle_profile(
            args.rows, args.cols, args.colweight, target, args.seed, args.max_attempts)
    else:
        S = seqmat.construct_peg(args.rows, args.cols, args.colweight, args.seed)
    S.save(args.out)
    _emit({"input": {"rows": args.rows, "cols": args.cols, "colweight": args.colweight,
                     "seed": args.seed, "out": args.out},
           "value": seqmat.cycle_census(S).to_dict()})


def _cmd_census(args):
    S = seqmat.SpreadingMatrix.load(args.matrix)
    _emit({"input": {"matrix": args.matrix}, "value": seqmat.cycle_census(S).to_dict()})


def _cmd_analyze(args):
    try:
        dp = theory.DesignPoint(args.lam, args.colweight, args.ratio)
    except ValueError as exc:
        raise _UsageError(str(exc))
    w_r = dp.w_c / dp.r
    value = {
        "rfa": theory.rfa_theory(dp.lam, dp.w_c, dp.r),
        "g_upper_bound": theory.g_upper_bound(dp.lam, dp.w_c, dp.r),
        "lambda_star": theory.find_lambda_star(dp.w_c, dp.r),
        "row_weight": w_r,
        "complexity_approx": theory.complexity_approx(dp.lam, w_r, args.K, args.L, args.M),
        "complexity_full_graph": theory.complexity_full_graph(round(w_r), args.K, args.L, args.M),
    }
    _emit({"input": {"lambda": dp.lam, "colweight": dp.w_c, "ratio": dp.r, "K": args.K,
                     "L": args.L, "M": args.M}, "value": value})


def _cmd_optimize(args):
    if args.tau <= 0:
        raise _UsageError("--tau must be positive")
    r = theory.optimize_r(args.tau, args.colweight)
    _emit({"input": {"tau": args.tau, "colweight": args.colweight}, "value": r})


def _load_config(args) -> sim.ScenarioConfig:
    try:
        d = json.loads(open(args.config).read())
    except OSError as exc:
        raise _UsageError(f"cannot read config {args.config}: {exc}")
    except json.JSONDecodeError as exc:
        raise _UsageError(f"{args.config}: invalid JSON ({exc})")
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        d["trials"] = args.trials
    try:
        return sim.ScenarioConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise _UsageError(f"{args.config}: {exc}")


def _cmd_simulate(args):
    cfg = _load_config(args)
    lam = args.lam if args.lam is not None else cfg.lambdas[0]
    snr = args.snr if args.snr is not None else cfg.snrs_db[0]
    cfg.lambdas, cfg.snrs_db = [lam], [snr]
    rec = sim.sweep(cfg, args.out, workers=args.workers)[0]
    _emit({"input": cfg.to_dict(), "value": rec.row()})


def _cmd_sweep(args):
    cfg = _load_config(args)
    recs = sim.sweep(cfg, args.out, workers=args.workers)
    _emit({"input": cfg.to_dict(), "value": [r.row() for r in recs]})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gfsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build a spreading matrix and write it to a file")
    c.add_argument("--rows", type=int, required=True)
    c.add_argument("--cols", type=int, required=True)
    c.add_argument("--colweight", type=int, required=True)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--target-census", help="e.g. 400,0,0 for an exact 4/6/8-cycle profile")
    c.add_argument("--max-attempts", type=int, default=200_000)
    c.add_argument("--out", default="matrix.txt")
    c.set_defaults(func=_cmd_construct)

    c = sub.add_parser("census", help="count 4/6/8-cycles of a matrix file")
    c.add_argument("matrix")
    c.set_defaults(func=_cmd_census)

    c = sub.add_parser("analyze", help="closed-form false-alarm and complexity figures")
    c.add_argument("--lambda", dest="lam", type=float, required=True)
    c.add_argument("--colweight", type=int, required=True)
    c.add_argument("--ratio", type=float, required=True)
    c.add_argument("--K", type=int, default=60)
    c.add_argument("--L", type=int, default=400)
    c.add_argument("--M", type=int, default=2)
    c.set_defaults(func=_cmd_analyze)

    c = sub.add_parser("optimize", help="smallest ratio L/N meeting a false-alarm budget")
    c.add_argument("--tau", type=float, required=True)
    c.add_argument("--colweight", type=int, default=2)
    c.set_defaults(func=_cmd_optimize)

    for name, fn, help_ in (("simulate", _cmd_simulate, "one (lambda, SNR) point"),
                            ("sweep", _cmd_sweep, "all (lambda, SNR) points of a config")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--config", required=True)
        c.add_argument("--out", default=None, help="CSV output path")
        c.add_argument("--seed", type=int, default=None)
        c.add_argument("--trials", type=int, default=None)
        c.add_argument("--workers", type=int, default=None)
        if name == "simulate":
            c.add_argument("--lambda", dest="lam", type=float, default=None)
            c.add_argument("--snr", type=float, default=None)
        c.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (_UsageError, seqmat.InfeasibleDimensionsError) as exc:
        parser.print_usage(sys.stderr)
        print(f"gfsim: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"gfsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
