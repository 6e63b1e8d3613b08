"""Command line entry point ``gbrw``.

Exit codes: 0 when every check passes, 1 when a verification fails (the
report is still written), 2 for usage or config errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import __version__
from .config import SCHEMA_HELP, load_model
from .errors import ConfigError, GBRWError, Infeasible, PreconditionError
from .laws import check_branching_assumptions, check_joint_tail, check_marginal_assumptions
from .lyapunov import choose_params, right_tail_check, verify_bounded
from .recurse import MODES, check_sandwich, pointwise_bounds_check, run
from .report import Report, jsonable
from .simulate import DEFAULT_NODE_CAP, set_threads, tightness_report


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _document(command, args, model, reports, extra=None) -> dict:
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out", "threads")}
    doc = {
        "tool": "gbrw",
        "version": __version__,
        "command": command,
        "options": opts,
        "config": model.raw if model is not None else None,
        "reports": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
    }
    if extra:
        doc.update(extra)
    return jsonable(doc)


def _emit(doc: dict, out=None):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out not in (None, "-"):
        Path(out).write_text(text)
    sys.stdout.write(text)


def _ints(s: str):
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"expected comma separated integers, got {s!r}") from e


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    model = load_model(args.config)
    table = tightness_report(model.branching, model.displacement, _ints(args.n), args.reps, args.delta, args.seed, args.node_cap, args.threads)
    write_csv(args.out, ["n", "median", "q_lo", "q_hi", "width", "reps", "seed"], table.csv_rows())
    return 0


def cmd_recurse(args) -> int:
    model = load_model(args.config)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise ConfigError(f"unknown modes {bad}; choose from {list(MODES)}")
    data = run(model.branching, model.displacement, args.n, modes, seed=args.seed)
    write_csv(args.out, ["m", "x", "lower", "exact", "upper"], data.table())
    if "exact" in data.curves and len(data.curves) > 1:
        rep = check_sandwich(data)
        if args.report:
            Path(args.report).write_text(json.dumps(_document("recurse", args, model, [rep]), indent=2, sort_keys=True) + "\n")
        return 0 if rep.passed else 1
    return 0


def _assumption_reports(model, args):
    reps = [check_branching_assumptions(model.branching, "bounded", horizon=args.n)]
    try:
        reps.append(check_marginal_assumptions(model.displacement, args.eps0, args.a, args.M0, model.branching, horizon=args.n))
    except GBRWError as e:
        r = Report("marginal assumptions")
        r.add("MT1", False, {"error": f"{type(e).__name__}: {e}"})
        reps.append(r)
    return reps


def cmd_verify(args) -> int:
    model = load_model(args.config)
    what = args.what
    extra = {}
    if what == "sandwich":
        reports = [check_sandwich(run(model.branching, model.displacement, args.n, MODES, seed=args.seed))]
    elif what == "pwbounds":
        gt = check_joint_tail(model.displacement, args.eta1, "GT", model.branching, horizon=args.n)
        reports = [gt]
        if gt.passed:
            data = run(model.branching, model.displacement, args.n, ["exact"], seed=args.seed)
            reports.append(pointwise_bounds_check(data, gt.info["B"], args.eta1))
    elif what == "assumptions":
        reports = _assumption_reports(model, args)
        reports.append(check_joint_tail(model.displacement, args.eta1, "GT", model.branching, horizon=args.n))
    else:  # lyapunov
        reports = _assumption_reports(model, args)
        ok = all(r.passed for r in reports)
        extra["assumptions_met"] = ok
        if ok:
            br = reports[0].info
            params = choose_params(br["k0"], br["m0"], args.eps0, args.a, args.M0, h=model.grid.h, min_mean=br["inf_mean"])
            extra["params"] = params.to_dict()
            shifted = model.displacement.shifted(reports[1].info["shift"])
            data = run(model.branching, shifted, args.n, ["exact"], seed=args.seed)
            reports.append(verify_bounded(data, params, assumptions_ok=True))
            reports.append(right_tail_check(data, params))
        else:
            extra["params"] = None
            extra["note"] = "assumptions unmet: Lyapunov checks not run"
    doc = _document(f"verify {what}", args, model, reports, extra)
    _emit(doc, args.out)
    return 0 if doc["pass"] else 1


def cmd_params(args) -> int:
    try:
        p = choose_params(args.k0, args.m0, args.eps0, args.a, args.M0, c1=args.c1, h=args.h, min_mean=args.min_mean)
    except Infeasible as e:
        _emit(jsonable({"tool": "gbrw", "version": __version__, "pass": False, "infeasible": str(e), "constraint": e.constraint, "audit": list(e.audit or ())}))
        return 1
    d = p.to_dict()
    d["audit"] = list(p.audit)
    _emit(jsonable({"tool": "gbrw", "version": __version__, "pass": True, "params": d}), args.out)
    return 0


def cmd_report(args) -> int:
    model = load_model(args.config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    data = run(model.branching, model.displacement, args.n, MODES, seed=args.seed)
    write_csv(outdir / "curves.csv", ["m", "x", "lower", "exact", "upper"], data.table())
    reports = [check_sandwich(data)]
    reports += _assumption_reports(model, args)
    gt = check_joint_tail(model.displacement, args.eta1, "GT", model.branching, horizon=args.n)
    reports.append(gt)
    if gt.passed:
        reports.append(pointwise_bounds_check(data, gt.info["B"], args.eta1))
    extra = {}
    if all(r.passed for r in reports[1:3]):
        br = reports[1].info
        params = choose_params(br["k0"], br["m0"], args.eps0, args.a, args.M0, h=model.grid.h, min_mean=br["inf_mean"])
        extra["params"] = params.to_dict()
        shifted = model.displacement.shifted(reports[2].info["shift"])
        exact = run(model.branching, shifted, args.n, ["exact"], seed=args.seed)
        reports += [verify_bounded(exact, params, True), right_tail_check(exact, params)]
    table = tightness_report(model.branching, model.displacement, _ints(args.horizons), args.reps, args.delta, args.seed, args.node_cap, args.threads)
    write_csv(outdir / "tightness.csv", ["n", "median", "q_lo", "q_hi", "width", "reps", "seed"], table.csv_rows())
    extra["tightness"] = [list(r) for r in table.csv_rows()]
    doc = _document("report", args, model, reports, extra)
    (outdir / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(json.dumps({"pass": doc["pass"], "out": str(outdir)}, sort_keys=True) + "\n")
    return 0 if doc["pass"] else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _unit_interval(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gbrw", description="Generalized branching random walks: simulation, recursions, checks.")
    p.add_argument("--version", action="version", version=f"gbrw {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n_default=12):
        sp.add_argument("--config", required=True, help="model JSON file")
        sp.add_argument("--n", type=int, default=n_default, help="horizon")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=_positive_int, default=None, help="worker cap (default: $GBRW_THREADS)")

    def analysis(sp):
        sp.add_argument("--eta1", type=_unit_interval, default=0.05)
        sp.add_argument("--eps0", type=_unit_interval, default=0.05)
        sp.add_argument("--a", type=float, default=1.0)
        sp.add_argument("--M0", type=float, default=1.0)

    sp = sub.add_parser("simulate", help="recentered quantile table of the simulated maximum")
    sp.add_argument("--config", required=True)
    sp.add_argument("--n", default="5,10,15,20", help="comma separated horizons")
    sp.add_argument("--reps", type=_positive_int, default=100_000)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--node-cap", dest="node_cap", type=_positive_int, default=DEFAULT_NODE_CAP)
    sp.add_argument("--threads", type=_positive_int, default=None)
    sp.add_argument("--out", default=None, help="CSV path (default: stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("recurse", help="tail curves from the exact and bound recursions")
    common(sp)
    sp.add_argument("--modes", default="lower,exact,upper")
    sp.add_argument("--out", default=None, help="CSV path (default: stdout)")
    sp.add_argument("--report", default=None, help="optional JSON sandwich report path")
    sp.set_defaults(func=cmd_recurse)

    sp = sub.add_parser("verify", help="run one verification and print its JSON report")
    sp.add_argument("what", choices=["pwbounds", "lyapunov", "sandwich", "assumptions"])
    common(sp)
    analysis(sp)
    sp.add_argument("--out", default=None, help="also write the JSON report here")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("params", help="choose a Lyapunov parameter bundle")
    sp.add_argument("--k0", type=_positive_int, required=True)
    sp.add_argument("--m0", type=float, required=True)
    sp.add_argument("--eps0", type=float, required=True)
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--M0", type=float, required=True)
    sp.add_argument("--c1", type=float, default=None)
    sp.add_argument("--h", type=float, default=0.05)
    sp.add_argument("--min-mean", dest="min_mean", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("report", help="recursion, checks and tightness table in one directory")
    common(sp)
    analysis(sp)
    sp.add_argument("--horizons", default="5,10,15,20")
    sp.add_argument("--reps", type=_positive_int, default=100_000)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--node-cap", dest="node_cap", type=_positive_int, default=DEFAULT_NODE_CAP)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_report)
    return p


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    set_threads(getattr(args, "threads", None))
    try:
        return args.func(args)
    except (ConfigError, PreconditionError, ValueError) as e:
        print(f"gbrw: error: {e}", file=sys.stderr)
        if isinstance(e, ConfigError):
            print(SCHEMA_HELP, file=sys.stderr)
        return 2
    except GBRWError as e:
        print(f"gbrw: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
