"""``bellsched`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exact import ExactSizeError, exact_opt
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    emit_summary,
    run_experiment,
    size_dims,
)
from .greedy import greedy_search
from .instance import Family, GeneratorSpec, InstanceError, generate_instance, load_instance, save_instance
from .lp import Z_KEY, build_lp3s, build_lp3x, build_ssp_lp, extract_fractional
from .mps import export_mps
from .rounding import best_of_k, error_bound
from .schedule import HorizonMode, assign_buses, load_profile
from .simplex import solve

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

BUILDERS = {"lp3s": build_lp3s, "lp3x": build_lp3x, "ssp": build_ssp_lp}


def _write(out: str | None, data: bytes) -> None:
    if out in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_bytes(data)


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _load(path: str):
    data = sys.stdin.buffer.read() if path == "-" else Path(path).read_bytes()
    return load_instance(data)


def _solve(model, solver: str, method: str):
    if solver == "bundled":
        sol = solve(model, method=method)
        if not sol.optimal:
            raise RuntimeError(f"LP solve ended with status {sol.status.value}")
        return sol.values, {"status": sol.status.value, "method": sol.method, "iterations": sol.iterations}
    if solver.startswith("cmd:"):
        from .experiment import solve_external

        return solve_external(model, solver[4:]), {"status": "external", "method": "external", "iterations": 0}
    raise ConfigError(f"solver must be 'bundled' or 'cmd:<template>', got {solver!r}")


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    M, N, G = size_dims(args.size)
    inst = generate_instance(GeneratorSpec(Family(args.family), M=M, N=N, gamma_max=G, seed=args.seed,
                                           short_lengths=args.short_lengths))
    _write(args.out, save_instance(inst))
    return EXIT_OK


def cmd_solve_lp(args) -> int:
    inst = _load(args.instance)
    model = BUILDERS[args.model](inst, args.mode)
    values, info = _solve(model, args.solver, args.method)
    doc = {**info, "objective": float(model.objective @ values), "model": model.summary()}
    if args.model == "lp3s":
        frac = extract_fractional(model, values)
        doc["S"] = [S.tolist() for S in frac.S]
        doc["integral"] = frac.is_integral()
    doc["values"] = {name: float(v) for name, v in zip(model.col_names, values) if abs(v) > 1e-12}
    _write(args.out, _json(doc))
    return EXIT_OK


def cmd_greedy(args) -> int:
    inst = _load(args.instance).as_ssp()
    res = greedy_search(inst)
    _write(args.out, _json(res.to_dict()))
    return EXIT_OK


def cmd_round(args) -> int:
    inst = _load(args.instance)
    model = build_lp3s(inst, args.mode)
    values, info = _solve(model, args.solver, args.method)
    frac = extract_fractional(model, values)
    bk = best_of_k(inst, frac, args.trials, args.seed)
    z_lp = float(values[model.var_keys[Z_KEY]])
    buses = assign_buses(inst, bk.best.schedule)
    doc = {
        "lp": {**info, "objective": z_lp},
        "best": bk.best.to_dict(),
        "trials": bk.trials.to_dict(),
        "bound": error_bound(z_lp, max(inst.gammas), inst.M).to_dict(),
        "loads": load_profile(inst, bk.best.schedule, args.mode).loads.tolist(),
        "bus_of": [list(b) for b in buses.bus_of],
        "bus_count": buses.bus_count,
    }
    _write(args.out, _json(doc))
    return EXIT_OK


def cmd_exact(args) -> int:
    inst = _load(args.instance)
    res = exact_opt(inst, args.mode, args.node_budget)
    _write(args.out, _json(res.to_dict()))
    return EXIT_OK


def cmd_export_mps(args) -> int:
    inst = _load(args.instance)
    model = BUILDERS[args.model](inst, args.mode)
    _write(args.out, export_mps(model))
    return EXIT_OK


def _config_from_args(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    overrides = {
        "families": args.family, "sizes": args.size, "instances": args.instances, "seed": args.seed,
        "trials": args.trials, "mode": args.mode, "solver": args.solver, "lp_method": args.method,
        "oracle": args.oracle, "jobs": args.jobs,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(doc)


def _write_outputs(report: ExperimentReport, out: str | None) -> None:
    if out is None:
        _write(None, emit_report(report, "csv"))
        return
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    (root / "report.json").write_bytes(emit_report(report, "json"))
    (root / "results.csv").write_bytes(emit_report(report, "csv"))
    (root / "summary.csv").write_bytes(emit_summary(report))
    for fam in report.families():
        (root / f"results_{fam}.csv").write_bytes(emit_report(report, "csv", family=fam))


def cmd_experiment(args) -> int:
    config = _config_from_args(args)
    report = run_experiment(config)
    _write_outputs(report, args.out)
    for row in report.failures:
        print(f"failed: {row.family} size {row.size} instance {row.instance}: {row.error}", file=sys.stderr)
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_report(args) -> int:
    report = ExperimentReport.from_dict(json.loads(Path(args.report).read_text()))
    if args.format == "summary":
        data = emit_summary(report)
    else:
        data = emit_report(report, args.format, family=args.family)
    _write(args.out, data)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bellsched", description="School bell-time scheduling toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    families = [f.value for f in Family]

    def common(sp, instance=True, out=True):
        if instance:
            sp.add_argument("instance", help="instance JSON file, or - for stdin")
        if out:
            sp.add_argument("--out", help="output file (default stdout)")

    def mode(sp):
        sp.add_argument("--mode", choices=[m.value for m in HorizonMode], default=HorizonMode.PAPER.value)

    def solver(sp):
        sp.add_argument("--solver", default="bundled", help="bundled or cmd:<template> with {mps} and {sol}")
        sp.add_argument("--method", default="auto", choices=["auto", "revised", "highs", "highs-ds"],
                        help="bundled LP method")

    sp = sub.add_parser("gen", help="generate a random instance")
    sp.add_argument("--family", choices=families, default=Family.BASE.value)
    sp.add_argument("--size", default="2p", help="1-4, 1p-4p, or MxNxG")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--short-lengths", action="store_true", help="short-route family: draw lengths from the short range")
    common(sp, instance=False)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("solve-lp", help="solve an LP relaxation")
    common(sp)
    mode(sp)
    solver(sp)
    sp.add_argument("--model", choices=sorted(BUILDERS), default="lp3s")
    sp.set_defaults(func=cmd_solve_lp)

    sp = sub.add_parser("greedy", help="run the bisection greedy on the zero-window version")
    common(sp)
    sp.set_defaults(func=cmd_greedy)

    sp = sub.add_parser("round", help="solve the LP and keep the best of K roundings")
    common(sp)
    mode(sp)
    solver(sp)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_round)

    sp = sub.add_parser("exact", help="brute-force optimum of a tiny instance")
    common(sp)
    mode(sp)
    sp.add_argument("--node-budget", type=int, default=5_000_000)
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("export-mps", help="write an LP model as MPS")
    common(sp)
    mode(sp)
    sp.add_argument("--model", choices=sorted(BUILDERS), default="lp3s")
    sp.set_defaults(func=cmd_export_mps)

    sp = sub.add_parser("experiment", help="run the gap experiment")
    sp.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    sp.add_argument("--family", action="append", choices=families)
    sp.add_argument("--size", action="append")
    sp.add_argument("--instances", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--mode", choices=[m.value for m in HorizonMode])
    sp.add_argument("--solver")
    sp.add_argument("--method", choices=["auto", "revised", "highs", "highs-ds"])
    sp.add_argument("--oracle", choices=["auto", "on", "off"])
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--out", help="output directory (default: CSV on stdout)")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", help="re-emit a saved report.json")
    sp.add_argument("report")
    sp.add_argument("--format", choices=["csv", "json", "summary"], default="csv")
    sp.add_argument("--family", choices=families)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InstanceError, ExactSizeError, FileNotFoundError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"bellsched: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError) as exc:
        print(f"bellsched: failed: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
