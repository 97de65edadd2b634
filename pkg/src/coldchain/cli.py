"""Command line entry point: ``coldchain {gen,solve,bssaa,experiment,export-lp}``.

Exit status is 0 on success, 2 when some replication or arm failed, 1 on error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bssaa import SaaConfig, build_for, grouping_of, run_bssaa, upper_bound_run
from .demand import sample_scenarios
from .experiments import ExperimentSpec, Shape, make_synthetic_instance, r1_spec, r2_spec, r3_spec, run_experiment
from .instance import load_instance
from .metrics import SolutionBundle, evaluate, write_fic_csv, write_sr_csv
from .model import validate_topology
from .mps import export_lp
from .solver import Status, solve, write_solution

log = logging.getLogger("coldchain")

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2


def _saa_args(p: argparse.ArgumentParser, replications: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--sample-size", type=int, default=50, help="training scenarios S")
    p.add_argument("--service-level", type=float, default=0.7, help="required satisfaction probability p")
    if replications:
        p.add_argument("--replications", type=int, default=10, help="replications M")
        p.add_argument("--posterior-size", type=int, default=300, help="posterior sample size S'")
        p.add_argument("--workers", type=int, default=1, help="parallel replications")
    p.add_argument("--method", default="auto", help="auto | simplex | highs | compact")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coldchain", description="Chance-constrained vaccine cold-chain planning.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic instance")
    g.add_argument("--out", required=True, help="instance JSON path")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tiers", type=int, default=4, choices=(3, 4))
    g.add_argument("--regions", type=int, default=2)
    g.add_argument("--districts", type=int, default=3, help="districts per region")
    g.add_argument("--clinics", type=int, default=4, help="clinics per district")
    g.add_argument("--periods", type=int, default=12)
    g.add_argument("--capacity-scale", type=float, default=None)
    g.add_argument("--demand-scale", type=float, default=1.0)

    s = sub.add_parser("solve", help="solve the deterministic equivalent at fixed penalties")
    s.add_argument("instance")
    _saa_args(s, replications=False)
    s.add_argument("--penalty", type=float, default=1.0, help="uniform shortage penalty")
    s.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("bssaa", help="penalty bisection with replications and posterior check")
    b.add_argument("instance")
    _saa_args(b)
    b.add_argument("--upper-bound", action="store_true", help="also run the relaxed level and report gaps")
    b.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("experiment", help="run an experiment spec (JSON) or a canned design")
    e.add_argument("spec", help="spec JSON path, or R1 / R2 / R3")
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--sample-size", type=int, default=None)
    e.add_argument("--service-level", type=float, default=None)
    e.add_argument("--replications", type=int, default=None)
    e.add_argument("--out", required=True, help="bundle directory")

    x = sub.add_parser("export-lp", help="write the deterministic equivalent as fixed MPS")
    x.add_argument("instance")
    _saa_args(x, replications=False)
    x.add_argument("--penalty", type=float, default=1.0)
    x.add_argument("--out", required=True, help="MPS path")
    x.add_argument("--no-objsense", action="store_true", help="negate the objective instead of OBJSENSE MAX")
    return ap


def _cmd_gen(a) -> int:
    shape = Shape(
        tiers=a.tiers,
        regions=a.regions,
        districts_per_region=a.districts,
        clinics_per_district=a.clinics,
        capacity_scale=a.capacity_scale,
        demand_scale=a.demand_scale,
        periods=a.periods,
    )
    inst = make_synthetic_instance(shape, a.seed, a.out)
    print(f"wrote {a.out}: {len(inst.topology.nodes)} nodes, {len(inst.catalog)} vaccines, "
          f"capacity scale {inst.meta['capacity_scale']:.4g}")
    return EXIT_OK


def _load_checked(path: str):
    inst = load_instance(path)
    report = validate_topology(inst.topology, inst.demand, inst.horizon)
    for w in report.warnings:
        log.warning("%s: %s", w.code, w.message)
    if not report.ok:
        for v in report.violations:
            print(f"invalid instance: {v.code}: {v.message}", file=sys.stderr)
        raise SystemExit(EXIT_FAIL)
    return inst


def _single_problem(a):
    inst = _load_checked(a.instance)
    cfg = SaaConfig(sample_size=a.sample_size, posterior_size=a.sample_size, replications=1,
                    service_level=a.service_level, master_seed=a.seed, method=a.method)
    scen = sample_scenarios(inst.demand, a.sample_size, cfg.replication_seed(0))
    problem = build_for(inst, scen, cfg).with_penalties(a.penalty)
    for d in problem.diagnostics:
        log.warning("%s", d)
    return inst, scen, problem


def _cmd_solve(a) -> int:
    inst, scen, problem = _single_problem(a)
    sol = solve(problem, method=a.method)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"status": sol.status.value, "objective": sol.objective, "method": sol.method,
               "iterations": sol.iterations, "solve_time": sol.solve_time, "problem": problem.summary()}
    if sol.status is Status.OPTIMAL:
        write_solution(problem, sol, out / "solution.txt")
        report = evaluate(SolutionBundle.from_solution(problem, sol), scen, grouping_of(inst))
        write_sr_csv(report, out / "sr_by_vaccine.csv")
        write_fic_csv(report, out / "fic_by_region.csv")
        summary["sr"] = report.sr_mean()
        summary["fic"] = report.fic_mean()
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(f"{sol.status.value}: objective {sol.objective:.6g} ({sol.method}, {sol.solve_time:.2f}s)")
    return EXIT_OK if sol.status is Status.OPTIMAL else EXIT_FAIL


def _print_table(agg: dict) -> None:
    print(f"{'':6}{'min':>10}{'max':>10}{'avg':>10}")
    for key, label in (("sr", "SR%"), ("fic", "FIC%")):
        s = agg[key]
        print(f"{label:6}{s['min']:10.3f}{s['max']:10.3f}{s['avg']:10.3f}")


def _cmd_bssaa(a) -> int:
    inst = _load_checked(a.instance)
    cfg = SaaConfig(sample_size=a.sample_size, posterior_size=a.posterior_size, replications=a.replications,
                    service_level=a.service_level, master_seed=a.seed, method=a.method, workers=a.workers)
    res = run_bssaa(inst, cfg)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = res.manifest()
    for r in res.succeeded:
        d = out / f"rep{r.index:02d}"
        write_sr_csv(r.training, d / "sr_by_vaccine.csv")
        write_fic_csv(r.training, d / "fic_by_region.csv")
    agg = res.aggregate()
    _print_table(agg)
    print(f"replications {agg['succeeded']}/{agg['replications']}, confidence {res.confidence:.3f}")
    if a.upper_bound:
        ub = upper_bound_run(inst, cfg, lower=res)
        manifest["upper_bound"] = ub.to_json()
        print(f"upper bound at p={ub.relaxed_level:.3g}: gap table (percent)")
        _print_table(ub.gap_table)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")
    if not res.succeeded:
        for r in res.replications:
            print(f"replication {r.index}: {r.error}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PARTIAL if res.partial else EXIT_OK


def _cmd_experiment(a) -> int:
    canned = {"R1": r1_spec, "R2": r2_spec, "R3": r3_spec}
    spec = canned[a.spec.upper()]() if a.spec.upper() in canned else ExperimentSpec.load(a.spec)
    saa = spec.saa
    overrides = {
        "master_seed": a.seed,
        "sample_size": a.sample_size,
        "service_level": a.service_level,
        "replications": a.replications,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "sample_size" in overrides and saa.posterior_size < overrides["sample_size"]:
        overrides["posterior_size"] = overrides["sample_size"]
    spec = replace(spec, saa=replace(saa, **overrides))
    report = run_experiment(spec, a.out)
    for oc in report.arms:
        status = "ok" if oc.ok else f"FAILED ({oc.error})"
        agg = oc.result.aggregate() if oc.result is not None else None
        line = f"{oc.arm.name:28} {status}"
        if agg and agg["succeeded"]:
            line += f"  SR {agg['sr']['avg']:.3f}%  FIC {agg['fic']['avg']:.3f}%"
        print(line)
    for c in report.comparisons:
        if "error" in c:
            continue
        print(f"{c['arm_b']} vs {c['arm_a']} [{c['metric']}]: diff {c['mean_difference']:+.4g}, "
              f"p(two-sided) {c['p_two_sided']:.3g}")
    if all(not oc.ok for oc in report.arms):
        return EXIT_FAIL
    return EXIT_PARTIAL if report.partial else EXIT_OK


def _cmd_export(a) -> int:
    _, _, problem = _single_problem(a)
    export_lp(problem, a.out, objsense=not a.no_objsense)
    print(f"wrote {a.out}: {problem.n_rows} rows, {problem.n_cols} columns, {problem.A.nnz} nonzeros")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {
        "gen": _cmd_gen,
        "solve": _cmd_solve,
        "bssaa": _cmd_bssaa,
        "experiment": _cmd_experiment,
        "export-lp": _cmd_export,
    }
    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
