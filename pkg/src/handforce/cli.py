"""Command-line interface: ``handforce run | check-rigidity | plan-forces | sweep | report``."""

import argparse
import json
import sys

import numpy as np

from . import config
from .errors import ConfigError, HandforceError
from .force_planner import PlannerInputs, plan_contact_forces
from .grasp import gravity_wrench
from .harness import parse_range, run_scenario, sweep
from .rigidity import is_infinitesimally_rigid
from .runlog import RunLog, to_plain

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _fmt(x, digits=4):
    return "-" if x is None else f"{x:.{digits}g}"


def _print_summary(summary, out):
    status = "success" if summary.get("success") else "FAILED"
    print(f"status: {status}", file=out)
    reached = summary.get("reached")
    if reached is not None:
        print(f"waypoints reached: {sum(reached)}/{summary.get('waypoints')}", file=out)
    errs = summary.get("final_errors") or []
    if errs:
        print(f"final error per waypoint (mm): {' '.join(f'{e * 1e3:.4f}' for e in errs)}", file=out)
        print(f"max error: {max(errs) * 1e3:.4f} mm, mean error: {np.mean(errs) * 1e3:.4f} mm", file=out)
    if "max_trd" in summary:
        print(f"max TRD: {summary['max_trd']:.4g} % (realized {summary['max_trd_realized']:.4g} %)", file=out)
    print(f"iterations: {summary.get('iterations', 0)}", file=out)
    failure = summary.get("failure")
    if failure:
        print(f"failure at iteration {failure.get('iteration')}: {failure.get('type')}: {failure.get('message')}", file=out)


def cmd_run(args, out):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.noise_std is not None:
        overrides["plant.noise_pos"] = args.noise_std
    sc = config.load_scenario(args.scenario, overrides)
    kwargs = {} if sc.kind == "yarn" else {"max_iter": args.max_iter, "strict": args.strict}
    log = run_scenario(sc, **kwargs)
    if args.log:
        log.write_jsonl(args.log)
    if args.csv:
        log.write_csv(args.csv)
    print(f"scenario: {sc.name} ({sc.kind})", file=out)
    _print_summary(log.summary, out)
    return EXIT_OK if log.success else EXIT_FAIL


def cmd_check_rigidity(args, out):
    fw = config.load_framework(args.framework)
    ev = is_infinitesimally_rigid(fw)
    verdict = "rigid" if ev.is_rigid else "not rigid"
    print(f"vertices: {fw.m}, edges: {len(fw.edges)}", file=out)
    print(f"rank {ev.rank} (rigid needs {ev.expected_rank}): {verdict}", file=out)
    return EXIT_OK if ev.is_rigid else EXIT_FAIL


def cmd_plan_forces(args, out):
    snap = config.load_snapshot(args.snapshot)
    g_o = gravity_wrench(snap.grasp.mass, snap.gravity_dir)
    plan = plan_contact_forces(PlannerInputs(snap.grasp, snap.framework, snap.friction, g_o, snap.M_c,
                                             snap.v_c, snap.alpha))
    if args.json:
        print(json.dumps(to_plain(plan.to_record())), file=out)
        return EXIT_OK
    print("finger  f_perp(N)  f_par(N)  cone_ratio", file=out)
    for i, (fn, ft, r) in enumerate(zip(plan.f_perp, plan.f_par, plan.margins.ratio)):
        print(f"{i:>6}  {fn:9.5f}  {ft:8.5f}  {r:10.5f}", file=out)
    print(f"friction stage used: {'yes' if plan.friction_solved else 'no'}", file=out)
    print(f"wrench residual: {plan.wrench_residual(g_o):.3e}", file=out)
    return EXIT_OK


def _band(results):
    ok = [r["value"] for r in results if r["success"]]
    return (min(ok), max(ok)) if ok else None


def cmd_sweep(args, out):
    values = parse_range(args.range)
    overrides = {} if args.seed is None else {"seed": args.seed}
    results = sweep(args.scenario, args.param, values, jobs=args.jobs, overrides=overrides)
    print(f"{args.param:>16}  result   modes", file=out)
    for r in results:
        print(f"{r['value']:>16.6g}  {'ok' if r['success'] else 'FAIL':<7}  {','.join(r['modes']) or '-'}", file=out)
    band = _band(results)
    print(f"succeeded: {sum(r['success'] for r in results)}/{len(results)}", file=out)
    if band:
        print(f"success band: [{band[0]:.6g}, {band[1]:.6g}]", file=out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("value,success,modes,max_error_m\n")
            for r in results:
                fh.write(f"{r['value']},{int(r['success'])},{'|'.join(r['modes'])},{_fmt(r['max_error'], 10)}\n")
    return EXIT_OK if all(r["success"] for r in results) else EXIT_FAIL


def cmd_report(args, out):
    try:
        log = RunLog.read_jsonl(args.runlog)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    recs = log.records
    print(f"scenario: {log.scenario}", file=out)
    print(f"records: {len(recs)}", file=out)
    errs = log.waypoint_errors()
    if errs:
        print(f"final error per waypoint (mm): {' '.join(f'{e * 1e3:.4f}' for e in errs)}", file=out)
    ratios = [v for r in recs for v in (r.get("cone_ratio") or []) if v is not None]
    if ratios:
        print(f"max cone ratio: {max(ratios):.4f}", file=out)
    trds = [r["trd"] for r in recs if r.get("trd") is not None]
    if trds:
        print(f"max TRD: {max(trds):.4g} %", file=out)
    flagged = [r["iteration"] for r in recs if r.get("flags")]
    print(f"flagged iterations: {flagged if flagged else 'none'}", file=out)
    if log.summary:
        print(f"status: {'success' if log.success else 'FAILED'}", file=out)
    if args.csv:
        log.write_csv(args.csv)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="handforce", description="Rigidity-based force planning and in-hand manipulation runs.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario (MPC loop or yarn-frame trace)")
    run.add_argument("scenario", help="scenario YAML path or bundled name, e.g. scenarios/egg_ral")
    run.add_argument("--seed", type=int)
    run.add_argument("--noise-std", type=float, help="position observation noise std (m)")
    run.add_argument("--max-iter", type=int, help="override iterations per waypoint")
    run.add_argument("--log", help="write the JSONL run log here")
    run.add_argument("--csv", help="write the flat CSV export here")
    run.add_argument("--strict", action="store_true", help="fail on any constraint-margin warning")
    run.set_defaults(func=cmd_run)

    rig = sub.add_parser("check-rigidity", help="rank test of a contact framework file")
    rig.add_argument("framework")
    rig.set_defaults(func=cmd_check_rigidity)

    pf = sub.add_parser("plan-forces", help="one-shot contact force plan from a snapshot file")
    pf.add_argument("snapshot")
    pf.add_argument("--json", action="store_true", help="print the full decomposition as JSON")
    pf.set_defaults(func=cmd_plan_forces)

    sw = sub.add_parser("sweep", help="run a scenario over a grid of one parameter")
    sw.add_argument("scenario")
    sw.add_argument("--param", required=True, help="dotted config path, e.g. plant.mass")
    sw.add_argument("--range", required=True, help="a:b:n")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--csv")
    sw.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="summarize a JSONL run log")
    rep.add_argument("runlog")
    rep.add_argument("--csv")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HandforceError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
