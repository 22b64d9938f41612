"""Command-line entry points for the toolkit."""

from __future__ import annotations

import argparse
import json
import sys

from . import allocation, costs, session as sess, staircase, transport
from .psychometric import (PFFamily, bootstrap_se, deviance_gof, fit_pf,
                           fit_report, read_trials_csv, render_fit_report)


def _cmd_plan_jnd(args: argparse.Namespace) -> int:
    device = staircase.DeviceRange(args.c_min, args.c_max)
    if args.pedestal is not None and args.k is not None:
        plan = staircase.adapted_phase_plan(args.pedestal, args.k, device)
        if plan.terminal:
            print(f"terminal: prediction "
                  f"{staircase.weber_predict(args.pedestal, args.k):.3f} ppm "
                  f"exceeds the device maximum {device.c_max} ppm")
            return 0
    else:
        plan = staircase.initial_phase_plan(device, args.step, args.subinterval)
    state = staircase.schedule_trials(plan, args.seed, device, args.step)
    print(staircase.format_schedule(state))
    return 0


def _cmd_simulate_jnd(args: argparse.Namespace) -> int:
    k = dict(kv.split("=") for kv in args.observer.split(","))["k"]
    sim = staircase.simulate_session(float(k), args.seed, beta=args.beta)
    out = {
        "thresholds_ppm": list(sim.thresholds),
        "jnds_ppm": list(sim.jnds),
        "weber_k": sim.weber_k,
        "phase_steps_ppm": list(sim.phase_steps),
        "n_phases": sim.n_phases,
        "n_trials": sim.n_trials,
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_fit_pf(args: argparse.Namespace) -> int:
    trials = read_trials_csv(args.trials)
    fit = fit_pf(trials, PFFamily(args.family))
    se = bootstrap_se(fit, trials, n=args.bootstrap, seed=args.seed) \
        if args.bootstrap else None
    gof = deviance_gof(fit, trials, n_sim=args.gof_sims, seed=args.seed) \
        if args.gof_sims else None
    print(render_fit_report(fit_report(fit, se, gof)))
    return 0


def _cmd_simulate_smell(args: argparse.Namespace) -> int:
    scene = transport.load_scene(args.scene) if args.scene \
        else transport.desk_scene()
    mesh = transport.build_mesh(scene, args.cells)
    probe = tuple(float(v) for v in args.probe.split(",")) if args.probe \
        else transport.DESK_PROBE if not args.scene else None
    series, wall = transport.simulate(scene, mesh, duration=args.duration,
                                      sample_rate=args.sample_rate, probe=probe)
    if args.out:
        transport.write_series_csv(series, args.out)
        print(f"wrote {len(series)} samples to {args.out}")
    else:
        for t, c in zip(series.t, series.c):
            print(f"{t:.2f},{c:.6f}")
    print(f"# mesh {mesh.resolution} wall_time_s {wall:.3f}", file=sys.stderr)
    return 0


def _cmd_print_costs(args: argparse.Namespace) -> int:
    cfg = costs.load_cost_config(args.config) if args.config else costs.CostConfig()
    print("budgets:")
    for b in cfg.budgets:
        print(f"  {b.label}: value={b.value} levels={b.level_count}")
    print("smell costs:")
    for scen, c in cfg.smell_costs.items():
        print(f"  {scen}: {c}")
    for name, ladder in (("visual", cfg.visual_ladder), ("audio", cfg.audio_ladder)):
        print(f"{name} ladder ({len(ladder)} levels):")
        for lv in ladder.levels:
            print(f"  {lv.index:4d}  {lv.descriptor:>12}  cost={lv.cost:.6f}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    coeffs = allocation.default_coefficients(args.model.upper())
    if args.coeffs:
        with open(args.coeffs, "r", encoding="utf-8") as fh:
            coeffs = allocation.coefficients_from_json(fh.read())
    try:
        b = allocation.budget_regressor(costs.budget(args.budget))
    except costs.UnknownBudgetError:
        b = float(args.budget)
    pred = allocation.predict(coeffs, b, args.scenario)
    print(json.dumps({
        "model": coeffs.model_kind.value,
        "budget_regressor": b,
        "scenario": args.scenario,
        "smell_logit": pred.smell_logit,
        "smell_prob": pred.smell_prob,
        "smell_on": pred.smell_on,
        "visual_pct": pred.visual_pct,
        "audio_pct": pred.audio_pct,
        "clamped": pred.clamped,
    }, indent=2))
    return 0


def _cmd_fit_model(args: argparse.Namespace) -> int:
    records = allocation.read_records_csv(args.records)
    coeffs = allocation.fit(records, args.kind.upper(), alpha=args.alpha,
                            aggregate=args.aggregate)
    text = allocation.coefficients_to_json(coeffs)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote coefficients to {args.out}")
    else:
        print(text)
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    records = allocation.read_records_csv(args.records)
    with open(args.coeffs, "r", encoding="utf-8") as fh:
        coeffs = allocation.coefficients_from_json(fh.read())
    scenario_map = dict(kv.split("=") for kv in args.scenario_map.split(",")) \
        if args.scenario_map else None
    summary = allocation.validate(coeffs, records, scenario_map=scenario_map)
    print(json.dumps({
        "visual_mae_pct": summary.visual_mae,
        "audio_mae_pct": summary.audio_mae,
        "smell_mae": summary.smell_mae,
        "per_budget_smell_error": dict(summary.per_budget_smell_error),
        "n_groups": summary.n_groups,
    }, indent=2))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    cfg = costs.load_cost_config(args.config) if args.config else None
    serve(cfg, host=args.host, port=args.port, store_path=args.store)
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    cfg = costs.load_cost_config(args.config) if args.config else costs.CostConfig()
    logs = sess.load(args.log)
    for log in logs:
        sess.replay(cfg, log)
        print(f"session {log.session_id}: {len(log.events)} events, "
              f"{len(log.records)} records replayed OK")
    return 0


def _cmd_export_csv(args: argparse.Namespace) -> int:
    logs = sess.load(args.log)
    records = sess.export_records(logs)
    allocation.write_records_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trisense",
        description="tri-modal rendering-budget toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan-jnd", help="print a discrimination-phase schedule")
    p.add_argument("--c-min", type=float, default=1.2)
    p.add_argument("--c-max", type=float, default=11.2)
    p.add_argument("--step", type=float, default=0.4)
    p.add_argument("--subinterval", type=int, default=0, choices=(0, 1, 2))
    p.add_argument("--pedestal", type=float, help="plan an adapted phase")
    p.add_argument("--k", type=float, help="Weber constant for the adapted phase")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_plan_jnd)

    p = sub.add_parser("simulate-jnd", help="run a synthetic adaptive session")
    p.add_argument("--observer", default="k=1.91", help="e.g. k=1.91")
    p.add_argument("--beta", type=float, default=1.12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_simulate_jnd)

    p = sub.add_parser("fit-pf", help="fit a psychometric function to trial CSV")
    p.add_argument("trials")
    p.add_argument("--family", default="logistic",
                   choices=[f.value for f in PFFamily])
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--gof-sims", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_fit_pf)

    p = sub.add_parser("simulate-smell", help="run the transport solver")
    p.add_argument("--scene", help="YAML scene file (default: bundled desk scene)")
    p.add_argument("--cells", type=int, default=4096)
    p.add_argument("--duration", type=float, default=transport.DEFAULT_DURATION)
    p.add_argument("--sample-rate", type=float, default=transport.DEFAULT_SAMPLE_RATE)
    p.add_argument("--probe", help="x,y,z in metres")
    p.add_argument("--out", help="write the series CSV here")
    p.set_defaults(fn=_cmd_simulate_smell)

    p = sub.add_parser("print-costs", help="dump ladders, budgets and smell costs")
    p.add_argument("--config", help="YAML cost config")
    p.set_defaults(fn=_cmd_print_costs)

    p = sub.add_parser("predict", help="evaluate the allocation model")
    p.add_argument("--model", default="m1", choices=("m1", "m2", "M1", "M2"))
    p.add_argument("--budget", default="B4", help="budget label or regressor value")
    p.add_argument("--scenario")
    p.add_argument("--coeffs", help="JSON coefficient file (default: bundled)")
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("fit-model", help="fit the allocation model to records")
    p.add_argument("--records", required=True)
    p.add_argument("--kind", default="m1", choices=("m1", "m2", "M1", "M2"))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--aggregate", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_fit_model)

    p = sub.add_parser("validate", help="score coefficients against records")
    p.add_argument("--records", required=True)
    p.add_argument("--coeffs", required=True)
    p.add_argument("--scenario-map", help="e.g. Kitti=Car")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("serve", help="run the session HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8666)
    p.add_argument("--config", help="YAML cost config")
    p.add_argument("--store", help="append completed session logs here")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("replay", help="verify a persisted session log")
    p.add_argument("log")
    p.add_argument("--config", help="YAML cost config")
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("export-csv", help="export committed records as CSV")
    p.add_argument("log")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_export_csv)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
