"""Command-line interface.

Subcommands map one-to-one onto library operations:

    simulate          full pipeline -> trace CSV, plot CSV, figures, report JSON
    synth-gains       predesign phase -> gains + fusion summary JSON
    bounds            fusion-step certificates -> bound report JSON
    audit-privacy     counterfactual non-identifiability audit -> JSON
    compare-channels  quadratic index with/without an extra channel -> JSON
    optimize-epsilon  coupling-scalar grid search -> JSON

Exit codes: 0 stabilized/ok, 2 diverged, 3 configuration error, 4 numeric
failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import glob as globmod
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import compare_channel_addition, optimize_epsilon
from .errors import NumericFailure, ScenarioError
from .graph import build_weights
from .privacy import ReferenceWorld, run_audit
from .scenario import bundled_scenario_names, load_scenario
from .simulate import (
    prepare,
    run,
    write_plot_csv,
    write_report_json,
    write_share_log_csv,
    write_trace_csv,
)

__all__ = ["build_parser", "main"]

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopstab",
        description="Cooperative stabilization of multi-channel systems with private agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument(
            "--scenario",
            required=True,
            help=f"scenario JSON path or bundled name ({', '.join(bundled_scenario_names())})",
        )
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    sim = sub.add_parser("simulate", help="run the closed loop and write trace/report/figures")
    add_common(sim)
    sim.add_argument("--horizon", type=int, default=None, help="override the scenario horizon")
    sim.add_argument("--privacy", choices=("on", "off"), default="on")
    sim.add_argument("--m-steps", default=None, help="fusion rounds per step (integer or 'auto')")
    sim.add_argument("--sweep", default=None, help="glob of scenario files to run as a batch")
    sim.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    for name, help_text in (
        ("synth-gains", "run the distributed gain predesign and report gains"),
        ("bounds", "compute the fusion-step bound certificates"),
        ("compare-channels", "compare the quadratic index with an added channel"),
        ("optimize-epsilon", "grid-search the privacy coupling scalar"),
    ):
        p = sub.add_parser(name, help=help_text)
        add_common(p)
        if name == "compare-channels":
            p.add_argument(
                "--b-new",
                default=None,
                help="comma-separated added actuation column (default: scenario channel_addition)",
            )
        if name == "optimize-epsilon":
            p.add_argument("--grid", type=int, default=200)

    audit = sub.add_parser("audit-privacy", help="non-identifiability audit for one agent pair")
    add_common(audit)
    audit.add_argument("--target", type=int, default=None, help="audited agent (zero-based)")
    audit.add_argument("--adversary", type=int, default=None, help="curious neighbor (zero-based)")
    audit.add_argument(
        "--alt-pi",
        default="0.1,0.2,0.3,0.4,0.5,0.6",
        help="comma-separated alternative private scalars",
    )
    audit.add_argument("--steps", type=int, default=None, help="online steps to audit")
    return parser


def _load(args):
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
        sc.noise = type(sc.noise)(sc.noise.sigma_w, sc.noise.sigma_v, args.seed)
    return sc


def _outdir(args, sc) -> Path:
    out = Path(args.out) / sc.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, default=float) + "\n")


def _cmd_simulate_one(scenario_path, args) -> int:
    sc = load_scenario(scenario_path)
    if args.seed is not None:
        sc.seed = args.seed
        sc.noise = type(sc.noise)(sc.noise.sigma_w, sc.noise.sigma_v, args.seed)
    if args.horizon is not None:
        sc.horizon = args.horizon
    m_override = None
    if args.m_steps is not None:
        m_override = args.m_steps if args.m_steps == "auto" else int(args.m_steps)
    out = _outdir(args, sc)
    result = run(sc, privacy=(args.privacy == "on"), m_override=m_override)
    write_trace_csv(result.trace, out / "trace.csv")
    write_plot_csv(result.trace, out / "plot_data.csv")
    write_report_json(result, out / "report.json")
    if not args.no_figures:
        from . import plots

        plots.render_trajectory(result.trace, sc, out / "trajectory.png")
        plots.render_error(result.trace, sc, out / "position_error.png")
    verdict = "stabilized" if result.stabilized else "diverged"
    print(
        f"{sc.name}: {verdict} (fusion steps {result.m_used}, "
        f"rho={result.rho_f:.4f}, final error {result.trace.final_window_error():.4g})"
    )
    return result.exit_code


def _cmd_simulate(args) -> int:
    if args.sweep:
        paths = sorted(globmod.glob(args.sweep))
        if not paths:
            print(f"no scenarios match {args.sweep!r}", file=sys.stderr)
            return EXIT_CONFIG
        codes = []
        with concurrent.futures.ProcessPoolExecutor() as pool:
            futures = [pool.submit(_cmd_simulate_one, p, args) for p in paths]
            for fut in futures:
                codes.append(fut.result())
        return max(codes)
    return _cmd_simulate_one(args.scenario, args)


def _cmd_synth_gains(args) -> int:
    sc = _load(args)
    out = _outdir(args, sc)
    prep = prepare(sc)
    payload = {
        "scenario": sc.name,
        "gramian_rounds": {
            "b": prep.synthesis.b_fusion.rounds_used,
            "c": prep.synthesis.c_fusion.rounds_used,
        },
        "gains": [
            {"k": g.k_gain.tolist(), "l": g.l_gain.tolist()} for g in prep.synthesis.gains
        ],
        "kappa": prep.bounds.to_dict().get("kappa"),
    }
    _write_json(out / "gains.json", payload)
    write_share_log_csv(prep.synthesis.b_fusion, out / "input_gramian_share_log.csv")
    write_share_log_csv(prep.synthesis.c_fusion, out / "output_gramian_share_log.csv")
    print(f"{sc.name}: gains synthesized in "
          f"{prep.synthesis.b_fusion.rounds_used}+{prep.synthesis.c_fusion.rounds_used} rounds")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    sc = _load(args)
    out = _outdir(args, sc)
    b = prepare(sc).bounds
    _write_json(out / "bounds.json", b.to_dict())
    print(
        f"{sc.name}: m1_bar={b.m1_bar:.3f} m2_bar={b.m2_bar:.3f} "
        f"lambda={b.lam:.4f} lambda_tilde={b.lam_tilde:.4f}"
    )
    return EXIT_OK


def _cmd_audit(args) -> int:
    sc = _load(args)
    out = _outdir(args, sc)
    target = args.target if args.target is not None else sc.audit_target
    adversary = args.adversary if args.adversary is not None else sc.audit_adversary
    if args.steps is not None:
        sc.audit_steps = args.steps
    sc.horizon = max(sc.audit_steps, 1)
    prep = prepare(sc)
    result = run(sc, privacy=True, prepared=prep)
    world = ReferenceWorld.build(
        sc.plant,
        prep.w,
        prep.pw,
        gramian_rounds=(
            result.synthesis.b_fusion.rounds_used,
            result.synthesis.c_fusion.rounds_used,
        ),
        m2=result.m_used,
        innovations=list(result.trace.innovations_window),
    )
    alt_pis = [float(v) for v in args.alt_pi.split(",") if v.strip()]
    report = run_audit(world, target, adversary, alt_pis, inference_pis=alt_pis)
    _write_json(out / "privacy_audit.json", report.to_dict())
    from .privacy import adversary_view

    view = adversary_view(world, target, adversary)
    (out / "adversary_view.csv").write_text(
        "message\n" + "\n".join(view.lines) + "\n"
    )
    identical = sum(1 for wrl in report.worlds if wrl["identical"])
    print(
        f"{sc.name}: topology condition {report.topology_ok}; "
        f"{identical}/{len(report.worlds)} counterfactual worlds indistinguishable"
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    sc = _load(args)
    out = _outdir(args, sc)
    if args.b_new is not None:
        b_new = np.array([float(v) for v in args.b_new.split(",")])
    elif sc.channel_addition is not None:
        b_new = sc.channel_addition
    else:
        print("no added channel: pass --b-new or set channel_addition in the scenario",
              file=sys.stderr)
        return EXIT_CONFIG
    s0 = sc.error_state(sc.initial_state)
    j0, j1, monotone = compare_channel_addition(sc.plant, b_new, s0)
    payload = {"scenario": sc.name, "j_without": j0, "j_with": j1, "monotone": monotone,
               "b_new": b_new.tolist()}
    _write_json(out / "channel_comparison.json", payload)
    print(f"{sc.name}: J without={j0:.6g} with={j1:.6g} monotone={monotone}")
    return EXIT_OK


def _cmd_optimize_eps(args) -> int:
    sc = _load(args)
    out = _outdir(args, sc)
    w = build_weights(sc.graph, sc.weight_rule)
    eps_star, lam_star = optimize_epsilon(w, grid=args.grid)
    payload = {"scenario": sc.name, "epsilon_star": eps_star, "lambda_tilde_star": lam_star}
    _write_json(out / "epsilon_optimization.json", payload)
    print(f"{sc.name}: epsilon*={eps_star:.4f} lambda~*={lam_star:.4f}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "synth-gains": _cmd_synth_gains,
    "bounds": _cmd_bounds,
    "audit-privacy": _cmd_audit,
    "compare-channels": _cmd_compare,
    "optimize-epsilon": _cmd_optimize_eps,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
