"""Command-line entry point: ``ltlplan {compile,plan,calibrate,evaluate,baseline}``.

Settings are resolved as command-line flags over ``--config`` JSON over
built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .conformal import CalibrationModel, CalibrationSet, calibrate
from .experiments import calibration_set, load_suite, run_experiment_suite, summary_table
from .ltl import LTLSyntaxError, NonCoSafe, UnknownAtom, export_dot, load_atoms
from .mission import (GATING_MODES, HUMAN_MODES, HumanAssistDenied, MissionConfig, MissionInfeasible,
                      compile_task, make_scorer, resolve_scenario, run_flat_baseline, run_mission)

EXIT_OK, EXIT_ERROR, EXIT_FAILED, EXIT_DENIED, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

SCORERS = ("oracle", "noisy", "uniform", "tied", "remote")

DEFAULTS = {
    "scenario": "kitchen",
    "scorer": "oracle",
    "scorer_params": {},
    "alpha": 0.05,
    "delta": 1,
    "T": 7,
    "seed": 0,
    "human_assist": "scripted-oracle",
    "gating": "both",
    "cp_method": "vanilla",
    "n_calibration": 50,
}


def _settings(args, keys) -> dict:
    """Defaults, then the config file, then explicit flags."""
    out = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
        out.update({k: v for k, v in cfg.items() if k in keys})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _add_common(p, *, scorer=True):
    p.add_argument("--config", help="JSON file with settings (flags take precedence)")
    p.add_argument("--seed")
    if scorer:
        p.add_argument("--scorer", choices=SCORERS)
        p.add_argument("--scorer-params", dest="scorer_params", type=json.loads,
                       help="JSON object passed to the scorer constructor")
    p.add_argument("--alpha", type=float)
    p.add_argument("-T", "--horizon", dest="T", type=int, help="per-sub-task decision budget")


def _seed(v):
    try:
        return int(v)
    except (TypeError, ValueError):
        return v


def _atoms_for(args, scenario):
    return load_atoms(args.atoms) if getattr(args, "atoms", None) else list(scenario.atoms)


def cmd_compile(args) -> int:
    sc = resolve_scenario(args.scenario or DEFAULTS["scenario"])
    formula = args.formula or sc.formula
    f, dfa, pruned = compile_task(formula, _atoms_for(args, sc))
    text = export_dot(dfa) if args.format == "dot" else json.dumps(
        {"dfa": dfa.to_json(), "pruned": pruned.to_json()}, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text)
    print(f"states: {dfa.n_states} edges: {dfa.n_edges}", file=sys.stderr if not args.output else sys.stdout)
    return EXIT_OK if pruned.satisfiable else EXIT_INFEASIBLE


def cmd_plan(args) -> int:
    keys = ["formula", "scenario", "scorer", "scorer_params", "alpha", "delta", "T", "seed", "human_assist",
            "gating", "cp_method", "calibration", "n_calibration"]
    s = _settings(args, keys)
    if args.interactive:
        s["human_assist"] = "interactive"
    sc = resolve_scenario(s["scenario"])
    s.setdefault("formula", sc.formula)
    s["seed"] = _seed(s["seed"])
    atoms = _atoms_for(args, sc)
    cfg = MissionConfig(**s, atoms=atoms)
    try:
        trace = run_mission(cfg, scenario=sc)
    except MissionInfeasible as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except HumanAssistDenied as e:
        trace = e.trace
        _write_trace(args, trace)
        print(f"denied: {e}", file=sys.stderr)
        return EXIT_DENIED
    _write_trace(args, trace)
    for st in trace.steps:
        print(f"{st.state}->{st.target_state} {st.decision:<16} {st.outcome:<9} {st.actor}")
    for ev in trace.events:
        print("event:", ev["kind"], ev.get("reason", ""))
    print(f"status: {trace.status}  joint confidence: {trace.joint_confidence:.4f}")
    return EXIT_OK if trace.status != "failed" else EXIT_FAILED


def _write_trace(args, trace):
    if args.trace:
        Path(args.trace).write_text(trace.dumps())


def cmd_calibrate(args) -> int:
    s = _settings(args, ["scorer", "scorer_params", "alpha", "T", "seed", "cp_method", "n_calibration"])
    seed = _seed(s["seed"])
    if args.input:
        cal = CalibrationSet.load(args.input)
        cal = CalibrationSet(cal.points, s["cp_method"], s["alpha"], cal.lam, cal.k_reg)
    else:
        scorer = make_scorer(s["scorer"], s["scorer_params"], seed)
        cal = calibration_set(scorer, s["n_calibration"], alpha=s["alpha"], method=s["cp_method"],
                              T=s["T"], seed=seed)
    if args.save_set:
        cal.dump(args.save_set)
    model = calibrate(cal)
    model.dump(args.output)
    q = "degenerate (full sets)" if model.degenerate else f"{model.qhat:.6f}"
    print(f"{model.method} N={model.n} alpha={model.alpha} qhat={q} -> {args.output}")
    return EXIT_OK


def _suite_run(args, baseline: bool) -> int:
    s = _settings(args, ["scorer", "scorer_params", "alpha", "delta", "T", "seed", "gating", "cp_method",
                         "human_assist"])
    seed = _seed(s["seed"])
    suite = load_suite(args.suite)
    scorer = make_scorer(s["scorer"], s["scorer_params"], seed)
    model = CalibrationModel.load(args.calibration) if args.calibration else None
    report = run_experiment_suite(suite, scorer=scorer, gating=s["gating"], cp_method=s["cp_method"],
                                  alpha=s["alpha"], delta=s["delta"], T=s["T"], seed=seed, baseline=baseline,
                                  model=model, human_assist=s["human_assist"])
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=1, sort_keys=True))
    print(summary_table(report))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    return _suite_run(args, args.baseline)


def cmd_baseline(args) -> int:
    if args.formula:
        s = _settings(args, ["scenario", "scorer", "scorer_params", "T", "seed"])
        sc = resolve_scenario(s["scenario"])
        scorer = make_scorer(s["scorer"], s["scorer_params"], _seed(s["seed"]))
        trace = run_flat_baseline(args.formula, args.instruction or args.formula, sc, scorer,
                                  atoms=_atoms_for(args, sc), T=s["T"], seed=_seed(s["seed"]))
        _write_trace(args, trace)
        print(f"status: {trace.status}  decisions: {len(trace.steps)}")
        return EXIT_OK if trace.status != "failed" else EXIT_FAILED
    return _suite_run(args, True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ltlplan", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a formula to a DFA")
    p.add_argument("formula", nargs="?", help="formula text (default: the scenario's)")
    p.add_argument("--atoms", help="JSON file of atomic propositions")
    p.add_argument("--scenario", help="built-in scenario name or scenario JSON path")
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("plan", help="run one mission")
    _add_common(p)
    p.add_argument("formula", nargs="?")
    p.add_argument("--atoms")
    p.add_argument("--scenario")
    p.add_argument("--delta", type=int)
    p.add_argument("--gating", choices=GATING_MODES)
    p.add_argument("--cp-method", dest="cp_method", choices=("vanilla", "raps"))
    p.add_argument("--calibration", help="fitted model JSON (default: fit on the fly)")
    p.add_argument("--n-calibration", dest="n_calibration", type=int)
    p.add_argument("--human-assist", dest="human_assist", choices=HUMAN_MODES)
    p.add_argument("--interactive", action="store_true", help="ask a person on stdin when help is needed")
    p.add_argument("--trace", help="write the plan trace JSON here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("calibrate", help="build a calibration set and fit the conformal quantile")
    _add_common(p)
    p.add_argument("--method", dest="cp_method", choices=("vanilla", "raps"))
    p.add_argument("-n", dest="n_calibration", type=int)
    p.add_argument("--input", help="existing calibration set JSON")
    p.add_argument("--save-set", help="also write the calibration set JSON")
    p.add_argument("-o", "--output", default="calibration.json")
    p.set_defaults(func=cmd_calibrate)

    for name, fn, help_ in (("evaluate", cmd_evaluate, "run an experiment suite"),
                            ("baseline", cmd_baseline, "flat single-prompt comparison")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--suite", help="suite JSON (default: bundled standard suite)")
        p.add_argument("--delta", type=int)
        p.add_argument("--gating", choices=GATING_MODES)
        p.add_argument("--cp-method", dest="cp_method", choices=("vanilla", "raps"))
        p.add_argument("--human-assist", dest="human_assist", choices=HUMAN_MODES)
        p.add_argument("--calibration")
        p.add_argument("--report", help="write the JSON report here")
        if name == "evaluate":
            p.add_argument("--baseline", action="store_true", help="also run the flat baseline")
        else:
            p.add_argument("formula", nargs="?", help="run a single flat mission instead of a suite")
            p.add_argument("--instruction")
            p.add_argument("--atoms")
            p.add_argument("--scenario")
            p.add_argument("--trace")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LTLSyntaxError, NonCoSafe, UnknownAtom, ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
