"""Calibration data generation and the easy/medium/hard experiment suite."""
from __future__ import annotations

import dataclasses
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .automaton import initial_state, select_subtask
from .conformal import (CalibrationModel, CalibrationPoint, CalibrationSet, calibrate, causal_sets,
                        covers, joint_confidence)
from .ltl import And, AtomicProposition, Eventually, Not, Until, atoms_from_json, parse_ltl
from .mission import (HumanAssistDenied, MissionConfig, compile_task, make_scorer, run_flat_baseline,
                      run_mission)
from .scenarios import kitchen
from .scoring import NoPlanWithinBudget, build_prompt, extend_prompt, oracle_plan, score
from .world import Scenario, ap_satisfied, apply

__all__ = [
    "simple_task_points", "calibration_set", "fit_model", "evaluate_cp", "CPReport",
    "render_instruction", "standard_suite", "load_suite", "run_experiment_suite",
]


def _with_seed(scorer, seed):
    if dataclasses.is_dataclass(scorer) and hasattr(scorer, "seed"):
        return dataclasses.replace(scorer, seed=seed)
    return scorer


def simple_task_points(scorer, n: int, seed: int | str = 0, T: int = 7,
                       scenario: Scenario | None = None) -> list[CalibrationPoint]:
    """Teacher-forced single-sub-task sequences with oracle labels.

    Each sequence moves one random object (named by id, class or synonym) to
    a random other location from a random robot start; its ``T`` prompts follow the ground-truth plan (padded
    with do-nothing) and every step is scored by ``scorer``.
    """
    sc = scenario or kitchen()
    rng = random.Random(f"simple|{seed}")
    points = []
    i = 0
    while len(points) < n:
        i += 1
        obj = rng.choice(sc.world.objects)
        dest = rng.choice([x for x in sc.world.locations if x != obj.location])
        start = rng.choice(sc.world.locations)
        robot = dataclasses.replace(sc.robot, at=start)
        # instructions name an object, its class or a synonym of the class
        names = [obj.id, obj.cls] + [syn for syn, classes in sc.world.synonyms if obj.cls in classes]
        ap = AtomicProposition(1, "move", rng.choice(names), dest)
        if ap_satisfied(sc.world, ap):
            continue
        _, _, pruned = compile_task("F p1", [ap])
        a = select_subtask(pruned, initial_state(pruned))
        try:
            plan = oracle_plan(sc.world, robot, a, T)
        except NoPlanWithinBudget:
            continue
        n_real = sum(1 for d in plan if d.action != 5)
        s = _with_seed(scorer, f"{getattr(scorer, 'seed', 0)}|{seed}|{i}")
        world = sc.world
        prompt = build_prompt(a, world, robot=robot, T=T)
        probs, truth, digests = [], [], []
        for k, d in enumerate(plan):
            sv = score(s, prompt)
            probs.append(tuple(float(x) for x in sv.probs))
            truth.append(sv.index(d))
            digests.append(prompt.digest())
            res = apply(world, robot, d)
            world, robot = res.world, res.robot
            if k + 1 < T:
                ground = dataclasses.replace(prompt.ground, world=world, robot=robot, budget=T - k - 1,
                                             done=k + 1 >= n_real)
                prompt = extend_prompt(prompt, d, res.feedback, ground)
        points.append(CalibrationPoint(tuple(probs), tuple(truth), tuple(digests)))
    return points


def calibration_set(scorer, n: int = 50, *, alpha: float = 0.05, method: str = "vanilla",
                    T: int = 7, seed: int | str = 0, **raps) -> CalibrationSet:
    return CalibrationSet(tuple(simple_task_points(scorer, n, seed, T)), method, alpha, **raps)


def fit_model(scorer, n: int = 50, *, alpha: float = 0.05, method: str = "vanilla", T: int = 7,
              seed: int | str = 0, **raps) -> CalibrationModel:
    return calibrate(calibration_set(scorer, n, alpha=alpha, method=method, T=T, seed=seed, **raps))


@dataclass
class CPReport:
    coverage: float
    n: int
    mean_set_size: float
    non_singleton: int
    size_histogram: dict = field(default_factory=dict)
    mean_product_size: float = 0.0


def evaluate_cp(model: CalibrationModel, points: Iterable[CalibrationPoint]) -> CPReport:
    """Coverage of the causal product sets plus per-step set-size statistics."""
    points = list(points)
    hits = 0
    sizes = []
    products = []
    for p in points:
        sets = causal_sets(model, [np.asarray(v) for v in p.probs])
        hits += covers(sets, p.truth)
        sizes += [s.size for s in sets]
        products.append(float(np.prod([s.size for s in sets])))
    hist = Counter(sizes)
    return CPReport(hits / len(points), len(points), float(np.mean(sizes)),
                    sum(1 for s in sizes if s > 1), dict(sorted(hist.items())), float(np.mean(products)))


# ---------------------------------------------------------------------------
# suite

def _lower(s: str) -> str:
    return s[0].lower() + s[1:]


def render_instruction(formula: str, atoms: Sequence[AtomicProposition]) -> str:
    """Plain-English rendering of a conjunction of eventualities and until-constraints."""
    f = parse_ltl(formula, atoms)
    by_id = {a.id: a for a in atoms}
    parts = f.root.args if isinstance(f.root, And) else (f.root,)
    goals, rules = [], []

    def nl(node):
        return _lower(by_id[node.id].nl_text)

    for p in parts:
        if isinstance(p, Eventually) and hasattr(p.arg, "id"):
            goals.append(f"eventually {nl(p.arg)}")
        elif isinstance(p, Until) and isinstance(p.left, Not):
            rules.append(f"don't {nl(p.left.arg)} until you {nl(p.right)}")
        else:
            goals.append(f"make sure that {p}")
    text = ", ".join(goals)
    if rules:
        text += ", and " + ", ".join(rules)
    return text[0].upper() + text[1:] + "."


def _ap(i, obj, dest):
    return AtomicProposition(i, "move", obj, dest)


def standard_suite() -> dict:
    """Thirty kitchen missions: ten easy, ten medium and ten hard."""
    missions = []
    easy = [("pen", "LF"), ("apple", "LC"), ("coke1", "LA"), ("coke2", "LB"), ("can", "LE"),
            ("water", "LC"), ("pen", "LA"), ("apple", "LF"), ("coke1", "home"), ("can", "LC")]
    for k, (o, d) in enumerate(easy):
        missions.append(("easy", "F p1", [_ap(1, o, d)]))
    medium = [
        (("pen", "LF"), ("apple", "LC")), (("coke1", "LA"), ("water", "LE")),
        (("can", "LA"), ("coke2", "LC")), (("apple", "LE"), ("pen", "LB")),
        (("water", "LA"), ("coke1", "LF")),
    ]
    for k, (x, y) in enumerate(medium):
        missions.append(("medium", "F p1 & F p2", [_ap(1, *x), _ap(2, *y)]))
    for k, (x, y) in enumerate(medium):
        missions.append(("medium", "F p1 & F p2 & (!p1 U p2)", [_ap(1, *y), _ap(2, *x)]))
    from .scenarios import HARD_ATOMS, HARD_FORMULA
    missions.append(("hard", HARD_FORMULA, list(HARD_ATOMS)))
    hard4 = [
        [("pen", "LF"), ("apple", "LC"), ("coke1", "LA"), ("coke2", "LB")],
        [("can", "LA"), ("water", "LE"), ("pen", "home"), ("apple", "LF")],
        [("coke2", "LC"), ("coke1", "LB"), ("apple", "LD"), ("pen", "LE")],
        [("water", "LC"), ("can", "LF"), ("coke1", "home"), ("apple", "LB")],
        [("pen", "LA"), ("coke2", "LE"), ("can", "LC"), ("water", "LF")],
    ]
    for objs in hard4:
        atoms = [_ap(i + 1, *od) for i, od in enumerate(objs)]
        missions.append(("hard", "F p1 & F p2 & F p3 & F p4 & (!p4 U p1)", atoms))
    hard5 = [
        [("pen", "LF"), ("apple", "LC"), ("coke1", "LA"), ("coke2", "LB"), ("can", "LE")],
        [("water", "LA"), ("pen", "LB"), ("apple", "LE"), ("coke2", "home"), ("coke1", "LC")],
        [("can", "LF"), ("coke1", "LD"), ("pen", "LE"), ("apple", "LB"), ("water", "LC")],
        [("coke2", "LA"), ("apple", "LD"), ("can", "LC"), ("pen", "home"), ("coke1", "LB")],
    ]
    for objs in hard5:
        atoms = [_ap(i + 1, *od) for i, od in enumerate(objs)]
        missions.append(("hard", "F p1 & F p2 & F p3 & F p4 & F p5 & (!p2 U p1) & (!p5 U p3)", atoms))
    out = []
    for k, (cat, formula, atoms) in enumerate(missions):
        out.append({"id": f"{cat}-{k:02d}", "category": cat, "formula": formula,
                    "atoms": [a.to_json() for a in atoms],
                    "instruction": render_instruction(formula, atoms)})
    return {"scenario": "kitchen", "repetitions": 1, "scorer": {"name": "oracle", "params": {}},
            "missions": out}


def load_suite(path: str | Path | None = None) -> dict:
    """Load a suite JSON file; without a path the bundled standard suite is returned."""
    if path is None:
        return json.loads(resources.files("ltlplanner").joinpath("data/suite.json").read_text())
    return json.loads(Path(path).read_text())


def run_experiment_suite(suite: dict | str | Path | None = None, *, scorer=None, gating: str = "both",
                         cp_method: str = "vanilla", alpha: float = 0.05, delta: int = 1, T: int = 7,
                         seed: int | str = 0, baseline: bool = False, model: CalibrationModel | None = None,
                         human_assist: str = "scripted-oracle", categories: Sequence[str] | None = None) -> dict:
    """Run every mission of a suite and aggregate ground-truth-checked outcomes."""
    if suite is None or isinstance(suite, (str, Path)):
        suite = load_suite(suite)
    if scorer is None:
        sc_cfg = suite.get("scorer", {"name": "oracle"})
        scorer = make_scorer(sc_cfg.get("name", "oracle"), sc_cfg.get("params", {}), seed)
    if model is None and gating in ("conformal", "both"):
        model = fit_model(scorer, alpha=alpha, method=cp_method, T=T, seed=f"{seed}-calibration")
    reps = int(suite.get("repetitions", 1))
    scenario = suite.get("scenario", "kitchen")
    rows = []
    for m in sorted(suite["missions"], key=lambda m: m["id"]):
        if categories and m["category"] not in categories:
            continue
        atoms = atoms_from_json(m["atoms"])
        for r in range(reps):
            run_seed = f"{seed}|{m['id']}|{r}"
            cfg = MissionConfig(m["formula"], scenario, atoms, alpha=alpha, delta=delta, T=T, seed=run_seed,
                                gating=gating, cp_method=cp_method, human_assist=human_assist)
            try:
                trace = run_mission(cfg, scorer=scorer, model=model)
            except HumanAssistDenied as e:
                trace = e.trace
            row = {"id": m["id"], "category": m["category"], "rep": r, "status": trace.status,
                   "events": dict(Counter(trace.event_kinds)),
                   "set_sizes": [s.set_size for s in trace.steps if s.set_size is not None],
                   "steps": len(trace.steps),
                   "joint_confidence": trace.joint_confidence}
            if baseline:
                flat = run_flat_baseline(m["formula"], m["instruction"], scenario, scorer, atoms=atoms,
                                         T=T, seed=run_seed)
                row["baseline_status"] = flat.status
                row["baseline_steps"] = len(flat.steps)
            rows.append(row)
    return summarize(rows, baseline)


def summarize(rows: list[dict], baseline: bool = False) -> dict:
    cats = sorted({r["category"] for r in rows}, key=["easy", "medium", "hard"].index
                  if all(r["category"] in ("easy", "medium", "hard") for r in rows) else None)
    per = {}
    for c in cats:
        rs = [r for r in rows if r["category"] == c]
        entry = {
            "missions": len(rs),
            "completion": sum(r["status"] != "failed" for r in rs) / len(rs),
            "satisfied": sum(r["status"] == "satisfied" for r in rs) / len(rs),
        }
        if baseline:
            entry["baseline_completion"] = sum(r["baseline_status"] != "failed" for r in rs) / len(rs)
        per[c] = entry
    sizes = Counter(s for r in rows for s in r["set_sizes"])
    events = Counter()
    for r in rows:
        events.update(r["events"])
    return {"categories": per, "set_size_histogram": {str(k): v for k, v in sorted(sizes.items())},
            "assistance_events": dict(sorted(events.items())), "missions": rows}


def summary_table(report: dict) -> str:
    lines = [f"{'category':<10}{'missions':>9}{'complete':>10}{'no-help':>10}{'baseline':>10}"]
    for c, e in report["categories"].items():
        b = e.get("baseline_completion")
        lines.append(f"{c:<10}{e['missions']:>9}{e['completion']:>10.2%}{e['satisfied']:>10.2%}"
                     + (f"{b:>10.2%}" if b is not None else f"{'-':>10}"))
    lines.append("set sizes: " + ", ".join(f"{k}:{v}" for k, v in report["set_size_histogram"].items()))
    lines.append("events: " + (", ".join(f"{k}:{v}" for k, v in report["assistance_events"].items()) or "none"))
    return "\n".join(lines)
