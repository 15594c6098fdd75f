"""Hierarchical mission execution with conformal gating and an assistance cascade."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .automaton import (MissionState, NoProgress, NoSubtask, PrunedDfa, SubtaskAssignment, candidate_aps,
                        selection_rng, initial_state, make_assignment, prune, reachable_next, select_subtask)
from .conformal import CalibrationModel, PredictionSet, joint_confidence, label, predict_set
from .ltl import AtomicProposition, Dfa, Formula, Until, parse_ltl, to_dfa
from .scenarios import get_scenario
from .scoring import (Ground, NoisyScorer, NoPlanWithinBudget, OracleScorer, PromptContext, UniformScorer,
                      build_flat_prompt, build_prompt, extend_prompt, oracle_plan, score)
from .world import (NOTHING, REPORT, Decision, Outcome, RobotState, Scenario, World, apply,
                    decision_set, load_scenario, word_symbol)

__all__ = [
    "MissionConfig", "PlanTrace", "StepRecord", "MissionInfeasible", "HumanAssistDenied",
    "run_mission", "run_flat_baseline", "assistance_cascade", "replay_accepts", "make_scorer",
    "resolve_scenario", "compile_task", "GATING_MODES", "HUMAN_MODES",
]

GATING_MODES = ("semantic", "conformal", "both", "naive")
HUMAN_MODES = ("interactive", "scripted-oracle", "deny")


class MissionInfeasible(RuntimeError):
    pass


class HumanAssistDenied(RuntimeError):
    def __init__(self, msg: str, trace: "PlanTrace"):
        super().__init__(msg)
        self.trace = trace


@dataclass
class MissionConfig:
    formula: str
    scenario: str = "kitchen"
    atoms: list | None = None  # overrides the scenario's atoms
    scorer: str = "oracle"  # oracle | noisy | uniform | tied | remote
    scorer_params: dict = field(default_factory=dict)
    alpha: float = 0.05
    delta: int = 1
    T: int = 7
    seed: int | str = 0
    human_assist: str = "scripted-oracle"
    gating: str = "both"
    cp_method: str = "vanilla"
    calibration: str | None = None  # path to a fitted model JSON
    n_calibration: int = 50
    max_attempts: int = 60

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.gating not in GATING_MODES:
            raise ValueError(f"gating must be one of {GATING_MODES}")
        if self.human_assist not in HUMAN_MODES:
            raise ValueError(f"human_assist must be one of {HUMAN_MODES}")
        if self.cp_method not in ("vanilla", "raps"):
            raise ValueError("cp_method must be vanilla or raps")

    @classmethod
    def from_dict(cls, d: dict) -> "MissionConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class StepRecord:
    subtask: int | None
    state: str
    target_state: str
    prompt_digest: str
    decision: str
    set_size: int | None
    outcome: str
    facts: list
    actor: str = "planner"


@dataclass
class PlanTrace:
    steps: list = field(default_factory=list)
    states: list = field(default_factory=list)
    events: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    subtasks: list = field(default_factory=list)
    status: str = "failed"
    joint_confidence: float | None = None
    transcript: list = field(default_factory=list)

    @property
    def decisions(self) -> list[str]:
        return [s.decision for s in self.steps]

    @property
    def event_kinds(self) -> list[str]:
        return [e["kind"] for e in self.events]

    def to_json(self) -> dict:
        d = asdict(self)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


# ---------------------------------------------------------------------------
# set-up helpers

def resolve_scenario(source: str | Scenario) -> Scenario:
    if isinstance(source, Scenario):
        return source
    if Path(source).suffix == ".json" or Path(source).exists():
        return load_scenario(source)
    return get_scenario(source)


def compile_task(formula: str, atoms: Sequence[AtomicProposition]) -> tuple[Formula, Dfa, PrunedDfa]:
    f = parse_ltl(formula, atoms)
    dfa = to_dfa(f)
    return f, dfa, prune(dfa)


def make_scorer(name: str, params: dict | None = None, seed: int | str = 0):
    params = dict(params or {})
    if name == "oracle":
        return OracleScorer(**params)
    if name == "tied":
        params.setdefault("jitter", 0.1)
        return OracleScorer(split_ambiguous=True, **params)
    if name == "noisy":
        params.setdefault("seed", seed)
        return NoisyScorer(**params)
    if name == "uniform":
        return UniformScorer()
    if name == "remote":
        from .scoring import RemoteScorer
        return RemoteScorer(**params)
    raise ValueError(f"unknown scorer {name!r}")


def _facts(fb) -> list:
    return [[f.kind, *f.args] for f in fb.facts]


def replay_accepts(scenario: Scenario, dfa: Dfa, decisions: Sequence[Decision]) -> bool:
    """Independent check: replay decisions and feed state-based symbols to the unpruned DFA."""
    world, robot = scenario.world, scenario.robot
    q = dfa.step(dfa.initial, word_symbol(world, dfa.aps))
    for d in decisions:
        res = apply(world, robot, d)
        world, robot = res.world, res.robot
        q = dfa.step(q, word_symbol(world, dfa.aps))
    return dfa.accepting is not None and q == dfa.accepting


def _parse_decision(code: str) -> Decision:
    body = code.split(")")[0].strip("( ")
    parts = [p.strip() for p in body.split(",")]
    return Decision(int(parts[0]), parts[1] if len(parts) > 1 else None)


# ---------------------------------------------------------------------------
# mission loop

@dataclass
class _Runtime:
    config: MissionConfig
    scenario: Scenario
    dfa: Dfa
    pruned: PrunedDfa
    scorer: object
    model: CalibrationModel | None
    world: World
    robot: RobotState
    trace: PlanTrace
    known_blocked: set = field(default_factory=set)
    mask: int = 0
    human_used: bool = False
    input_fn: Callable = input
    output_fn: Callable = print

    def name(self, q: int) -> str:
        return self.dfa.state_name(q)

    @property
    def cp_active(self) -> bool:
        return self.config.gating in ("conformal", "both") and self.model is not None

    def execute(self, a: SubtaskAssignment, d: Decision, prompt: PromptContext, pset, actor: str):
        res = apply(self.world, self.robot, d)
        self.world, self.robot = res.world, res.robot
        for f in res.feedback.facts:
            if f.kind == "location-blocked":
                self.known_blocked.add(f.args[0])
        new_mask = word_symbol(self.world, self.dfa.aps)
        event = new_mask & ~self.mask
        self.mask = new_mask
        self.trace.checkpoints.append(new_mask)
        self.trace.steps.append(StepRecord(
            a.next_ap.id if a.next_ap else None, self.name(a.current_state), self.name(a.next_state),
            prompt.digest(), d.code(), pset.size if pset is not None else None,
            res.outcome.value, _facts(res.feedback), actor))
        return res, event


@dataclass
class _Window:
    labels: list
    sets: list
    trigger: str | None = None
    left_to: int | None = None  # DFA state the first non-self-loop label leads to


def _ground(prompt: PromptContext, rt: _Runtime, budget: int, done: bool) -> Ground:
    return replace(prompt.ground, world=rt.world, robot=rt.robot, budget=max(budget, 1),
                   known_blocked=frozenset(rt.known_blocked), done=done)


def _run_window(rt: _Runtime, a: SubtaskAssignment) -> _Window:
    T = rt.config.T
    prompt = build_prompt(a, rt.world, robot=rt.robot, T=T, known_blocked=rt.known_blocked)
    win = _Window([], [])
    q = a.current_state
    for k in range(T):
        sv = score(rt.scorer, prompt)
        pset = predict_set(rt.model, sv, k) if rt.model is not None else None
        if pset is not None:
            win.sets.append(pset)
        if rt.cp_active and pset.size > rt.config.delta:
            win.trigger = "ambiguous"
            rt.trace.events.append({"kind": "cp-trigger", "subtask": a.next_ap.id if a.next_ap else None,
                                    "set": [prompt.decisions[i].code() for i in pset.members],
                                    "step": len(rt.trace.steps)})
            return win
        d = sv.decision
        res, event = rt.execute(a, d, prompt, pset, "planner")
        win.labels.append(event)
        q2 = rt.dfa.step(q, event)
        if q2 != q:
            win.left_to = q2
            return win
        if res.outcome is not Outcome.OK and rt.config.gating != "naive":
            win.trigger = "physical-failure" if res.outcome is Outcome.FAILED else "reported"
            return win
        if res.outcome is Outcome.REPORTED:
            return win
        if k + 1 < T:
            prompt = extend_prompt(prompt, d, res.feedback, _ground(prompt, rt, T - k - 1, False))
    return win


def _conditions_hold(pruned: PrunedDfa, a: SubtaskAssignment, labels: Sequence[int]) -> bool:
    """Prefix labels stay in the self-loop set and the last one enables the target transition."""
    if not labels:
        return False
    loop = set(a.self_loop_symbols)
    if any(l not in loop for l in labels[:-1]):
        return False
    return labels[-1] in a.enabling_symbols


def assistance_cascade(state: MissionState, assignment: SubtaskAssignment, pruned: PrunedDfa, config=None):
    """Drop the failed sub-task and look for an alternative.

    Returns ``(new_state, next_assignment_or_None, event_kind)`` where the
    event is ``alternative-AP``, ``alternative-state`` or ``human``
    (``None`` assignment means a human has to step in).
    """
    q2 = assignment.next_state
    ap_id = assignment.next_ap.id if assignment.next_ap else None
    state = state.exhaust_ap(q2, ap_id)
    try:
        remaining = candidate_aps(pruned, state, q2)
    except NoProgress:
        remaining = []
    if remaining:
        pick = remaining[selection_rng(state).randrange(len(remaining))]
        return state, make_assignment(pruned, state.current, q2, pick), "alternative-AP"
    state = state.exhaust_target(q2)
    try:
        return state, select_subtask(pruned, state), "alternative-state"
    except (NoSubtask, NoProgress):
        return state, None, "human"


def _human_assignment(rt: _Runtime, state: MissionState) -> tuple[SubtaskAssignment, list[Decision]] | None:
    """First feasible transition of the original candidate set, with a plan in the real world."""
    fresh = MissionState(state.current, state.time, rng_seed=state.rng_seed)
    try:
        targets = sorted(reachable_next(rt.pruned, fresh))
    except NoProgress:
        return None
    for q2 in targets:
        for ap_id in candidate_aps(rt.pruned, fresh, q2):
            a = make_assignment(rt.pruned, state.current, q2, ap_id)
            try:
                plan = oracle_plan(rt.world, rt.robot, a, rt.config.T,
                                   known_blocked=rt.world.blocked, pad=False)
            except NoPlanWithinBudget:
                continue
            return a, plan
    return None


def _human_window(rt: _Runtime, state: MissionState, a: SubtaskAssignment | None) -> tuple[_Window, SubtaskAssignment] | None:
    mode = rt.config.human_assist
    if mode == "deny":
        rt.trace.events.append({"kind": "denied", "state": rt.name(state.current)})
        rt.trace.status = "failed"
        raise HumanAssistDenied("assistance needed but human help is disabled", rt.trace)
    rt.human_used = True
    win = _Window([], [])
    if mode == "scripted-oracle":
        found = _human_assignment(rt, state)
        if found is None:
            return None
        a, plan = found
        prompt = build_prompt(a, rt.world, robot=rt.robot, T=rt.config.T, known_blocked=rt.known_blocked)
        q = a.current_state
        for d in plan:
            res, event = rt.execute(a, d, prompt, None, "human")
            win.labels.append(event)
            q2 = rt.dfa.step(q, event)
            if q2 != q:
                win.left_to = q2
                break
            prompt = extend_prompt(prompt, d, res.feedback)
        return win, a
    # interactive
    if a is None:
        found = _human_assignment(rt, state)
        if found is None:
            return None
        a = found[0]
    prompt = build_prompt(a, rt.world, robot=rt.robot, T=rt.config.T, known_blocked=rt.known_blocked)
    q = a.current_state
    for k in range(rt.config.T):
        sv = score(rt.scorer, replace(prompt, ground=_ground(prompt, rt, rt.config.T - k, False)))
        pset = predict_set(rt.model, sv, k) if rt.model is not None else None
        members = pset.members if pset is not None else tuple(range(len(prompt.decisions)))
        rt.output_fn(prompt.render())
        rt.output_fn("Prediction set: " + ", ".join(str(prompt.decisions[i]) for i in members))
        rt.output_fn("Constraints: " + (", ".join(x.nl_text for x in a.forbidden_aps) or "none"))
        for i, d in enumerate(prompt.decisions):
            rt.output_fn(f"  [{i}] {d}")
        answer = rt.input_fn("decision index> ").strip()
        rt.trace.transcript.append({"prompt_digest": prompt.digest(), "answer": answer})
        try:
            d = prompt.decisions[int(answer)]
        except (ValueError, IndexError):
            rt.output_fn("invalid choice; doing nothing")
            d = Decision(NOTHING)
        res, event = rt.execute(a, d, prompt, pset, "human")
        win.labels.append(event)
        q2 = rt.dfa.step(q, event)
        if q2 != q:
            win.left_to = q2
            break
        prompt = extend_prompt(prompt, d, res.feedback)
    return win, a


def _calibration_model(config: MissionConfig, scorer) -> CalibrationModel | None:
    if config.gating not in ("conformal", "both"):
        return None
    if config.calibration:
        return CalibrationModel.load(config.calibration)
    from .experiments import fit_model
    return fit_model(scorer, n=config.n_calibration, alpha=config.alpha, method=config.cp_method,
                     T=config.T, seed=f"{config.seed}-calibration")


def run_mission(config: MissionConfig, *, scenario: Scenario | None = None, scorer=None,
                model: CalibrationModel | None = None, input_fn: Callable = input,
                output_fn: Callable = print) -> PlanTrace:
    """Plan and execute ``config.formula`` sub-task by sub-task.

    Raises :class:`MissionInfeasible` when no accepting run survives pruning
    and :class:`HumanAssistDenied` when help is needed but disabled.
    """
    sc = scenario or resolve_scenario(config.scenario)
    atoms = [AtomicProposition(**a) if isinstance(a, dict) else a for a in config.atoms] if config.atoms else list(sc.atoms)
    formula, dfa, pruned = compile_task(config.formula, atoms)
    if not pruned.satisfiable:
        raise MissionInfeasible("the task cannot be satisfied without completing several sub-tasks at once")
    scorer = scorer if scorer is not None else make_scorer(config.scorer, config.scorer_params, config.seed)
    if model is None:
        model = _calibration_model(config, scorer)
    trace = PlanTrace()
    rt = _Runtime(config, sc, dfa, pruned, scorer, model, sc.world, sc.robot, trace,
                  input_fn=input_fn, output_fn=output_fn)
    rt.mask = word_symbol(rt.world, dfa.aps)
    trace.checkpoints.append(rt.mask)
    state = initial_state(pruned, config.seed)
    trace.states.append(rt.name(state.current))
    assignment: SubtaskAssignment | None = None
    need_human = False
    attempts = 0
    completed = 0

    while state.current != dfa.accepting:
        attempts += 1
        if attempts > config.max_attempts:
            trace.events.append({"kind": "gave-up", "state": rt.name(state.current)})
            break
        if not need_human and assignment is None:
            try:
                assignment = select_subtask(pruned, state)
            except (NoSubtask, NoProgress):
                need_human = True
        if need_human:
            if not trace.events or trace.events[-1]["kind"] != "human":
                trace.events.append({"kind": "human", "reason": "no-subtask", "state": rt.name(state.current)})
            got = _human_window(rt, state, assignment)
            need_human = False
            if got is None:
                trace.events.append({"kind": "no-plan", "state": rt.name(state.current)})
                break
            win, assignment = got
        else:
            trace.subtasks.append({"state": rt.name(assignment.current_state),
                                   "target": rt.name(assignment.next_state),
                                   "ap": assignment.next_ap.id if assignment.next_ap else None})
            win = _run_window(rt, assignment)
            if win.trigger is not None:
                state, assignment, kind = assistance_cascade(state, assignment, pruned, config)
                trace.events.append({"kind": kind, "reason": win.trigger, "state": rt.name(state.current)})
                need_human = assignment is None
                continue

        enabled = win.left_to is not None and _conditions_hold(pruned, assignment, win.labels)
        certified = label(win.sets)
        ok = {"semantic": enabled, "conformal": certified, "both": enabled and certified,
              "naive": True}[config.gating]
        if ok:
            completed += 1
            state = MissionState(assignment.next_state, state.time + len(win.labels), rng_seed=state.rng_seed)
            trace.states.append(rt.name(state.current))
            assignment = None
            continue
        if win.left_to is not None and win.left_to != assignment.next_state:
            # the world moved the task somewhere unintended; follow the truth
            state = MissionState(win.left_to, state.time + len(win.labels), rng_seed=state.rng_seed)
            trace.states.append(rt.name(state.current))
            trace.events.append({"kind": "violation", "state": rt.name(state.current)})
            assignment = None
            if not math.isfinite(pruned.distance_to_goal(state.current)):
                break
            continue
        if enabled:
            # progress happened but was not certified; keep the truth and move on
            state = MissionState(assignment.next_state, state.time + len(win.labels), rng_seed=state.rng_seed)
            trace.states.append(rt.name(state.current))
            trace.events.append({"kind": "uncertified", "state": rt.name(state.current)})
            assignment = None
            continue
        state, assignment, kind = assistance_cascade(state, assignment, pruned, config)
        trace.events.append({"kind": kind, "reason": "no-progress", "state": rt.name(state.current)})
        need_human = assignment is None

    decisions = [_parse_decision(s.decision) for s in trace.steps]
    accepted = replay_accepts(sc, dfa, decisions)
    if accepted:
        trace.status = "human-completed" if rt.human_used else "satisfied"
    else:
        trace.status = "failed"
    trace.joint_confidence = joint_confidence(config.alpha, completed)
    return trace


# ---------------------------------------------------------------------------
# flat baseline

def _count_until(node) -> int:
    if isinstance(node, Until):
        return 1 + _count_until(node.left) + _count_until(node.right)
    for attr in ("args",):
        if hasattr(node, attr):
            return sum(_count_until(a) for a in getattr(node, attr))
    if hasattr(node, "arg"):
        return _count_until(node.arg)
    return 0


def run_flat_baseline(formula: str, instruction: str, scenario: Scenario | str, scorer, *,
                      atoms: Sequence[AtomicProposition] | None = None, T: int = 7,
                      seed: int | str = 0) -> PlanTrace:
    """Single monolithic prompt, no automaton guidance and no conformal gating.

    The decision budget is ``K * T`` for ``K`` sub-tasks. A hidden tracker
    follows the true automaton state only to supply the simulator's notion
    of the correct next decision to local scorers.
    """
    sc = resolve_scenario(scenario)
    f, dfa, pruned = compile_task(formula, list(atoms) if atoms else list(sc.atoms))
    K = len(f.ap_set)
    budget = K * T
    world, robot = sc.world, sc.robot
    trace = PlanTrace()
    mask = word_symbol(world, dfa.aps)
    trace.checkpoints.append(mask)
    q = dfa.initial
    trace.states.append(dfa.state_name(q))
    traps = dfa.trap_states()
    n_constraints = _count_until(f.root)
    known_blocked: set = set()
    prompt = build_flat_prompt(instruction, world, robot, budget=budget)
    hidden = None
    for step in range(budget):
        if q == dfa.accepting or q in traps:
            break
        if hidden is None or hidden.current_state != q:
            try:
                hidden = select_subtask(pruned, MissionState(q, step, rng_seed=seed))
            except (NoSubtask, NoProgress):
                break
        ground = Ground(world, robot, hidden, min(T, budget - step), frozenset(known_blocked),
                        n_goals=K, n_constraints=n_constraints, horizon=T)
        sv = score(scorer, replace(prompt, ground=ground))
        d = sv.decision
        res = apply(world, robot, d)
        world, robot = res.world, res.robot
        for fct in res.feedback.facts:
            if fct.kind == "location-blocked":
                known_blocked.add(fct.args[0])
        new_mask = word_symbol(world, dfa.aps)
        event = new_mask & ~mask
        mask = new_mask
        trace.checkpoints.append(mask)
        trace.steps.append(StepRecord(None, dfa.state_name(q), "", prompt.digest(), d.code(), None,
                                      res.outcome.value, _facts(res.feedback)))
        q2 = dfa.step(q, event)
        if q2 != q:
            q = q2
            trace.states.append(dfa.state_name(q))
        if res.outcome is Outcome.REPORTED:
            break
        prompt = extend_prompt(prompt, d, res.feedback)
    decisions = [_parse_decision(s.decision) for s in trace.steps]
    trace.status = "satisfied" if replay_accepts(sc, dfa, decisions) else "failed"
    return trace
