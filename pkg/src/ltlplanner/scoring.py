"""Prompt records, ground-truth planning and pluggable multiple-choice scorers."""
from __future__ import annotations

import hashlib
import json
import os
import threading
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .automaton import SubtaskAssignment
from .ltl import AtomicProposition
from .world import (NOTHING, REPORT, Decision, Outcome, RobotState, SensorFeedback, World,
                    apply, decision_set, matching_objects, word_symbol)

__all__ = [
    "SYSTEM_TEMPLATE", "ONE_SHOT", "RESPONSE_FORMAT",
    "Ground", "PromptContext", "ScoreVector", "Scorer",
    "build_prompt", "build_flat_prompt", "extend_prompt", "score", "softmax",
    "oracle_plan", "oracle_decisions", "NoPlanWithinBudget", "ScorerUnavailable",
    "OracleScorer", "NoisyScorer", "UniformScorer", "RemoteScorer",
    "noisy_scorer", "remote_scorer",
]

SYSTEM_TEMPLATE = (
    "You control a mobile robot with a gripper. Each step you choose exactly one action:\n"
    "(1, X) Go to location X\n"
    "(2, X) Pick up object X\n"
    "(3) Put down object\n"
    "(4, X) Open the door of the container X\n"
    "(5) Do nothing\n"
    "(6) Report item missing/Failure\n"
    "Rules: the robot holds at most one object; an object inside a closed container can only be "
    "picked up after opening the container door; choose (5) once the task is complete.\n"
    "You have at most {T} steps."
)

ONE_SHOT = (
    "Example.\n"
    "Environment: Coke at L1; table at L3. Robot at L2, holding nothing.\n"
    "Task: Deliver Coke to L3.\n"
    "Step 1: (1, L1) go to location L1 -> object of class Coke exists in location L1\n"
    "Step 2: (2, coke) pick up object coke -> no object in location L1\n"
    "Step 3: (1, L3) go to location L3 -> no object in location L3\n"
    "Step 4: (3) put down object -> object of class Coke exists in location L3\n"
    "Step 5: (5) do nothing"
)

RESPONSE_FORMAT = "Answer with the code of exactly one option, for example (1, L1)."


class NoPlanWithinBudget(RuntimeError):
    pass


class ScorerUnavailable(RuntimeError):
    """Remote scoring failed; callers may retry."""

    def __init__(self, msg: str, status: int | None = None):
        super().__init__(msg)
        self.status = status


@dataclass(frozen=True)
class Ground:
    """Simulator-side truth attached to a prompt; never rendered."""

    world: World
    robot: RobotState
    assignment: SubtaskAssignment
    budget: int
    known_blocked: frozenset = frozenset()
    done: bool = False  # sub-task already achieved earlier in this window
    n_goals: int = 1
    n_constraints: int = 0
    horizon: int = 7  # per-sub-task step budget, the unit of history load


@dataclass(frozen=True)
class PromptContext:
    system: str
    environment: str
    task: str
    history: tuple[tuple[str, str], ...]
    decisions: tuple[Decision, ...]
    T: int
    one_shot: str = ONE_SHOT
    response_format: str = RESPONSE_FORMAT
    ground: Ground | None = field(default=None, compare=False, repr=False)

    def render_history(self) -> str:
        return "".join(f"Step {i}: {d} -> {fb}\n" for i, (d, fb) in enumerate(self.history, 1))

    def render(self) -> str:
        options = "\n".join(str(d) for d in self.decisions)
        return (
            f"{self.system}\n\n"
            f"Environment:\n{self.environment}\n\n"
            f"{self.one_shot}\n\n"
            f"Task:\n{self.task}\n\n"
            f"History:\n{self.render_history()}\n"
            f"Options:\n{options}\n\n"
            f"{self.response_format}\n"
        )

    def digest(self) -> str:
        return hashlib.sha256(self.render().encode()).hexdigest()[:16]


def _environment(world: World, robot: RobotState, known_blocked) -> str:
    lines = []
    for o in world.objects:
        if o.held:
            continue
        where = o.expected_location
        inside = ""
        if o.container is not None and o.expected is None:
            c = world.container(o.container)
            inside = f" inside the {c.kind}" if c.id == c.kind else f" inside the {c.kind} {c.id}"
        lines.append(f"{o.id} ({o.cls}) is expected at {where}{inside}")
    for c in world.containers:
        lines.append(f"container {c.id} ({c.kind}) at {c.location}, door {'open' if c.open else 'closed'}")
    held = robot.holding or "nothing"
    lines.append(f"Robot at {robot.at}, holding {held}.")
    if known_blocked:
        lines.append("Known blocked locations: " + ", ".join(sorted(known_blocked)) + ".")
    return "\n".join(lines)


def _task_text(assignment: SubtaskAssignment) -> str:
    if assignment.next_ap is None:
        goal = "Wait one step."
    else:
        goal = f"{assignment.next_ap.nl_text}."
    lines = [goal]
    for ap in assignment.forbidden_aps:
        lines.append(f"Do not {ap.nl_text[0].lower() + ap.nl_text[1:]} before the task above is done.")
    return "\n".join(lines)


def build_prompt(assignment: SubtaskAssignment, world: World, history: Sequence = (), *,
                 robot: RobotState, T: int = 7, known_blocked=frozenset(),
                 decisions: Sequence[Decision] | None = None) -> PromptContext:
    """Prompt for one sub-task. ``history`` holds ``(Decision, SensorFeedback)`` pairs.

    ``world``/``robot`` describe the state at sub-task start; history entries
    bring it up to date, mirroring h(t+1) = h(t) + s(t) + p(t+1).
    """
    hist = tuple((str(d), fb.text if isinstance(fb, SensorFeedback) else str(fb)) for d, fb in history)
    if len(hist) >= T:
        raise ValueError("history must be shorter than the step budget")
    ground = Ground(world, robot, assignment, T, frozenset(known_blocked),
                    n_goals=1, n_constraints=len(assignment.forbidden_aps), horizon=T)
    return PromptContext(
        system=SYSTEM_TEMPLATE.format(T=T),
        environment=_environment(world, robot, known_blocked),
        task=_task_text(assignment),
        history=hist,
        decisions=tuple(decisions) if decisions is not None else decision_set(world),
        T=T,
        ground=ground,
    )


def build_flat_prompt(instruction: str, world: World, robot: RobotState, *, budget: int,
                      known_blocked=frozenset(), ground: Ground | None = None) -> PromptContext:
    """One monolithic prompt carrying the whole mission as a natural-language instruction."""
    return PromptContext(
        system=SYSTEM_TEMPLATE.format(T=budget),
        environment=_environment(world, robot, known_blocked),
        task=instruction,
        history=(),
        decisions=decision_set(world),
        T=budget,
        ground=ground,
    )


def extend_prompt(prompt: PromptContext, decision: Decision, feedback: SensorFeedback,
                  ground: Ground | None = None) -> PromptContext:
    """Append one (decision, observation) pair; optionally refresh the hidden ground truth."""
    return replace(prompt, history=prompt.history + ((str(decision), feedback.text),),
                   ground=ground if ground is not None else prompt.ground)


# ---------------------------------------------------------------------------
# Ground-truth planning

def _belief(world: World, known_blocked) -> World:
    return replace(world, blocked=frozenset(known_blocked))


@lru_cache(maxsize=100_000)
def _bfs(world: World, robot: RobotState, aps: tuple, loop: frozenset, enabling: frozenset,
         budget: int, restrict: str | None) -> tuple[Decision, ...] | None:
    if 0 in enabling:
        return (Decision(NOTHING),)
    decisions = decision_set(world)
    start_mask = word_symbol(world, aps)
    frontier = deque([(world, robot, start_mask, ())])
    seen = {(world, robot)}
    while frontier:
        w, r, mask, path = frontier.popleft()
        if len(path) >= budget:
            continue
        for d in decisions:
            if d.action in (NOTHING, REPORT):
                continue
            if restrict is not None and d.action == 2 and w.obj(d.target).cls != restrict:
                continue
            res = apply(w, r, d)
            if res.outcome is not Outcome.OK:
                continue
            key = (res.world, res.robot)
            if key in seen:
                continue
            new_mask = word_symbol(res.world, aps)
            event = new_mask & ~mask
            if event in enabling:
                return path + (d,)
            if event not in loop:
                continue
            seen.add(key)
            frontier.append((res.world, res.robot, new_mask, path + (d,)))
    return None


def oracle_plan(world: World, robot: RobotState, assignment: SubtaskAssignment, T: int = 7, *,
                known_blocked=frozenset(), pad: bool = True, restrict_class: str | None = None
                ) -> list[Decision]:
    """Shortest decision sequence that enables the assignment's DFA transition.

    Searches the robot's belief (only ``known_blocked`` locations are treated
    as obstacles). Intermediate steps may only raise self-loop events, so a
    forbidden AP never becomes true early. Ties go to the earliest decision in
    the fixed decision order. With ``pad`` the plan is filled to ``T`` with
    do-nothing.
    """
    aps = tuple(assignment.aps)
    target = frozenset(assignment.enabling_symbols)
    if assignment.next_ap is not None:
        # pursue the assigned AP itself, not whichever enabling symbol is cheapest
        bit = 1 << next(i for i, a in enumerate(aps) if a.id == assignment.next_ap.id)
        target = frozenset(m for m in target if m & bit)
    found = _bfs(_belief(world, known_blocked), robot, aps, frozenset(assignment.self_loop_symbols),
                 target, T, restrict_class)
    if found is None:
        raise NoPlanWithinBudget(f"no plan for {assignment.next_ap} within {T} steps")
    plan = list(found)
    if pad:
        plan += [Decision(NOTHING)] * (T - len(plan))
    return plan


def oracle_decisions(ground: Ground, split_ambiguous: bool = False) -> tuple[Decision, ...]:
    """The correct next decision(s) for a ground record.

    Achieved sub-tasks call for do-nothing, impossible ones for a failure
    report. With ``split_ambiguous`` every object class the target could
    denote contributes its own first step.
    """
    if ground.done:
        return (Decision(NOTHING),)
    a = ground.assignment
    try:
        first = oracle_plan(ground.world, ground.robot, a, ground.budget,
                            known_blocked=ground.known_blocked, pad=False)[0]
    except NoPlanWithinBudget:
        return (Decision(REPORT),)
    if not split_ambiguous or a.next_ap is None:
        return (first,)
    classes = sorted({o.cls for o in matching_objects(ground.world, a.next_ap.target)})
    out = [first]
    if len(classes) > 1:
        for c in classes:
            try:
                d = oracle_plan(ground.world, ground.robot, a, ground.budget,
                                known_blocked=ground.known_blocked, pad=False, restrict_class=c)[0]
            except NoPlanWithinBudget:
                continue
            if d not in out:
                out.append(d)
    return tuple(out)


# ---------------------------------------------------------------------------
# Scores

def softmax(raw: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(raw, dtype=float) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class ScoreVector:
    decisions: tuple[Decision, ...]
    raw: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if len(self.decisions) != len(self.raw) or len(self.raw) != len(self.probs):
            raise ValueError("score arrays must match the decision set")

    @property
    def argmax(self) -> int:
        # np.argmax returns the first maximum, i.e. the lowest decision index
        return int(np.argmax(self.probs))

    @property
    def decision(self) -> Decision:
        return self.decisions[self.argmax]

    def index(self, decision: Decision) -> int:
        return self.decisions.index(decision)

    def g(self, decision: Decision) -> float:
        return float(self.probs[self.index(decision)])

    def to_json(self) -> dict:
        return {"raw": [float(x) for x in self.raw], "probs": [float(x) for x in self.probs]}


class Scorer(Protocol):
    temperature: float

    def raw_scores(self, prompt: PromptContext) -> np.ndarray: ...


def score(scorer: Scorer, prompt: PromptContext, decisions: Sequence[Decision] | None = None) -> ScoreVector:
    """Score every option and return softmax confidences; the planner acts on the argmax."""
    ds = tuple(decisions) if decisions is not None else prompt.decisions
    if not ds:
        raise ValueError("decision set is empty")
    if ds != prompt.decisions:
        prompt = replace(prompt, decisions=ds)
    raw = np.asarray(scorer.raw_scores(prompt), dtype=float)
    return ScoreVector(ds, raw, softmax(raw, scorer.temperature))


def _need_ground(prompt: PromptContext) -> Ground:
    if prompt.ground is None:
        raise ValueError("local scorers need a prompt carrying simulator ground truth")
    return prompt.ground


class UniformScorer:
    temperature = 1.0

    def raw_scores(self, prompt):
        return np.zeros(len(prompt.decisions))


@dataclass
class OracleScorer:
    """Puts (almost) all mass on the ground-truth decision.

    With ``split_ambiguous`` the mass is shared by the first steps towards
    every object class an ambiguous target could mean; ``jitter`` then
    lowers each of them by a prompt-seeded amount in ``[0, jitter)`` so the
    tie is near rather than exact and either side may come out on top.
    """

    temperature: float = 0.1
    split_ambiguous: bool = False
    jitter: float = 0.0

    def truth(self, prompt: PromptContext) -> tuple[Decision, ...]:
        return oracle_decisions(_need_ground(prompt), self.split_ambiguous)

    def raw_scores(self, prompt):
        raw = np.zeros(len(prompt.decisions))
        truth = self.truth(prompt)
        idx = [prompt.decisions.index(d) for d in truth]
        raw[idx] = 1.0
        if len(idx) > 1 and self.jitter > 0:
            h = hashlib.sha256(f"tie|{prompt.digest()}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(h[:8], "little"))
            raw[idx] -= rng.uniform(0.0, self.jitter, len(idx))
        return raw


@dataclass
class NoisyScorer:
    """Synthetic stand-in for a language model.

    Distractors get uniform scores below the truth. With probability
    ``1 - (1 - confusion) ** load`` one distractor is pushed up next to the
    truth, where ``load`` grows with the number of goals and constraints in
    the prompt and with the history length; its margin is Gaussian, with a
    mean that rises by ``drift`` per unit of load, so it sometimes wins. Noise is a pure function of ``seed`` and the prompt text.
    """

    confusion: float = 0.15
    temperature: float = 0.1
    spread: float = 0.3
    bias: float = -0.15
    sd: float = 0.05
    drift: float = 0.03
    seed: int | str = 0
    base: OracleScorer = field(default_factory=OracleScorer)

    def load(self, prompt: PromptContext) -> float:
        g = _need_ground(prompt)
        return g.n_goals + g.n_constraints + len(prompt.history) / max(g.horizon, 1)

    def raw_scores(self, prompt):
        n = len(prompt.decisions)
        h = hashlib.sha256(f"{self.seed}|{prompt.digest()}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(h[:8], "little"))
        truth = self.base.truth(prompt)
        raw = rng.uniform(0.0, self.spread, n)
        idx = [prompt.decisions.index(d) for d in truth]
        raw[idx] = 1.0
        load = self.load(prompt)
        p = 1.0 - (1.0 - self.confusion) ** load
        if n > len(idx) and rng.random() < p:
            others = [i for i in range(n) if i not in idx]
            j = others[int(rng.integers(len(others)))]
            raw[j] = 1.0 + rng.normal(self.bias + self.drift * (load - 1.0), self.sd)
        return raw


def noisy_scorer(base: OracleScorer | None = None, **kw) -> NoisyScorer:
    return NoisyScorer(base=base or OracleScorer(), **kw)


class RemoteScorer:
    """HTTP client for a completion-scoring endpoint.

    Request body: ``{"model", "prompt", "choices"}``. Response body:
    ``{"scores": [{"logprob": float, "tokens": int}, ...]}`` in choice order.
    The raw score of a choice is its mean per-token log-likelihood.
    ``cassette`` points at a JSON file of recorded responses; ``mode`` is
    ``replay`` (never touch the network), ``record`` (call and store) or
    ``live``.
    """

    def __init__(self, endpoint: str, model: str, token_env: str = "SCORER_API_TOKEN", *,
                 temperature: float = 1.0, timeout: float = 10.0, max_in_flight: int = 4,
                 cassette: str | Path | None = None, mode: str = "live"):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown mode {mode!r}")
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.temperature = temperature
        self.timeout = timeout
        self.mode = mode
        self.cassette = Path(cassette) if cassette else None
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._tape = {}
        if self.cassette and self.cassette.exists():
            self._tape = json.loads(self.cassette.read_text())

    def _body(self, prompt: PromptContext) -> dict:
        return {"model": self.model, "prompt": prompt.render(),
                "choices": [d.code() for d in prompt.decisions]}

    @staticmethod
    def _key(body: dict) -> str:
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def _post(self, body: dict) -> dict:
        token = os.environ.get(self.token_env, "")
        req = urllib.request.Request(
            self.endpoint, data=json.dumps(body).encode(), method="POST",
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {token}"})
        with self._slots:
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read())
            except urllib.error.HTTPError as e:
                raise ScorerUnavailable(f"scoring endpoint returned HTTP {e.code}", e.code) from e
            except (urllib.error.URLError, TimeoutError, OSError, ValueError) as e:
                raise ScorerUnavailable(f"scoring endpoint unreachable: {e}") from e

    def raw_scores(self, prompt):
        body = self._body(prompt)
        key = self._key(body)
        if self.mode == "replay":
            if key not in self._tape:
                raise ScorerUnavailable("no recorded response for this prompt")
            resp = self._tape[key]
        else:
            resp = self._post(body)
            if self.mode == "record" and self.cassette:
                with self._lock:
                    self._tape[key] = resp
                    self.cassette.write_text(json.dumps(self._tape, indent=1, sort_keys=True))
        scores = resp.get("scores")
        if not isinstance(scores, list) or len(scores) != len(prompt.decisions):
            raise ScorerUnavailable("malformed scoring response")
        return np.array([s["logprob"] / max(int(s.get("tokens", 1)), 1) for s in scores])


def remote_scorer(endpoint: str, model: str, token_env: str = "SCORER_API_TOKEN", **kw) -> RemoteScorer:
    return RemoteScorer(endpoint, model, token_env, **kw)
