"""Deterministic semantic world: locations, objects, containers and the six robot skills."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .ltl import AtomicProposition

__all__ = [
    "GO_TO", "PICK_UP", "PUT_DOWN", "OPEN", "NOTHING", "REPORT",
    "SemanticObject", "Container", "World", "RobotState", "Decision",
    "Fact", "SensorFeedback", "Outcome", "StepResult", "Scenario",
    "MalformedDecision", "UnresolvableTarget",
    "apply", "decision_set", "ap_satisfied", "word_symbol", "observe",
    "load_scenario", "scenario_from_json",
]

GO_TO, PICK_UP, PUT_DOWN, OPEN, NOTHING, REPORT = 1, 2, 3, 4, 5, 6
_NEEDS_TARGET = {GO_TO, PICK_UP, OPEN}


class MalformedDecision(ValueError):
    pass


class UnresolvableTarget(LookupError):
    pass


@dataclass(frozen=True)
class SemanticObject:
    id: str
    cls: str
    location: str
    expected: str | None = None
    container: str | None = None  # id of the container it sits in, if any
    held: bool = False

    @property
    def expected_location(self) -> str:
        return self.expected or self.location


@dataclass(frozen=True)
class Container:
    id: str
    kind: str  # fridge | drawer
    location: str
    open: bool = False


@dataclass(frozen=True)
class RobotState:
    at: str
    holding: str | None = None


@dataclass(frozen=True)
class World:
    locations: tuple[str, ...]
    objects: tuple[SemanticObject, ...]
    containers: tuple[Container, ...] = ()
    blocked: frozenset = frozenset()
    # descriptor word -> object classes it may refer to
    synonyms: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        locs = set(self.locations)
        for o in self.objects:
            if o.location not in locs or o.expected_location not in locs:
                raise ValueError(f"object {o.id} references an unknown location")
        for c in self.containers:
            if c.location not in locs:
                raise ValueError(f"container {c.id} references an unknown location")
        if not set(self.blocked) <= locs:
            raise ValueError("blocked locations must be valid location ids")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")

    def obj(self, oid: str) -> SemanticObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def container(self, cid: str) -> Container:
        for c in self.containers:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def containers_at(self, loc: str) -> tuple[Container, ...]:
        return tuple(c for c in self.containers if c.location == loc)

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted({o.cls for o in self.objects}))

    def with_object(self, obj: SemanticObject) -> "World":
        return replace(self, objects=tuple(obj if o.id == obj.id else o for o in self.objects))

    def with_container(self, c: Container) -> "World":
        return replace(self, containers=tuple(c if x.id == c.id else x for x in self.containers))

    def to_json(self) -> dict:
        return {
            "locations": list(self.locations),
            "objects": [
                {k: v for k, v in (("id", o.id), ("class", o.cls), ("location", o.location),
                                   ("expected", o.expected), ("container", o.container),
                                   ("held", o.held or None)) if v is not None}
                for o in self.objects
            ],
            "containers": [{"id": c.id, "kind": c.kind, "location": c.location, "open": c.open}
                           for c in self.containers],
            "blocked": sorted(self.blocked),
            "synonyms": {w: list(cs) for w, cs in self.synonyms},
        }


def world_from_json(doc: dict) -> World:
    return World(
        locations=tuple(doc["locations"]),
        objects=tuple(SemanticObject(o["id"], o["class"], o["location"], o.get("expected"),
                                     o.get("container"), bool(o.get("held", False)))
                      for o in doc["objects"]),
        containers=tuple(Container(c["id"], c["kind"], c["location"], bool(c.get("open", False)))
                         for c in doc.get("containers", [])),
        blocked=frozenset(doc.get("blocked", [])),
        synonyms=tuple(sorted((w, tuple(cs)) for w, cs in doc.get("synonyms", {}).items())),
    )


@dataclass(frozen=True)
class Decision:
    action: int
    target: str | None = None

    def __post_init__(self):
        if self.action not in range(1, 7):
            raise MalformedDecision(f"unknown action kind {self.action}")
        if (self.action in _NEEDS_TARGET) != (self.target is not None):
            raise MalformedDecision(f"action {self.action} {'requires' if self.action in _NEEDS_TARGET else 'forbids'} a target")

    def code(self) -> str:
        return f"({self.action}, {self.target})" if self.target is not None else f"({self.action})"

    def text(self) -> str:
        return {
            GO_TO: f"go to location {self.target}",
            PICK_UP: f"pick up object {self.target}",
            PUT_DOWN: "put down object",
            OPEN: f"open the door of the container {self.target}",
            NOTHING: "do nothing",
            REPORT: "report item missing/failure",
        }[self.action]

    def __str__(self):
        return f"{self.code()} {self.text()}"


def decision_set(world: World) -> tuple[Decision, ...]:
    """The fixed multiple-choice set S.

    Order: go-to per location, pick-up per object, put down, open per
    container, do nothing, report failure.
    """
    return (
        tuple(Decision(GO_TO, x) for x in world.locations)
        + tuple(Decision(PICK_UP, o.id) for o in world.objects)
        + (Decision(PUT_DOWN),)
        + tuple(Decision(OPEN, c.id) for c in world.containers)
        + (Decision(NOTHING), Decision(REPORT))
    )


@dataclass(frozen=True)
class Fact:
    kind: str  # object-seen | object-missing | door-state | location-blocked
    args: tuple

    def text(self) -> str:
        if self.kind == "object-seen":
            return f"object of class {self.args[0]} exists in location {self.args[1]}"
        if self.kind == "object-missing":
            return f"no object in location {self.args[0]}"
        if self.kind == "door-state":
            return f"the door of {self.args[0]} is {self.args[1]}"
        if self.kind == "location-blocked":
            return f"location {self.args[0]} is blocked"
        raise ValueError(self.kind)


@dataclass(frozen=True)
class SensorFeedback:
    facts: tuple[Fact, ...]

    @property
    def text(self) -> str:
        return "; ".join(f.text() for f in self.facts)


class Outcome(str, Enum):
    OK = "ok"
    FAILED = "failed"
    REPORTED = "reported"


@dataclass(frozen=True)
class StepResult:
    world: World
    robot: RobotState
    feedback: SensorFeedback
    outcome: Outcome


def observe(world: World, robot: RobotState, extra: Iterable[Fact] = ()) -> SensorFeedback:
    loc = robot.at
    facts = list(extra)
    seen = [o for o in world.objects if o.location == loc and not o.held]
    for o in seen:
        facts.append(Fact("object-seen", (o.cls, loc)))
    if not seen:
        facts.append(Fact("object-missing", (loc,)))
    for c in world.containers_at(loc):
        facts.append(Fact("door-state", (c.id, "open" if c.open else "closed")))
    return SensorFeedback(tuple(facts))


def apply(world: World, robot: RobotState, decision: Decision) -> StepResult:
    """Execute one decision. Domain failures are reported as outcomes."""
    def done(w=world, r=robot, outcome=Outcome.OK, extra=()):
        return StepResult(w, r, observe(w, r, extra), outcome)

    a, x = decision.action, decision.target
    if a == GO_TO:
        if x not in world.locations:
            raise MalformedDecision(f"unknown location {x!r}")
        if x in world.blocked:
            return done(outcome=Outcome.FAILED, extra=[Fact("location-blocked", (x,))])
        w = world
        if robot.holding is not None:
            w = w.with_object(replace(w.obj(robot.holding), location=x))
        return done(w, replace(robot, at=x))
    if a == PICK_UP:
        try:
            o = world.obj(x)
        except KeyError:
            raise MalformedDecision(f"unknown object {x!r}") from None
        if robot.holding is not None or o.location != robot.at:
            return done(outcome=Outcome.FAILED)
        if o.container is not None and not world.container(o.container).open:
            c = world.container(o.container)
            return done(outcome=Outcome.FAILED, extra=[Fact("door-state", (c.id, "closed"))])
        w = world.with_object(replace(o, container=None, held=True, expected=None))
        return done(w, replace(robot, holding=x))
    if a == PUT_DOWN:
        if robot.holding is None:
            return done(outcome=Outcome.FAILED)
        w = world.with_object(replace(world.obj(robot.holding), held=False))
        return done(w, replace(robot, holding=None))
    if a == OPEN:
        try:
            c = world.container(x)
        except KeyError:
            raise MalformedDecision(f"unknown container {x!r}") from None
        if c.location != robot.at:
            return done(outcome=Outcome.FAILED)
        return done(world.with_container(replace(c, open=True)))
    if a == NOTHING:
        return done()
    return done(outcome=Outcome.REPORTED)


_ARTICLES = ("a ", "an ", "the ", "some ")


def _norm(s: str) -> str:
    s = s.strip().lower()
    for art in _ARTICLES:
        if s.startswith(art):
            s = s[len(art):]
    return s


def matching_objects(world: World, descriptor: str) -> tuple[SemanticObject, ...]:
    """Objects a target descriptor refers to: by id, then by class, then by synonym."""
    d = _norm(descriptor)
    by_id = tuple(o for o in world.objects if o.id.lower() == d)
    if by_id:
        return by_id
    by_cls = tuple(o for o in world.objects if o.cls.lower() == d)
    if by_cls:
        return by_cls
    for word, classes in world.synonyms:
        if _norm(word) == d:
            wanted = {c.lower() for c in classes}
            return tuple(o for o in world.objects if o.cls.lower() in wanted)
    raise UnresolvableTarget(f"no object matches {descriptor!r}")


def ap_satisfied(world: World, ap: AtomicProposition) -> bool:
    """True when at least ``ap.quantity`` matching objects rest at the destination.

    An object the robot is holding does not count as delivered.
    """
    if ap.destination not in world.locations:
        raise UnresolvableTarget(f"unknown destination {ap.destination!r}")
    n = sum(1 for o in matching_objects(world, ap.target)
            if o.location == ap.destination and not o.held)
    return n >= ap.quantity


def word_symbol(world: World, aps: Sequence[AtomicProposition]) -> int:
    """Bitmask of the APs currently satisfied; bit ``i`` is ``aps[i]``."""
    m = 0
    for i, ap in enumerate(aps):
        if ap_satisfied(world, ap):
            m |= 1 << i
    return m


@dataclass(frozen=True)
class Scenario:
    name: str
    world: World
    robot: RobotState
    atoms: tuple[AtomicProposition, ...] = ()
    formula: str | None = None
    description: str = field(default="", compare=False)

    def to_json(self) -> dict:
        doc = {"name": self.name, "description": self.description, **self.world.to_json(),
               "robot": {"at": self.robot.at, "holding": self.robot.holding}}
        if self.atoms:
            doc["atoms"] = [a.to_json() for a in self.atoms]
        if self.formula is not None:
            doc["formula"] = self.formula
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def scenario_from_json(doc: dict) -> Scenario:
    from .ltl import atoms_from_json
    r = doc.get("robot", {})
    world = world_from_json(doc)
    robot = RobotState(r.get("at", world.locations[0]), r.get("holding"))
    if robot.at not in world.locations:
        raise ValueError("robot starts at an unknown location")
    atoms = tuple(atoms_from_json(doc["atoms"])) if doc.get("atoms") else ()
    return Scenario(doc.get("name", "scenario"), world, robot, atoms, doc.get("formula"),
                    doc.get("description", ""))


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_json(json.loads(Path(path).read_text()))
