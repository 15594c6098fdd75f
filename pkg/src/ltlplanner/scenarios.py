"""Built-in scenario library."""
from __future__ import annotations

from .ltl import AtomicProposition as AP
from .world import Container, RobotState, Scenario, SemanticObject, World

__all__ = ["fig_env", "kitchen", "case_study_1", "case_study_2", "SCENARIOS", "get_scenario",
           "HARD_ATOMS", "HARD_FORMULA"]


def fig_env() -> Scenario:
    """Six-location world with two Cokes, a water bottle in an open fridge and a pen in a drawer."""
    world = World(
        locations=tuple(f"x{i}" for i in range(1, 7)),
        objects=(
            SemanticObject("coke1", "Coke", "x1"),
            SemanticObject("coke2", "Coke", "x5"),
            SemanticObject("water", "Water Bottle", "x4", container="fridge"),
            SemanticObject("pen", "Pen", "x6", container="drawer"),
        ),
        containers=(Container("fridge", "fridge", "x4", open=True),
                    Container("drawer", "drawer", "x6", open=False)),
        synonyms=(("drink", ("Coke", "Water Bottle")),),
    )
    atoms = (AP(1, "deliver", "water", "x3"), AP(2, "deliver", "Coke", "x3"))
    return Scenario("fig_env", world, RobotState("x2"), atoms, "F p1 & (!p1 U p2)",
                    "Water bottle and a Coke are to be delivered to the table at x3, Coke first.")


def kitchen() -> Scenario:
    """Kitchen with six object locations LA..LF plus the robot's home position.

    Decision set size is 7 go-to + 6 pick-up + put-down + 2 open + nothing + report = 18.
    """
    world = World(
        locations=("LA", "LB", "LC", "LD", "LE", "LF", "home"),
        objects=(
            SemanticObject("apple", "Apple", "LA"),
            SemanticObject("can", "Tin Can", "LB", container="drawer"),
            SemanticObject("pen", "Pen", "LC"),
            SemanticObject("water", "Water Bottle", "LD", container="fridge"),
            SemanticObject("coke1", "Coke", "LE"),
            SemanticObject("coke2", "Coke", "LF"),
        ),
        containers=(Container("drawer", "drawer", "LB"), Container("fridge", "fridge", "LD")),
        synonyms=(("drink", ("Coke", "Water Bottle")),),
    )
    return Scenario("kitchen", world, RobotState("home"), HARD_ATOMS, HARD_FORMULA,
                    "Kitchen with fridge and drawer; default task is the five-sub-task mission.")


HARD_ATOMS = (
    AP(1, "move", "can", "LA"),
    AP(2, "move", "can", "LE"),
    AP(3, "move", "can", "LD"),
    AP(4, "move", "pen", "LF"),
    AP(5, "move", "coke1", "LA"),
)
HARD_FORMULA = "F p1 & F p2 & F p3 & (!p3 U p2) & F p5 & (!p2 U p5) & (!p5 U p1) & F p4"


def case_study_1() -> Scenario:
    """Either Coke may be delivered to x3, but Coke #2 sits behind an obstacle."""
    base = fig_env()
    world = World(base.world.locations, base.world.objects, base.world.containers,
                  frozenset({"x5"}), base.world.synonyms)
    atoms = (AP(1, "deliver", "coke1", "x3"), AP(2, "deliver", "coke2", "x3"))
    return Scenario("case_study_1", world, base.robot, atoms, "F (p1 | p2)",
                    "Deliver Coke #1 or Coke #2 to x3; x5 is blocked.")


def case_study_2() -> Scenario:
    """Two ambiguous 'bring a drink' sub-tasks; the second needs a second drink at LC."""
    base = kitchen()
    atoms = (AP(1, "bring", "drink", "LC", 1), AP(2, "bring", "drink", "LC", 2))
    return Scenario("case_study_2", base.world, base.robot, atoms, "F p1 & F p2",
                    "Bring a drink to LC, twice.")


SCENARIOS = {
    "fig_env": fig_env,
    "kitchen": kitchen,
    "case_study_1": case_study_1,
    "case_study_2": case_study_2,
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
