"""Step the kitchen world by hand, then let the oracle plan one sub-task."""
from ltlplanner.automaton import initial_state, prune, select_subtask
from ltlplanner.ltl import parse_ltl, to_dfa
from ltlplanner.scenarios import get_scenario
from ltlplanner.scoring import oracle_plan
from ltlplanner.world import apply, decision_set

sc = get_scenario("kitchen")
world, robot = sc.world, sc.robot
decisions = decision_set(world)
print(len(decisions), "decisions, e.g.", [str(d) for d in decisions[:4]])
for d in decisions[:2]:
    res = apply(world, robot, d)
    print(f"{d}: {res.outcome.value}")
    world, robot = res.world, res.robot

pruned = prune(to_dfa(parse_ltl("F p1", sc.atoms)))
sub = select_subtask(pruned, initial_state(pruned))
print("sub-task:", sub.next_ap.nl_text)
print("oracle plan:", [str(d) for d in oracle_plan(sc.world, sc.robot, sub)])
