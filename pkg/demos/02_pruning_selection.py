"""Prune simultaneous symbols, show hop distances and draw a few sub-tasks."""
from ltlplanner.automaton import initial_state, prune, select_subtask
from ltlplanner.ltl import parse_ltl, to_dfa
from ltlplanner.scenarios import get_scenario

sc = get_scenario("kitchen")
pruned = prune(to_dfa(parse_ltl("F p1 & F p2 & (!p1 U p2)", sc.atoms)))
dfa = pruned.base
print("infeasible symbols:", sorted(dfa.symbol_ids(m) for m in pruned.infeasible_symbols))
for q in dfa.states:
    print(f"  {dfa.state_name(q)}: {pruned.distance_to_goal(q)} hops to {dfa.state_name(dfa.accepting)}")

for seed in range(3):
    a = select_subtask(pruned, initial_state(pruned, seed))
    print(f"seed {seed}: {dfa.state_name(a.current_state)} -> {dfa.state_name(a.next_state)} via",
          a.next_ap.nl_text if a.next_ap else "(wait)",
          "| avoid:", [ap.nl_text for ap in a.forbidden_aps])
