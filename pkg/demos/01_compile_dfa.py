"""Compile a few co-safe formulas and print automaton sizes and a DOT rendering."""
from ltlplanner.ltl import AtomicProposition, export_dot, parse_ltl, to_dfa

atoms = [AtomicProposition(1, "deliver", "water", "x3"), AtomicProposition(2, "deliver", "Coke", "x3")]
for text in ["F p1", "F p1 & F p2", "F p1 & (!p1 U p2)", "X p1"]:
    dfa = to_dfa(parse_ltl(text, atoms))
    print(f"{text:<22} states={dfa.n_states} edges={dfa.n_edges}")

print()
print(export_dot(to_dfa(parse_ltl("F p1 & (!p1 U p2)", atoms))))
