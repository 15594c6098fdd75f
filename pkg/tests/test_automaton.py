import math
import random

import pytest

from helpers import ATOMS3, random_cosafe
from ltlplanner.automaton import (INF, InfeasibleSymbol, MissionState, NoProgress, NoSubtask, advance, candidate_aps,
                                  distance, initial_state, make_assignment, prune, reachable_next,
                                  select_subtask)
from ltlplanner.ltl import AtomicProposition, parse_ltl, to_dfa
from ltlplanner.scenarios import HARD_ATOMS, HARD_FORMULA

P1 = AtomicProposition(1, "deliver", "water", "x3")
P2 = AtomicProposition(2, "deliver", "Coke", "x3")
# the automaton drawn for the worked example: pi2 first, then pi1
EXAMPLE = "F p1 & (!p1 U p2)"


def pruned_of(text, atoms=(P1, P2)):
    return prune(to_dfa(parse_ltl(text, list(atoms))))


def floyd_warshall(pruned):
    dfa = pruned.base
    n = dfa.n_states
    d = [[0 if i == j else math.inf for j in range(n)] for i in range(n)]
    for (q, q2) in pruned.feasible_transitions:
        if q != q2:
            d[q][q2] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i][k] + d[k][j] < d[i][j]:
                    d[i][j] = d[i][k] + d[k][j]
    return d


def names(pruned):
    return {n: q for q, n in enumerate(pruned.base.names)}


class TestPrune:
    def test_two_ap_symbol_infeasible(self):
        p = pruned_of("F p2 & (!p1 U p2)")
        assert [p.base.symbol_ids(m) for m in p.infeasible_symbols] == [(1, 2)]

    def test_single_ap_nothing_pruned(self):
        assert pruned_of("F p1", [P1]).infeasible_symbols == frozenset()

    def test_forced_simultaneous_unreachable(self):
        p = pruned_of("F (p1 & p2)")
        assert distance(p, p.base.initial, p.accepting) == INF
        assert not p.satisfiable

    def test_example_symbol_sets(self):
        p = pruned_of(EXAMPLE)
        q = names(p)
        ids = lambda syms: sorted(p.base.symbol_ids(m) for m in syms)
        assert ids(p.feasible(q["q0"], q["q0"])) == [()]
        assert ids(p.feasible(q["q0"], q["q1"])) == [(2,)]
        assert ids(p.feasible(q["q1"], q["qF"])) == [(1,)]

    def test_to_json(self):
        js = pruned_of(EXAMPLE).to_json()
        assert js["infeasible_symbols"] == [[1, 2]]
        assert js["distance"][0][js["states"].index("qF")] == 2


class TestDistance:
    def test_self_zero(self):
        p = pruned_of(EXAMPLE)
        assert all(distance(p, q, q) == 0 for q in p.base.states)

    def test_example_distance(self):
        p = pruned_of(EXAMPLE)
        assert distance(p, p.base.initial, p.accepting) == 2

    def test_unreachable_inf(self):
        p = pruned_of(EXAMPLE)
        q = names(p)
        assert distance(p, q["qF"], q["q0"]) == INF
        assert distance(p, q["qS"], q["qF"]) == INF

    def test_matches_floyd_warshall(self):
        rng = random.Random(3)
        for _ in range(30):
            n = rng.randint(1, 3)
            p = prune(to_dfa(parse_ltl(random_cosafe(rng, n), ATOMS3[:n])))
            fw = floyd_warshall(p)
            for a in p.base.states:
                for b in p.base.states:
                    assert distance(p, a, b) == fw[a][b]

    def test_hard_formula_five_hops(self):
        p = prune(to_dfa(parse_ltl(HARD_FORMULA, HARD_ATOMS)))
        assert distance(p, p.base.initial, p.accepting) == 5


class TestSelection:
    def test_reachable_next_example(self):
        p = pruned_of(EXAMPLE)
        q = names(p)
        assert reachable_next(p, initial_state(p)) == {q["q1"]}

    def test_reachable_next_at_goal_empty(self):
        p = pruned_of(EXAMPLE)
        assert reachable_next(p, MissionState(p.accepting)) == frozenset()

    def test_reachable_next_exhausted(self):
        p = pruned_of(EXAMPLE)
        st = initial_state(p).exhaust_target(names(p)["q1"])
        assert reachable_next(p, st) == frozenset()
        with pytest.raises(NoSubtask):
            select_subtask(p, st)

    def test_trap_state_no_progress(self):
        p = pruned_of(EXAMPLE)
        with pytest.raises(NoProgress):
            reachable_next(p, MissionState(names(p)["qS"]))

    def test_select_at_q1_gives_pi1(self):
        p = pruned_of(EXAMPLE)
        q = names(p)
        a = select_subtask(p, MissionState(q["q1"]))
        assert a.next_ap.id == 1 and a.next_state == q["qF"]

    def test_select_at_q0_gives_pi2(self):
        p = pruned_of(EXAMPLE)
        for seed in range(5):
            assert select_subtask(p, initial_state(p, seed)).next_ap.id == 2

    def test_assignment_constraints(self):
        p = pruned_of(EXAMPLE)
        a = select_subtask(p, initial_state(p))
        assert [x.id for x in a.forbidden_aps] == [1]
        assert a.allowed_aps == ()
        assert a.self_loop_symbols == (0,)

    def test_selection_deterministic_and_seed_dependent(self):
        p = pruned_of("F (p1 | p2)")
        picks = {select_subtask(p, initial_state(p, s)).next_ap.id for s in range(20)}
        assert picks == {1, 2}
        assert select_subtask(p, initial_state(p, 4)) == select_subtask(p, initial_state(p, 4))

    def test_candidate_aps_respects_exhaustion(self):
        p = pruned_of("F (p1 | p2)")
        st = initial_state(p).exhaust_ap(p.accepting, 1)
        assert candidate_aps(p, st, p.accepting) == [2]

    def test_make_assignment_epsilon(self):
        p = pruned_of("X true", [])
        a = make_assignment(p, p.base.initial, p.accepting, None)
        assert a.next_ap is None


class TestAdvance:
    def test_enabling_symbol(self):
        p = pruned_of(EXAMPLE)
        q = names(p)
        st = advance(p, initial_state(p), p.base.mask_of([2]))
        assert st.current == q["q1"] and st.time == 1

    def test_self_loop(self):
        p = pruned_of(EXAMPLE)
        st = advance(p, initial_state(p), 0)
        assert st.current == p.base.initial and st.time == 1

    def test_infeasible_symbol(self):
        p = pruned_of(EXAMPLE)
        with pytest.raises(InfeasibleSymbol):
            advance(p, initial_state(p), p.base.mask_of([1, 2]))

    def test_progress_clears_exhaustion(self):
        p = pruned_of(EXAMPLE)
        st = initial_state(p).exhaust_ap(5, 9)
        st = advance(p, st, p.base.mask_of([2]))
        assert st.exhausted_aps == frozenset()
