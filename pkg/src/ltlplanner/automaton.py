"""Pruned task automaton: feasible symbols, hop distances and online sub-task selection."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .ltl import AtomicProposition, Dfa

__all__ = [
    "INF",
    "PrunedDfa",
    "MissionState",
    "SubtaskAssignment",
    "NoProgress",
    "NoSubtask",
    "InfeasibleSymbol",
    "prune",
    "distance",
    "reachable_next",
    "select_subtask",
    "advance",
    "initial_state",
    "make_assignment",
    "candidate_aps",
    "selection_rng",
]

INF = math.inf


class NoProgress(RuntimeError):
    """No one-hop-closer state exists and nothing has been abandoned yet."""


class NoSubtask(RuntimeError):
    """Every candidate sub-task has been exhausted."""


class InfeasibleSymbol(ValueError):
    pass


@dataclass(frozen=True)
class PrunedDfa:
    base: Dfa
    infeasible_symbols: frozenset
    feasible_transitions: dict = field(compare=False)
    dist: np.ndarray = field(compare=False, repr=False)

    @property
    def accepting(self):
        return self.base.accepting

    def feasible(self, q: int, q2: int) -> tuple[int, ...]:
        return self.feasible_transitions.get((q, q2), ())

    def distance_to_goal(self, q: int) -> float:
        if self.base.accepting is None:
            return INF
        return distance(self, q, self.base.accepting)

    @property
    def satisfiable(self) -> bool:
        return self.distance_to_goal(self.base.initial) < INF

    def to_json(self) -> dict:
        dfa = self.base
        names = [dfa.state_name(q) for q in dfa.states]

        def fmt(m):
            return sorted(dfa.symbol_ids(m))

        return {
            "states": names,
            "infeasible_symbols": [fmt(m) for m in sorted(self.infeasible_symbols)],
            "feasible_transitions": [
                {"from": names[q], "to": names[q2], "symbols": [fmt(m) for m in syms]}
                for (q, q2), syms in sorted(self.feasible_transitions.items())
            ],
            "distance": [[None if math.isinf(d) else int(d) for d in row] for row in self.dist],
        }


def prune(dfa: Dfa) -> PrunedDfa:
    """Drop every symbol needing two or more APs at once and tabulate hop distances."""
    infeasible = frozenset(m for m in dfa.symbols if bin(m).count("1") >= 2)
    feas: dict[tuple[int, int], list[int]] = {}
    for q in dfa.states:
        for m in dfa.symbols:
            if m not in infeasible:
                feas.setdefault((q, dfa.step(q, m)), []).append(m)
    feasible_transitions = {k: tuple(v) for k, v in feas.items()}

    n = dfa.n_states
    adj = np.zeros((n, n))
    for (q, q2) in feasible_transitions:
        if q != q2:
            adj[q, q2] = 1.0
    dist = shortest_path(csr_matrix(adj), method="D", directed=True, unweighted=True)
    dist.setflags(write=False)
    return PrunedDfa(dfa, infeasible, feasible_transitions, dist)


def distance(pruned: PrunedDfa, q: int, q2: int):
    """Minimum number of feasible transitions from ``q`` to ``q2`` (``INF`` if none)."""
    d = pruned.dist[q, q2]
    return INF if math.isinf(d) else int(d)


@dataclass(frozen=True)
class MissionState:
    current: int
    time: int = 0
    # pairs (q_next, ap_id) already tried and abandoned from ``current``
    exhausted_aps: frozenset = frozenset()
    exhausted_targets: frozenset = frozenset()
    rng_seed: int | str = 0

    def exhaust_ap(self, q_next: int, ap_id: int | None) -> "MissionState":
        return replace(self, exhausted_aps=self.exhausted_aps | {(q_next, ap_id)})

    def exhaust_target(self, q_next: int) -> "MissionState":
        return replace(self, exhausted_targets=self.exhausted_targets | {q_next})


def initial_state(pruned: PrunedDfa, seed: int | str = 0) -> MissionState:
    return MissionState(pruned.base.initial, rng_seed=seed)


@dataclass(frozen=True)
class SubtaskAssignment:
    """The next DFA state to reach and the single AP that should enable it.

    ``next_ap`` is ``None`` when the transition is enabled by the empty
    symbol (e.g. a pure ``X`` step); the robot then only has to wait.
    """

    current_state: int
    next_state: int
    next_ap: AtomicProposition | None
    self_loop_symbols: tuple[int, ...]
    enabling_symbols: tuple[int, ...]
    forbidden_aps: tuple[AtomicProposition, ...]
    allowed_aps: tuple[AtomicProposition, ...]
    aps: tuple[AtomicProposition, ...] = ()  # bit order of the symbol masks

    def key(self) -> tuple:
        return (self.current_state, self.next_state, self.next_ap.id if self.next_ap else None)


def reachable_next(pruned: PrunedDfa, state: MissionState) -> frozenset:
    q = state.current
    if q == pruned.accepting:
        return frozenset()
    d = pruned.distance_to_goal(q)
    if math.isinf(d):
        raise NoProgress(f"state {pruned.base.state_name(q)} cannot reach the accepting state")
    out = frozenset(
        q2 for q2 in pruned.base.states
        if q2 != q and pruned.distance_to_goal(q2) == d - 1
    ) - state.exhausted_targets
    if not out and not state.exhausted_targets:
        raise NoProgress("no one-hop-closer state")
    return out


def candidate_aps(pruned: PrunedDfa, state: MissionState, q2: int) -> list[int | None]:
    dfa = pruned.base
    out = []
    for m in pruned.feasible(state.current, q2):
        ap_id = dfa.aps[m.bit_length() - 1].id if m else None
        if (q2, ap_id) not in state.exhausted_aps:
            out.append(ap_id)
    return out


def selection_rng(state: MissionState) -> random.Random:
    key = (f"{state.rng_seed}|{state.current}|{state.time}|"
           f"{sorted(state.exhausted_aps, key=repr)}|{sorted(state.exhausted_targets)}")
    return random.Random(key)


def make_assignment(pruned: PrunedDfa, q: int, q2: int, ap_id: int | None) -> SubtaskAssignment:
    dfa = pruned.base
    loop = pruned.feasible(q, q)
    allowed_ids = {dfa.aps[m.bit_length() - 1].id for m in loop if m}
    allowed = tuple(a for a in dfa.aps if a.id in allowed_ids and a.id != ap_id)
    forbidden = tuple(a for a in dfa.aps if a.id not in allowed_ids and a.id != ap_id)
    ap = next((a for a in dfa.aps if a.id == ap_id), None)
    return SubtaskAssignment(q, q2, ap, loop, pruned.feasible(q, q2), forbidden, allowed, dfa.aps)


def select_subtask(pruned: PrunedDfa, state: MissionState) -> SubtaskAssignment:
    """Pick ``q_next`` uniformly among the live candidates, then ``pi_next`` uniformly.

    The draw is a pure function of ``state`` (including its seed).
    """
    targets = sorted(reachable_next(pruned, state))
    live = [(q2, aps) for q2 in targets if (aps := candidate_aps(pruned, state, q2))]
    if not live:
        raise NoSubtask("all sub-tasks towards every reachable state are exhausted")
    rng = selection_rng(state)
    q2, aps = live[rng.randrange(len(live))]
    ap_id = aps[rng.randrange(len(aps))]
    return make_assignment(pruned, state.current, q2, ap_id)


def advance(pruned: PrunedDfa, state: MissionState, word_symbol: int) -> MissionState:
    if word_symbol in pruned.infeasible_symbols:
        raise InfeasibleSymbol(f"symbol {pruned.base.symbol_ids(word_symbol)} needs several sub-tasks at once")
    q2 = pruned.base.step(state.current, word_symbol)
    if q2 == state.current:
        return replace(state, time=state.time + 1)
    return MissionState(q2, state.time + 1, frozenset(), frozenset(), state.rng_seed)
