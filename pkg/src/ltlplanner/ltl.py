"""Co-safe LTL over natural-language sub-tasks, compiled to a finite-trace DFA.

Formulas are written with prefix temporal operators and atoms named ``p<id>``::

    F p2 & (!p1 U p2)

The compiler progresses the formula over every symbol of ``2^AP`` (finite-trace
semantics), minimizes the resulting automaton and collapses all accepting
states into one absorbing state.
"""
from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "AtomicProposition",
    "TrueNode",
    "FalseNode",
    "Atom",
    "Not",
    "And",
    "Or",
    "Next",
    "Until",
    "Eventually",
    "Formula",
    "Dfa",
    "LTLSyntaxError",
    "NonCoSafe",
    "UnknownAtom",
    "parse_ltl",
    "to_dfa",
    "export_dot",
    "load_atoms",
    "atoms_from_json",
    "evaluate_finite",
    "render_formula",
]

ACTIONS = ("deliver", "move", "bring")


@dataclass(frozen=True)
class AtomicProposition:
    """A natural-language sub-task ``[action] [target] to [destination]``.

    ``quantity`` is the number of matching objects that must sit at the
    destination; it only matters when two atoms share target and destination.
    """

    id: int
    action: str
    target: str
    destination: str
    quantity: int = 1

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}; expected one of {ACTIONS}")
        if self.quantity < 1:
            raise ValueError("quantity must be >= 1")

    @property
    def nl_text(self) -> str:
        return f"{self.action.capitalize()} {self.target} to {self.destination}"

    @property
    def name(self) -> str:
        return f"p{self.id}"

    def to_json(self) -> dict:
        d = {"id": self.id, "action": self.action, "target": self.target,
             "destination": self.destination}
        if self.quantity != 1:
            d["quantity"] = self.quantity
        return d


def atoms_from_json(doc) -> list[AtomicProposition]:
    """Build atoms from a JSON document (a list, or ``{"atoms": [...]}``)."""
    if isinstance(doc, dict):
        doc = doc["atoms"]
    atoms = [AtomicProposition(int(a["id"]), a["action"], a["target"], a["destination"],
                               int(a.get("quantity", 1))) for a in doc]
    ids = [a.id for a in atoms]
    if len(set(ids)) != len(ids):
        raise ValueError("atom ids must be unique")
    return atoms


def load_atoms(path: str | Path) -> list[AtomicProposition]:
    return atoms_from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Abstract syntax (negation normal form after parsing)

@dataclass(frozen=True)
class TrueNode:
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseNode:
    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Atom:
    id: int

    def __str__(self):
        return f"p{self.id}"


@dataclass(frozen=True)
class Not:
    """Negation; after normalization it only wraps an :class:`Atom`."""

    arg: object

    def __str__(self):
        return f"!{self.arg}"


@dataclass(frozen=True)
class And:
    args: tuple

    def __str__(self):
        return "(" + " & ".join(map(str, self.args)) + ")"


@dataclass(frozen=True)
class Or:
    args: tuple

    def __str__(self):
        return "(" + " | ".join(map(str, self.args)) + ")"


@dataclass(frozen=True)
class Next:
    arg: object

    def __str__(self):
        return f"X {self.arg}"


@dataclass(frozen=True)
class Until:
    left: object
    right: object

    def __str__(self):
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class Eventually:
    arg: object

    def __str__(self):
        return f"F {self.arg}"


@dataclass(frozen=True)
class _Always:
    # only produced transiently by the parser so it can be rejected
    arg: object


_TEMPORAL = (Next, Until, Eventually, _Always)


@dataclass(frozen=True)
class Formula:
    root: object
    ap_set: tuple[AtomicProposition, ...]
    text: str = field(default="", compare=False)

    def __str__(self):
        return render_formula(self.root)

    def ap_index(self, ap_id: int) -> int:
        for i, ap in enumerate(self.ap_set):
            if ap.id == ap_id:
                return i
        raise KeyError(ap_id)


def render_formula(node) -> str:
    return str(node)


class LTLSyntaxError(SyntaxError):
    """Malformed formula text; ``offset`` is the 0-based byte offset."""

    def __init__(self, msg: str, text: str, offset: int):
        super().__init__(f"{msg} at byte {offset}")
        self.text = text
        self.offset = offset


class NonCoSafe(ValueError):
    pass


class UnknownAtom(ValueError):
    pass


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(r"\s*(?:(?P<atom>p\d+)|(?P<kw>true|false)|(?P<op>->|[!&|()XFGU]))")


def _tokenize(text: str):
    pos = 0
    data = text.encode()
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            off = len(text[:pos].encode()) + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise LTLSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r}", text, off)
        kind = m.lastgroup
        start = m.start(kind)
        # identifiers glued to letters (e.g. "pX") are not valid
        if kind == "kw" and m.end() < len(text) and (text[m.end()].isalnum() or text[m.end()] == "_"):
            raise LTLSyntaxError("unexpected identifier", text, len(text[:start].encode()))
        tokens.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(("eof", "", len(data)))
    return tokens


class _Parser:
    # precedence (loosest first): ->, |, &, U, unary
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise LTLSyntaxError(msg, self.text, tok[2])

    def parse(self):
        if self.peek()[0] == "eof":
            self.error("empty formula")
        node = self.implication()
        if self.peek()[0] != "eof":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def implication(self):
        left = self.disjunction()
        if self.peek()[1] == "->":
            self.take()
            right = self.implication()
            return ("imp", left, right)
        return left

    def disjunction(self):
        args = [self.conjunction()]
        while self.peek()[1] == "|":
            self.take()
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else ("or", *args)

    def conjunction(self):
        args = [self.until()]
        while self.peek()[1] == "&":
            self.take()
            args.append(self.until())
        return args[0] if len(args) == 1 else ("and", *args)

    def until(self):
        left = self.unary()
        if self.peek()[1] == "U":
            self.take()
            return ("U", left, self.until())
        return left

    def unary(self):
        kind, val, _ = tok = self.peek()
        if kind == "op" and val in "!XFG" and val:
            self.take()
            return ({"!": "not", "X": "X", "F": "F", "G": "G"}[val], self.unary())
        if kind == "op" and val == "(":
            self.take()
            node = self.implication()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return node
        if kind == "atom":
            self.take()
            return ("atom", int(val[1:]), tok[2])
        if kind == "kw":
            self.take()
            return (val,)
        if kind == "eof":
            self.error("unexpected end of formula")
        self.error(f"unexpected token {val!r}")


def _build(tree, atoms: dict[int, AtomicProposition], text: str):
    tag = tree[0]
    if tag == "true":
        return TrueNode()
    if tag == "false":
        return FalseNode()
    if tag == "atom":
        if tree[1] not in atoms:
            raise UnknownAtom(f"p{tree[1]} (byte {tree[2]}) has no matching atomic proposition")
        return Atom(tree[1])
    if tag == "not":
        return ("raw-not", _build(tree[1], atoms, text))
    if tag == "and":
        return And(tuple(_build(t, atoms, text) for t in tree[1:]))
    if tag == "or":
        return Or(tuple(_build(t, atoms, text) for t in tree[1:]))
    if tag == "imp":
        return Or((("raw-not", _build(tree[1], atoms, text)), _build(tree[2], atoms, text)))
    if tag == "X":
        return Next(_build(tree[1], atoms, text))
    if tag == "F":
        return Eventually(_build(tree[1], atoms, text))
    if tag == "G":
        return _Always(_build(tree[1], atoms, text))
    if tag == "U":
        return Until(_build(tree[1], atoms, text), _build(tree[2], atoms, text))
    raise AssertionError(tag)


def _nnf(node, negate=False):
    if isinstance(node, tuple) and node[0] == "raw-not":
        return _nnf(node[1], not negate)
    if isinstance(node, _Always):
        if negate:  # !G a == F !a
            return Eventually(_nnf(node.arg, True))
        raise NonCoSafe("'G' (always) is outside the co-safe fragment")
    if isinstance(node, TrueNode):
        return FalseNode() if negate else node
    if isinstance(node, FalseNode):
        return TrueNode() if negate else node
    if isinstance(node, Atom):
        return Not(node) if negate else node
    if isinstance(node, (And, Or)):
        args = tuple(_nnf(a, negate) for a in node.args)
        flip = isinstance(node, And) == negate
        return _mk_or(args) if flip else _mk_and(args)
    if negate:
        raise NonCoSafe(f"negated temporal subformula {node} is outside the co-safe fragment")
    if isinstance(node, Next):
        return Next(_nnf(node.arg))
    if isinstance(node, Eventually):
        return Eventually(_nnf(node.arg))
    if isinstance(node, Until):
        return Until(_nnf(node.left), _nnf(node.right))
    raise AssertionError(node)


def _mk_and(args):
    flat = []
    for a in args:
        flat.extend(a.args if isinstance(a, And) else (a,))
    if any(isinstance(a, FalseNode) for a in flat):
        return FalseNode()
    flat = [a for a in flat if not isinstance(a, TrueNode)]
    if not flat:
        return TrueNode()
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def _mk_or(args):
    flat = []
    for a in args:
        flat.extend(a.args if isinstance(a, Or) else (a,))
    if any(isinstance(a, TrueNode) for a in flat):
        return TrueNode()
    flat = [a for a in flat if not isinstance(a, FalseNode)]
    if not flat:
        return FalseNode()
    return flat[0] if len(flat) == 1 else Or(tuple(flat))


def _atom_ids(node, out: set):
    if isinstance(node, Atom):
        out.add(node.id)
    elif isinstance(node, (Not, Next, Eventually)):
        _atom_ids(node.arg, out)
    elif isinstance(node, (And, Or)):
        for a in node.args:
            _atom_ids(a, out)
    elif isinstance(node, Until):
        _atom_ids(node.left, out)
        _atom_ids(node.right, out)
    return out


def parse_ltl(text: str, atoms: Sequence[AtomicProposition]) -> Formula:
    """Parse ``text`` into a negation-normal-form :class:`Formula`.

    Raises :class:`LTLSyntaxError`, :class:`NonCoSafe` or :class:`UnknownAtom`.
    """
    by_id = {}
    for a in atoms:
        if a.id in by_id:
            raise ValueError(f"duplicate atom id {a.id}")
        by_id[a.id] = a
    tree = _Parser(text).parse()
    root = _nnf(_build(tree, by_id, text))
    used = sorted(_atom_ids(root, set()))
    return Formula(root, tuple(by_id[i] for i in used), text)


# ---------------------------------------------------------------------------
# Finite-trace semantics

def evaluate_finite(node, word: Sequence[frozenset | set], i: int = 0) -> bool:
    """Direct recursive LTLf evaluation of ``node`` at position ``i``.

    ``word`` is a sequence of sets of atom ids. The empty word satisfies only
    formulas equivalent to ``true``.
    """
    n = len(word)
    if i >= n:
        return isinstance(node, TrueNode)
    if isinstance(node, TrueNode):
        return True
    if isinstance(node, FalseNode):
        return False
    if isinstance(node, Atom):
        return node.id in word[i]
    if isinstance(node, Not):
        return node.arg.id not in word[i]
    if isinstance(node, And):
        return all(evaluate_finite(a, word, i) for a in node.args)
    if isinstance(node, Or):
        return any(evaluate_finite(a, word, i) for a in node.args)
    if isinstance(node, Next):
        return i + 1 < n and evaluate_finite(node.arg, word, i + 1)
    if isinstance(node, Eventually):
        return any(evaluate_finite(node.arg, word, j) for j in range(i, n))
    if isinstance(node, Until):
        for j in range(i, n):
            if evaluate_finite(node.right, word, j):
                return True
            if not evaluate_finite(node.left, word, j):
                return False
        return False
    raise TypeError(node)


# Obligations are positive boolean combinations of literals kept in a
# minimal DNF: a frozenset of clauses, each a frozenset of literals.
_DNF_TRUE = frozenset([frozenset()])
_DNF_FALSE = frozenset()


def _dnf_minimize(clauses) -> frozenset:
    clauses = set(clauses)
    out = []
    for c in sorted(clauses, key=len):
        if any(o <= c for o in out):
            continue
        # p and !p together can never hold
        if any(isinstance(l, Not) and l.arg in c for l in c):
            continue
        out.append(c)
    return frozenset(out)


def _dnf_and(a, b):
    return _dnf_minimize(x | y for x in a for y in b)


def _dnf_or(a, b):
    return _dnf_minimize(a | b)


def _to_dnf(node) -> frozenset:
    if isinstance(node, TrueNode):
        return _DNF_TRUE
    if isinstance(node, FalseNode):
        return _DNF_FALSE
    if isinstance(node, And):
        acc = _DNF_TRUE
        for a in node.args:
            acc = _dnf_and(acc, _to_dnf(a))
        return acc
    if isinstance(node, Or):
        acc = _DNF_FALSE
        for a in node.args:
            acc = _dnf_or(acc, _to_dnf(a))
        return acc
    return frozenset([frozenset([node])])


class _Progressor:
    def __init__(self):
        self._lit_cache = {}
        self._last_cache = {}

    def literal(self, lit, sym: frozenset) -> frozenset:
        key = (lit, sym)
        hit = self._lit_cache.get(key)
        if hit is not None:
            return hit
        if isinstance(lit, Atom):
            res = _DNF_TRUE if lit.id in sym else _DNF_FALSE
        elif isinstance(lit, Not):
            res = _DNF_FALSE if lit.arg.id in sym else _DNF_TRUE
        elif isinstance(lit, Next):
            res = _to_dnf(lit.arg)
        elif isinstance(lit, Eventually):
            res = _dnf_or(self.dnf(_to_dnf(lit.arg), sym), frozenset([frozenset([lit])]))
        elif isinstance(lit, Until):
            stay = _dnf_and(self.dnf(_to_dnf(lit.left), sym), frozenset([frozenset([lit])]))
            res = _dnf_or(self.dnf(_to_dnf(lit.right), sym), stay)
        else:
            raise TypeError(lit)
        self._lit_cache[key] = res
        return res

    def dnf(self, obligation: frozenset, sym: frozenset) -> frozenset:
        acc = _DNF_FALSE
        for clause in obligation:
            part = _DNF_TRUE
            for lit in clause:
                part = _dnf_and(part, self.literal(lit, sym))
                if not part:
                    break
            acc = _dnf_or(acc, part)
        return acc

    def last_ok_literal(self, lit, sym) -> bool:
        key = (lit, sym)
        hit = self._last_cache.get(key)
        if hit is not None:
            return hit
        if isinstance(lit, Atom):
            res = lit.id in sym
        elif isinstance(lit, Not):
            res = lit.arg.id not in sym
        elif isinstance(lit, Next):
            res = False
        elif isinstance(lit, Eventually):
            res = self.last_ok(_to_dnf(lit.arg), sym)
        elif isinstance(lit, Until):
            res = self.last_ok(_to_dnf(lit.right), sym)
        else:
            raise TypeError(lit)
        self._last_cache[key] = res
        return res

    def last_ok(self, obligation, sym) -> bool:
        return any(all(self.last_ok_literal(l, sym) for l in clause) for clause in obligation)


# ---------------------------------------------------------------------------
# DFA

@dataclass(frozen=True)
class Dfa:
    """Total DFA over bitmask symbols; bit ``i`` stands for ``aps[i]``.

    ``accepting`` is ``None`` when the formula is unsatisfiable.
    """

    aps: tuple[AtomicProposition, ...]
    initial: int
    accepting: int | None
    transitions: tuple[tuple[int, ...], ...]

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    @property
    def states(self) -> range:
        return range(self.n_states)

    @property
    def n_symbols(self) -> int:
        return 1 << len(self.aps)

    @property
    def symbols(self) -> range:
        return range(self.n_symbols)

    @property
    def satisfiable(self) -> bool:
        return self.accepting is not None

    def step(self, q: int, symbol: int) -> int:
        return self.transitions[q][symbol]

    def run(self, word: Iterable[int], start: int | None = None) -> int:
        q = self.initial if start is None else start
        for sym in word:
            q = self.transitions[q][sym]
        return q

    def accepts(self, word: Iterable[int]) -> bool:
        return self.satisfiable and self.run(word) == self.accepting

    def symbols_between(self, q: int, q2: int) -> tuple[int, ...]:
        return tuple(s for s in self.symbols if self.transitions[q][s] == q2)

    def edges(self) -> set[tuple[int, int]]:
        return {(q, self.transitions[q][s]) for q in self.states for s in self.symbols}

    @property
    def n_edges(self) -> int:
        return len(self.edges())

    def trap_states(self) -> set[int]:
        """States from which the accepting state is unreachable."""
        if self.accepting is None:
            return set(self.states)
        good = {self.accepting}
        changed = True
        while changed:
            changed = False
            for q in self.states:
                if q not in good and any(self.transitions[q][s] in good for s in self.symbols):
                    good.add(q)
                    changed = True
        return set(self.states) - good

    def state_name(self, q: int) -> str:
        return self.names[q]

    @cached_property
    def names(self) -> tuple[str, ...]:
        """Display names: ``qF`` accepting, ``qS`` rejecting sink, ``q0, q1, ...`` otherwise."""
        traps = self.trap_states()
        names, k = [], 0
        for q in self.states:
            if q == self.accepting:
                names.append("qF")
            elif q in traps:
                names.append("qS" if len(traps) == 1 else f"qS{len(names)}")
            else:
                names.append(f"q{k}")
                k += 1
        return tuple(names)

    def symbol_ids(self, symbol: int) -> tuple[int, ...]:
        return tuple(ap.id for i, ap in enumerate(self.aps) if symbol >> i & 1)

    def mask_of(self, ap_ids: Iterable[int]) -> int:
        idx = {ap.id: i for i, ap in enumerate(self.aps)}
        m = 0
        for a in ap_ids:
            m |= 1 << idx[a]
        return m

    def to_json(self) -> dict:
        return {
            "aps": [ap.to_json() for ap in self.aps],
            "initial": self.initial,
            "accepting": self.accepting,
            "names": list(self.names),
            "transitions": [list(row) for row in self.transitions],
            "n_states": self.n_states,
            "n_edges": self.n_edges,
        }


def _symbol_set(mask: int, aps) -> frozenset:
    return frozenset(ap.id for i, ap in enumerate(aps) if mask >> i & 1)


def _hopcroft(n: int, n_sym: int, delta, accepting: set[int]) -> list[int]:
    """Return the block index of every state in the coarsest stable partition."""
    inverse = [[[] for _ in range(n)] for _ in range(n_sym)]
    for q in range(n):
        for s in range(n_sym):
            inverse[s][delta[q][s]].append(q)
    rejecting = set(range(n)) - accepting
    partition = [b for b in (accepting, rejecting) if b]
    work = [frozenset(b) for b in partition]
    while work:
        splitter = work.pop()
        for s in range(n_sym):
            pre = {p for q in splitter for p in inverse[s][q]}
            if not pre:
                continue
            new_partition = []
            for block in partition:
                inside = block & pre
                outside = block - pre
                if inside and outside:
                    new_partition += [inside, outside]
                    fi, fo = frozenset(inside), frozenset(outside)
                    fb = frozenset(block)
                    if fb in work:
                        work.remove(fb)
                        work += [fi, fo]
                    else:
                        work.append(fi if len(inside) <= len(outside) else fo)
                else:
                    new_partition.append(block)
            partition = new_partition
    block_of = [0] * n
    for i, block in enumerate(partition):
        for q in block:
            block_of[q] = i
    return block_of


def to_dfa(formula: Formula) -> Dfa:
    """Compile ``formula`` into a minimal DFA with one absorbing accepting state."""
    aps = formula.ap_set
    n_sym = 1 << len(aps)
    syms = [_symbol_set(m, aps) for m in range(n_sym)]
    prog = _Progressor()

    ACCEPT = "accept"
    init = (_to_dnf(formula.root), _to_dnf(formula.root) == _DNF_TRUE)
    init_key = ACCEPT if init[1] else init[0]
    index = {init_key: 0}
    delta: list[list[int]] = []
    queue = deque([init_key])
    while queue:
        key = queue.popleft()
        row = []
        for m in range(n_sym):
            if key == ACCEPT:
                nxt = ACCEPT
            else:
                # co-safe languages are extension closed, so every accepting
                # configuration collapses into the single absorbing state
                nxt = ACCEPT if prog.last_ok(key, syms[m]) else prog.dnf(key, syms[m])
            if nxt not in index:
                index[nxt] = len(index)
                queue.append(nxt)
            row.append(index[nxt])
        delta.append(row)

    accepting = {index[ACCEPT]} if ACCEPT in index else set()
    blocks = _hopcroft(len(delta), n_sym, delta, accepting)

    # renumber blocks in BFS order from the initial state
    order = {blocks[0]: 0}
    rep = {blocks[0]: 0}
    queue = deque([0])
    while queue:
        q = queue.popleft()
        for m in range(n_sym):
            t = delta[q][m]
            b = blocks[t]
            if b not in order:
                order[b] = len(order)
                rep[b] = t
                queue.append(t)
    transitions = []
    for b, _ in sorted(order.items(), key=lambda kv: kv[1]):
        q = rep[b]
        transitions.append(tuple(order[blocks[delta[q][m]]] for m in range(n_sym)))
    acc = order[blocks[index[ACCEPT]]] if accepting and blocks[index[ACCEPT]] in order else None
    return Dfa(aps, 0, acc, tuple(transitions))


def _fmt_symbol(mask: int, dfa: Dfa) -> str:
    ids = dfa.symbol_ids(mask)
    return "{" + ",".join(f"p{i}" for i in ids) + "}"


def export_dot(dfa: Dfa) -> str:
    """GraphViz DOT text; one edge per (source, target) pair labelled by its symbols."""
    names = dfa.names
    lines = ["digraph dfa {", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for q in dfa.states:
        shape = "doublecircle" if q == dfa.accepting else "circle"
        lines.append(f'  {q} [label="{names[q]}", shape={shape}];')
    lines.append(f"  __start -> {dfa.initial};")
    for q in dfa.states:
        targets = {}
        for m in dfa.symbols:
            targets.setdefault(dfa.transitions[q][m], []).append(m)
        for t in sorted(targets):
            label = " | ".join(_fmt_symbol(m, dfa) for m in targets[t])
            lines.append(f'  {q} -> {t} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def all_words(n_aps: int, max_len: int):
    """Every word over ``2^n_aps`` of length ``0..max_len`` (as mask tuples)."""
    for length in range(max_len + 1):
        yield from product(range(1 << n_aps), repeat=length)
