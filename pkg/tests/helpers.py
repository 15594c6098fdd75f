"""Shared fixtures for the test-suite: random co-safe formulas and small worlds."""
from __future__ import annotations

import random

from ltlplanner.ltl import AtomicProposition

ATOMS3 = [AtomicProposition(i, "move", f"obj{i}", f"L{i}") for i in (1, 2, 3)]


def random_cosafe(rng: random.Random, n_aps: int, depth: int = 3) -> str:
    """Random formula text in the positive co-safe fragment (negation on atoms only)."""
    def lit():
        a = f"p{rng.randint(1, n_aps)}"
        return f"!{a}" if rng.random() < 0.3 else a

    def go(d):
        if d == 0 or rng.random() < 0.2:
            return lit()
        op = rng.choice(["&", "|", "U", "X", "F", "F"])
        if op in ("X", "F"):
            return f"{op} ({go(d - 1)})"
        return f"({go(d - 1)}) {op} ({go(d - 1)})"

    return go(depth)
