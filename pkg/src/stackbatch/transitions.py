"""Arc-Hybrid and Arc-Eager transition systems.

The buffer is the token sequence followed by a ROOT sentinel; attaching a
token to the sentinel (a Left-Arc with the sentinel at the buffer front)
makes it a sentence root with head 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .stack import POP, PUSH


class System(str, Enum):
    ARC_HYBRID = "arc-hybrid"
    ARC_EAGER = "arc-eager"


SHIFT = "SHIFT"
LEFT_ARC = "LEFT-ARC"
RIGHT_ARC = "RIGHT-ARC"
REDUCE = "REDUCE"

BUFFER_POP = "pop"
BUFFER_HOLD = "hold"


class IllegalTransition(ValueError):
    pass


class NonProjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    kind: str
    label: str | None = None

    def __post_init__(self):
        if self.kind not in (SHIFT, LEFT_ARC, RIGHT_ARC, REDUCE):
            raise ValueError(f"unknown transition kind {self.kind!r}")
        if self.kind in (SHIFT, REDUCE) and self.label is not None:
            raise ValueError(f"{self.kind} takes no label")

    def __str__(self) -> str:
        return self.kind if self.label is None else f"{self.kind}({self.label})"

    @classmethod
    def parse(cls, text: str) -> "Transition":
        text = text.strip()
        if text.endswith(")") and "(" in text:
            kind, label = text[:-1].split("(", 1)
            return cls(kind, label)
        return cls(text)


@dataclass
class DepTree:
    """Gold or predicted tree; ``heads[i]`` and ``labels[i]`` describe token
    ``i + 1``, head 0 is ROOT."""

    heads: list[int]
    labels: list[str]

    def __post_init__(self):
        if len(self.heads) != len(self.labels):
            raise ValueError("heads and labels differ in length")

    @property
    def n(self) -> int:
        return len(self.heads)

    def head(self, token: int) -> int:
        return self.heads[token - 1]

    def label(self, token: int) -> str:
        return self.labels[token - 1]

    def arcs(self) -> set[tuple[int, int, str]]:
        return {(h, d, l) for d, (h, l) in enumerate(zip(self.heads, self.labels), start=1)}

    def problems(self) -> list[str]:
        """Reasons the tree is unusable as gold data (empty if fine)."""
        out = []
        n = self.n
        for d, h in enumerate(self.heads, start=1):
            if not 0 <= h <= n or h == d:
                out.append(f"token {d} has invalid head {h}")
        if out:
            return out
        roots = [d for d, h in enumerate(self.heads, start=1) if h == 0]
        if len(roots) != 1:
            out.append(f"expected exactly one root, found {len(roots)}")
        for start in range(1, n + 1):
            seen = set()
            node = start
            while node != 0:
                if node in seen:
                    out.append(f"cycle through token {start}")
                    break
                seen.add(node)
                node = self.heads[node - 1]
            if out and out[-1].startswith("cycle"):
                break
        return out


def is_projective(tree: DepTree) -> bool:
    """No two arcs cross when drawn above the sentence (ROOT at position 0)."""
    spans = [(min(h, d), max(h, d)) for d, h in enumerate(tree.heads, start=1)]
    for i, (a, b) in enumerate(spans):
        for c, d in spans[i + 1:]:
            if a < c < b < d or c < a < d < b:
                return False
    return True


@dataclass
class Configuration:
    n: int
    stack: list[int] = field(default_factory=list)
    buf: int = 1
    heads: dict[int, tuple[int, str]] = field(default_factory=dict)

    @classmethod
    def initial(cls, n: int) -> "Configuration":
        return cls(n)

    @property
    def sentinel(self) -> int:
        return self.n + 1

    @property
    def b0(self) -> int:
        """Buffer front token id; ``n + 1`` is the ROOT sentinel."""
        return self.buf

    def front_is_token(self) -> bool:
        return self.buf <= self.n

    @property
    def s0(self) -> int | None:
        return self.stack[-1] if self.stack else None

    @property
    def s1(self) -> int | None:
        return self.stack[-2] if len(self.stack) > 1 else None

    def arcs(self) -> set[tuple[int, int, str]]:
        return {(h, d, l) for d, (h, l) in self.heads.items()}

    def is_terminal(self) -> bool:
        return not self.stack and self.buf == self.sentinel

    def copy(self) -> "Configuration":
        return Configuration(self.n, list(self.stack), self.buf, dict(self.heads))

    def as_tree(self, default_label: str = "dep") -> DepTree:
        heads = [self.heads.get(d, (0, default_label))[0] for d in range(1, self.n + 1)]
        labels = [self.heads.get(d, (0, default_label))[1] for d in range(1, self.n + 1)]
        return DepTree(heads, labels)


# transition kind -> (stack op, buffer op)
TABLE = {
    System.ARC_HYBRID: {
        SHIFT: (PUSH, BUFFER_POP),
        LEFT_ARC: (POP, BUFFER_HOLD),
        RIGHT_ARC: (POP, BUFFER_HOLD),
    },
    System.ARC_EAGER: {
        SHIFT: (PUSH, BUFFER_POP),
        REDUCE: (POP, BUFFER_HOLD),
        LEFT_ARC: (POP, BUFFER_HOLD),
        RIGHT_ARC: (PUSH, BUFFER_POP),
    },
}

# Arc-Standard row kept for reference only; Left-Arc needs two pops and a
# push in one step, so it cannot be expressed as a single -1/0/+1 op.
ARC_STANDARD_TABLE = {
    SHIFT: ("push", BUFFER_POP),
    LEFT_ARC: ("pop, pop, push", BUFFER_HOLD),
    RIGHT_ARC: ("pop", BUFFER_HOLD),
}


def stack_buffer_ops(system: System, t: Transition) -> tuple[int, str]:
    system = System(system)
    try:
        return TABLE[system][t.kind]
    except KeyError:
        raise IllegalTransition(f"{t.kind} is not part of {system.value}") from None


def kinds(system: System) -> tuple[str, ...]:
    if System(system) is System.ARC_EAGER:
        return (SHIFT, REDUCE, LEFT_ARC, RIGHT_ARC)
    return (SHIFT, LEFT_ARC, RIGHT_ARC)


def legal_kind(system: System, c: Configuration, kind: str) -> bool:
    system = System(system)
    if system is System.ARC_HYBRID:
        if kind == SHIFT:
            return c.front_is_token()
        if kind == LEFT_ARC:
            return bool(c.stack)
        if kind == RIGHT_ARC:
            return len(c.stack) >= 2
        return False
    if kind == SHIFT:
        return c.front_is_token()
    if kind == LEFT_ARC:
        return bool(c.stack) and c.s0 not in c.heads
    if kind == RIGHT_ARC:
        return c.front_is_token() and bool(c.stack)
    if kind == REDUCE:
        return bool(c.stack) and c.s0 in c.heads
    return False


def legal(system: System, c: Configuration, t: Transition) -> bool:
    return legal_kind(system, c, t.kind)


def apply(system: System, c: Configuration, t: Transition) -> Configuration:
    system = System(system)
    if not legal(system, c, t):
        raise IllegalTransition(f"{t} is illegal in {system.value} at stack={c.stack} buf={c.buf}")
    out = c.copy()
    if t.kind == SHIFT:
        out.stack.append(out.buf)
        out.buf += 1
    elif t.kind == LEFT_ARC:
        dep = out.stack.pop()
        head = 0 if out.buf == out.sentinel else out.buf
        out.heads[dep] = (head, t.label)
    elif t.kind == RIGHT_ARC and system is System.ARC_HYBRID:
        dep = out.stack.pop()
        out.heads[dep] = (out.stack[-1], t.label)
    elif t.kind == RIGHT_ARC:
        dep = out.buf
        out.heads[dep] = (out.stack[-1], t.label)
        out.stack.append(dep)
        out.buf += 1
    elif t.kind == REDUCE:
        out.stack.pop()
    return out


def replay(system: System, n: int, transitions: Iterable[Transition]) -> Configuration:
    c = Configuration.initial(n)
    for t in transitions:
        c = apply(system, c, t)
    return c


def static_oracle(system: System, tree: DepTree) -> list[Transition]:
    system = System(system)
    if not is_projective(tree):
        raise NonProjectiveError("static oracle needs a projective tree")
    n = tree.n
    pending = [0] * (n + 2)  # unattached dependents per token id
    for h in tree.heads:
        pending[h] += 1

    def gold_head(tok: int) -> int:
        # sentinel (n + 1) stands in for ROOT (0)
        h = tree.head(tok)
        return n + 1 if h == 0 else h

    c = Configuration.initial(n)
    out: list[Transition] = []
    while not c.is_terminal():
        s0, s1, b0 = c.s0, c.s1, c.b0
        if system is System.ARC_HYBRID:
            if s0 is not None and gold_head(s0) == b0 and pending[s0] == 0:
                t = Transition(LEFT_ARC, tree.label(s0))
            elif s0 is not None and s1 is not None and gold_head(s0) == s1 and pending[s0] == 0:
                t = Transition(RIGHT_ARC, tree.label(s0))
            else:
                t = Transition(SHIFT)
        else:
            if s0 is not None and s0 not in c.heads and gold_head(s0) == b0:
                t = Transition(LEFT_ARC, tree.label(s0))
            elif s0 is not None and c.front_is_token() and gold_head(b0) == s0:
                t = Transition(RIGHT_ARC, tree.label(b0))
            elif s0 is not None and s0 in c.heads and pending[s0] == 0:
                t = Transition(REDUCE)
            else:
                t = Transition(SHIFT)
        if not legal(system, c, t):
            raise NonProjectiveError(f"oracle stuck at stack={c.stack} buf={b0}")
        if t.kind in (LEFT_ARC, RIGHT_ARC):
            dep = b0 if (system is System.ARC_EAGER and t.kind == RIGHT_ARC) else s0
            pending[tree.head(dep)] -= 1
        c = apply(system, c, t)
        out.append(t)
    return out
